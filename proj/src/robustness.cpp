#include "ris/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace ris::inline RIS_PRECISION {

std::string to_string(PredictionMode m) { return m == PredictionMode::softmax ? "softmax" : "logits"; }

PredictionMode parse_prediction_mode(const std::string& s) {
    if (s == "softmax") return PredictionMode::softmax;
    if (s == "logits") return PredictionMode::logits;
    throw std::invalid_argument("unknown prediction mode '" + s + "'");
}

Var feature_inconsistency(const PerturbedOutputs& outs) {
    if (outs.f.empty()) throw std::invalid_argument("feature_inconsistency: need at least one perturbed output");
    std::vector<Var> d;
    for (const auto& fi : outs.f) d.push_back(ops::row_cosine_distance(outs.f0, fi));
    return d.size() == 1 ? d[0] : ops::elementwise_max(d);
}

namespace {

void require_simplex_rows(const Tensor& p) {
    for (int r = 0; r < p.dim(0); ++r) {
        double s = 0;
        for (Real v : p.row(r)) s += v;
        if (std::abs(s - 1) > 1e-4)
            throw std::invalid_argument("prediction_inconsistency: row " + std::to_string(r) + " sums to " +
                                        std::to_string(s) + ", expected a probability vector");
    }
}

}  // namespace

Var prediction_inconsistency(const PerturbedOutputs& outs, bool check_simplex) {
    if (outs.p.empty()) throw std::invalid_argument("prediction_inconsistency: need at least one perturbed output");
    if (check_simplex) {
        require_simplex_rows(outs.p0.value());
        for (const auto& pi : outs.p) require_simplex_rows(pi.value());
    }
    std::vector<Var> d;
    for (const auto& pi : outs.p) d.push_back(ops::row_l1_distance(outs.p0, pi));
    return d.size() == 1 ? d[0] : ops::elementwise_max(d);
}

double nearest_rank_quantile(std::vector<double> values, double level) {
    if (values.empty()) throw std::invalid_argument("nearest_rank_quantile: empty value list");
    if (!(level >= 0 && level <= 1)) throw std::invalid_argument("nearest_rank_quantile: level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    // The small slack keeps exact products such as 0.9 * 1000 from rounding up.
    auto rank = static_cast<std::size_t>(std::ceil(level * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

RobustnessThresholds thresholds_from_values(const std::vector<double>& r_f, const std::vector<double>& r_p,
                                            double epsilon) {
    if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("robust.epsilon must be in (0, 1)");
    RobustnessThresholds t;
    t.epsilon = epsilon;
    t.n_noise = static_cast<int>(r_f.size());
    t.theta_f = nearest_rank_quantile(r_f, 1 - epsilon);
    t.theta_p = nearest_rank_quantile(r_p, 1 - epsilon);
    return t;
}

Var robustness_loss(const Var& r_f, const Var& r_p, const RobustnessThresholds& thr, double beta) {
    if (!(beta >= 0)) throw std::invalid_argument("robustness_loss: beta must be >= 0");
    Var hf = ops::relu(ops::add_scalar(r_f, static_cast<Real>(-thr.theta_f)));
    Var hp = ops::relu(ops::add_scalar(r_p, static_cast<Real>(-thr.theta_p)));
    return ops::mean(ops::add(hf, ops::scale(hp, static_cast<Real>(beta))));
}

double robustness_loss(double r_f, double r_p, const RobustnessThresholds& thr, double beta) {
    return std::max(r_f - thr.theta_f, 0.0) + beta * std::max(r_p - thr.theta_p, 0.0);
}

Var prediction_vectors(const Var& logits, PredictionMode mode) {
    return mode == PredictionMode::softmax ? ops::softmax(logits) : logits;
}

namespace {

void add_forward(const ProbeContext& ctx, const Var& teacher_input, ForwardHooks* hooks, PerturbedOutputs& outs) {
    auto o = ctx.teacher->forward(teacher_input, hooks);
    outs.f.push_back(o.features);
    outs.p.push_back(prediction_vectors(o.logits, ctx.mode));
}

}  // namespace

InconsistencyTerm measure_inconsistency(const ProbeContext& ctx, const Var& x, const Var& clean_features,
                                        const Var& clean_predictions, const Tensor& targets, Rng& rng) {
    if (!ctx.teacher) throw std::invalid_argument("measure_inconsistency: no teacher");
    const auto& cfg = ctx.perturb;
    PerturbedOutputs outs{clean_features, clean_predictions, {}, {}};
    InconsistencyTerm term;

    bool use_input = false, use_weight = false, compose = false;
    switch (cfg.strategy) {
        case Strategy::serial: use_input = use_weight = compose = true; break;
        case Strategy::parallel: use_input = use_weight = true; break;
        case Strategy::random_pick:
            term.channel = pick_channel(rng);
            use_input = term.channel == Channel::input;
            use_weight = !use_input;
            break;
        case Strategy::input: use_input = true; break;
        case Strategy::weight:
            term.channel = Channel::weight;
            use_weight = true;
            break;
    }

    const Var clean_input = ctx.norm.from_generator(x);
    std::vector<Var> inputs;
    if (use_input) inputs = apply_inputs(x, cfg.input, rng);
    std::optional<PerturbedView> view;
    if (use_weight) {
        Tensor in_values = clean_input.value();
        view.emplace(perturb_weights(*ctx.teacher, cfg.weight, rng, &in_values, &targets));
    }

    if (compose) {
        for (const auto& xi : inputs) add_forward(ctx, ctx.norm.from_generator(xi), &*view, outs);
    } else {
        for (const auto& xi : inputs) add_forward(ctx, ctx.norm.from_generator(xi), nullptr, outs);
        if (view) add_forward(ctx, clean_input, &*view, outs);
    }

    term.r_f = feature_inconsistency(outs);
    term.r_p = prediction_inconsistency(outs, ctx.mode == PredictionMode::softmax);
    return term;
}

NoiseInconsistency noise_inconsistency(const ProbeContext& ctx, int n, const Shape& image_shape, std::uint64_t seed) {
    if (image_shape.size() != 3) throw std::invalid_argument("noise_inconsistency: image shape must be [C, H, W]");
    NoGradGuard no_grad;
    // Each summed part of the parallel loss sees one channel, so calibrate
    // on single-channel values.
    ProbeContext probe = ctx;
    if (probe.perturb.strategy == Strategy::parallel) probe.perturb.strategy = Strategy::random_pick;
    Rng noise_rng = Rng(seed).split(1);
    Rng perturb_rng = Rng(seed).split(2);
    NoiseInconsistency out;
    out.r_f.reserve(static_cast<std::size_t>(n));
    out.r_p.reserve(static_cast<std::size_t>(n));
    const Shape shape{1, image_shape[0], image_shape[1], image_shape[2]};
    for (int i = 0; i < n; ++i) {
        Tensor img(shape);
        noise_rng.fill_normal(img);
        const Var x = Var::constant(std::move(img));
        const auto clean = ctx.teacher->forward(ctx.norm.from_generator(x));
        const Var p0 = prediction_vectors(clean.logits, ctx.mode);
        // Teacher argmax as the label for adversarial perturbation.
        Tensor target({1, ctx.teacher->num_classes()});
        const auto lrow = clean.logits.value().row(0);
        target.row(0)[static_cast<std::size_t>(std::max_element(lrow.begin(), lrow.end()) - lrow.begin())] = 1;
        const auto term = measure_inconsistency(probe, x, clean.features, p0, target, perturb_rng);
        out.r_f.push_back(term.r_f.value()[0]);
        out.r_p.push_back(term.r_p.value()[0]);
    }
    return out;
}

RobustnessThresholds calibrate_thresholds(const ProbeContext& ctx, double epsilon, int n_noise, const Shape& image_shape,
                                          std::uint64_t seed, NoiseInconsistency* values) {
    if (n_noise < 10) throw std::invalid_argument("calibrate_thresholds: n_noise must be >= 10");
    if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("robust.epsilon must be in (0, 1)");
    auto v = noise_inconsistency(ctx, n_noise, image_shape, seed);
    auto thr = thresholds_from_values(v.r_f, v.r_p, epsilon);
    thr.seed = seed;
    if (values) *values = std::move(v);
    return thr;
}

}  // namespace ris
