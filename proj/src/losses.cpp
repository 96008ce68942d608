#include "ris/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ris::inline RIS_PRECISION {

Tensor one_hot(const std::vector<int>& classes, int num_classes) {
    Tensor t({static_cast<int>(classes.size()), num_classes});
    for (std::size_t b = 0; b < classes.size(); ++b) {
        if (classes[b] < 0 || classes[b] >= num_classes) throw std::invalid_argument("one_hot: class index out of range");
        t.row(static_cast<int>(b))[static_cast<std::size_t>(classes[b])] = 1;
    }
    return t;
}

Var cross_entropy(const Var& pred, const Tensor& target) {
    const Tensor& p = pred.value();
    if (p.rank() != 2 || target.shape() != p.shape())
        throw std::invalid_argument("cross_entropy: prediction " + shape_str(p.shape()) + " vs target " +
                                    shape_str(target.shape()));
    for (int r = 0; r < p.dim(0); ++r) {
        double s = 0;
        for (Real v : p.row(r)) s += v;
        if (std::abs(s - 1) > 1e-4) throw std::invalid_argument("cross_entropy: prediction rows must sum to 1");
    }
    return ops::cross_entropy(pred, target);
}

Var cross_entropy(const Var& pred, const std::vector<int>& classes) {
    return cross_entropy(pred, one_hot(classes, pred.dim(1)));
}

BNCapture::BNCapture(const Classifier& teacher, ForwardHooks* inner) : layers_(teacher.bn_layers()), inner_(inner) {
    if (layers_.empty()) throw std::invalid_argument("capture_bn_inputs: teacher has no BN layer");
    pairs_.resize(layers_.size());
}

Var BNCapture::weight(std::size_t index, const Var& w) { return inner_ ? inner_->weight(index, w) : w; }

Var BNCapture::activation(std::size_t site, const Var& a) { return inner_ ? inner_->activation(site, a) : a; }

void BNCapture::bn_input(std::size_t index, const Var& x) {
    if (inner_) inner_->bn_input(index, x);
    const auto& shape = x.shape();
    std::size_t per_channel = static_cast<std::size_t>(shape.at(0));
    for (std::size_t d = 2; d < shape.size(); ++d) per_channel *= static_cast<std::size_t>(shape[d]);
    if (per_channel == 0) throw std::invalid_argument("capture_bn_inputs: BN input has no batch/spatial elements");
    const auto* bn = layers_.at(index);
    BNStatPair& pair = pairs_[index];
    pair.batch_mean = ops::channel_mean(x);
    pair.batch_std = ops::channel_std(x);
    pair.stored_mean = bn->state.running_mean;
    pair.stored_std = bn->state.running_var;
    for (auto& v : pair.stored_std.values()) v = std::sqrt(v);
}

std::vector<BNStatPair> BNCapture::take() {
    for (std::size_t i = 0; i < pairs_.size(); ++i)
        if (!pairs_[i].batch_mean.defined())
            throw std::logic_error("capture_bn_inputs: BN layer " + std::to_string(i) + " was not reached");
    return std::move(pairs_);
}

std::vector<BNStatPair> capture_bn_inputs(const Classifier& teacher, const Var& x) {
    BNCapture cap(teacher);
    teacher.forward(x, &cap);
    return cap.take();
}

Var bns_loss(const std::vector<BNStatPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("bns_loss: no BN pairs");
    Var total;
    for (const auto& p : pairs) {
        Var term = ops::add(ops::sum_squared_diff(p.batch_mean, p.stored_mean), ops::sum_squared_diff(p.batch_std, p.stored_std));
        total = total.defined() ? ops::add(total, term) : term;
    }
    return total;
}

void LossWeights::validate() const {
    if (!(alpha >= 0) || !(lambda_r >= 0) || !(beta >= 0))
        throw std::invalid_argument("loss weights alpha, lambda_r, beta must be >= 0");
}

namespace {

struct CleanPass {
    Var features;
    Var logits;
    Var ce;
    Var bns;
};

CleanPass clean_pass(const Var& x, const Tensor& targets, const Classifier& teacher, const InputNormalization& norm) {
    BNCapture cap(teacher);
    auto out = teacher.forward(norm.from_generator(x), &cap);
    CleanPass c;
    c.features = out.features;
    c.logits = out.logits;
    c.ce = cross_entropy(ops::softmax(out.logits), targets);
    c.bns = bns_loss(cap.take());
    return c;
}

}  // namespace

GeneratorLoss generator_objective(const Var& x, const Tensor& targets, const ProbeContext& ctx,
                                  const RobustnessThresholds& thr, const LossWeights& w, Rng& rng) {
    w.validate();
    auto c = clean_pass(x, targets, *ctx.teacher, ctx.norm);
    GeneratorLoss l;
    l.ce = c.ce;
    l.bns = c.bns;
    l.total = ops::add(c.ce, ops::scale(c.bns, static_cast<Real>(w.alpha)));
    if (w.lambda_r > 0) {
        const Var p0 = prediction_vectors(c.logits, ctx.mode);
        // parallel: the input-only and weight-only hinges are added.
        std::vector<Strategy> parts{ctx.perturb.strategy};
        if (ctx.perturb.strategy == Strategy::parallel) parts = {Strategy::input, Strategy::weight};
        double rf = 0, rp = 0;
        for (Strategy s : parts) {
            ProbeContext one = ctx;
            one.perturb.strategy = s;
            const auto term = measure_inconsistency(one, x, c.features, p0, targets, rng);
            const Var hinge = robustness_loss(term.r_f, term.r_p, thr, w.beta);
            l.robust = l.robust.defined() ? ops::add(l.robust, hinge) : hinge;
            l.channel = term.channel;
            rf += term.r_f.value().sum() / term.r_f.value().size() / parts.size();
            rp += term.r_p.value().sum() / term.r_p.value().size() / parts.size();
        }
        l.r_f_mean = rf;
        l.r_p_mean = rp;
        l.total = ops::add(l.total, ops::scale(l.robust, static_cast<Real>(w.lambda_r)));
    }
    return l;
}

GeneratorLoss gdfq_objective(const Var& x, const std::vector<int>& classes, const Classifier& teacher,
                             const InputNormalization& norm, double alpha) {
    if (!(alpha >= 0)) throw std::invalid_argument("gdfq_objective: alpha must be >= 0");
    auto c = clean_pass(x, one_hot(classes, teacher.num_classes()), teacher, norm);
    GeneratorLoss l;
    l.ce = c.ce;
    l.bns = c.bns;
    l.total = ops::add(c.ce, ops::scale(c.bns, static_cast<Real>(alpha)));
    return l;
}

DistillationLoss distillation_loss(const Var& student_logits, const Tensor& teacher_logits, const Tensor& labels,
                                   double temperature) {
    if (!(temperature > 0)) throw std::invalid_argument("distillation_loss: temperature must be > 0");
    if (teacher_logits.shape() != student_logits.shape())
        throw std::invalid_argument("distillation_loss: student/teacher logits shape mismatch");
    const Real t = static_cast<Real>(temperature);
    Tensor teacher_probs;
    {
        NoGradGuard no_grad;
        teacher_probs = ops::softmax(ops::scale(Var::constant(teacher_logits), 1 / t)).value();
    }
    DistillationLoss d;
    d.ce = cross_entropy(ops::softmax(student_logits), labels);
    d.kl = ops::scale(ops::kl_div_logits(student_logits, teacher_probs, t), t * t);
    d.total = ops::add(d.ce, d.kl);
    return d;
}

}  // namespace ris
