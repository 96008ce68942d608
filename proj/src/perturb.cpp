#include "ris/perturb.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace ris::inline RIS_PRECISION {

std::string to_string(InputKind k) {
    switch (k) {
        case InputKind::gaussian_noise: return "gaussian_noise";
        case InputKind::translation: return "translation";
        case InputKind::resize: return "resize";
        case InputKind::random_select: return "random_select";
    }
    return "?";
}

std::string to_string(WeightKind k) {
    switch (k) {
        case WeightKind::gaussian: return "gaussian";
        case WeightKind::adversarial: return "adversarial";
        case WeightKind::dropout: return "dropout";
    }
    return "?";
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::serial: return "serial";
        case Strategy::parallel: return "parallel";
        case Strategy::random_pick: return "random_pick";
        case Strategy::input: return "input";
        case Strategy::weight: return "weight";
    }
    return "?";
}

InputKind parse_input_kind(const std::string& s) {
    for (auto k : {InputKind::gaussian_noise, InputKind::translation, InputKind::resize, InputKind::random_select})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown input perturbation kind '" + s + "'");
}

WeightKind parse_weight_kind(const std::string& s) {
    for (auto k : {WeightKind::gaussian, WeightKind::adversarial, WeightKind::dropout})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown weight perturbation kind '" + s + "'");
}

Strategy parse_strategy(const std::string& s) {
    for (auto k : {Strategy::serial, Strategy::parallel, Strategy::random_pick, Strategy::input, Strategy::weight})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown perturbation strategy '" + s + "'");
}

void InputPerturbation::validate(int image_size) const {
    if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("perturb.input.noise_sigma must be >= 0");
    if (!(max_shift >= 0) || max_shift > image_size / 4.0)
        throw std::invalid_argument("perturb.input.max_shift must be in [0, image_size / 4]");
    if (!(scale_lo > 0) || !(scale_hi >= scale_lo) || !std::isfinite(scale_hi))
        throw std::invalid_argument("perturb.input.scale_lo/scale_hi must satisfy 0 < lo <= hi");
    if (count < 1) throw std::invalid_argument("perturb.input.count must be >= 1");
}

void WeightPerturbation::validate() const {
    if (!(sigma_rel >= 0) || !std::isfinite(sigma_rel)) throw std::invalid_argument("perturb.weight.sigma_rel must be >= 0");
    if (!(gamma >= 0) || !std::isfinite(gamma)) throw std::invalid_argument("perturb.weight.gamma must be >= 0");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw std::invalid_argument("perturb.weight.dropout_p must be in [0, 1)");
}

InputKind resolve_kind(InputKind kind, Rng& rng) {
    if (kind != InputKind::random_select) return kind;
    static constexpr InputKind kinds[] = {InputKind::gaussian_noise, InputKind::translation, InputKind::resize};
    return kinds[rng.below(3)];
}

namespace {

Var apply_concrete(const Var& x, InputKind kind, const InputPerturbation& spec, Rng& rng) {
    const int n = x.dim(0);
    switch (kind) {
        case InputKind::gaussian_noise: {
            Tensor noise(x.shape());
            rng.fill_normal(noise, 0.0, spec.noise_sigma);
            return ops::add(x, Var::constant(std::move(noise)));
        }
        case InputKind::translation: {
            std::vector<ops::ResampleParams> p(static_cast<std::size_t>(n));
            for (auto& q : p) {
                q.shift_x = static_cast<Real>(rng.uniform(-spec.max_shift, spec.max_shift));
                q.shift_y = static_cast<Real>(rng.uniform(-spec.max_shift, spec.max_shift));
            }
            return ops::affine_resample(x, p);
        }
        case InputKind::resize: {
            std::vector<ops::ResampleParams> p(static_cast<std::size_t>(n));
            for (auto& q : p) q.zoom = static_cast<Real>(rng.uniform(spec.scale_lo, spec.scale_hi));
            return ops::affine_resample(x, p);
        }
        case InputKind::random_select: break;
    }
    throw std::logic_error("apply_input: unresolved kind");
}

}  // namespace

Var apply_input(const Var& x, const InputPerturbation& spec, Rng& rng) {
    spec.validate(x.dim(2));
    return apply_concrete(x, resolve_kind(spec.kind, rng), spec, rng);
}

std::vector<Var> apply_inputs(const Var& x, const InputPerturbation& spec, Rng& rng) {
    spec.validate(x.dim(2));
    const InputKind kind = resolve_kind(spec.kind, rng);
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) out.push_back(apply_concrete(x, kind, spec, rng));
    return out;
}

Var PerturbedView::weight(std::size_t index, const Var& w) {
    Var v = weights_.at(index);
    if (v.shape() != w.shape()) throw std::invalid_argument("PerturbedView: weight shape mismatch at layer " + std::to_string(index));
    return inner_ ? inner_->weight(index, v) : v;
}

Var PerturbedView::activation(std::size_t site, const Var& a) { return inner_ ? inner_->activation(site, a) : a; }

void PerturbedView::bn_input(std::size_t index, const Var& x) {
    if (inner_) inner_->bn_input(index, x);
}

namespace {

double l2_norm(const Tensor& t) {
    double s = 0;
    for (Real v : t.values()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

double stddev(const Tensor& t) {
    double m = 0;
    for (Real v : t.values()) m += v;
    m /= static_cast<double>(t.size());
    double s = 0;
    for (Real v : t.values()) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(t.size()));
}

// Gradient of CE(softmax(teacher(inputs)), targets) with respect to every weight.
std::vector<Tensor> ce_weight_gradients(const Classifier& teacher, const Tensor& inputs, const Tensor& targets) {
    class Leaves final : public ForwardHooks {
    public:
        std::vector<Var> leaves;
        Var weight(std::size_t index, const Var& w) override {
            if (leaves.size() <= index) leaves.resize(index + 1);
            leaves[index] = Var::leaf(w.value(), true);
            return leaves[index];
        }
    } hooks;
    Var loss = ops::cross_entropy(ops::softmax(teacher.forward(Var::constant(inputs), &hooks).logits), targets);
    loss.backward();
    std::vector<Tensor> grads;
    for (const auto& leaf : hooks.leaves) grads.push_back(leaf.has_grad() ? leaf.grad() : Tensor::zeros_like(leaf.value()));
    return grads;
}

}  // namespace

PerturbedView perturb_weights(const Classifier& teacher, const WeightPerturbation& spec, Rng& rng, const Tensor* inputs,
                              const Tensor* targets) {
    spec.validate();
    const auto ws = teacher.weights();
    std::vector<Var> out;
    out.reserve(ws.size());
    switch (spec.kind) {
        case WeightKind::gaussian:
            for (const auto& w : ws) {
                Tensor v(w.value().shape());
                rng.fill_normal(v, 0.0, spec.sigma_rel * stddev(w.value()));
                v.add_(w.value());
                out.push_back(Var::constant(std::move(v)));
            }
            break;
        case WeightKind::adversarial: {
            if (!inputs || !targets) throw std::invalid_argument("perturb_weights: adversarial kind needs a labelled batch");
            std::vector<Tensor> grads;
            {
                EnableGradGuard record;
                grads = ce_weight_gradients(teacher, *inputs, *targets);
            }
            for (std::size_t i = 0; i < ws.size(); ++i) {
                Tensor v = ws[i].value();
                const double gn = l2_norm(grads[i]);
                if (gn == 0 || !std::isfinite(gn)) {
                    spdlog::debug("adversarial weight perturbation: zero gradient at layer {}, skipped", i);
                } else {
                    const double k = spec.gamma * l2_norm(ws[i].value()) / gn;
                    for (std::size_t j = 0; j < v.size(); ++j) v[j] += static_cast<Real>(k * grads[i][j]);
                }
                out.push_back(Var::constant(std::move(v)));
            }
            break;
        }
        case WeightKind::dropout:
            for (const auto& w : ws) {
                Tensor v = w.value();
                const int rows = v.dim(0);
                const std::size_t block = v.size() / static_cast<std::size_t>(rows);
                for (int r = 0; r < rows; ++r)
                    if (rng.bernoulli(spec.dropout_p))
                        for (std::size_t j = 0; j < block; ++j) v[r * block + j] = 0;
                out.push_back(Var::constant(std::move(v)));
            }
            break;
    }
    return PerturbedView(std::move(out));
}

Channel pick_channel(Rng& rng) { return rng.bernoulli(0.5) ? Channel::input : Channel::weight; }

}  // namespace ris
