#include "ris/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ris::inline RIS_PRECISION {

void QuantConfig::validate() const {
    if (weight_bits < 2 || weight_bits > 16)
        throw std::invalid_argument("quant.weight_bits must be in [2, 16], got " + std::to_string(weight_bits));
    if (act_bits < 2 || act_bits > 16)
        throw std::invalid_argument("quant.act_bits must be in [2, 16], got " + std::to_string(act_bits));
    if (!(range_momentum >= 0 && range_momentum < 1))
        throw std::invalid_argument("quant.range_momentum must be in [0, 1)");
}

FakeQuantizer::FakeQuantizer(int bits) : bits_(bits) {
    if (bits < 2 || bits > 16) throw std::invalid_argument("quantizer bits must be in [2, 16]");
}

double FakeQuantizer::scale() const {
    require_calibrated();
    return (max_obs_ - min_obs_) / (levels() - 1);
}

int FakeQuantizer::zero_point() const {
    const int zp = static_cast<int>(std::round(-min_obs_ / scale()));
    return std::clamp(zp, 0, levels() - 1);
}

void FakeQuantizer::observe(std::span<const Real> values, double momentum) {
    if (values.empty()) throw std::invalid_argument("calibrate_range: empty value array");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("calibrate_range: momentum must be in [0, 1)");
    double lo = values[0], hi = values[0];
    for (Real v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("calibrate_range: non-finite value in observed array");
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
    }
    if (!observed_) {
        min_obs_ = lo;
        max_obs_ = hi;
        observed_ = true;
    } else {
        min_obs_ = momentum * min_obs_ + (1 - momentum) * lo;
        max_obs_ = momentum * max_obs_ + (1 - momentum) * hi;
    }
}

void FakeQuantizer::set_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) throw std::invalid_argument("invalid quantizer range");
    min_obs_ = lo;
    max_obs_ = hi;
    observed_ = true;
}

void FakeQuantizer::restore(double lo, double hi, bool observed) {
    min_obs_ = lo;
    max_obs_ = hi;
    observed_ = observed;
}

void FakeQuantizer::require_calibrated() const {
    if (!calibrated())
        throw std::logic_error("quantizer is not calibrated (observed range [" + std::to_string(min_obs_) + ", " +
                               std::to_string(max_obs_) + "])");
}

Real FakeQuantizer::quantize_dequantize(Real x) const {
    require_calibrated();
    const double top = levels() - 1;
    // Grid position computed without forming the scale first, so exact ties
    // such as (0.5 on [0, 1] at 4 bits) -> 7.5 stay exact; std::round breaks
    // them away from zero.
    const double pos = (static_cast<double>(x) - min_obs_) * top / (max_obs_ - min_obs_);
    const double k = std::clamp(std::round(pos), 0.0, top);
    const double out = min_obs_ + k * (max_obs_ - min_obs_) / top;
    return static_cast<Real>(std::clamp(out, min_obs_, max_obs_));
}

namespace {

// Fake quantization with one quantizer per contiguous block of `block` elements.
Var fake_quant_blocks(const Var& x, const std::vector<FakeQuantizer>& qs, std::size_t block) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    std::vector<std::uint8_t> pass(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto& q = qs[i / block];
        out[i] = q.quantize_dequantize(in[i]);
        pass[i] = in[i] >= q.min_obs() && in[i] <= q.max_obs();
    }
    return make_result(std::move(out), {x}, [pass = std::move(pass)](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pass[i]) g[i] += self.grad[i];
    });
}

std::vector<FakeQuantizer> weight_ranges(const Tensor& w, int bits, bool per_channel) {
    const std::size_t channels = per_channel ? static_cast<std::size_t>(w.dim(0)) : 1;
    const std::size_t block = w.size() / channels;
    std::vector<FakeQuantizer> qs(channels, FakeQuantizer(bits));
    for (std::size_t c = 0; c < channels; ++c) qs[c].observe(w.values().subspan(c * block, block), 0.0);
    return qs;
}

bool all_calibrated(const std::vector<FakeQuantizer>& qs) {
    return std::all_of(qs.begin(), qs.end(), [](const FakeQuantizer& q) { return q.calibrated(); });
}

}  // namespace

Var FakeQuantizer::apply(const Var& x) const {
    require_calibrated();
    return fake_quant_blocks(x, {*this}, x.value().size());
}

FakeQuantizer calibrate_range(std::span<const Real> values, FakeQuantizer q, double momentum) {
    q.observe(values, momentum);
    return q;
}

Tensor quantize_dequantize(const Tensor& x, const FakeQuantizer& q) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = q.quantize_dequantize(x[i]);
    return out;
}

class QuantizedModel::Hooks final : public ForwardHooks {
public:
    Hooks(const QuantizedModel& model, bool training, std::vector<std::vector<FakeQuantizer>>* weight_out,
          std::vector<FakeQuantizer>* act_state, ForwardHooks* inner)
        : model_(model), training_(training), weight_out_(weight_out), act_state_(act_state), inner_(inner) {}

    Var weight(std::size_t index, const Var& w) override {
        Var base = inner_ ? inner_->weight(index, w) : w;
        if (!model_.layer_quantized(index)) return base;
        auto qs = weight_ranges(base.value(), model_.cfg_.weight_bits, model_.cfg_.per_channel);
        if (weight_out_) (*weight_out_)[index] = qs;
        if (!all_calibrated(qs)) return base;
        return fake_quant_blocks(base, qs, base.value().size() / qs.size());
    }

    Var activation(std::size_t site, const Var& a) override {
        Var base = inner_ ? inner_->activation(site, a) : a;
        if (site == 0 || !model_.layer_quantized(site)) return base;
        if (training_) {
            auto& q = (*act_state_)[site];
            q.observe(base.value().values(), model_.cfg_.range_momentum);
            return q.calibrated() ? q.apply(base) : base;
        }
        const auto& q = model_.act_q_[site];
        return q.calibrated() ? q.apply(base) : base;
    }

    void bn_input(std::size_t index, const Var& x) override {
        if (inner_) inner_->bn_input(index, x);
    }

private:
    const QuantizedModel& model_;
    bool training_;
    std::vector<std::vector<FakeQuantizer>>* weight_out_;
    std::vector<FakeQuantizer>* act_state_;
    ForwardHooks* inner_;
};

QuantizedModel::QuantizedModel(const ResNet& teacher, const QuantConfig& cfg) : net_(teacher.clone()), cfg_(cfg) {
    cfg_.validate();
    net_.set_requires_grad(true);
    const auto ws = net_.weights();
    weight_q_.reserve(ws.size());
    for (const auto& w : ws) weight_q_.push_back(weight_ranges(w.value(), cfg_.weight_bits, cfg_.per_channel));
    act_q_.assign(ws.size(), FakeQuantizer(cfg_.act_bits));
}

bool QuantizedModel::layer_quantized(std::size_t layer) const {
    if (!cfg_.keep_first_last_fp) return true;
    return layer != 0 && layer + 1 != weight_q_.size();
}

ClassifierOutput QuantizedModel::forward(const Var& x, ForwardHooks* hooks) const {
    Hooks h(*this, false, nullptr, nullptr, hooks);
    return net_.forward(x, &h);
}

ClassifierOutput QuantizedModel::forward_train(const Var& x) {
    Hooks h(*this, true, &weight_q_, &act_q_, nullptr);
    return net_.forward(x, &h);
}

QuantizedModel build_quantized(const Classifier& model, const QuantConfig& cfg) {
    const auto* teacher = dynamic_cast<const ResNet*>(&model);
    if (!teacher) throw UnsupportedLayerError("build_quantized: unsupported layer kind in teacher (only residual conv/BN/linear networks)");
    for (const auto& w : teacher->weights())
        if (!w.value().all_finite()) throw std::invalid_argument("build_quantized: teacher weights must be finite");
    return QuantizedModel(*teacher, cfg);
}

}  // namespace ris
