#ifndef RIS_QUANT_HPP
#define RIS_QUANT_HPP

#include <span>
#include <stdexcept>
#include <vector>

#include "ris/nn.hpp"
#include "ris/resnet.hpp"

namespace ris::inline RIS_PRECISION {

struct QuantConfig {
    int weight_bits = 4;
    int act_bits = 4;
    double range_momentum = 0.9;
    bool per_channel = false;
    // Leave the first conv and the classifier head in full precision.
    bool keep_first_last_fp = false;

    void validate() const;
    friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

// Per-tensor asymmetric uniform quantizer. A fresh quantizer is uncalibrated
// until it has observed a non-degenerate range.
class FakeQuantizer {
public:
    explicit FakeQuantizer(int bits = 8);

    int bits() const noexcept { return bits_; }
    int levels() const noexcept { return 1 << bits_; }
    bool observed() const noexcept { return observed_; }
    bool calibrated() const noexcept { return observed_ && max_obs_ > min_obs_; }
    double min_obs() const noexcept { return min_obs_; }
    double max_obs() const noexcept { return max_obs_; }
    double scale() const;
    int zero_point() const;

    // EMA update: min <- m * min + (1 - m) * batch_min (same for max); the
    // first observation is taken as-is.
    void observe(std::span<const Real> values, double momentum);
    void set_range(double lo, double hi);
    // Restores checkpointed state verbatim.
    void restore(double lo, double hi, bool observed);

    Real quantize_dequantize(Real x) const;
    // Straight-through fake quantization: the gradient passes unchanged for
    // inputs inside [min_obs, max_obs] and is zero outside.
    Var apply(const Var& x) const;

private:
    void require_calibrated() const;

    int bits_;
    double min_obs_ = 0;
    double max_obs_ = 0;
    bool observed_ = false;
};

FakeQuantizer calibrate_range(std::span<const Real> values, FakeQuantizer q, double momentum);
Tensor quantize_dequantize(const Tensor& x, const FakeQuantizer& q);

// Quantization-aware copy of a teacher: full-precision shadow weights are the
// trainable leaves, every conv/linear weight is fake-quantized on the way in,
// and so is the input activation of every weight layer except the first.
// BN layers keep the teacher's stored statistics; their affine terms train.
class QuantizedModel final : public Classifier {
public:
    QuantizedModel(const ResNet& teacher, const QuantConfig& cfg);

    ClassifierOutput forward(const Var& x, ForwardHooks* hooks = nullptr) const override;
    // Training forward: activation ranges track the batch with EMA momentum.
    ClassifierOutput forward_train(const Var& x);

    std::vector<Var> weights() const override { return net_.weights(); }
    int num_classes() const override { return net_.num_classes(); }
    std::vector<const BatchNorm2d*> bn_layers() const override { return net_.bn_layers(); }

    std::vector<NamedVar> parameters() const { return net_.parameters(); }
    std::vector<NamedTensorRef> state() { return net_.state(); }
    const ResNet& network() const { return net_; }
    const QuantConfig& config() const { return cfg_; }

    // One entry per channel when per_channel is on, otherwise one per layer.
    const std::vector<FakeQuantizer>& weight_quantizers(std::size_t layer) const { return weight_q_.at(layer); }
    std::vector<FakeQuantizer>& weight_quantizers(std::size_t layer) { return weight_q_.at(layer); }
    // Activation site k is the input of weight layer k; site 0 (the image) is never quantized.
    const FakeQuantizer& activation_quantizer(std::size_t site) const { return act_q_.at(site); }
    FakeQuantizer& activation_quantizer(std::size_t site) { return act_q_.at(site); }
    std::size_t num_layers() const { return weight_q_.size(); }
    bool layer_quantized(std::size_t layer) const;

private:
    class Hooks;

    ResNet net_;
    QuantConfig cfg_;
    std::vector<std::vector<FakeQuantizer>> weight_q_;
    std::vector<FakeQuantizer> act_q_;
};

class UnsupportedLayerError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Throws UnsupportedLayerError for classifiers built from layers other than
// the residual conv/BN/linear set.
QuantizedModel build_quantized(const Classifier& teacher, const QuantConfig& cfg);

}  // namespace ris

#endif  // RIS_QUANT_HPP
