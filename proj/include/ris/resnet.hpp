#ifndef RIS_RESNET_HPP
#define RIS_RESNET_HPP

#include <array>
#include <string>
#include <vector>

#include "ris/nn.hpp"

namespace ris::inline RIS_PRECISION {

// Small CIFAR-style residual classifier. depth = 2 + 6 * blocks_per_stage
// (blocks_per_stage = 1 gives the 8-layer desk teacher, 3 gives ResNet-20).
struct TeacherSpec {
    std::string arch = "resnet";
    int num_classes = 10;
    int in_channels = 3;
    int image_size = 32;
    std::vector<int> widths{16, 32, 64};
    int blocks_per_stage = 1;
    // Per-channel pixel normalization (x - mean) / std for inputs in [0, 1].
    std::vector<Real> norm_mean{Real(0.5), Real(0.5), Real(0.5)};
    std::vector<Real> norm_std{Real(0.25), Real(0.25), Real(0.25)};

    int depth() const { return 2 + 6 * blocks_per_stage; }
    InputNormalization normalization() const { return {norm_mean, norm_std}; }
    void validate() const;
    friend bool operator==(const TeacherSpec&, const TeacherSpec&) = default;
};

class ResNet final : public Classifier {
public:
    ResNet(const TeacherSpec& spec, Rng& rng);

    ClassifierOutput forward(const Var& x, ForwardHooks* hooks = nullptr) const override;
    // Supervised-training forward: batch-statistics BN with running-stat updates.
    ClassifierOutput forward_train(const Var& x);

    std::vector<Var> weights() const override;
    int num_classes() const override { return spec_.num_classes; }
    const TeacherSpec& spec() const { return spec_; }

    std::vector<const BatchNorm2d*> bn_layers() const override;
    std::size_t num_bn() const { return bns_.size(); }
    const BatchNorm2d& bn(std::size_t i) const { return bns_.at(i); }
    BatchNorm2d& bn(std::size_t i) { return bns_.at(i); }

    // All trainable leaves (weights, biases, BN affine) with stable names.
    std::vector<NamedVar> parameters() const;
    // Everything a checkpoint must hold, including BN running statistics.
    std::vector<NamedTensorRef> state();

    void set_requires_grad(bool on);
    ResNet clone() const;

private:
    struct Block {
        std::size_t conv1, bn1, conv2, bn2;
        bool has_shortcut = false;
        std::size_t sc_conv = 0, sc_bn = 0;
    };

    TeacherSpec spec_;
    std::vector<Conv2d> convs_;
    std::vector<BatchNorm2d> bns_;
    std::vector<Block> blocks_;
    Linear fc_;
};

}  // namespace ris

#endif  // RIS_RESNET_HPP
