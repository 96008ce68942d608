#ifndef RIS_TEST_HELPERS_HPP
#define RIS_TEST_HELPERS_HPP

#include <cmath>

#include "ris/resnet.hpp"

namespace ris::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double stddev = 1.0) {
    Tensor t(shape);
    rng.fill_normal(t, 0.0, stddev);
    return t;
}

inline TeacherSpec tiny_spec(int classes = 4, int image_size = 8) {
    TeacherSpec s;
    s.num_classes = classes;
    s.image_size = image_size;
    s.widths = {4, 8};
    return s;
}

// Stored BN statistics away from the (0, 1) defaults so BNS terms are not trivial.
inline void randomize_bn_stats(ResNet& net, Rng& rng) {
    for (std::size_t i = 0; i < net.num_bn(); ++i) {
        auto& st = net.bn(i).state;
        for (auto& v : st.running_mean.values()) v = static_cast<Real>(0.3 * rng.normal());
        for (auto& v : st.running_var.values()) v = static_cast<Real>(0.5 + rng.uniform());
    }
}

inline ResNet make_teacher(const TeacherSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    ResNet net(spec, rng);
    randomize_bn_stats(net, rng);
    net.set_requires_grad(false);
    return net;
}

// conv3x3 -> BN -> ReLU -> global pool -> linear: the smallest classifier
// with a BN layer, a feature embedding and a head.
class ToyTeacher final : public Classifier {
public:
    ToyTeacher(int in_channels, int hidden, int classes, Rng& rng)
        : conv_(Conv2d::make(in_channels, hidden, 3, 1, 1, rng)), bn_(BatchNorm2d::make(hidden)),
          fc_(Linear::make(hidden, classes, rng)), classes_(classes) {
        for (auto& v : bn_.state.running_mean.values()) v = static_cast<Real>(0.2 * rng.normal());
        for (auto& v : bn_.state.running_var.values()) v = static_cast<Real>(0.5 + rng.uniform());
        for (auto& v : bn_.gamma.mutable_value().values()) v = static_cast<Real>(1 + 0.2 * rng.normal());
        for (auto& v : bn_.beta.mutable_value().values()) v = static_cast<Real>(0.1 * rng.normal());
        for (Var* p : {&conv_.weight, &bn_.gamma, &bn_.beta, &fc_.weight, &fc_.bias}) p->set_requires_grad(false);
    }

    ClassifierOutput forward(const Var& x, ForwardHooks* hooks) const override {
        ForwardHooks passthrough;
        ForwardHooks& h = hooks ? *hooks : passthrough;
        Var y = conv_(h.activation(0, x), h.weight(0, conv_.weight));
        h.bn_input(0, y);
        y = ops::relu(bn_.eval(y));
        Var f = ops::global_avg_pool(y);
        Var logits = ops::linear(h.activation(1, f), h.weight(1, fc_.weight), fc_.bias);
        return {f, logits};
    }
    std::vector<Var> weights() const override { return {conv_.weight, fc_.weight}; }
    int num_classes() const override { return classes_; }
    std::vector<const BatchNorm2d*> bn_layers() const override { return {&bn_}; }

private:
    Conv2d conv_;
    BatchNorm2d bn_;
    Linear fc_;
    int classes_;
};

}  // namespace ris::testing

#endif  // RIS_TEST_HELPERS_HPP
