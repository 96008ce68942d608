#ifndef RIS_NN_HPP
#define RIS_NN_HPP

#include <string>
#include <utility>
#include <vector>

#include "ris/ops.hpp"
#include "ris/rng.hpp"

namespace ris::inline RIS_PRECISION {

struct Conv2d {
    Var weight;  // [out, in, k, k]
    int stride = 1;
    int padding = 0;

    static Conv2d make(int in, int out, int kernel, int stride, int padding, Rng& rng);
    Var operator()(const Var& x, const Var& w) const { return ops::conv2d(x, w, stride, padding); }
};

struct BatchNorm2d {
    Var gamma;
    Var beta;
    ops::BatchNormState state;
    Real momentum = Real(0.1);
    Real eps = Real(1e-5);

    static BatchNorm2d make(int channels);
    Var operator()(const Var& x, bool training) { return ops::batch_norm(x, gamma, beta, state, training, momentum, eps); }
    Var eval(const Var& x) const;
};

struct Linear {
    Var weight;  // [out, in]
    Var bias;    // [out]

    static Linear make(int in, int out, Rng& rng);
};

using NamedVar = std::pair<std::string, Var>;
using NamedTensorRef = std::pair<std::string, Tensor*>;

// Interception points during a forward pass. Weight indices count the
// conv/linear weights in forward order; activation site k is the input of
// weight layer k.
class ForwardHooks {
public:
    virtual ~ForwardHooks() = default;
    virtual Var weight(std::size_t /*index*/, const Var& w) { return w; }
    virtual Var activation(std::size_t /*site*/, const Var& a) { return a; }
    virtual void bn_input(std::size_t /*index*/, const Var& /*x*/) {}
};

struct ClassifierOutput {
    Var features;  // [N, F] embedding feeding the classifier head
    Var logits;    // [N, C]
};

// A frozen-evaluation classifier: the teacher role in the pipeline.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual ClassifierOutput forward(const Var& x, ForwardHooks* hooks = nullptr) const = 0;
    // Conv/linear weights in hook index order.
    virtual std::vector<Var> weights() const = 0;
    virtual int num_classes() const = 0;
    // BN layers in bn_input hook order.
    virtual std::vector<const BatchNorm2d*> bn_layers() const { return {}; }
};

// Maps images into a classifier's input space with per-channel
// (pixel - mean) / std. Generator outputs live in [-1, 1] and map to pixels
// as (g + 1) / 2 first. Empty constants mean identity.
struct InputNormalization {
    std::vector<Real> mean;
    std::vector<Real> std;

    Var from_pixels(const Var& pixels) const;
    Var from_generator(const Var& g) const;
    Tensor from_pixels(const Tensor& pixels) const;
};

// Deep copy of a parameter leaf, keeping the requires_grad flag.
Var clone_leaf(const Var& v);

}  // namespace ris

#endif  // RIS_NN_HPP
