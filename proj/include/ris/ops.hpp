#ifndef RIS_OPS_HPP
#define RIS_OPS_HPP

#include <span>
#include <vector>

#include "ris/autograd.hpp"

// Differentiable operations over Var. Image batches are NCHW, matrices are
// [rows, cols], per-sample vectors are [N].
namespace ris::inline RIS_PRECISION::ops {

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, Real s);
Var scale(const Var& a, Real s);
Var relu(const Var& x);
Var leaky_relu(const Var& x, Real slope);
Var tanh(const Var& x);

// Reductions to a single-element tensor
Var sum(const Var& x);
Var mean(const Var& x);
// Sum of squared differences against a constant target.
Var sum_squared_diff(const Var& x, const Tensor& target);

// Shape
Var reshape(const Var& x, Shape shape);
Var concat_batch(std::span<const Var> parts);
Var slice_batch(const Var& x, int begin, int count);

// Dense layers
Var matmul(const Var& a, const Var& b);                       // [M,K] x [K,N]
Var linear(const Var& x, const Var& weight, const Var& bias);  // x [N,F], weight [O,F], bias [O] or undefined
Var conv2d(const Var& x, const Var& weight, int stride, int padding);
Var global_avg_pool(const Var& x);  // [N,C,H,W] -> [N,C]
Var upsample_nearest(const Var& x, int factor);

// Per-channel y = x * scale[c] + shift[c] with constant coefficients.
Var channel_affine(const Var& x, std::span<const Real> scale, std::span<const Real> shift);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
};

// Batch norm with affine gamma/beta. Training mode normalizes with the batch
// statistics (biased variance) and updates `state` with `momentum`; evaluation
// mode uses the stored statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training, Real momentum,
               Real eps);

// Per-channel mean and standard deviation (biased) over the batch and spatial
// axes, differentiable with respect to x.
Var channel_mean(const Var& x);
Var channel_std(const Var& x);

// Row-wise
Var softmax(const Var& logits);
Var log_softmax(const Var& logits);
// Mean over rows of -sum_c t_c log(max(p_c, 1e-12)).
Var cross_entropy(const Var& probs, const Tensor& targets);
// Mean over rows of KL(target || softmax(logits / temperature)).
Var kl_div_logits(const Var& logits, const Tensor& target_probs, Real temperature);
// Per-row 1 - cos(a_i, b_i); rows must have nonzero norm.
Var row_cosine_distance(const Var& a, const Var& b);
// Per-row ||a_i - b_i||_1.
Var row_l1_distance(const Var& a, const Var& b);
// Elementwise maximum over equally shaped inputs; gradient goes to the first argmax.
Var elementwise_max(std::span<const Var> xs);

// Bilinear resampling with zero padding. For image n the output pixel (y, x)
// reads the input at center + (p - center) / zoom[n] - shift[n].
struct ResampleParams {
    Real zoom = 1;
    Real shift_x = 0;
    Real shift_y = 0;
};
Var affine_resample(const Var& x, std::span<const ResampleParams> params);

}  // namespace ris::ops

#endif  // RIS_OPS_HPP
