#include "ris/nn.hpp"

#include <cmath>

namespace ris::inline RIS_PRECISION {

Conv2d Conv2d::make(int in, int out, int kernel, int stride, int padding, Rng& rng) {
    Tensor w({out, in, kernel, kernel});
    // He-normal for ReLU networks (fan-out, as torchvision does for convs).
    rng.fill_normal(w, 0.0, std::sqrt(2.0 / (out * kernel * kernel)));
    return Conv2d{Var::leaf(std::move(w)), stride, padding};
}

BatchNorm2d BatchNorm2d::make(int channels) {
    BatchNorm2d bn;
    bn.gamma = Var::leaf(Tensor({channels}, Real(1)));
    bn.beta = Var::leaf(Tensor({channels}, Real(0)));
    bn.state.running_mean = Tensor({channels}, Real(0));
    bn.state.running_var = Tensor({channels}, Real(1));
    return bn;
}

Var BatchNorm2d::eval(const Var& x) const {
    auto st = state;
    return ops::batch_norm(x, gamma, beta, st, false, momentum, eps);
}

Linear Linear::make(int in, int out, Rng& rng) {
    Tensor w({out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
    Tensor b({out});
    for (auto& v : b.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
    return Linear{Var::leaf(std::move(w)), Var::leaf(std::move(b))};
}

Var InputNormalization::from_pixels(const Var& pixels) const {
    if (mean.empty()) return pixels;
    std::vector<Real> scale(std.size()), shift(std.size());
    for (std::size_t c = 0; c < std.size(); ++c) {
        scale[c] = 1 / std[c];
        shift[c] = -mean[c] / std[c];
    }
    return ops::channel_affine(pixels, scale, shift);
}

Var InputNormalization::from_generator(const Var& g) const {
    const std::size_t channels = static_cast<std::size_t>(g.dim(1));
    std::vector<Real> scale(channels, Real(0.5)), shift(channels, Real(0.5));
    if (!mean.empty()) {
        for (std::size_t c = 0; c < channels; ++c) {
            scale[c] = Real(0.5) / std[c];
            shift[c] = (Real(0.5) - mean[c]) / std[c];
        }
    }
    return ops::channel_affine(g, scale, shift);
}

Tensor InputNormalization::from_pixels(const Tensor& pixels) const {
    NoGradGuard no_grad;
    return from_pixels(Var::constant(pixels)).value();
}

Var clone_leaf(const Var& v) { return Var::leaf(v.value(), v.requires_grad()); }

}  // namespace ris
