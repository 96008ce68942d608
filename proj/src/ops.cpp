#include "ris/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ris::inline RIS_PRECISION::ops {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

Node* wants(Node& self, std::size_t i) {
    Node* p = self.parents[i].get();
    return p->requires_grad ? p : nullptr;
}

void require_rank(const Var& x, int rank, const char* what) {
    if (x.value().rank() != rank)
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_str(x.shape()));
}

template <class F>
Var unary(const Var& x, F f, auto df) {
    Tensor out(x.shape());
    const auto& in = x.value();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return make_result(std::move(out), {x}, [df](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p->value[i], self.value[i]);
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    out.add_(b.value());
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (Node* p = wants(self, k)) p->accumulate_grad(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (Node* p = wants(self, 0)) p->accumulate_grad(self.grad);
        if (Node* p = wants(self, 1)) {
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node* p = wants(self, k);
            if (!p) continue;
            const auto& other = self.parents[1 - k]->value;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
        }
    });
}

Var add_scalar(const Var& a, Real s) {
    return unary(a, [s](Real v) { return v + s; }, [](Real, Real) { return Real(1); });
}

Var scale(const Var& a, Real s) {
    return unary(a, [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

Var relu(const Var& x) {
    return unary(
        x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real in, Real) { return in > 0 ? Real(1) : Real(0); });
}

Var leaky_relu(const Var& x, Real slope) {
    return unary(
        x, [slope](Real v) { return v > 0 ? v : v * slope; },
        [slope](Real in, Real) { return in > 0 ? Real(1) : slope; });
}

Var tanh(const Var& x) {
    return unary(
        x, [](Real v) { return std::tanh(v); }, [](Real, Real out) { return Real(1) - out * out; });
}

Var sum(const Var& x) {
    Real s = 0;
    for (Real v : x.value().values()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        const Real g0 = self.grad[0];
        for (auto& g : p->grad_buffer().values()) g += g0;
    });
}

Var mean(const Var& x) {
    const auto n = static_cast<Real>(x.value().size());
    if (x.value().empty()) throw std::invalid_argument("mean of empty tensor");
    Real s = 0;
    for (Real v : x.value().values()) s += v;
    return make_result(Tensor::scalar(s / n), {x}, [n](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        const Real g0 = self.grad[0] / n;
        for (auto& g : p->grad_buffer().values()) g += g0;
    });
}

Var sum_squared_diff(const Var& x, const Tensor& target) {
    check_same_shape(x.value(), target, "sum_squared_diff");
    Real s = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const Real d = x.value()[i] - target[i];
        s += d * d;
    }
    return make_result(Tensor::scalar(s), {x}, [target](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        const Real g0 = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2 * g0 * (p->value[i] - target[i]);
    });
}

Var reshape(const Var& x, Shape shape) {
    return make_result(x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var concat_batch(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_batch: no inputs");
    Shape shape = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        Shape tail(p.shape().begin() + 1, p.shape().end());
        if (!std::equal(tail.begin(), tail.end(), shape.begin() + 1, shape.end()) || p.shape().size() != shape.size())
            throw std::invalid_argument("concat_batch: incompatible shapes");
        total += p.dim(0);
    }
    shape[0] = total;
    Tensor out(shape);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
        off += p.value().size();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return make_result(std::move(out), std::move(inputs), [](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node* p = self.parents[k].get();
            const std::size_t n = p->value.size();
            if (p->requires_grad) {
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

Var slice_batch(const Var& x, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > x.dim(0)) throw std::out_of_range("slice_batch: range out of bounds");
    Shape shape = x.shape();
    shape[0] = count;
    const std::size_t per = x.value().size() / static_cast<std::size_t>(x.dim(0));
    Tensor out(shape);
    std::copy_n(x.value().data() + per * begin, per * count, out.data());
    return make_result(std::move(out), {x}, [per, begin](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[per * begin + i] += self.grad[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) throw std::invalid_argument("matmul: inner dimensions differ");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    MapR(out.data(), m, n).noalias() = CMapR(a.value().data(), m, k) * CMapR(b.value().data(), k, n);
    return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        CMapR dc(self.grad.data(), m, n);
        if (Node* p = wants(self, 0))
            MapR(p->grad_buffer().data(), m, k).noalias() += dc * CMapR(self.parents[1]->value.data(), k, n).transpose();
        if (Node* p = wants(self, 1))
            MapR(p->grad_buffer().data(), k, n).noalias() += CMapR(self.parents[0]->value.data(), m, k).transpose() * dc;
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const int n = x.dim(0), f = x.dim(1), o = weight.dim(0);
    if (weight.dim(1) != f) throw std::invalid_argument("linear: feature size mismatch");
    const bool has_bias = bias.defined();
    if (has_bias && bias.value().size() != static_cast<std::size_t>(o))
        throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({n, o});
    MapR y(out.data(), n, o);
    y.noalias() = CMapR(x.value().data(), n, f) * CMapR(weight.value().data(), o, f).transpose();
    if (has_bias)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < o; ++c) y(r, c) += bias.value()[static_cast<std::size_t>(c)];
    std::vector<Var> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return make_result(std::move(out), std::move(inputs), [n, f, o](Node& self) {
        CMapR dy(self.grad.data(), n, o);
        if (Node* p = wants(self, 0))
            MapR(p->grad_buffer().data(), n, f).noalias() += dy * CMapR(self.parents[1]->value.data(), o, f);
        if (Node* p = wants(self, 1))
            MapR(p->grad_buffer().data(), o, f).noalias() += dy.transpose() * CMapR(self.parents[0]->value.data(), n, f);
        if (self.parents.size() > 2)
            if (Node* p = wants(self, 2)) {
                auto& g = p->grad_buffer();
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < o; ++c) g[static_cast<std::size_t>(c)] += dy(r, c);
            }
    });
}

namespace {

struct ConvGeom {
    int c, h, w, o, k, stride, pad, ho, wo;
    int rows() const { return c * k * k; }
    int cols() const { return ho * wo; }
};

// Column matrix rows are (ci, ki, kj); `ld` is the row stride, so several
// images can sit side by side in one matrix.
void im2col(const Real* img, const ConvGeom& g, Real* col, std::size_t ld) {
    for (int ci = 0; ci < g.c; ++ci)
        for (int ki = 0; ki < g.k; ++ki)
            for (int kj = 0; kj < g.k; ++kj) {
                Real* dst = col + static_cast<std::size_t>((ci * g.k + ki) * g.k + kj) * ld;
                const Real* src = img + static_cast<std::size_t>(ci) * g.h * g.w;
                // Output columns whose input column stays inside the image.
                const int lo = std::clamp((g.pad - kj + g.stride - 1) / g.stride, 0, g.wo);
                const int hi = g.w - 1 + g.pad - kj < 0 ? lo : std::clamp((g.w - 1 + g.pad - kj) / g.stride + 1, lo, g.wo);
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    Real* drow = dst + static_cast<std::size_t>(oy) * g.wo;
                    if (iy < 0 || iy >= g.h) {
                        std::fill_n(drow, g.wo, Real(0));
                        continue;
                    }
                    const Real* srow = src + static_cast<std::size_t>(iy) * g.w;
                    std::fill_n(drow, lo, Real(0));
                    if (g.stride == 1) {
                        std::copy_n(srow + lo - g.pad + kj, hi - lo, drow + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * g.stride - g.pad + kj];
                    }
                    std::fill(drow + hi, drow + g.wo, Real(0));
                }
            }
}

void col2im(const Real* col, const ConvGeom& g, Real* img, std::size_t ld) {
    for (int ci = 0; ci < g.c; ++ci)
        for (int ki = 0; ki < g.k; ++ki)
            for (int kj = 0; kj < g.k; ++kj) {
                const Real* src = col + static_cast<std::size_t>((ci * g.k + ki) * g.k + kj) * ld;
                Real* dst = img + static_cast<std::size_t>(ci) * g.h * g.w;
                const int lo = std::clamp((g.pad - kj + g.stride - 1) / g.stride, 0, g.wo);
                const int hi = g.w - 1 + g.pad - kj < 0 ? lo : std::clamp((g.w - 1 + g.pad - kj) / g.stride + 1, lo, g.wo);
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    const Real* srow = src + static_cast<std::size_t>(oy) * g.wo;
                    Real* drow = dst + static_cast<std::size_t>(iy) * g.w;
                    for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride - g.pad + kj] += srow[ox];
                }
            }
}

// Images per GEMM: enough to amortize the call, bounded to ~8 MB of columns.
int conv_group(const ConvGeom& g, int n) {
    const std::size_t per = static_cast<std::size_t>(g.rows()) * g.cols();
    return static_cast<int>(std::clamp<std::size_t>((std::size_t{1} << 21) / std::max<std::size_t>(per, 1), 1, n));
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, int stride, int padding) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    if (weight.dim(1) != x.dim(1)) throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    if (weight.dim(2) != weight.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    ConvGeom g{x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), stride, padding, 0, 0};
    g.ho = (g.h + 2 * padding - g.k) / stride + 1;
    g.wo = (g.w + 2 * padding - g.k) / stride + 1;
    if (g.ho <= 0 || g.wo <= 0) throw std::invalid_argument("conv2d: empty output");
    const int n = x.dim(0);
    const int group = conv_group(g, n);
    const std::size_t cols = static_cast<std::size_t>(g.cols());

    Tensor out({n, g.o, g.ho, g.wo});
    std::vector<Real> col(static_cast<std::size_t>(g.rows()) * cols * group);
    std::vector<Real> res(static_cast<std::size_t>(g.o) * cols * group);
    CMapR wmat(weight.value().data(), g.o, g.rows());
    const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
    const std::size_t out_stride = static_cast<std::size_t>(g.o) * cols;
    for (int b0 = 0; b0 < n; b0 += group) {
        const int m = std::min(group, n - b0);
        const std::size_t ld = cols * m;
        for (int b = 0; b < m; ++b) im2col(x.value().data() + in_stride * (b0 + b), g, col.data() + cols * b, ld);
        MapR(res.data(), g.o, static_cast<Eigen::Index>(ld)).noalias() =
            wmat * CMapR(col.data(), g.rows(), static_cast<Eigen::Index>(ld));
        for (int b = 0; b < m; ++b)
            for (int oc = 0; oc < g.o; ++oc)
                std::copy_n(res.data() + oc * ld + cols * b, cols, out.data() + out_stride * (b0 + b) + oc * cols);
    }

    return make_result(std::move(out), {x, weight}, [g, n, group, in_stride, out_stride](Node& self) {
        Node* px = wants(self, 0);
        Node* pw = wants(self, 1);
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const std::size_t cols = static_cast<std::size_t>(g.cols());
        CMapR wmat(wv.data(), g.o, g.rows());
        std::vector<Real> col(pw ? static_cast<std::size_t>(g.rows()) * cols * group : 0);
        std::vector<Real> dcol(px ? static_cast<std::size_t>(g.rows()) * cols * group : 0);
        std::vector<Real> dy(static_cast<std::size_t>(g.o) * cols * group);
        for (int b0 = 0; b0 < n; b0 += group) {
            const int m = std::min(group, n - b0);
            const std::size_t ld = cols * m;
            const auto ldi = static_cast<Eigen::Index>(ld);
            for (int b = 0; b < m; ++b)
                for (int oc = 0; oc < g.o; ++oc)
                    std::copy_n(self.grad.data() + out_stride * (b0 + b) + oc * cols, cols, dy.data() + oc * ld + cols * b);
            CMapR dym(dy.data(), g.o, ldi);
            if (pw) {
                for (int b = 0; b < m; ++b) im2col(xv.data() + in_stride * (b0 + b), g, col.data() + cols * b, ld);
                MapR(pw->grad_buffer().data(), g.o, g.rows()).noalias() +=
                    dym * CMapR(col.data(), g.rows(), ldi).transpose();
            }
            if (px) {
                MapR(dcol.data(), g.rows(), ldi).noalias() = wmat.transpose() * dym;
                Real* gx = px->grad_buffer().data();
                for (int b = 0; b < m; ++b) col2im(dcol.data() + cols * b, g, gx + in_stride * (b0 + b), ld);
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    require_rank(x, 4, "global_avg_pool");
    const int n = x.dim(0), c = x.dim(1);
    const int hw = x.dim(2) * x.dim(3);
    Tensor out({n, c});
    const Real* in = x.value().data();
    for (int i = 0; i < n * c; ++i) {
        Real s = 0;
        for (int j = 0; j < hw; ++j) s += in[static_cast<std::size_t>(i) * hw + j];
        out[static_cast<std::size_t>(i)] = s / static_cast<Real>(hw);
    }
    return make_result(std::move(out), {x}, [n, c, hw](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int i = 0; i < n * c; ++i) {
            const Real gi = self.grad[static_cast<std::size_t>(i)] / static_cast<Real>(hw);
            for (int j = 0; j < hw; ++j) g[static_cast<std::size_t>(i) * hw + j] += gi;
        }
    });
}

Var upsample_nearest(const Var& x, int factor) {
    require_rank(x, 4, "upsample_nearest");
    if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = h * factor, wo = w * factor;
    Tensor out({x.dim(0), x.dim(1), ho, wo});
    const Real* in = x.value().data();
    for (int i = 0; i < nc; ++i)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                out[(static_cast<std::size_t>(i) * ho + y) * wo + xx] =
                    in[(static_cast<std::size_t>(i) * h + y / factor) * w + xx / factor];
    return make_result(std::move(out), {x}, [nc, h, w, ho, wo, factor](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int i = 0; i < nc; ++i)
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx)
                    g[(static_cast<std::size_t>(i) * h + y / factor) * w + xx / factor] +=
                        self.grad[(static_cast<std::size_t>(i) * ho + y) * wo + xx];
    });
}

Var channel_affine(const Var& x, std::span<const Real> scale_c, std::span<const Real> shift_c) {
    require_rank(x, 4, "channel_affine");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (scale_c.size() != static_cast<std::size_t>(c) || shift_c.size() != static_cast<std::size_t>(c))
        throw std::invalid_argument("channel_affine: coefficient count does not match channels");
    std::vector<Real> sc(scale_c.begin(), scale_c.end());
    Tensor out(x.shape());
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
            for (int j = 0; j < hw; ++j) out[off + j] = x.value()[off + j] * sc[ch] + shift_c[ch];
        }
    return make_result(std::move(out), {x}, [sc, n, c, hw](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
                for (int j = 0; j < hw; ++j) g[off + j] += self.grad[off + j] * sc[ch];
            }
    });
}

namespace {

struct ChannelLayout {
    int n, c, hw;
    std::size_t idx(int b, int ch, int j) const { return (static_cast<std::size_t>(b) * c + ch) * hw + j; }
    Real count() const { return static_cast<Real>(n) * hw; }
};

ChannelLayout channel_layout(const Var& x, const char* what) {
    if (x.value().rank() != 4 && x.value().rank() != 2)
        throw std::invalid_argument(std::string(what) + ": expected [N,C,H,W] or [N,C], got " + shape_str(x.shape()));
    ChannelLayout l{x.dim(0), x.dim(1), x.value().rank() == 4 ? x.dim(2) * x.dim(3) : 1};
    if (l.n * l.hw == 0) throw std::invalid_argument(std::string(what) + ": no batch/spatial elements");
    return l;
}

std::vector<double> channel_means(const Tensor& v, const ChannelLayout& l) {
    std::vector<double> m(static_cast<std::size_t>(l.c), 0.0);
    for (int b = 0; b < l.n; ++b)
        for (int ch = 0; ch < l.c; ++ch)
            m[ch] += Eigen::Map<const Eigen::ArrayX<Real>>(v.data() + l.idx(b, ch, 0), l.hw).template cast<double>().sum();
    for (auto& x : m) x /= l.count();
    return m;
}

std::vector<double> channel_vars(const Tensor& v, const ChannelLayout& l, const std::vector<double>& m) {
    std::vector<double> var(static_cast<std::size_t>(l.c), 0.0);
    for (int b = 0; b < l.n; ++b)
        for (int ch = 0; ch < l.c; ++ch)
            var[ch] += (Eigen::Map<const Eigen::ArrayX<Real>>(v.data() + l.idx(b, ch, 0), l.hw).template cast<double>() -
                        m[ch])
                           .square()
                           .sum();
    for (auto& x : var) x /= l.count();
    return var;
}

}  // namespace

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training, Real momentum,
               Real eps) {
    const auto l = channel_layout(x, "batch_norm");
    if (gamma.value().size() != static_cast<std::size_t>(l.c) || beta.value().size() != static_cast<std::size_t>(l.c))
        throw std::invalid_argument("batch_norm: affine parameter size mismatch");
    std::vector<Real> mean_c(l.c), invstd(l.c);
    if (training) {
        const auto m = channel_means(x.value(), l);
        const auto var = channel_vars(x.value(), l, m);
        const double cnt = l.count();
        for (int ch = 0; ch < l.c; ++ch) {
            mean_c[ch] = static_cast<Real>(m[ch]);
            invstd[ch] = static_cast<Real>(1.0 / std::sqrt(var[ch] + eps));
            const double unbiased = cnt > 1 ? var[ch] * cnt / (cnt - 1) : var[ch];
            state.running_mean[ch] = static_cast<Real>((1 - momentum) * state.running_mean[ch] + momentum * m[ch]);
            state.running_var[ch] = static_cast<Real>((1 - momentum) * state.running_var[ch] + momentum * unbiased);
        }
    } else {
        for (int ch = 0; ch < l.c; ++ch) {
            mean_c[ch] = state.running_mean[ch];
            invstd[ch] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + eps));
        }
    }
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (int b = 0; b < l.n; ++b)
        for (int ch = 0; ch < l.c; ++ch) {
            const Real gm = gamma.value()[ch], bt = beta.value()[ch];
            for (int j = 0; j < l.hw; ++j) {
                const auto i = l.idx(b, ch, j);
                out[i] = (xv[i] - mean_c[ch]) * invstd[ch] * gm + bt;
            }
        }
    return make_result(std::move(out), {x, gamma, beta}, [l, mean_c, invstd, training](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& gm = self.parents[1]->value;
        Node* px = wants(self, 0);
        Node* pg = wants(self, 1);
        Node* pb = wants(self, 2);
        const Tensor& dy = self.grad;
        for (int ch = 0; ch < l.c; ++ch) {
            double sum_dy = 0, sum_dy_xhat = 0;
            for (int b = 0; b < l.n; ++b)
                for (int j = 0; j < l.hw; ++j) {
                    const auto i = l.idx(b, ch, j);
                    const double xhat = (xv[i] - mean_c[ch]) * invstd[ch];
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xhat;
                }
            if (pg) pg->grad_buffer()[ch] += static_cast<Real>(sum_dy_xhat);
            if (pb) pb->grad_buffer()[ch] += static_cast<Real>(sum_dy);
            if (!px) continue;
            auto& dx = px->grad_buffer();
            const double k = gm[ch] * invstd[ch];
            if (training) {
                const double cnt = l.count();
                const double mdy = sum_dy / cnt, mdyx = sum_dy_xhat / cnt;
                for (int b = 0; b < l.n; ++b)
                    for (int j = 0; j < l.hw; ++j) {
                        const auto i = l.idx(b, ch, j);
                        const double xhat = (xv[i] - mean_c[ch]) * invstd[ch];
                        dx[i] += static_cast<Real>(k * (dy[i] - mdy - xhat * mdyx));
                    }
            } else {
                for (int b = 0; b < l.n; ++b)
                    for (int j = 0; j < l.hw; ++j) {
                        const auto i = l.idx(b, ch, j);
                        dx[i] += static_cast<Real>(k * dy[i]);
                    }
            }
        }
    });
}

Var channel_mean(const Var& x) {
    const auto l = channel_layout(x, "channel_mean");
    const auto m = channel_means(x.value(), l);
    Tensor out({l.c});
    for (int ch = 0; ch < l.c; ++ch) out[ch] = static_cast<Real>(m[ch]);
    return make_result(std::move(out), {x}, [l](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int b = 0; b < l.n; ++b)
            for (int ch = 0; ch < l.c; ++ch) {
                const Real gc = self.grad[ch] / l.count();
                for (int j = 0; j < l.hw; ++j) g[l.idx(b, ch, j)] += gc;
            }
    });
}

Var channel_std(const Var& x) {
    const auto l = channel_layout(x, "channel_std");
    const auto m = channel_means(x.value(), l);
    const auto var = channel_vars(x.value(), l, m);
    Tensor out({l.c});
    std::vector<Real> mean_c(l.c);
    for (int ch = 0; ch < l.c; ++ch) {
        out[ch] = static_cast<Real>(std::sqrt(var[ch]));
        mean_c[ch] = static_cast<Real>(m[ch]);
    }
    return make_result(std::move(out), {x}, [l, mean_c](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int ch = 0; ch < l.c; ++ch) {
            const Real sd = self.value[ch];
            if (!(sd > 0)) continue;
            const Real k = self.grad[ch] / (l.count() * sd);
            for (int b = 0; b < l.n; ++b)
                for (int j = 0; j < l.hw; ++j) {
                    const auto i = l.idx(b, ch, j);
                    g[i] += k * (p->value[i] - mean_c[ch]);
                }
        }
    });
}

namespace {

void softmax_row(const Real* in, Real* out, int c, Real inv_temp = 1) {
    Real mx = in[0] * inv_temp;
    for (int j = 1; j < c; ++j) mx = std::max(mx, in[j] * inv_temp);
    double s = 0;
    for (int j = 0; j < c; ++j) {
        out[j] = std::exp(in[j] * inv_temp - mx);
        s += out[j];
    }
    for (int j = 0; j < c; ++j) out[j] = static_cast<Real>(out[j] / s);
}

}  // namespace

Var softmax(const Var& logits) {
    require_rank(logits, 2, "softmax");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor out(logits.shape());
    for (int r = 0; r < n; ++r) softmax_row(logits.value().row(r).data(), out.row(r).data(), c);
    return make_result(std::move(out), {logits}, [n, c](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int r = 0; r < n; ++r) {
            const auto y = self.value.row(r);
            const auto dy = self.grad.row(r);
            Real dot = 0;
            for (int j = 0; j < c; ++j) dot += dy[j] * y[j];
            auto gr = g.row(r);
            for (int j = 0; j < c; ++j) gr[j] += y[j] * (dy[j] - dot);
        }
    });
}

Var log_softmax(const Var& logits) {
    require_rank(logits, 2, "log_softmax");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor out(logits.shape());
    for (int r = 0; r < n; ++r) {
        const auto in = logits.value().row(r);
        Real mx = *std::max_element(in.begin(), in.end());
        double s = 0;
        for (int j = 0; j < c; ++j) s += std::exp(in[j] - mx);
        const Real lse = mx + static_cast<Real>(std::log(s));
        auto o = out.row(r);
        for (int j = 0; j < c; ++j) o[j] = in[j] - lse;
    }
    return make_result(std::move(out), {logits}, [n, c](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int r = 0; r < n; ++r) {
            const auto y = self.value.row(r);
            const auto dy = self.grad.row(r);
            Real s = 0;
            for (int j = 0; j < c; ++j) s += dy[j];
            auto gr = g.row(r);
            for (int j = 0; j < c; ++j) gr[j] += dy[j] - std::exp(y[j]) * s;
        }
    });
}

Var cross_entropy(const Var& probs, const Tensor& targets) {
    require_rank(probs, 2, "cross_entropy");
    check_same_shape(probs.value(), targets, "cross_entropy");
    constexpr Real kFloor = Real(1e-12);
    const int n = probs.dim(0), c = probs.dim(1);
    Real total = 0;
    for (int r = 0; r < n; ++r) {
        const auto p = probs.value().row(r);
        const auto t = targets.row(r);
        Real s = 0;
        for (int j = 0; j < c; ++j) s -= t[j] * std::log(std::max(p[j], kFloor));
        total += s;
    }
    return make_result(Tensor::scalar(total / static_cast<Real>(n)), {probs}, [targets, n, c](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        const Real k = self.grad[0] / static_cast<Real>(n);
        for (int r = 0; r < n; ++r) {
            const auto pr = p->value.row(r);
            const auto t = targets.row(r);
            auto gr = g.row(r);
            for (int j = 0; j < c; ++j)
                if (t[j] != 0 && pr[j] > kFloor) gr[j] -= k * t[j] / pr[j];
        }
    });
}

Var kl_div_logits(const Var& logits, const Tensor& target_probs, Real temperature) {
    require_rank(logits, 2, "kl_div_logits");
    check_same_shape(logits.value(), target_probs, "kl_div_logits");
    if (!(temperature > 0)) throw std::invalid_argument("kl_div_logits: temperature must be positive");
    const int n = logits.dim(0), c = logits.dim(1);
    const Real inv_t = 1 / temperature;
    Tensor q(logits.shape());
    Real total = 0;
    for (int r = 0; r < n; ++r) {
        softmax_row(logits.value().row(r).data(), q.row(r).data(), c, inv_t);
        const auto t = target_probs.row(r);
        const auto qr = q.row(r);
        for (int j = 0; j < c; ++j)
            if (t[j] > 0) total += t[j] * (std::log(t[j]) - std::log(std::max(qr[j], Real(1e-30))));
    }
    return make_result(Tensor::scalar(total / static_cast<Real>(n)), {logits},
                       [q, target_probs, n, c, inv_t](Node& self) {
                           Node* p = wants(self, 0);
                           if (!p) return;
                           auto& g = p->grad_buffer();
                           const Real k = self.grad[0] * inv_t / static_cast<Real>(n);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (q[i] - target_probs[i]);
                           (void)c;
                       });
}

Var row_cosine_distance(const Var& a, const Var& b) {
    require_rank(a, 2, "row_cosine_distance");
    check_same_shape(a.value(), b.value(), "row_cosine_distance");
    const int n = a.dim(0), d = a.dim(1);
    Tensor out({n});
    std::vector<Real> na(n), nb(n), dots(n);
    for (int r = 0; r < n; ++r) {
        const auto ar = a.value().row(r), br = b.value().row(r);
        double aa = 0, bb = 0, ab = 0;
        for (int j = 0; j < d; ++j) {
            aa += double(ar[j]) * ar[j];
            bb += double(br[j]) * br[j];
            ab += double(ar[j]) * br[j];
        }
        if (!(aa > 0) || !(bb > 0))
            throw std::domain_error("row_cosine_distance: zero-norm feature vector at row " + std::to_string(r) +
                                    " (degenerate activation)");
        na[r] = static_cast<Real>(std::sqrt(aa));
        nb[r] = static_cast<Real>(std::sqrt(bb));
        dots[r] = static_cast<Real>(ab);
        out[r] = static_cast<Real>(1.0 - ab / (std::sqrt(aa) * std::sqrt(bb)));
    }
    return make_result(std::move(out), {a, b}, [n, d, na, nb, dots](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node* p = wants(self, k);
            if (!p) continue;
            const Tensor& self_v = self.parents[k]->value;
            const Tensor& other_v = self.parents[1 - k]->value;
            const auto& ns = k == 0 ? na : nb;
            const auto& no = k == 0 ? nb : na;
            auto& g = p->grad_buffer();
            for (int r = 0; r < n; ++r) {
                const Real gr = self.grad[r];
                const Real inv = 1 / (ns[r] * no[r]);
                const Real c = dots[r] / (ns[r] * ns[r] * ns[r] * no[r]);
                const auto s = self_v.row(r);
                const auto o = other_v.row(r);
                auto gg = g.row(r);
                for (int j = 0; j < d; ++j) gg[j] -= gr * (o[j] * inv - s[j] * c);
            }
        }
    });
}

Var row_l1_distance(const Var& a, const Var& b) {
    require_rank(a, 2, "row_l1_distance");
    check_same_shape(a.value(), b.value(), "row_l1_distance");
    const int n = a.dim(0), d = a.dim(1);
    Tensor out({n});
    for (int r = 0; r < n; ++r) {
        const auto ar = a.value().row(r), br = b.value().row(r);
        Real s = 0;
        for (int j = 0; j < d; ++j) s += std::abs(ar[j] - br[j]);
        out[r] = s;
    }
    return make_result(std::move(out), {a, b}, [n, d](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        for (std::size_t k = 0; k < 2; ++k) {
            Node* p = wants(self, k);
            if (!p) continue;
            const Real sgn_k = k == 0 ? Real(1) : Real(-1);
            auto& g = p->grad_buffer();
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < d; ++j) {
                    const std::size_t i = static_cast<std::size_t>(r) * d + j;
                    const Real diff = av[i] - bv[i];
                    const Real s = diff > 0 ? Real(1) : (diff < 0 ? Real(-1) : Real(0));
                    g[i] += sgn_k * s * self.grad[r];
                }
        }
    });
}

Var elementwise_max(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("elementwise_max: no inputs");
    for (const auto& x : xs) check_same_shape(xs[0].value(), x.value(), "elementwise_max");
    const std::size_t size = xs[0].value().size();
    Tensor out = xs[0].value();
    std::vector<std::uint32_t> arg(size, 0);
    for (std::size_t k = 1; k < xs.size(); ++k)
        for (std::size_t i = 0; i < size; ++i)
            if (xs[k].value()[i] > out[i]) {
                out[i] = xs[k].value()[i];
                arg[i] = static_cast<std::uint32_t>(k);
            }
    std::vector<Var> inputs(xs.begin(), xs.end());
    return make_result(std::move(out), std::move(inputs), [arg](Node& self) {
        for (std::size_t i = 0; i < arg.size(); ++i) {
            Node* p = self.parents[arg[i]].get();
            if (p->requires_grad) p->grad_buffer()[i] += self.grad[i];
        }
    });
}

Var affine_resample(const Var& x, std::span<const ResampleParams> params) {
    require_rank(x, 4, "affine_resample");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (params.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("affine_resample: need one parameter set per image");
    for (const auto& p : params)
        if (!(p.zoom > 0)) throw std::invalid_argument("affine_resample: zoom must be positive");

    // Precomputed taps: for each (image, output pixel) up to four (source index, weight) pairs.
    struct Tap {
        int src;
        Real wt;
    };
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(n) * hw * 4, Tap{-1, 0});
    const Real cy = Real(h - 1) / 2, cx = Real(w - 1) / 2;
    for (int b = 0; b < n; ++b) {
        const auto& pr = params[b];
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const Real sy = cy + (Real(y) - cy) / pr.zoom - pr.shift_y;
                const Real sx = cx + (Real(xx) - cx) / pr.zoom - pr.shift_x;
                const Real fy = std::floor(sy), fx = std::floor(sx);
                const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
                const Real wy = sy - fy, wx = sx - fx;
                Tap* t = &(*taps)[((static_cast<std::size_t>(b) * hw) + static_cast<std::size_t>(y) * w + xx) * 4];
                const int ys[2] = {y0, y0 + 1};
                const int xs[2] = {x0, x0 + 1};
                const Real wys[2] = {1 - wy, wy};
                const Real wxs[2] = {1 - wx, wx};
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const Real wt = wys[i] * wxs[j];
                        if (ys[i] >= 0 && ys[i] < h && xs[j] >= 0 && xs[j] < w && wt != 0)
                            t[i * 2 + j] = Tap{ys[i] * w + xs[j], wt};
                    }
            }
    }
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t plane = (static_cast<std::size_t>(b) * c + ch) * hw;
            for (std::size_t pix = 0; pix < hw; ++pix) {
                const Tap* t = &(*taps)[(static_cast<std::size_t>(b) * hw + pix) * 4];
                Real v = 0;
                for (int k = 0; k < 4; ++k)
                    if (t[k].src >= 0) v += t[k].wt * xv[plane + static_cast<std::size_t>(t[k].src)];
                out[plane + pix] = v;
            }
        }
    return make_result(std::move(out), {x}, [taps, n, c, hw](Node& self) {
        Node* p = wants(self, 0);
        if (!p) return;
        auto& g = p->grad_buffer();
        for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t plane = (static_cast<std::size_t>(b) * c + ch) * hw;
                for (std::size_t pix = 0; pix < hw; ++pix) {
                    const Tap* t = &(*taps)[(static_cast<std::size_t>(b) * hw + pix) * 4];
                    const Real gy = self.grad[plane + pix];
                    for (int k = 0; k < 4; ++k)
                        if (t[k].src >= 0) g[plane + static_cast<std::size_t>(t[k].src)] += t[k].wt * gy;
                }
            }
    });
}

}  // namespace ris::ops
