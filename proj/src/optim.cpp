#include "ris/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ris::inline RIS_PRECISION {

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0)) throw std::invalid_argument("Adam learning rate must be > 0");
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros_like(p.value()));
        v_.push_back(Tensor::zeros_like(p.value()));
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
    const Real step = static_cast<Real>(lr_ / c1), root_c2 = static_cast<Real>(std::sqrt(c2));
    const Real eps = static_cast<Real>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue;
        const Tensor& g = params_[i].grad();
        Tensor& w = params_[i].mutable_value();
        Tensor &m = m_[i], &v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1 - b1) * g[k];
            v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
            w[k] -= step * m[k] / (std::sqrt(v[k]) / root_c2 + eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<NamedTensorRef> Adam::state() {
    std::vector<NamedTensorRef> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back("m/" + std::to_string(i), &m_[i]);
        out.emplace_back("v/" + std::to_string(i), &v_[i]);
    }
    return out;
}

Sgd::Sgd(std::vector<Var> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    if (!(lr > 0)) throw std::invalid_argument("SGD learning rate must be > 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("SGD momentum must be in [0, 1)");
    for (const auto& p : params_) buf_.push_back(Tensor::zeros_like(p.value()));
}

void Sgd::step() {
    const Real mu = static_cast<Real>(momentum_), lr = static_cast<Real>(lr_), wd = static_cast<Real>(weight_decay_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue;
        const Tensor& g = params_[i].grad();
        Tensor& w = params_[i].mutable_value();
        Tensor& b = buf_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            b[k] = mu * b[k] + g[k] + wd * w[k];
            w[k] -= lr * b[k];
        }
    }
}

void Sgd::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<NamedTensorRef> Sgd::state() {
    std::vector<NamedTensorRef> out;
    for (std::size_t i = 0; i < params_.size(); ++i) out.emplace_back("momentum/" + std::to_string(i), &buf_[i]);
    return out;
}

double cosine_lr(double base, long step, long total, double floor) {
    if (total <= 0) return base;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return floor + (base - floor) * 0.5 * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace ris
