#include "ris/generator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ris::inline RIS_PRECISION {

void GeneratorConfig::validate() const {
    if (num_classes < 1 || latent_dim < 1 || channels < 1 || base_channels < 2)
        throw std::invalid_argument("generator: invalid dimensions");
    if (upsample_blocks < 1) throw std::invalid_argument("generator: need at least one upsampling block");
    if ((image_size >> upsample_blocks) < 1 || ((image_size >> upsample_blocks) << upsample_blocks) != image_size)
        throw std::invalid_argument("generator: image_size must be divisible by 2^upsample_blocks");
    if ((base_channels >> (upsample_blocks - 1)) < 1) throw std::invalid_argument("generator: base_channels too small");
}

LatentBatch sample_latent(int batch, int dim, Rng& rng) {
    if (batch < 1 || dim < 1) throw std::invalid_argument("sample_latent: batch and dim must be >= 1");
    Tensor z({batch, dim});
    rng.fill_normal(z);
    return LatentBatch{std::move(z)};
}

LabelCondition LabelCondition::hard(std::vector<int> classes, int num_classes) {
    if (classes.empty()) throw std::invalid_argument("LabelCondition: empty batch");
    for (int c : classes)
        if (c < 0 || c >= num_classes) throw std::invalid_argument("LabelCondition: class index out of range");
    LabelCondition l;
    l.classes_ = std::move(classes);
    l.num_classes_ = num_classes;
    return l;
}

LabelCondition LabelCondition::soft(Tensor rows) {
    if (rows.rank() != 2 || rows.dim(0) < 1) throw std::invalid_argument("LabelCondition: soft rows must be [B, C]");
    for (int r = 0; r < rows.dim(0); ++r) {
        double s = 0;
        for (Real v : rows.row(r)) {
            if (!(v >= 0)) throw std::invalid_argument("LabelCondition: soft row has a negative entry");
            s += v;
        }
        if (std::abs(s - 1) > 1e-4) throw std::invalid_argument("LabelCondition: soft row does not sum to 1");
    }
    LabelCondition l;
    l.num_classes_ = rows.dim(1);
    l.rows_ = std::move(rows);
    return l;
}

int LabelCondition::batch() const { return is_hard() ? static_cast<int>(classes_.size()) : rows_.dim(0); }

Tensor LabelCondition::rows() const {
    if (!is_hard()) return rows_;
    Tensor t({batch(), num_classes_});
    for (int b = 0; b < batch(); ++b) t.row(b)[static_cast<std::size_t>(classes_[b])] = 1;
    return t;
}

namespace {

// out[b] = sum_k t[b, k] E[k], accumulated in ascending k.
Var embed_mix(const Tensor& t, const Var& table) {
    const int b = t.dim(0), c = t.dim(1), d = table.dim(1);
    Tensor out({b, d});
    for (int r = 0; r < b; ++r) {
        auto o = out.row(r);
        for (int k = 0; k < c; ++k) {
            const Real w = t.row(r)[static_cast<std::size_t>(k)];
            const auto e = table.value().row(k);
            for (int j = 0; j < d; ++j) o[j] += w * e[j];
        }
    }
    return make_result(std::move(out), {table}, [t, b, c, d](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        auto& g = p->grad_buffer();
        for (int r = 0; r < b; ++r)
            for (int k = 0; k < c; ++k) {
                const Real w = t.row(r)[static_cast<std::size_t>(k)];
                auto gk = g.row(k);
                const auto dy = self.grad.row(r);
                for (int j = 0; j < d; ++j) gk[j] += w * dy[j];
            }
    });
}

// out[b] = E[classes[b]].
Var embed_lookup(const std::vector<int>& classes, const Var& table) {
    const int b = static_cast<int>(classes.size()), d = table.dim(1);
    Tensor out({b, d});
    for (int r = 0; r < b; ++r) {
        const auto e = table.value().row(classes[r]);
        std::copy(e.begin(), e.end(), out.row(r).begin());
    }
    return make_result(std::move(out), {table}, [classes, b, d](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        auto& g = p->grad_buffer();
        for (int r = 0; r < b; ++r) {
            auto gk = g.row(classes[r]);
            const auto dy = self.grad.row(r);
            for (int j = 0; j < d; ++j) gk[j] += dy[j];
        }
    });
}

}  // namespace

ConditionalGenerator::ConditionalGenerator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    Tensor e({cfg_.num_classes, cfg_.latent_dim});
    rng.fill_normal(e);
    embedding_ = Var::leaf(std::move(e));
    seed_size_ = cfg_.image_size >> cfg_.upsample_blocks;
    project_ = Linear::make(cfg_.latent_dim, cfg_.base_channels * seed_size_ * seed_size_, rng);
    bn0_ = BatchNorm2d::make(cfg_.base_channels);
    int in = cfg_.base_channels;
    for (int k = 0; k < cfg_.upsample_blocks; ++k) {
        const int out = cfg_.base_channels >> k;
        convs_.push_back(Conv2d::make(in, out, 3, 1, 1, rng));
        bns_.push_back(BatchNorm2d::make(out));
        in = out;
    }
    out_conv_ = Conv2d::make(in, cfg_.channels, 3, 1, 1, rng);
    out_bn_ = BatchNorm2d::make(cfg_.channels);
    out_bn_.gamma.set_requires_grad(false);
    out_bn_.beta.set_requires_grad(false);
}

Var ConditionalGenerator::condition(const Var& z, const LabelCondition& cond) const {
    if (cond.num_classes() != cfg_.num_classes)
        throw std::invalid_argument("synthesize: condition has " + std::to_string(cond.num_classes()) +
                                    " classes, generator expects " + std::to_string(cfg_.num_classes));
    if (z.value().rank() != 2 || z.dim(1) != cfg_.latent_dim || z.dim(0) != cond.batch())
        throw std::invalid_argument("synthesize: latent batch shape " + shape_str(z.shape()) +
                                    " does not match condition batch or latent_dim");
    Var emb = cond.is_hard() ? embed_lookup(cond.classes(), embedding_) : embed_mix(cond.rows(), embedding_);
    return ops::add(z, emb);
}

Var ConditionalGenerator::synthesize(const Var& z, const LabelCondition& cond, bool training) {
    const int b = z.dim(0);
    Var h = condition(z, cond);
    h = ops::linear(h, project_.weight, project_.bias);
    h = ops::reshape(h, {b, cfg_.base_channels, seed_size_, seed_size_});
    auto bn = [training](BatchNorm2d& layer, const Var& x) { return training ? layer(x, true) : layer.eval(x); };
    h = bn(bn0_, h);
    for (std::size_t k = 0; k < convs_.size(); ++k) {
        h = ops::upsample_nearest(h, 2);
        h = ops::leaky_relu(bn(bns_[k], convs_[k](h, convs_[k].weight)), Real(0.2));
    }
    h = bn(out_bn_, out_conv_(h, out_conv_.weight));
    return ops::tanh(h);
}

Var ConditionalGenerator::synthesize(const LatentBatch& z, const LabelCondition& cond, bool training) {
    return synthesize(Var::constant(z.z), cond, training);
}

std::vector<NamedVar> ConditionalGenerator::parameters() const {
    std::vector<NamedVar> p;
    p.emplace_back("embedding", embedding_);
    p.emplace_back("project.weight", project_.weight);
    p.emplace_back("project.bias", project_.bias);
    p.emplace_back("bn0.gamma", bn0_.gamma);
    p.emplace_back("bn0.beta", bn0_.beta);
    for (std::size_t k = 0; k < convs_.size(); ++k) {
        const auto idx = std::to_string(k);
        p.emplace_back("block" + idx + ".conv.weight", convs_[k].weight);
        p.emplace_back("block" + idx + ".bn.gamma", bns_[k].gamma);
        p.emplace_back("block" + idx + ".bn.beta", bns_[k].beta);
    }
    p.emplace_back("out.conv.weight", out_conv_.weight);
    return p;
}

std::vector<NamedTensorRef> ConditionalGenerator::state() {
    std::vector<NamedTensorRef> s;
    for (auto& [name, v] : parameters()) s.emplace_back(name, &v.mutable_value());
    s.emplace_back("bn0.running_mean", &bn0_.state.running_mean);
    s.emplace_back("bn0.running_var", &bn0_.state.running_var);
    for (std::size_t k = 0; k < bns_.size(); ++k) {
        const auto idx = std::to_string(k);
        s.emplace_back("block" + idx + ".bn.running_mean", &bns_[k].state.running_mean);
        s.emplace_back("block" + idx + ".bn.running_var", &bns_[k].state.running_var);
    }
    s.emplace_back("out.bn.running_mean", &out_bn_.state.running_mean);
    s.emplace_back("out.bn.running_var", &out_bn_.state.running_var);
    return s;
}

}  // namespace ris
