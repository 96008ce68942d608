#include "ris/resnet.hpp"

#include <stdexcept>
#include <type_traits>

namespace ris::inline RIS_PRECISION {

void TeacherSpec::validate() const {
    if (arch != "resnet") throw std::invalid_argument("unsupported teacher architecture '" + arch + "'");
    if (num_classes < 2) throw std::invalid_argument("teacher needs at least 2 classes");
    if (in_channels < 1 || image_size < 4) throw std::invalid_argument("invalid teacher input shape");
    if (widths.empty() || blocks_per_stage < 1) throw std::invalid_argument("teacher needs at least one stage and block");
    if (norm_mean.size() != static_cast<std::size_t>(in_channels) ||
        norm_std.size() != static_cast<std::size_t>(in_channels))
        throw std::invalid_argument("normalization constants must have one entry per input channel");
    for (Real s : norm_std)
        if (!(s > 0)) throw std::invalid_argument("normalization std must be positive");
}

ResNet::ResNet(const TeacherSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    convs_.push_back(Conv2d::make(spec_.in_channels, spec_.widths[0], 3, 1, 1, rng));
    bns_.push_back(BatchNorm2d::make(spec_.widths[0]));
    int in = spec_.widths[0];
    for (std::size_t s = 0; s < spec_.widths.size(); ++s) {
        const int out = spec_.widths[s];
        for (int b = 0; b < spec_.blocks_per_stage; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            Block blk{};
            blk.conv1 = convs_.size();
            convs_.push_back(Conv2d::make(in, out, 3, stride, 1, rng));
            blk.bn1 = bns_.size();
            bns_.push_back(BatchNorm2d::make(out));
            blk.conv2 = convs_.size();
            convs_.push_back(Conv2d::make(out, out, 3, 1, 1, rng));
            blk.bn2 = bns_.size();
            bns_.push_back(BatchNorm2d::make(out));
            if (stride != 1 || in != out) {
                blk.has_shortcut = true;
                blk.sc_conv = convs_.size();
                convs_.push_back(Conv2d::make(in, out, 1, stride, 0, rng));
                blk.sc_bn = bns_.size();
                bns_.push_back(BatchNorm2d::make(out));
            }
            blocks_.push_back(blk);
            in = out;
        }
    }
    fc_ = Linear::make(in, spec_.num_classes, rng);
}

namespace {

template <class Self>
Var apply_bn(Self& bn, const Var& x) {
    if constexpr (std::is_const_v<Self>)
        return bn.eval(x);
    else
        return bn(x, true);
}

// Shared body for evaluation (const BN: stored statistics) and supervised
// training (mutable BN: batch statistics).
ClassifierOutput run_impl(const auto& convs, auto& bns, const auto& blocks, const Linear& fc, const Var& x,
                          ForwardHooks* hooks) {
    ForwardHooks passthrough;
    ForwardHooks& h = hooks ? *hooks : passthrough;
    auto conv = [&](std::size_t i, const Var& in) {
        const auto& c = convs[i];
        return c(h.activation(i, in), h.weight(i, c.weight));
    };
    auto bn = [&](std::size_t i, const Var& in) {
        h.bn_input(i, in);
        return apply_bn(bns[i], in);
    };

    Var out = ops::relu(bn(0, conv(0, x)));
    for (const auto& blk : blocks) {
        Var y = ops::relu(bn(blk.bn1, conv(blk.conv1, out)));
        y = bn(blk.bn2, conv(blk.conv2, y));
        Var shortcut = blk.has_shortcut ? bn(blk.sc_bn, conv(blk.sc_conv, out)) : out;
        out = ops::relu(ops::add(y, shortcut));
    }
    Var features = ops::global_avg_pool(out);
    const std::size_t fc_index = convs.size();
    Var logits = ops::linear(h.activation(fc_index, features), h.weight(fc_index, fc.weight), fc.bias);
    return {features, logits};
}

}  // namespace

ClassifierOutput ResNet::forward(const Var& x, ForwardHooks* hooks) const {
    return run_impl(convs_, bns_, blocks_, fc_, x, hooks);
}

ClassifierOutput ResNet::forward_train(const Var& x) { return run_impl(convs_, bns_, blocks_, fc_, x, nullptr); }

std::vector<Var> ResNet::weights() const {
    std::vector<Var> w;
    w.reserve(convs_.size() + 1);
    for (const auto& c : convs_) w.push_back(c.weight);
    w.push_back(fc_.weight);
    return w;
}

std::vector<const BatchNorm2d*> ResNet::bn_layers() const {
    std::vector<const BatchNorm2d*> out;
    for (const auto& b : bns_) out.push_back(&b);
    return out;
}

std::vector<NamedVar> ResNet::parameters() const {
    std::vector<NamedVar> p;
    for (std::size_t i = 0; i < convs_.size(); ++i) p.emplace_back("conv" + std::to_string(i) + ".weight", convs_[i].weight);
    for (std::size_t i = 0; i < bns_.size(); ++i) {
        p.emplace_back("bn" + std::to_string(i) + ".gamma", bns_[i].gamma);
        p.emplace_back("bn" + std::to_string(i) + ".beta", bns_[i].beta);
    }
    p.emplace_back("fc.weight", fc_.weight);
    p.emplace_back("fc.bias", fc_.bias);
    return p;
}

std::vector<NamedTensorRef> ResNet::state() {
    std::vector<NamedTensorRef> s;
    for (auto& [name, v] : parameters()) s.emplace_back(name, &v.mutable_value());
    for (std::size_t i = 0; i < bns_.size(); ++i) {
        s.emplace_back("bn" + std::to_string(i) + ".running_mean", &bns_[i].state.running_mean);
        s.emplace_back("bn" + std::to_string(i) + ".running_var", &bns_[i].state.running_var);
    }
    return s;
}

void ResNet::set_requires_grad(bool on) {
    for (auto& [name, v] : parameters()) v.set_requires_grad(on);
}

ResNet ResNet::clone() const {
    ResNet copy = *this;
    for (auto& c : copy.convs_) c.weight = clone_leaf(c.weight);
    for (auto& b : copy.bns_) {
        b.gamma = clone_leaf(b.gamma);
        b.beta = clone_leaf(b.beta);
    }
    copy.fc_.weight = clone_leaf(copy.fc_.weight);
    copy.fc_.bias = clone_leaf(copy.fc_.bias);
    return copy;
}

}  // namespace ris
