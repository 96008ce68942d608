#include "ris/teacherzoo.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ris/checkpoint.hpp"
#include "ris/losses.hpp"
#include "ris/metrics.hpp"
#include "ris/optim.hpp"

namespace ris::inline RIS_PRECISION {

void TeacherTrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("teacher.epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("teacher.batch_size must be >= 2");
    if (!(lr > 0)) throw std::invalid_argument("teacher.lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("teacher.momentum must be in [0, 1)");
    if (weight_decay < 0) throw std::invalid_argument("teacher.weight_decay must be >= 0");
}

namespace {

void flip_horizontal(Tensor& batch, int i) {
    const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y) {
            Real* row = batch.data() + ((static_cast<std::size_t>(i) * c + k) * h + y) * w;
            std::reverse(row, row + w);
        }
}

}  // namespace

ResNet train_teacher(const TeacherSpec& spec, const Dataset& train, const Dataset& heldout,
                     const TeacherTrainConfig& cfg, TeacherReport* report) {
    cfg.validate();
    spec.validate();
    const Shape want{spec.in_channels, spec.image_size, spec.image_size};
    if (train.image_shape() != want)
        throw std::invalid_argument("training images are " + shape_str(train.image_shape()) + ", teacher expects " +
                                    shape_str(want));
    if (train.num_classes() != spec.num_classes)
        throw std::invalid_argument("dataset has " + std::to_string(train.num_classes()) + " classes, teacher " +
                                    std::to_string(spec.num_classes));

    Rng rng(cfg.seed);
    Rng init = rng.split(1), order = rng.split(2);
    ResNet net(spec, init);
    std::vector<Var> params;
    for (auto& [name, p] : net.parameters()) params.push_back(p);
    Sgd opt(params, cfg.lr, cfg.momentum, cfg.weight_decay);
    const auto norm = spec.normalization();

    const int n = train.size();
    const int per_epoch = n / cfg.batch_size;
    if (per_epoch < 1) throw std::invalid_argument("training set smaller than one batch");
    const long total = static_cast<long>(per_epoch) * cfg.epochs;
    std::vector<int> idx(static_cast<std::size_t>(n));
    double last_loss = 0;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = n - 1; i > 0; --i) std::swap(idx[static_cast<std::size_t>(i)], idx[order.below(static_cast<std::uint64_t>(i) + 1)]);
        double loss_sum = 0;
        for (int b = 0; b < per_epoch; ++b) {
            Batch batch = train.batch(std::span<const int>(idx).subspan(static_cast<std::size_t>(b) * cfg.batch_size,
                                                                          static_cast<std::size_t>(cfg.batch_size)));
            if (cfg.flip)
                for (int i = 0; i < cfg.batch_size; ++i)
                    if (order.bernoulli(0.5)) flip_horizontal(batch.images, i);
            opt.set_lr(cosine_lr(cfg.lr, step++, total));
            opt.zero_grad();
            auto out = net.forward_train(Var::constant(norm.from_pixels(batch.images)));
            Var loss = cross_entropy(ops::softmax(out.logits), batch.labels);
            loss.backward();
            opt.step();
            loss_sum += loss.value().item();
        }
        last_loss = loss_sum / per_epoch;
        spdlog::info("teacher epoch {}/{}: loss {:.4f}", epoch + 1, cfg.epochs, last_loss);
    }
    net.set_requires_grad(false);

    TeacherReport r;
    r.epochs = cfg.epochs;
    r.train_loss = last_loss;
    r.dataset = train.source();
    r.heldout_top1 = topk_accuracy(net, norm, heldout, 1);
    r.below_floor = r.heldout_top1 < cfg.accuracy_floor;
    if (r.below_floor)
        spdlog::warn("teacher held-out top-1 {:.4f} is below the floor {:.4f}; downstream results will suffer",
                     r.heldout_top1, cfg.accuracy_floor);
    if (report) *report = r;
    return net;
}

nlohmann::json spec_to_json(const TeacherSpec& s) {
    return {{"arch", s.arch},       {"num_classes", s.num_classes},   {"in_channels", s.in_channels},
            {"image_size", s.image_size}, {"widths", s.widths},        {"blocks_per_stage", s.blocks_per_stage},
            {"norm_mean", s.norm_mean},   {"norm_std", s.norm_std}};
}

TeacherSpec spec_from_json(const nlohmann::json& j) {
    TeacherSpec s;
    s.arch = j.at("arch").get<std::string>();
    s.num_classes = j.at("num_classes").get<int>();
    s.in_channels = j.at("in_channels").get<int>();
    s.image_size = j.at("image_size").get<int>();
    s.widths = j.at("widths").get<std::vector<int>>();
    s.blocks_per_stage = j.at("blocks_per_stage").get<int>();
    s.norm_mean = j.at("norm_mean").get<std::vector<Real>>();
    s.norm_std = j.at("norm_std").get<std::vector<Real>>();
    s.validate();
    return s;
}

void save_teacher(ResNet& teacher, const TeacherReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_tensors(dir / "tensors.bin", with_prefix(teacher.state(), ""));
    nlohmann::json m = {{"kind", "teacher"},
                        {"spec", spec_to_json(teacher.spec())},
                        {"heldout_top1", report.heldout_top1},
                        {"train_loss", report.train_loss},
                        {"epochs", report.epochs},
                        {"dataset", report.dataset},
                        {"below_floor", report.below_floor},
                        {"digest", teacher_digest(teacher)}};
    write_json_atomic(dir / "manifest.json", m);
}

ResNet load_teacher(const std::filesystem::path& dir, TeacherReport* report) {
    const auto m = read_json(dir / "manifest.json");
    if (m.value("kind", "") != "teacher") throw std::runtime_error(dir.string() + " is not a teacher checkpoint");
    Rng unused(0);
    ResNet net(spec_from_json(m.at("spec")), unused);
    restore_tensors(load_tensors(dir / "tensors.bin"), net.state());
    net.set_requires_grad(false);
    for (std::size_t i = 0; i < net.num_bn(); ++i) {
        const auto& st = net.bn(i).state;
        if (!st.running_mean.all_finite() || !st.running_var.all_finite())
            throw std::runtime_error(dir.string() + ": non-finite BN statistics in layer " + std::to_string(i));
    }
    if (report) {
        report->heldout_top1 = m.at("heldout_top1").get<double>();
        report->train_loss = m.at("train_loss").get<double>();
        report->epochs = m.at("epochs").get<int>();
        report->dataset = m.at("dataset").get<std::string>();
        report->below_floor = m.at("below_floor").get<bool>();
    }
    return net;
}

std::string teacher_digest(ResNet& teacher) {
    std::string bytes;
    for (const auto& [name, t] : teacher.state()) {
        bytes += name;
        bytes.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(Real));
    }
    return fnv1a_hex(bytes);
}

}  // namespace ris
