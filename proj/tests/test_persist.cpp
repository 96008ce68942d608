#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "ris/checkpoint.hpp"
#include "ris/metrics.hpp"
#include "ris/optim.hpp"
#include "ris/teacherzoo.hpp"

using namespace ris;
using namespace ris::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ris_test_persist_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("tensor archive round trip") {
    const auto dir = scratch("blob");
    Rng rng(1);
    Tensor a = random_tensor({2, 3, 4}, rng), b({1}, Real(-0.0f));
    save_tensors(dir / "t.bin", {{"a", &a}, {"b/x", &b}});
    const auto m = load_tensors(dir / "t.bin");
    CHECK(m.at("a") == a);
    CHECK(m.at("b/x").shape() == Shape{1});
    Tensor into({2, 3, 4}), wrong({3});
    restore_tensors(m, {{"a", &into}});
    CHECK(into == a);
    CHECK_THROWS(restore_tensors(m, {{"a", &wrong}}));
    CHECK_THROWS(restore_tensors(m, {{"c", &into}}));
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("Adam and SGD steps match hand formulas") {
    Var w = Var::leaf(Tensor({2}, std::vector<Real>{1.0f, -2.0f}));
    Adam adam({w}, 0.1, 0.5, 0.999, 1e-8);
    // loss = sum(w^2): gradient 2w.
    for (int t = 1; t <= 3; ++t) {
        adam.zero_grad();
        ops::sum(ops::mul(w, w)).backward();
        adam.step();
    }
    // Oracle replays the recurrences in double.
    double x[2] = {1, -2}, m[2] = {0, 0}, v[2] = {0, 0};
    for (int t = 1; t <= 3; ++t)
        for (int k = 0; k < 2; ++k) {
            const double g = 2 * x[k];
            m[k] = 0.5 * m[k] + 0.5 * g;
            v[k] = 0.999 * v[k] + 0.001 * g * g;
            x[k] -= 0.1 * (m[k] / (1 - std::pow(0.5, t))) / (std::sqrt(v[k] / (1 - std::pow(0.999, t))) + 1e-8);
        }
    CHECK(w.value()[0] == doctest::Approx(x[0]).epsilon(1e-5));
    CHECK(w.value()[1] == doctest::Approx(x[1]).epsilon(1e-5));
    CHECK(adam.steps() == 3);

    Var u = Var::leaf(Tensor({1}, Real(1)));
    Sgd sgd({u}, 0.1, 0.9, 0.01);
    double y = 1, buf = 0;
    for (int t = 0; t < 3; ++t) {
        sgd.zero_grad();
        ops::sum(ops::mul(u, u)).backward();
        sgd.step();
        buf = 0.9 * buf + 2 * y + 0.01 * y;
        y -= 0.1 * buf;
    }
    CHECK(u.value()[0] == doctest::Approx(y).epsilon(1e-6));

    CHECK(cosine_lr(0.1, 0, 100) == doctest::Approx(0.1));
    CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05));
    CHECK(cosine_lr(0.1, 100, 100) == doctest::Approx(0.0));
    CHECK_THROWS(Adam({w}, 0));
}

TEST_CASE("teacher training, save and load") {
    TeacherSpec spec;
    spec.image_size = 16;
    spec.widths = {8, 16};
    const auto train = make_shapes10(2000, 16, 1), heldout = make_shapes10(300, 16, 2);
    TeacherTrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 50;
    TeacherReport report;
    ResNet net = train_teacher(spec, train, heldout, cfg, &report);
    CHECK(report.heldout_top1 > 0.5);  // chance is 0.1
    CHECK_FALSE(net.parameters()[0].second.requires_grad());

    const auto dir = scratch("teacher");
    save_teacher(net, report, dir);
    TeacherReport loaded_report;
    ResNet loaded = load_teacher(dir, &loaded_report);
    CHECK(teacher_digest(loaded) == teacher_digest(net));
    CHECK(loaded_report.heldout_top1 == report.heldout_top1);
    CHECK(topk_accuracy(loaded, loaded.spec().normalization(), heldout, 1) == report.heldout_top1);
    for (const auto* bn : loaded.bn_layers()) {
        CHECK(bn->state.running_mean.all_finite());
        CHECK(bn->state.running_var.all_finite());
    }
    CHECK_THROWS(load_teacher(scratch("missing")));
}
