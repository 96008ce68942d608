#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ris/metrics.hpp"

using namespace ris;
using namespace ris::testing;

TEST_CASE("top-k accuracy") {
    // Oracle lookup: the logit of the true class is the largest.
    const std::vector<int> labels{0, 1, 2, 1};
    Tensor oracle({4, 3});
    for (int i = 0; i < 4; ++i) oracle.row(i)[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] = 5;
    CHECK(topk_accuracy(oracle, labels, 1) == 1.0);
    Rng rng(1);
    const Tensor any = random_tensor({4, 3}, rng);
    CHECK(topk_accuracy(any, labels, 3) == 1.0);
    // Constant two-class predictor on a balanced set.
    Tensor constant({6, 2});
    for (int i = 0; i < 6; ++i) constant.row(i)[0] = 1;
    CHECK(topk_accuracy(constant, {0, 1, 0, 1, 0, 1}, 1) == 0.5);
    CHECK(topk_accuracy(Tensor({1, 3}, std::vector<Real>{3, 2, 1}), {2}, 2) == 0.0);
    CHECK(topk_accuracy(Tensor({1, 3}, std::vector<Real>{3, 2, 1}), {1}, 2) == 1.0);
    CHECK_THROWS(topk_accuracy(Tensor({0, 3}), {}, 1));
}

TEST_CASE("inception score cases") {
    Tensor same({20, 4});
    for (int i = 0; i < 20; ++i) same.row(i)[2] = 1;
    auto is = inception_score(same, 2);
    CHECK(is.mean == 1);
    CHECK(is.degenerate);

    Tensor distinct({40, 4});
    for (int i = 0; i < 40; ++i) distinct.row(i)[static_cast<std::size_t>(i % 4)] = 1;
    is = inception_score(distinct, 1);
    CHECK(is.mean == doctest::Approx(4.0));
    CHECK_FALSE(is.degenerate);

    Tensor uniform({30, 5}, Real(0.2));
    CHECK(inception_score(uniform, 3).mean == doctest::Approx(1.0));

    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        Tensor p({50, 6});
        for (int i = 0; i < 50; ++i) {
            double s = 0;
            for (auto& v : p.row(i)) s += (v = static_cast<Real>(std::exp(3 * rng.normal())));
            for (auto& v : p.row(i)) v = static_cast<Real>(v / s);
        }
        const auto r = inception_score(p, 5);
        CHECK(r.mean >= 1 - 1e-9);
        CHECK(r.mean <= 6 + 1e-9);
    }
    CHECK_THROWS(inception_score(uniform, 4));
}

TEST_CASE("FID cases") {
    // Unit-variance 1-D sets with means 0 and 3 (population statistics).
    const Tensor a({2, 1}, std::vector<Real>{-1, 1}), b({2, 1}, std::vector<Real>{2, 4});
    CHECK(fid(a, b) == doctest::Approx(9.0).epsilon(1e-9));
    CHECK(fid(b, a) == doctest::Approx(9.0).epsilon(1e-9));

    Rng rng(3);
    const Tensor x = random_tensor({60, 5}, rng), y = random_tensor({80, 5}, rng, 2.0);
    CHECK(std::abs(fid(x, x)) < 1e-6);
    CHECK(fid(x, y) == doctest::Approx(fid(y, x)).epsilon(1e-9));
    CHECK(fid(x, y) > 0);

    // Independent closed form for diagonal covariances.
    Tensor dx({4, 2}, std::vector<Real>{1, 0, -1, 0, 0, 2, 0, -2});
    Tensor dy({4, 2}, std::vector<Real>{3, 1, 1, 1, 2, 2, 2, 0});
    // dx: mean 0, var (0.5, 2); dy: mean (2, 1), var (0.5, 0.5)
    const double expect = 4 + 1 + (0.5 + 0.5 - 2 * 0.5) + (2 + 0.5 - 2 * 1);
    CHECK(fid(dx, dy) == doctest::Approx(expect).epsilon(1e-9));

    CHECK_THROWS(fid(Tensor({3, 3}), Tensor({4, 3})));
    CHECK_THROWS(fid(Tensor({4, 3}), Tensor({4, 2})));
}

TEST_CASE("diversity report") {
    Tensor p({4, 3}, std::vector<Real>{0.1f, 0.8f, 0.1f, 0.6f, 0.2f, 0.2f, 0.3f, 0.3f, 0.4f, 0.2f, 0.7f, 0.1f});
    const auto r = diversity_report(p);
    CHECK(r.distinct_classes == 3);
    CHECK(r.rows[1].label == 0);
    CHECK(r.rows[1].confidence == doctest::Approx(0.6));
    CHECK(r.class_counts == std::vector<int>{1, 2, 1});
}

TEST_CASE("teacher as extractor") {
    auto teacher = make_teacher(tiny_spec(4, 8), 5);
    Rng rng(6);
    Tensor pixels({7, 3, 8, 8});
    for (auto& v : pixels.values()) v = static_cast<Real>(rng.uniform());
    const auto e = extract_pixels(teacher, teacher.spec().normalization(), pixels, 3);
    CHECK(e.features.shape() == Shape{7, 8});
    CHECK(e.probs.shape() == Shape{7, 4});
    // Generator domain g = 2 p - 1 maps back to the same pixels.
    Tensor g = pixels;
    for (auto& v : g.values()) v = 2 * v - 1;
    const auto e2 = extract_generated(teacher, teacher.spec().normalization(), g, 4);
    for (std::size_t i = 0; i < e.probs.size(); ++i) CHECK(e2.probs[i] == doctest::Approx(e.probs[i]).epsilon(1e-5));
}
