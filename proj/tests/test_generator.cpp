#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ris/generator.hpp"

using namespace ris;
using namespace ris::testing;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig g;
    g.num_classes = 5;
    g.latent_dim = 16;
    g.image_size = 16;
    g.base_channels = 16;
    return g;
}

}  // namespace

TEST_CASE("sample_latent") {
    Rng a(3), b(3);
    auto z1 = sample_latent(8, 100, a);
    auto z2 = sample_latent(8, 100, b);
    CHECK(z1.z == z2.z);
    CHECK(z1.batch() == 8);

    Rng r(4);
    auto big = sample_latent(4096, 100, r);
    for (int j = 0; j < 100; ++j) {
        double m = 0;
        for (int i = 0; i < 4096; ++i) m += big.z.row(i)[static_cast<std::size_t>(j)];
        CHECK(std::abs(m / 4096) < 4 / std::sqrt(4096.0));
    }
    auto one = sample_latent(1, 1, r);
    CHECK(std::isfinite(one.z[0]));
    CHECK_THROWS(sample_latent(0, 5, r));
}

TEST_CASE("hard label and one-hot row take bit-identical paths") {
    Rng init(1);
    ConditionalGenerator a(small_config(), init);
    Rng init2(1);
    ConditionalGenerator b(small_config(), init2);
    Rng zr(2);
    auto z = sample_latent(6, 16, zr);
    const std::vector<int> classes{0, 3, 4, 1, 3, 2};
    Tensor rows({6, 5});
    for (int i = 0; i < 6; ++i) rows.row(i)[static_cast<std::size_t>(classes[static_cast<std::size_t>(i)])] = 1;

    auto za = Var::leaf(z.z), zb = Var::leaf(z.z);
    Var xa = a.synthesize(za, LabelCondition::hard(classes, 5), true);
    Var xb = b.synthesize(zb, LabelCondition::soft(rows), true);
    CHECK(xa.value() == xb.value());
    ops::sum(ops::mul(xa, xa)).backward();
    ops::sum(ops::mul(xb, xb)).backward();
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        INFO(pa[i].first);
        CHECK(pa[i].second.grad() == pb[i].second.grad());
    }
    CHECK(za.grad() == zb.grad());
}

TEST_CASE("outputs are bounded, shaped, and depend on z") {
    Rng init(5);
    ConditionalGenerator g(small_config(), init);
    Rng zr(6);
    auto z = sample_latent(4, 16, zr);
    auto cond = LabelCondition::hard({2, 2, 2, 2}, 5);
    Tensor x = g.synthesize(z, cond, true).value();
    CHECK(x.shape() == Shape{4, 3, 16, 16});
    CHECK(x.min() >= -1);
    CHECK(x.max() <= 1);
    double gap = 0;
    for (std::size_t i = 0; i < 3 * 16 * 16; ++i) gap += std::pow(x[i] - x[i + 3 * 16 * 16], 2);
    CHECK(std::sqrt(gap) > 1e-6);
    Tensor e = g.synthesize(z, cond, false).value();
    CHECK(e.min() >= -1);
    CHECK(e.max() <= 1);
}

TEST_CASE("shape and condition validation") {
    Rng init(7);
    ConditionalGenerator g(small_config(), init);
    Rng zr(8);
    auto z = sample_latent(3, 16, zr);
    CHECK_THROWS(g.synthesize(z, LabelCondition::hard({0, 1}, 5), true));
    CHECK_THROWS(g.synthesize(z, LabelCondition::hard({0, 1, 2}, 4), true));
    CHECK_THROWS(LabelCondition::hard({0, 5}, 5));
    CHECK_THROWS(LabelCondition::soft(Tensor({1, 2}, std::vector<Real>{0.7f, 0.7f})));
    auto bad = small_config();
    bad.image_size = 18;
    CHECK_THROWS(bad.validate());
}
