#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "helpers.hpp"
#include "ris/ablation.hpp"
#include "ris/checkpoint.hpp"

using namespace ris;
using namespace ris::testing;
namespace fs = std::filesystem;

TEST_CASE("the preset mirrors the ablation table layout and every row is valid") {
    const auto rows = ablation_preset(10);
    CHECK(rows.size() == 22);
    RunConfig base;
    for (const auto& r : rows) {
        RunConfig c = base;
        for (const auto& [k, v] : r.overrides) set_config_value(c, k, v);
        CHECK_NOTHROW(c.validate());
    }
    CHECK(rows[15].name == "N=11");
}

TEST_CASE("grid text parsing") {
    const auto rows = parse_ablation_grid("# header\nweight,adv: perturb.strategy=weight perturb.weight.kind=adversarial\n\nc,full:\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].group == "weight");
    CHECK(rows[0].name == "adv");
    CHECK(rows[0].overrides.size() == 2);
    CHECK(rows[0].overrides[1].second == "adversarial");
    CHECK(rows[1].overrides.empty());
    CHECK_THROWS_AS(parse_ablation_grid("no colon here"), ConfigError);
    CHECK_THROWS_AS(parse_ablation_grid("a,b: novalue"), ConfigError);
}

TEST_CASE("a failing row is recorded and the grid continues") {
    const auto teacher = make_teacher(tiny_spec(4, 8), 21);
    RunConfig base;
    base.teacher_spec = tiny_spec(4, 8);
    auto& t = base.train;
    t.epochs = 2;
    t.warmup_epochs = 1;
    t.batches_per_epoch = 1;
    t.batch_size = 8;
    t.latent_dim = 8;
    t.gen_base_channels = 8;
    t.n_noise = 20;
    t.perturb.input.max_shift = 1;
    t.labels.opt.steps = 10;
    base.eval_images = 20;
    base.eval_splits = 2;

    Rng rng(5);
    Tensor images({12, 3, 8, 8});
    for (auto& v : images.values()) v = static_cast<Real>(rng.uniform());
    const Dataset eval(images, {0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3}, 4, "synthetic");

    const std::vector<AblationRow> rows{{"g", "ok", {{"objective", "gdfq"}}},
                                        {"g", "bad", {{"robust.epsilon", "2"}}},
                                        {"g", "unknown", {{"no.such.key", "1"}}},
                                        {"g", "full", {}}};
    const auto dir = fs::temp_directory_path() / "ris_test_ablation";
    fs::remove_all(dir);
    const auto res = ablate(teacher, base, rows, eval, dir / "table.csv");
    REQUIRE(res.size() == 4);
    CHECK(res[0].status == "ok");
    CHECK(res[1].status.find("epsilon") != std::string::npos);
    CHECK(res[2].status.find("no.such.key") != std::string::npos);
    CHECK(res[3].status == "ok");
    CHECK((res[3].top1 >= 0 && res[3].top1 <= 1 && res[3].top5 >= res[3].top1));
    const auto text = read_text(dir / "table.csv");
    CHECK(text.rfind("group,row,top1,top5,status\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}
