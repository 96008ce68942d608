#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ris/checkpoint.hpp"
#include "ris/config.hpp"

using namespace ris;
namespace fs = std::filesystem;

TEST_CASE("render then parse is the identity") {
    const RunConfig def;
    CHECK(parse_config_text(render_config(def)) == def);

    RunConfig c;
    c.train.objective = Objective::gdfq;
    c.train.gen_lr = 0.1 + 0.2;
    c.train.loss.beta = 1.0 / 3.0;
    c.train.perturb.strategy = Strategy::parallel;
    c.train.perturb.input.kind = InputKind::resize;
    c.train.perturb.weight.kind = WeightKind::dropout;
    c.train.prediction_mode = PredictionMode::logits;
    c.train.seeds.perturb = 18446744073709551615ull;
    c.train.labels.soft = false;
    c.teacher_spec.widths = {3, 5, 7, 9};
    c.teacher_spec.norm_std = {Real(0.1), Real(0.3), Real(1.0 / 7.0)};
    c.teacher_data = "cifar10:/data/cifar";
    c.eval_images = 321;
    const RunConfig back = parse_config_text(render_config(c));
    CHECK(back == c);
    CHECK(render_config(back) == render_config(c));
}

TEST_CASE("every registered key round trips through get and set") {
    RunConfig c;
    for (const auto& k : config_keys()) {
        RunConfig d;
        set_config_value(d, k.key, get_config_value(c, k.key));
        CHECK(d == c);
    }
    CHECK(config_keys().size() > 60);
}

TEST_CASE("parsing rejects unknown keys and malformed values") {
    CHECK_THROWS_AS(parse_config_text("nope=1"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs=ten"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs=3.5"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("gen.lr=1e-3x"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed.init=-1"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("quant.per_channel=maybe"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("perturb.strategy=sometimes"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just a line"), ConfigError);
    try {
        parse_config_text("loss.alpha=abc");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("loss.alpha") != std::string::npos);
    }
    const auto c = parse_config_text("# comment\n\n  epochs = 7 \nloss.lambda_r=0\n");
    CHECK(c.train.epochs == 7);
    CHECK(c.train.loss.lambda_r == 0);
}

TEST_CASE("load_config applies overrides after the file and validates") {
    const auto dir = fs::temp_directory_path() / "ris_test_config";
    fs::remove_all(dir);
    write_text_atomic(dir / "run.cfg", "epochs=5\nwarmup_epochs=1\nrobust.epsilon=0.2\n");
    const auto c = load_config(dir / "run.cfg", {{"epochs", "9"}, {"perturb.weight.kind", "adversarial"}});
    CHECK(c.train.epochs == 9);
    CHECK(c.train.warmup_epochs == 1);
    CHECK(c.train.epsilon == 0.2);
    CHECK(c.train.perturb.weight.kind == WeightKind::adversarial);
    CHECK(load_config({}, {}) == RunConfig());
    CHECK_THROWS_AS(load_config({}, {{"warmup_epochs", "500"}}), ConfigError);
    CHECK_THROWS_AS(load_config({}, {{"robust.epsilon", "1"}}), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.cfg", {}), ConfigError);
}

TEST_CASE("training hash tracks training keys only") {
    RunConfig a, b;
    CHECK(train_config_hash(a.train) == train_config_hash(b.train));
    b.eval_images = 50;
    b.teacher_dir = "elsewhere";
    CHECK(train_config_hash(a.train) == train_config_hash(b.train));
    b.train.loss.alpha = 0.11;
    CHECK(train_config_hash(a.train) != train_config_hash(b.train));
    CHECK(config_help().find("--perturb.weight.kind") != std::string::npos);
}
