// ris: command-line front end for teacher training, threshold calibration,
// synthesis training, image export, evaluation and ablation grids.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "ris/ablation.hpp"
#include "ris/checkpoint.hpp"
#include "ris/config.hpp"
#include "ris/metrics.hpp"
#include "ris/robustness.hpp"
#include "ris/softlabel.hpp"
#include "ris/teacherzoo.hpp"
#include "ris/trainer.hpp"

#ifndef RIS_CODE_VERSION
#define RIS_CODE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ris;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

fs::path runs_root() {
    const char* env = std::getenv("RIS_RUNS_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path under_root(const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : runs_root() / path;
}

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// "--key value" and "--key=value" pairs left over after CLI11 parsing.
Overrides parse_overrides(const std::vector<std::string>& rest) {
    Overrides out;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        const std::string& tok = rest[i];
        if (tok.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + tok + "'");
        std::string key = tok.substr(2);
        std::string value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.erase(eq);
        } else {
            if (i + 1 >= rest.size()) throw ConfigError("missing value for --" + key);
            value = rest[++i];
        }
        out.emplace_back(key, value);
    }
    return out;
}

struct Common {
    std::string config_file;
    std::string run = "default";
};

// Config for a subcommand: an explicit --config file, else the run's saved
// config when one exists, then overrides.
RunConfig resolve_config(const Common& c, const Overrides& ov, bool prefer_run_config) {
    fs::path file = c.config_file;
    const fs::path saved = under_root(c.run) / "config.cfg";
    if (file.empty() && prefer_run_config && fs::exists(saved)) file = saved;
    return load_config(file, ov);
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
    const fs::path dir = run_dir / "checkpoints";
    if (!fs::exists(dir)) return std::nullopt;
    std::optional<fs::path> best;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().rfind("epoch_", 0) == 0 &&
            fs::exists(e.path() / "manifest.json"))
            if (!best || e.path().filename() > best->filename()) best = e.path();
    return best;
}

json thresholds_json(const RobustnessThresholds& t) {
    return {{"theta_f", t.theta_f}, {"theta_p", t.theta_p}, {"epsilon", t.epsilon}, {"n_noise", t.n_noise},
            {"seed", t.seed}};
}

RobustnessThresholds thresholds_from(const json& j) {
    RobustnessThresholds t;
    t.theta_f = j.at("theta_f").get<double>();
    t.theta_p = j.at("theta_p").get<double>();
    t.epsilon = j.at("epsilon").get<double>();
    t.n_noise = j.at("n_noise").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
}

ResNet load_run_teacher(const RunConfig& cfg) {
    const fs::path dir = under_root(cfg.teacher_dir);
    if (!fs::exists(dir / "manifest.json"))
        throw std::runtime_error("no teacher at " + dir.string() + "; run `ris train-teacher` first");
    return load_teacher(dir);
}

// Trainer restored from the newest checkpoint of a run.
Trainer restore_trainer(const ResNet& teacher, const RunConfig& cfg, const fs::path& run_dir) {
    const auto ckpt = latest_checkpoint(run_dir);
    if (!ckpt) throw std::runtime_error("run " + run_dir.string() + " has no checkpoint; run `ris train` first");
    Trainer tr(teacher, cfg.train);
    tr.load_checkpoint(*ckpt);
    return tr;
}

// -------------------------------------------------------------------------

int cmd_train_teacher(const RunConfig& cfg) {
    const Dataset train = load_dataset(cfg.teacher_data);
    const Dataset heldout = load_dataset(cfg.teacher_heldout);
    TeacherSpec spec = cfg.teacher_spec;
    spec.num_classes = train.num_classes();
    TeacherReport report;
    ResNet teacher = train_teacher(spec, train, heldout, cfg.teacher_train, &report);
    const fs::path dir = under_root(cfg.teacher_dir);
    save_teacher(teacher, report, dir);
    std::cout << json{{"teacher_dir", dir.string()},
                      {"heldout_top1", report.heldout_top1},
                      {"train_loss", report.train_loss},
                      {"below_floor", report.below_floor},
                      {"digest", teacher_digest(teacher)}}
                     .dump(2)
              << "\n";
    return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, const std::string& out) {
    const ResNet teacher = load_run_teacher(cfg);
    ProbeContext ctx;
    ctx.teacher = &teacher;
    ctx.norm = teacher.spec().normalization();
    ctx.perturb = cfg.train.perturb;
    ctx.mode = cfg.train.prediction_mode;
    const Shape shape{teacher.spec().in_channels, teacher.spec().image_size, teacher.spec().image_size};
    const auto thr = calibrate_thresholds(ctx, cfg.train.epsilon, cfg.train.n_noise, shape, cfg.train.seeds.calibration);
    const json j = thresholds_json(thr);
    if (!out.empty()) write_json_atomic(under_root(out), j);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Common& common, const std::string& thresholds_file, bool resume) {
    const fs::path run_dir = under_root(common.run);
    const auto started = std::chrono::steady_clock::now();
    const ResNet teacher = load_run_teacher(cfg);
    if (teacher.spec().image_size != cfg.teacher_spec.image_size)
        spdlog::warn("teacher image size {} differs from teacher.image_size {}", teacher.spec().image_size,
                     cfg.teacher_spec.image_size);

    fs::create_directories(run_dir);
    write_text_atomic(run_dir / "config.cfg", render_config(cfg));
    json manifest = {{"kind", "run"},
                     {"status", "running"},
                     {"code_version", RIS_CODE_VERSION},
                     {"started", now_iso()},
                     {"config", "config.cfg"},
                     {"config_hash", train_config_hash(cfg.train)},
                     {"teacher_dir", under_root(cfg.teacher_dir).string()},
                     {"seeds",
                      {{"init", cfg.train.seeds.init},
                       {"labels", cfg.train.seeds.labels},
                       {"latent", cfg.train.seeds.latent},
                       {"perturb", cfg.train.seeds.perturb},
                       {"calibration", cfg.train.seeds.calibration}}},
                     {"artifacts",
                      {{"log", "log.csv"}, {"labels", "labels.csv"}, {"checkpoints", "checkpoints"}}}};
    write_json_atomic(run_dir / "manifest.json", manifest);

    Trainer tr(teacher, cfg.train);
    if (!thresholds_file.empty()) tr.set_thresholds(thresholds_from(read_json(under_root(thresholds_file))));
    if (resume) {
        if (const auto ckpt = latest_checkpoint(run_dir)) {
            tr.load_checkpoint(*ckpt);
            spdlog::info("resumed from {} (step {})", ckpt->string(), tr.global_step());
        }
    }
    tr.prepare();
    if (tr.thresholds()) manifest["thresholds"] = thresholds_json(*tr.thresholds());
    save_labels_csv(tr.labels(), run_dir / "labels.csv");
    write_json_atomic(run_dir / "manifest.json", manifest);

    try {
        tr.run(-1, run_dir / "checkpoints");
    } catch (const std::exception& e) {
        write_log_csv(tr.log(), run_dir / "log.csv");
        manifest["status"] = std::string("failed: ") + e.what();
        manifest["finished"] = now_iso();
        write_json_atomic(run_dir / "manifest.json", manifest);
        throw;
    }
    write_log_csv(tr.log(), run_dir / "log.csv");
    manifest["status"] = "complete";
    manifest["finished"] = now_iso();
    manifest["timing_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    manifest["final_checkpoint"] = latest_checkpoint(run_dir)->filename().string();
    write_json_atomic(run_dir / "manifest.json", manifest);
    spdlog::info("run complete: {}", run_dir.string());
    return kExitOk;
}

int cmd_synthesize(const RunConfig& cfg, const Common& common, int n, int columns, const std::string& out_dir) {
    const fs::path run_dir = under_root(common.run);
    const ResNet teacher = load_run_teacher(cfg);
    Trainer tr = restore_trainer(teacher, cfg, run_dir);
    Rng rng(cfg.eval_seed);
    const auto s = tr.synthesize(n, rng);
    const auto ex = extract_generated(teacher, tr.normalization(), s.images);

    Tensor pixels = s.images;
    for (auto& v : pixels.values()) v = (v + 1) / 2;
    const fs::path dir = out_dir.empty() ? run_dir / "synth" : under_root(out_dir);
    fs::create_directories(dir);
    write_png(dir / "grid.png", image_grid(pixels, columns));

    const auto div = diversity_report(ex.probs);
    std::string csv = "index,label_row,teacher_argmax,teacher_max_prob\n";
    for (int i = 0; i < n; ++i)
        csv += fmt::format("{},{},{},{}\n", i, s.row_index[static_cast<std::size_t>(i)],
                           div.rows[static_cast<std::size_t>(i)].label, div.rows[static_cast<std::size_t>(i)].confidence);
    write_text_atomic(dir / "metadata.csv", csv);
    std::cout << json{{"grid", (dir / "grid.png").string()},
                      {"metadata", (dir / "metadata.csv").string()},
                      {"images", n},
                      {"distinct_classes", div.distinct_classes}}
                     .dump(2)
              << "\n";
    return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const Common& common) {
    const fs::path run_dir = under_root(common.run);
    const ResNet teacher = load_run_teacher(cfg);
    Trainer tr = restore_trainer(teacher, cfg, run_dir);
    const Dataset eval = load_dataset(cfg.eval_data);
    const auto acc = evaluate_accuracy(tr.student(), tr.normalization(), eval);

    Rng rng(cfg.eval_seed);
    const auto s = tr.synthesize(cfg.eval_images, rng);
    const auto gen = extract_generated(teacher, tr.normalization(), s.images);
    const auto real = extract_pixels(teacher, tr.normalization(), eval.slice(0, eval.size()).images);
    const auto is = inception_score(gen.probs, cfg.eval_splits);
    const double f = fid(gen.features, real.features);
    const auto div = diversity_report(gen.probs);
    write_diversity_csv(div, run_dir / "diversity.csv");

    const json j = {{"top1", acc.top1},       {"top5", acc.top5}, {"is_mean", is.mean},
                    {"is_std", is.std},       {"fid", f},         {"distinct_classes", div.distinct_classes}};
    write_json_atomic(run_dir / "eval.json", j);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const Common& common, const std::string& grid_file) {
    const fs::path run_dir = under_root(common.run);
    const ResNet teacher = load_run_teacher(cfg);
    const auto rows = grid_file.empty() ? ablation_preset(teacher.num_classes())
                                        : parse_ablation_grid(read_text(grid_file));
    const Dataset eval = load_dataset(cfg.eval_data);
    fs::create_directories(run_dir);
    write_text_atomic(run_dir / "config.cfg", render_config(cfg));
    const auto res = ablate(teacher, cfg, rows, eval, run_dir / "ablation.csv");
    int failed = 0;
    for (const auto& r : res) failed += r.status != "ok";
    std::cout << json{{"csv", (run_dir / "ablation.csv").string()}, {"rows", res.size()}, {"failed", failed}}.dump(2)
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robustness-guided image synthesis for data-free quantization"};
    app.require_subcommand(1);
    app.footer("Any config key can be overridden as --key value. Runs live under $RIS_RUNS_ROOT (default ./runs).\n"
               "Config keys:\n" +
               config_help());
    Common common;
    std::string level = "info";

    auto add_common = [&](CLI::App* sub) {
        sub->allow_extras();
        sub->add_option("-c,--config", common.config_file, "key=value config file");
        sub->add_option("-r,--run", common.run, "run directory name under the runs root");
        sub->add_option("--log-level", level, "trace|debug|info|warn|error|off");
    };

    auto* teacher_cmd = app.add_subcommand("train-teacher", "train and save the full-precision teacher");
    add_common(teacher_cmd);

    std::string calib_out;
    auto* calib_cmd = app.add_subcommand("calibrate", "calibrate robustness thresholds on noise images");
    add_common(calib_cmd);
    calib_cmd->add_option("-o,--out", calib_out, "write the JSON record here");

    std::string thresholds_file;
    bool resume = false;
    auto* train_cmd = app.add_subcommand("train", "train the generator and the quantized student");
    add_common(train_cmd);
    train_cmd->add_option("--thresholds", thresholds_file, "reuse a record written by calibrate");
    train_cmd->add_flag("--resume", resume, "continue from the run's newest checkpoint");

    int synth_n = 100, synth_cols = 10;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synthesize", "write an image grid and per-image metadata");
    add_common(synth_cmd);
    synth_cmd->add_option("-n,--count", synth_n, "number of images")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--columns", synth_cols, "grid columns")->check(CLI::PositiveNumber);
    synth_cmd->add_option("-o,--out", synth_out, "output directory (default <run>/synth)");

    auto* eval_cmd = app.add_subcommand("evaluate", "student accuracy, IS, FID and class coverage");
    add_common(eval_cmd);

    std::string grid_file;
    auto* ablate_cmd = app.add_subcommand("ablate", "run an override grid and tabulate top-1/top-5");
    add_common(ablate_cmd);
    ablate_cmd->add_option("--grid", grid_file, "grid file (default: the built-in ablation table)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(level));
        CLI::App* sub = app.get_subcommands().front();
        const Overrides ov = parse_overrides(sub->remaining());
        if (sub == teacher_cmd) return cmd_train_teacher(resolve_config(common, ov, false));
        if (sub == calib_cmd) return cmd_calibrate(resolve_config(common, ov, false), calib_out);
        if (sub == train_cmd) return cmd_train(resolve_config(common, ov, resume), common, thresholds_file, resume);
        if (sub == synth_cmd) return cmd_synthesize(resolve_config(common, ov, true), common, synth_n, synth_cols, synth_out);
        if (sub == eval_cmd) return cmd_evaluate(resolve_config(common, ov, true), common);
        if (sub == ablate_cmd) return cmd_ablate(resolve_config(common, ov, false), common, grid_file);
    } catch (const ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitRuntime;
}
