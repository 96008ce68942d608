#include "ris/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ris/checkpoint.hpp"

namespace ris::inline RIS_PRECISION {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
    const std::string t = trim(v);
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0' || errno == ERANGE) throw std::invalid_argument("expected a number, got '" + v + "'");
    return d;
}

long long to_int(const std::string& v) {
    const std::string t = trim(v);
    char* end = nullptr;
    errno = 0;
    const long long i = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || *end != '\0' || errno == ERANGE) throw std::invalid_argument("expected an integer, got '" + v + "'");
    return i;
}

std::uint64_t to_u64(const std::string& v) {
    const std::string t = trim(v);
    char* end = nullptr;
    errno = 0;
    if (!t.empty() && t[0] == '-') throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    const unsigned long long u = std::strtoull(t.c_str(), &end, 10);
    if (t.empty() || *end != '\0' || errno == ERANGE)
        throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return u;
}

bool to_bool(const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list, got '" + v + "'");
    return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

// Registry builders. Each binds a key to a member reached through `at`.
template <class At>
ConfigKey dbl(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc),
            [at](const RunConfig& c) { return fmt::format("{}", static_cast<double>(at(const_cast<RunConfig&>(c)))); },
            [at](RunConfig& c, const std::string& v) { at(c) = static_cast<std::remove_reference_t<decltype(at(c))>>(to_double(v)); }};
}

template <class At>
ConfigKey integer(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc),
            [at](const RunConfig& c) { return fmt::format("{}", at(const_cast<RunConfig&>(c))); },
            [at](RunConfig& c, const std::string& v) {
                const long long i = to_int(v);
                if (i < -2147483647LL || i > 2147483647LL) throw std::invalid_argument("integer out of range");
                at(c) = static_cast<int>(i);
            }};
}

template <class At>
ConfigKey u64(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc),
            [at](const RunConfig& c) { return fmt::format("{}", at(const_cast<RunConfig&>(c))); },
            [at](RunConfig& c, const std::string& v) { at(c) = to_u64(v); }};
}

template <class At>
ConfigKey boolean(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc), [at](const RunConfig& c) { return fmt_bool(at(const_cast<RunConfig&>(c))); },
            [at](RunConfig& c, const std::string& v) { at(c) = to_bool(v); }};
}

template <class At>
ConfigKey text(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc), [at](const RunConfig& c) { return at(const_cast<RunConfig&>(c)); },
            [at](RunConfig& c, const std::string& v) {
                const auto t = trim(v);
                if (t.empty()) throw std::invalid_argument("empty value");
                at(c) = t;
            }};
}

template <class At, class Show, class Parse>
ConfigKey enumerated(std::string key, std::string doc, At at, Show show, Parse parse) {
    return {std::move(key), std::move(doc), [at, show](const RunConfig& c) { return show(at(const_cast<RunConfig&>(c))); },
            [at, parse](RunConfig& c, const std::string& v) { at(c) = parse(trim(v)); }};
}

template <class At>
ConfigKey int_list(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc),
            [at](const RunConfig& c) { return fmt::format("{}", fmt::join(at(const_cast<RunConfig&>(c)), ",")); },
            [at](RunConfig& c, const std::string& v) {
                std::vector<int> out;
                for (const auto& s : split_list(v)) out.push_back(static_cast<int>(to_int(s)));
                at(c) = out;
            }};
}

template <class At>
ConfigKey real_list(std::string key, std::string doc, At at) {
    return {std::move(key), std::move(doc),
            [at](const RunConfig& c) { return fmt::format("{}", fmt::join(at(const_cast<RunConfig&>(c)), ",")); },
            [at](RunConfig& c, const std::string& v) {
                std::vector<Real> out;
                for (const auto& s : split_list(v)) out.push_back(static_cast<Real>(to_double(s)));
                at(c) = out;
            }};
}

#define AT(expr) [](RunConfig & c) -> auto& { return c.expr; }

std::vector<ConfigKey> build_registry() {
    auto ik = [](InputKind k) { return to_string(k); };
    auto wk = [](WeightKind k) { return to_string(k); };
    auto st = [](Strategy s) { return to_string(s); };
    auto pm = [](PredictionMode m) { return to_string(m); };
    auto ob = [](Objective o) { return to_string(o); };
    return {
        enumerated("objective", "ris | gdfq", AT(train.objective), ob, parse_objective),
        integer("epochs", "training epochs", AT(train.epochs)),
        integer("warmup_epochs", "generator-only epochs before distillation starts", AT(train.warmup_epochs)),
        integer("batches_per_epoch", "steps per epoch", AT(train.batches_per_epoch)),
        integer("batch_size", "synthetic images per step", AT(train.batch_size)),
        dbl("gen.lr", "generator Adam learning rate", AT(train.gen_lr)),
        dbl("gen.beta1", "generator Adam beta1", AT(train.gen_beta1)),
        integer("gen.latent_dim", "latent size", AT(train.latent_dim)),
        integer("gen.base_channels", "generator width", AT(train.gen_base_channels)),
        dbl("student.lr", "student SGD learning rate", AT(train.student_lr)),
        dbl("student.momentum", "student SGD momentum", AT(train.student_momentum)),
        dbl("student.weight_decay", "student SGD weight decay", AT(train.student_weight_decay)),
        dbl("kd.temperature", "distillation temperature", AT(train.kd_temperature)),
        dbl("loss.alpha", "BN-statistics weight", AT(train.loss.alpha)),
        dbl("loss.lambda_r", "robustness term weight; 0 disables it", AT(train.loss.lambda_r)),
        dbl("loss.beta", "prediction hinge weight inside the robustness term", AT(train.loss.beta)),
        integer("quant.weight_bits", "student weight bits", AT(train.quant.weight_bits)),
        integer("quant.act_bits", "student activation bits", AT(train.quant.act_bits)),
        dbl("quant.range_momentum", "EMA momentum of activation ranges", AT(train.quant.range_momentum)),
        boolean("quant.per_channel", "per-output-channel weight ranges", AT(train.quant.per_channel)),
        boolean("quant.keep_first_last_fp", "leave the stem and head unquantized", AT(train.quant.keep_first_last_fp)),
        enumerated("perturb.strategy", "serial | parallel | random_pick | input | weight", AT(train.perturb.strategy), st,
                   parse_strategy),
        enumerated("perturb.input.kind", "gaussian_noise | translation | resize | random_select",
                   AT(train.perturb.input.kind), ik, parse_input_kind),
        dbl("perturb.input.noise_sigma", "additive noise std (generator domain)", AT(train.perturb.input.noise_sigma)),
        dbl("perturb.input.max_shift", "max translation in pixels", AT(train.perturb.input.max_shift)),
        dbl("perturb.input.scale_lo", "lower resize factor", AT(train.perturb.input.scale_lo)),
        dbl("perturb.input.scale_hi", "upper resize factor", AT(train.perturb.input.scale_hi)),
        integer("perturb.input.count", "perturbed copies per batch", AT(train.perturb.input.count)),
        enumerated("perturb.weight.kind", "gaussian | adversarial | dropout", AT(train.perturb.weight.kind), wk,
                   parse_weight_kind),
        dbl("perturb.weight.sigma_rel", "gaussian weight noise relative to weight std", AT(train.perturb.weight.sigma_rel)),
        dbl("perturb.weight.gamma", "adversarial step relative to |w|", AT(train.perturb.weight.gamma)),
        dbl("perturb.weight.dropout_p", "channel dropout probability", AT(train.perturb.weight.dropout_p)),
        dbl("robust.epsilon", "tolerated non-robust fraction", AT(train.epsilon)),
        integer("robust.n_noise", "noise images for threshold calibration", AT(train.n_noise)),
        enumerated("robust.prediction", "softmax | logits", AT(train.prediction_mode), pm, parse_prediction_mode),
        boolean("labels.soft", "optimized soft labels; false uses one-hot rows", AT(train.labels.soft)),
        integer("labels.rows", "label matrix rows N; 0 means 2C", AT(train.labels.rows)),
        integer("labels.steps", "label optimizer iterations", AT(train.labels.opt.steps)),
        dbl("labels.step_size", "label optimizer step", AT(train.labels.opt.step_size)),
        dbl("labels.jitter", "label initialization jitter", AT(train.labels.opt.jitter)),
        integer("labels.max_halvings", "step halvings per iteration", AT(train.labels.opt.max_halvings)),
        u64("seed.init", "generator initialization", AT(train.seeds.init)),
        u64("seed.labels", "label matrix", AT(train.seeds.labels)),
        u64("seed.latent", "latents and label rows", AT(train.seeds.latent)),
        u64("seed.perturb", "perturbation draws", AT(train.seeds.perturb)),
        u64("seed.calibration", "threshold calibration noise", AT(train.seeds.calibration)),
        boolean("data_free_guard", "fail on any real-data read during training", AT(train.data_free_guard)),
        text("teacher.dir", "teacher directory (relative to the runs root unless absolute)", AT(teacher_dir)),
        text("teacher.data", "teacher training data", AT(teacher_data)),
        text("teacher.heldout", "teacher held-out data", AT(teacher_heldout)),
        integer("teacher.num_classes", "classes", AT(teacher_spec.num_classes)),
        integer("teacher.in_channels", "image channels", AT(teacher_spec.in_channels)),
        integer("teacher.image_size", "image side", AT(teacher_spec.image_size)),
        int_list("teacher.widths", "stage widths", AT(teacher_spec.widths)),
        integer("teacher.blocks_per_stage", "residual blocks per stage", AT(teacher_spec.blocks_per_stage)),
        real_list("teacher.norm_mean", "per-channel input mean", AT(teacher_spec.norm_mean)),
        real_list("teacher.norm_std", "per-channel input std", AT(teacher_spec.norm_std)),
        integer("teacher.epochs", "teacher epochs", AT(teacher_train.epochs)),
        integer("teacher.batch_size", "teacher batch size", AT(teacher_train.batch_size)),
        dbl("teacher.lr", "teacher SGD learning rate", AT(teacher_train.lr)),
        dbl("teacher.momentum", "teacher SGD momentum", AT(teacher_train.momentum)),
        dbl("teacher.weight_decay", "teacher weight decay", AT(teacher_train.weight_decay)),
        boolean("teacher.flip", "random horizontal flips", AT(teacher_train.flip)),
        dbl("teacher.accuracy_floor", "warn below this held-out top-1", AT(teacher_train.accuracy_floor)),
        u64("teacher.seed", "teacher initialization and order", AT(teacher_train.seed)),
        text("eval.data", "evaluation data", AT(eval_data)),
        integer("eval.images", "synthetic images for IS/FID", AT(eval_images)),
        integer("eval.splits", "inception score splits", AT(eval_splits)),
        u64("eval.seed", "synthesis seed for evaluation", AT(eval_seed)),
    };
}

#undef AT

const ConfigKey& find_key(const std::string& key) {
    for (const auto& k : config_keys())
        if (k.key == key) return k;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
    teacher_spec.image_size = 16;
    teacher_spec.widths = {8, 16, 32};
    teacher_train.epochs = 10;
}

void RunConfig::validate() const {
    try {
        train.validate();
        teacher_spec.validate();
        teacher_train.validate();
        train.perturb.input.validate(teacher_spec.image_size);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (eval_splits < 1) throw ConfigError("eval.splits must be >= 1");
    if (eval_images < 10 * eval_splits) throw ConfigError("eval.images must be >= 10 * eval.splits");
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_registry();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& k = find_key(key);
    try {
        k.set(cfg, value);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

std::string render_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) out += k.key + "=" + k.get(cfg) + "\n";
    return out;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key=value, got '{}'", lineno, t));
        set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& file,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (!file.empty()) {
        std::string text;
        try {
            text = read_text(file);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        cfg = parse_config_text(text, cfg);
    }
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
}

std::string config_help() {
    const RunConfig def;
    std::string out;
    for (const auto& k : config_keys()) out += fmt::format("  --{:<30} {} [{}]\n", k.key, k.doc, k.get(def));
    return out;
}

std::string train_config_hash(const TrainConfig& cfg) {
    RunConfig rc;
    rc.train = cfg;
    std::string text;
    for (const auto& k : config_keys()) {
        if (k.key.starts_with("teacher.") || k.key.starts_with("eval.")) continue;
        text += k.key + "=" + k.get(rc) + "\n";
    }
    return fnv1a_hex(text);
}

}  // namespace ris
