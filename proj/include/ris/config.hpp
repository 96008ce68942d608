#ifndef RIS_CONFIG_HPP
#define RIS_CONFIG_HPP

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ris/teacherzoo.hpp"
#include "ris/trainer.hpp"

namespace ris::inline RIS_PRECISION {

// Everything one CLI invocation can be configured with.
struct RunConfig {
    TrainConfig train;

    std::string teacher_dir = "teacher";
    std::string teacher_data = "shapes10:5000:16:1";
    std::string teacher_heldout = "shapes10:1000:16:2";
    TeacherSpec teacher_spec;
    TeacherTrainConfig teacher_train;

    std::string eval_data = "shapes10:1000:16:3";
    int eval_images = 1000;
    int eval_splits = 10;
    std::uint64_t eval_seed = 7;

    RunConfig();
    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string key;
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();

// Both throw ConfigError naming the key on unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// One "key=value" line per registered key, in registry order.
std::string render_config(const RunConfig& cfg);
// "key=value" lines (spaces around = allowed); blank lines and '#' comments are skipped. Keys not
// mentioned keep their value from `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig());
// Optional file, then overrides in order, then validation.
RunConfig load_config(const std::filesystem::path& file,
                      const std::vector<std::pair<std::string, std::string>>& overrides);
// Key listing with defaults, for --help.
std::string config_help();

// Hash of the rendered training keys; checkpoints refuse to load across configs.
std::string train_config_hash(const TrainConfig& cfg);

}  // namespace ris

#endif  // RIS_CONFIG_HPP
