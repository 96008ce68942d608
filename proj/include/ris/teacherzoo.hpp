#ifndef RIS_TEACHERZOO_HPP
#define RIS_TEACHERZOO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ris/data.hpp"
#include "ris/resnet.hpp"

namespace ris::inline RIS_PRECISION {

struct TeacherTrainConfig {
    int epochs = 15;
    int batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool flip = false;  // random horizontal flips
    double accuracy_floor = 0.6;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TeacherTrainConfig&, const TeacherTrainConfig&) = default;
};

struct TeacherReport {
    double heldout_top1 = 0;
    double train_loss = 0;  // mean over the last epoch
    int epochs = 0;
    std::string dataset;
    bool below_floor = false;
};

// Supervised training with SGD + cosine decay. Returns the network frozen
// (requires_grad off). Warns when held-out accuracy falls under the floor.
ResNet train_teacher(const TeacherSpec& spec, const Dataset& train, const Dataset& heldout,
                     const TeacherTrainConfig& cfg, TeacherReport* report = nullptr);

nlohmann::json spec_to_json(const TeacherSpec& spec);
TeacherSpec spec_from_json(const nlohmann::json& j);

// <dir>/manifest.json + <dir>/tensors.bin
void save_teacher(ResNet& teacher, const TeacherReport& report, const std::filesystem::path& dir);
// Frozen network in evaluation mode; the manifest's report goes to *report.
ResNet load_teacher(const std::filesystem::path& dir, TeacherReport* report = nullptr);

// Weight digest for immutability checks: the raw bytes of every parameter and
// BN statistic in order.
std::string teacher_digest(ResNet& teacher);

}  // namespace ris

#endif  // RIS_TEACHERZOO_HPP
