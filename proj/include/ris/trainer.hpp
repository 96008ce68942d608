#ifndef RIS_TRAINER_HPP
#define RIS_TRAINER_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ris/data.hpp"
#include "ris/generator.hpp"
#include "ris/losses.hpp"
#include "ris/optim.hpp"
#include "ris/quant.hpp"
#include "ris/softlabel.hpp"

namespace ris::inline RIS_PRECISION {

// ris: soft-label conditioning and the robustness-guided objective.
// gdfq: hard uniform labels, CE + alpha BNS, no perturbation machinery.
enum class Objective { ris, gdfq };
std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

struct LabelConfig {
    bool soft = true;  // false: identity label matrix
    int rows = 0;      // N; 0 means 2C
    LabelOptimizerOptions opt;

    friend bool operator==(const LabelConfig&, const LabelConfig&) = default;
};

struct SeedConfig {
    std::uint64_t init = 1;         // generator weights
    std::uint64_t labels = 2;       // label-matrix optimization
    std::uint64_t latent = 3;       // z and label rows per batch
    std::uint64_t perturb = 4;      // perturbation draws
    std::uint64_t calibration = 5;  // noise images for the thresholds

    friend bool operator==(const SeedConfig&, const SeedConfig&) = default;
};

struct TrainConfig {
    Objective objective = Objective::ris;
    int epochs = 100;
    int warmup_epochs = 4;
    int batches_per_epoch = 200;
    int batch_size = 64;
    double gen_lr = 1e-3;
    double gen_beta1 = 0.5;
    double student_lr = 1e-4;
    double student_momentum = 0.9;
    double student_weight_decay = 1e-4;
    double kd_temperature = 4.0;
    // Generator architecture; classes, channels and image size follow the teacher.
    int latent_dim = 100;
    int gen_base_channels = 64;
    LossWeights loss;
    QuantConfig quant;
    PerturbationConfig perturb;
    PredictionMode prediction_mode = PredictionMode::softmax;
    double epsilon = 0.1;
    int n_noise = 1000;
    LabelConfig labels;
    SeedConfig seeds;
    bool data_free_guard = true;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
    bool uses_robustness() const { return objective == Objective::ris && loss.lambda_r > 0; }
};

// One generator update and, after warm-up, one student update. Student
// fields are NaN during warm-up.
struct StepLog {
    int epoch = 0;
    long step = 0;
    double g_total = 0, g_ce = 0, g_bns = 0, g_robust = 0;
    double r_f = 0, r_p = 0;
    std::string channel;  // perturbation channel, empty when unused
    double s_total = 0, s_ce = 0, s_kl = 0;
};

void write_log_csv(const std::vector<StepLog>& log, const std::filesystem::path& path);
std::vector<StepLog> read_log_csv(const std::filesystem::path& path);

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs the synthesis loop against a frozen teacher. The trainer never sees a
// dataset; with data_free_guard on, any real-data read raises during run().
class Trainer {
public:
    Trainer(const ResNet& teacher, TrainConfig cfg);

    const TrainConfig& config() const { return cfg_; }
    // Calibrates thresholds (when the robustness term is on) and builds the
    // label matrix; run() and step() call it on first use.
    void prepare();
    void set_thresholds(const RobustnessThresholds& thr);
    const std::optional<RobustnessThresholds>& thresholds() const { return thresholds_; }
    const SoftLabelMatrix& labels() const;
    const LabelOptimizerReport& label_report() const { return label_report_; }

    StepLog step();
    // Steps until the end of epoch `until_epoch` (default: all epochs). With
    // a checkpoint directory, a checkpoint is written after every epoch.
    void run(int until_epoch = -1, const std::filesystem::path& checkpoint_dir = {});

    void save_checkpoint(const std::filesystem::path& dir);
    // Restores a checkpoint written under the same configuration.
    void load_checkpoint(const std::filesystem::path& dir);

    long global_step() const { return step_; }
    int epoch() const { return static_cast<int>(step_ / cfg_.batches_per_epoch); }
    const std::vector<StepLog>& log() const { return log_; }
    ConditionalGenerator& generator() { return *gen_; }
    QuantizedModel& student() { return *student_; }
    const ResNet& teacher() const { return teacher_; }
    const InputNormalization& normalization() const { return norm_; }

    // Synthesized images in [-1, 1] (evaluation mode) with their label rows
    // drawn from `rng`.
    struct Synthesized {
        Tensor images;
        Tensor rows;
        std::vector<int> row_index;  // label-matrix row (class id under gdfq)
    };
    Synthesized synthesize(int n, Rng& rng, int batch = 100);

private:
    struct Conditioned {
        LabelCondition cond;
        Tensor rows;
        std::vector<int> classes;  // gdfq only
        std::vector<int> indices;
    };
    Conditioned draw_condition(int batch, Rng& rng) const;
    ProbeContext probe_context() const;

    const ResNet& teacher_;
    TrainConfig cfg_;
    InputNormalization norm_;
    std::unique_ptr<ConditionalGenerator> gen_;
    std::unique_ptr<QuantizedModel> student_;
    std::unique_ptr<Adam> gen_opt_;
    std::unique_ptr<Sgd> student_opt_;
    std::optional<RobustnessThresholds> thresholds_;
    std::optional<SoftLabelMatrix> labels_;
    LabelOptimizerReport label_report_;
    Rng latent_rng_;
    Rng perturb_rng_;
    long step_ = 0;
    bool prepared_ = false;
    std::filesystem::path last_checkpoint_;
    std::vector<StepLog> log_;
};

}  // namespace ris

#endif  // RIS_TRAINER_HPP
