#ifndef RIS_ROBUSTNESS_HPP
#define RIS_ROBUSTNESS_HPP

#include <cstdint>
#include <vector>

#include "ris/perturb.hpp"

namespace ris::inline RIS_PRECISION {

// Prediction vectors compared by R_p: probabilities by default, raw logits
// behind a flag.
enum class PredictionMode { softmax, logits };

std::string to_string(PredictionMode m);
PredictionMode parse_prediction_mode(const std::string& s);

// Row-batched clean and perturbed outputs: f0/p0 are [B, F] and [B, C], and
// f[i]/p[i] the same for the i-th perturbed forward.
struct PerturbedOutputs {
    Var f0;
    Var p0;
    std::vector<Var> f;
    std::vector<Var> p;
};

// Per row: max_i (1 - cos(f0, f_i)). Throws std::domain_error on a zero-norm row.
Var feature_inconsistency(const PerturbedOutputs& outs);
// Per row: max_i ||p0 - p_i||_1. With check_simplex, rows must sum to 1 +- 1e-4.
Var prediction_inconsistency(const PerturbedOutputs& outs, bool check_simplex = true);

struct RobustnessThresholds {
    double theta_f = 0;
    double theta_p = 0;
    double epsilon = 0.1;
    int n_noise = 1000;
    std::uint64_t seed = 0;
};

// Sorted ascending, returns element ceil(level * n) (1-based), clamped to [1, n].
double nearest_rank_quantile(std::vector<double> values, double level);
// theta = nearest-rank quantile at level 1 - epsilon for each list.
RobustnessThresholds thresholds_from_values(const std::vector<double>& r_f, const std::vector<double>& r_p,
                                            double epsilon);

// Mean over rows of max(R_f - theta_f, 0) + beta max(R_p - theta_p, 0).
Var robustness_loss(const Var& r_f, const Var& r_p, const RobustnessThresholds& thr, double beta);
double robustness_loss(double r_f, double r_p, const RobustnessThresholds& thr, double beta);

// Per-row inconsistencies of one batch. serial feeds every perturbed input
// through the perturbed weights; parallel here takes the max over the union
// of both channels' perturbed outputs (generator_objective instead adds one
// hinge per channel); random_pick uses one channel.
struct InconsistencyTerm {
    Channel channel = Channel::input;  // the channel random_pick chose
    Var r_f;                           // [B]
    Var r_p;                           // [B]
};

struct ProbeContext {
    const Classifier* teacher = nullptr;
    InputNormalization norm;
    PerturbationConfig perturb;
    PredictionMode mode = PredictionMode::softmax;
};

Var prediction_vectors(const Var& logits, PredictionMode mode);

// Runs the configured perturbations on x (generator domain) and compares
// against the clean outputs. `targets` feeds adversarial weight perturbation.
InconsistencyTerm measure_inconsistency(const ProbeContext& ctx, const Var& x, const Var& clean_features,
                                        const Var& clean_predictions, const Tensor& targets, Rng& rng);

struct NoiseInconsistency {
    std::vector<double> r_f;
    std::vector<double> r_p;
};

// Draws n standard-normal images of shape [C, H, W] and measures each one
// alone, so every image gets independent perturbation draws (and, under
// random_pick, its own channel). parallel is calibrated as random_pick.
// Labels for adversarial perturbation are the teacher's own argmax.
NoiseInconsistency noise_inconsistency(const ProbeContext& ctx, int n, const Shape& image_shape, std::uint64_t seed);

RobustnessThresholds calibrate_thresholds(const ProbeContext& ctx, double epsilon, int n_noise, const Shape& image_shape,
                                          std::uint64_t seed, NoiseInconsistency* values = nullptr);

}  // namespace ris

#endif  // RIS_ROBUSTNESS_HPP
