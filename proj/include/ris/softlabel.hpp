#ifndef RIS_SOFTLABEL_HPP
#define RIS_SOFTLABEL_HPP

#include <filesystem>
#include <span>
#include <vector>

#include "ris/rng.hpp"
#include "ris/tensor.hpp"

namespace ris::inline RIS_PRECISION {

// N rows on the probability simplex over C classes, pairwise distinct.
class SoftLabelMatrix {
public:
    // Validates: rows sum to 1 +- 1e-6, entries >= 0, no duplicate rows.
    explicit SoftLabelMatrix(Tensor rows);
    static SoftLabelMatrix identity(int num_classes);

    int rows() const { return t_.dim(0); }
    int classes() const { return t_.dim(1); }
    const Tensor& matrix() const { return t_; }
    std::span<const Real> row(int i) const { return t_.row(i); }
    bool is_identity() const;

private:
    Tensor t_;
};

// sum over ordered pairs i != j of 1 / ||T_i - T_j||_2. Throws on coincident rows.
double spread_objective(const Tensor& t);
double min_pairwise_distance(const Tensor& t);

// Euclidean projection onto the probability simplex (sort-and-threshold).
std::vector<double> project_simplex(std::span<const double> v);

struct LabelOptimizerOptions {
    int steps = 2000;
    double step_size = 0.01;
    double jitter = 0.01;
    int max_halvings = 10;

    friend bool operator==(const LabelOptimizerOptions&, const LabelOptimizerOptions&) = default;
};

struct LabelOptimizerReport {
    double initial_objective = 0;
    double final_objective = 0;
    double initial_min_distance = 0;
    int accepted_steps = 0;
    bool converged_early = false;
};

// Projected gradient descent on the spread objective from cycled one-hot rows
// plus small positive jitter (renormalized). A step that raises the objective is rejected and the
// step size halved; ten consecutive halvings end the run (an error when the
// trial steps were non-finite).
SoftLabelMatrix optimize_labels(int n, int c, const LabelOptimizerOptions& opt, Rng& rng,
                                LabelOptimizerReport* report = nullptr);

struct SampledRows {
    Tensor rows;               // [B, C]
    std::vector<int> indices;  // row ids in T
};

// Uniform with replacement.
SampledRows sample_rows(const SoftLabelMatrix& t, int batch, Rng& rng);

void save_labels_csv(const SoftLabelMatrix& t, const std::filesystem::path& path);
SoftLabelMatrix load_labels_csv(const std::filesystem::path& path);

}  // namespace ris

#endif  // RIS_SOFTLABEL_HPP
