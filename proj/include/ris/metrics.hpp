#ifndef RIS_METRICS_HPP
#define RIS_METRICS_HPP

#include <filesystem>
#include <vector>

#include "ris/data.hpp"
#include "ris/nn.hpp"

namespace ris::inline RIS_PRECISION {

// Fraction of rows whose label is among the k largest logits (ties broken
// against the label).
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k);
double topk_accuracy(const Classifier& model, const InputNormalization& norm, const Dataset& data, int k,
                     int batch_size = 250);

struct TopK {
    double top1 = 0;
    double top5 = 0;
};
TopK evaluate_accuracy(const Classifier& model, const InputNormalization& norm, const Dataset& data,
                       int batch_size = 250);

// Penultimate features and class probabilities of a classifier used as the
// feature extractor.
struct Extracted {
    Tensor features;  // [N, F]
    Tensor probs;     // [N, C]
};
// Pixels in [0, 1].
Extracted extract_pixels(const Classifier& model, const InputNormalization& norm, const Tensor& pixels,
                         int batch_size = 250);
// Generator outputs in [-1, 1].
Extracted extract_generated(const Classifier& model, const InputNormalization& norm, const Tensor& images,
                            int batch_size = 250);

struct InceptionScore {
    double mean = 0;
    double std = 0;
    // Every prediction row equal: the score is exactly 1.
    bool degenerate = false;
};

// exp(mean_x KL(p(y|x) || p(y))) per split; mean and population std over splits.
InceptionScore inception_score(const Tensor& probs, int splits = 10);

// Frechet distance between Gaussian fits (population covariance) of two
// feature sets. The matrix square root comes from a symmetric
// eigendecomposition of sqrt(A) B sqrt(A); a 1e-6 diagonal jitter is added
// when an eigenvalue is negative beyond round-off.
double fid(const Tensor& a, const Tensor& b);

struct DiversityRow {
    int label = 0;
    double confidence = 0;
};

struct DiversityReport {
    std::vector<DiversityRow> rows;
    int distinct_classes = 0;
    std::vector<int> class_counts;
};

DiversityReport diversity_report(const Tensor& probs);
void write_diversity_csv(const DiversityReport& r, const std::filesystem::path& path);

}  // namespace ris

#endif  // RIS_METRICS_HPP
