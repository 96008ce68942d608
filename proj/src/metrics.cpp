#include "ris/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace ris::inline RIS_PRECISION {

namespace {

using Mat = Eigen::MatrixXd;

Mat to_matrix(const Tensor& t) {
    Mat m(t.dim(0), t.dim(1));
    for (int i = 0; i < t.dim(0); ++i)
        for (int j = 0; j < t.dim(1); ++j) m(i, j) = t[static_cast<std::size_t>(i) * t.dim(1) + j];
    return m;
}

// Symmetric PSD square root; negative eigenvalues beyond `tol` are reported
// through *min_eig.
Mat sym_sqrt(const Mat& a, double* min_eig) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    if (es.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed");
    const Eigen::VectorXd ev = es.eigenvalues();
    *min_eig = ev.minCoeff();
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Extracted extract_impl(const Classifier& model, const Tensor& images, int batch_size,
                       const std::function<Var(const Var&)>& to_input) {
    if (images.rank() != 4) throw std::invalid_argument("extract expects [N,C,H,W]");
    NoGradGuard ng;
    const int n = images.dim(0);
    const std::size_t per = images.size() / static_cast<std::size_t>(std::max(n, 1));
    std::vector<Real> feats, probs;
    int f_dim = 0, c_dim = 0;
    for (int b = 0; b < n; b += batch_size) {
        const int m = std::min(batch_size, n - b);
        Tensor chunk({m, images.dim(1), images.dim(2), images.dim(3)});
        std::copy_n(images.data() + static_cast<std::size_t>(b) * per, static_cast<std::size_t>(m) * per, chunk.data());
        auto out = model.forward(to_input(Var::constant(std::move(chunk))));
        const Tensor p = ops::softmax(out.logits).value();
        f_dim = out.features.dim(1);
        c_dim = p.dim(1);
        feats.insert(feats.end(), out.features.value().values().begin(), out.features.value().values().end());
        probs.insert(probs.end(), p.values().begin(), p.values().end());
    }
    return {Tensor({n, f_dim}, std::move(feats)), Tensor({n, c_dim}, std::move(probs))};
}

}  // namespace

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k) {
    if (labels.empty()) throw std::invalid_argument("topk_accuracy: empty dataset");
    if (logits.rank() != 2 || logits.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("topk_accuracy: logits " + shape_str(logits.shape()) + " vs " +
                                    std::to_string(labels.size()) + " labels");
    if (k < 1) throw std::invalid_argument("topk_accuracy: k must be >= 1");
    long hits = 0;
    for (int i = 0; i < logits.dim(0); ++i) {
        const auto row = logits.row(i);
        const Real mine = row[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        int ahead = 0;
        for (std::size_t c = 0; c < row.size(); ++c)
            if (static_cast<int>(c) != labels[static_cast<std::size_t>(i)] && row[c] >= mine) ++ahead;
        hits += ahead < k;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

TopK evaluate_accuracy(const Classifier& model, const InputNormalization& norm, const Dataset& data, int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    NoGradGuard ng;
    double top1 = 0, top5 = 0;
    for (int b = 0; b < data.size(); b += batch_size) {
        Batch batch = data.slice(b, b + batch_size);
        const Tensor logits = model.forward(Var::constant(norm.from_pixels(batch.images))).logits.value();
        const double m = static_cast<double>(batch.labels.size());
        top1 += m * topk_accuracy(logits, batch.labels, 1);
        top5 += m * topk_accuracy(logits, batch.labels, std::min(5, logits.dim(1)));
    }
    return {top1 / data.size(), top5 / data.size()};
}

double topk_accuracy(const Classifier& model, const InputNormalization& norm, const Dataset& data, int k,
                     int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("topk_accuracy: empty dataset");
    NoGradGuard ng;
    double hits = 0;
    for (int b = 0; b < data.size(); b += batch_size) {
        Batch batch = data.slice(b, b + batch_size);
        const Tensor logits = model.forward(Var::constant(norm.from_pixels(batch.images))).logits.value();
        hits += static_cast<double>(batch.labels.size()) * topk_accuracy(logits, batch.labels, k);
    }
    return hits / data.size();
}

Extracted extract_pixels(const Classifier& model, const InputNormalization& norm, const Tensor& pixels,
                         int batch_size) {
    return extract_impl(model, pixels, batch_size, [&](const Var& x) { return norm.from_pixels(x); });
}

Extracted extract_generated(const Classifier& model, const InputNormalization& norm, const Tensor& images,
                            int batch_size) {
    return extract_impl(model, images, batch_size, [&](const Var& x) { return norm.from_generator(x); });
}

InceptionScore inception_score(const Tensor& probs, int splits) {
    if (probs.rank() != 2) throw std::invalid_argument("inception_score expects [N,C] probabilities");
    const int n = probs.dim(0), c = probs.dim(1);
    if (splits < 1 || n < splits * 10)
        throw std::invalid_argument(fmt::format("inception_score needs >= {} images for {} splits, got {}",
                                                splits * 10, splits, n));
    InceptionScore out;
    out.degenerate = true;
    for (int i = 1; i < n && out.degenerate; ++i)
        out.degenerate = std::equal(probs.row(i).begin(), probs.row(i).end(), probs.row(0).begin());
    if (out.degenerate) {
        out.mean = 1;
        return out;
    }
    std::vector<double> scores;
    for (int s = 0; s < splits; ++s) {
        const int lo = s * n / splits, hi = (s + 1) * n / splits;
        std::vector<double> marginal(static_cast<std::size_t>(c), 0.0);
        for (int i = lo; i < hi; ++i)
            for (int k = 0; k < c; ++k) marginal[static_cast<std::size_t>(k)] += probs.row(i)[static_cast<std::size_t>(k)];
        for (auto& m : marginal) m /= hi - lo;
        double kl = 0;
        for (int i = lo; i < hi; ++i)
            for (int k = 0; k < c; ++k) {
                const double p = probs.row(i)[static_cast<std::size_t>(k)];
                if (p > 0) kl += p * (std::log(p) - std::log(marginal[static_cast<std::size_t>(k)]));
            }
        scores.push_back(std::exp(kl / (hi - lo)));
    }
    double mean = 0, var = 0;
    for (double v : scores) mean += v;
    mean /= splits;
    for (double v : scores) var += (v - mean) * (v - mean);
    out.mean = mean;
    out.std = std::sqrt(var / splits);
    return out;
}

double fid(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("fid: feature sets " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                    " are incompatible");
    const int d = a.dim(1);
    if (a.dim(0) < d + 1 || b.dim(0) < d + 1)
        throw std::invalid_argument(fmt::format("fid: each set needs >= {} samples for {} features", d + 1, d));
    const Mat xa = to_matrix(a), xb = to_matrix(b);
    const Eigen::RowVectorXd ma = xa.colwise().mean(), mb = xb.colwise().mean();
    const Mat ca = xa.rowwise() - ma, cb = xb.rowwise() - mb;
    Mat sa = ca.transpose() * ca / static_cast<double>(xa.rows());
    Mat sb = cb.transpose() * cb / static_cast<double>(xb.rows());

    for (int attempt = 0; attempt < 2; ++attempt) {
        const double scale = std::max({1.0, sa.trace(), sb.trace()});
        double min_a = 0, min_m = 0;
        const Mat root_a = sym_sqrt(sa, &min_a);
        const Mat m = root_a * sb * root_a;
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed");
        min_m = es.eigenvalues().minCoeff();
        const double tol = 1e-9 * scale;
        if (min_a >= -tol && min_m >= -tol * scale) {
            const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
            const double v = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2 * tr_sqrt;
            return std::max(v, 0.0);
        }
        sa.diagonal().array() += 1e-6;
        sb.diagonal().array() += 1e-6;
    }
    throw std::runtime_error("fid: covariance is not positive semi-definite after jitter");
}

DiversityReport diversity_report(const Tensor& probs) {
    if (probs.rank() != 2) throw std::invalid_argument("diversity_report expects [N,C] probabilities");
    DiversityReport r;
    r.class_counts.assign(static_cast<std::size_t>(probs.dim(1)), 0);
    for (int i = 0; i < probs.dim(0); ++i) {
        const auto row = probs.row(i);
        const auto it = std::max_element(row.begin(), row.end());
        const int label = static_cast<int>(it - row.begin());
        r.rows.push_back({label, static_cast<double>(*it)});
        ++r.class_counts[static_cast<std::size_t>(label)];
    }
    r.distinct_classes = static_cast<int>(std::count_if(r.class_counts.begin(), r.class_counts.end(), [](int c) { return c > 0; }));
    return r;
}

void write_diversity_csv(const DiversityReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "index,label,confidence\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) out << fmt::format("{},{},{}\n", i, r.rows[i].label, r.rows[i].confidence);
}

}  // namespace ris
