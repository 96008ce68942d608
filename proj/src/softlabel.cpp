#include "ris/softlabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace ris::inline RIS_PRECISION {

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
    Matrix m(static_cast<std::size_t>(t.dim(0)));
    for (int i = 0; i < t.dim(0); ++i) m[i].assign(t.row(i).begin(), t.row(i).end());
    return m;
}

// Rounding to Real can move a row sum off 1; the residual goes into the
// largest entry.
Tensor to_tensor(const Matrix& m) {
    Tensor t({static_cast<int>(m.size()), static_cast<int>(m[0].size())});
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto row = t.row(static_cast<int>(i));
        double s = 0;
        for (std::size_t j = 0; j < m[i].size(); ++j) {
            row[j] = static_cast<Real>(m[i][j]);
            s += row[j];
        }
        auto top = std::max_element(row.begin(), row.end());
        *top = static_cast<Real>(*top + (1 - s));
    }
    return t;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

// Returns +inf for coincident rows instead of throwing.
double spread(const Matrix& m) {
    double s = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            const double d = distance(m[i], m[j]);
            if (d == 0) return std::numeric_limits<double>::infinity();
            s += 2 / d;
        }
    return s;
}

double min_distance(const Matrix& m) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) best = std::min(best, distance(m[i], m[j]));
    return best;
}

Matrix spread_gradient(const Matrix& m) {
    const std::size_t c = m[0].size();
    Matrix g(m.size(), std::vector<double>(c, 0.0));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            const double d = distance(m[i], m[j]);
            const double k = -2 / (d * d * d);
            for (std::size_t q = 0; q < c; ++q) {
                const double diff = k * (m[i][q] - m[j][q]);
                g[i][q] += diff;
                g[j][q] -= diff;
            }
        }
    return g;
}

}  // namespace

SoftLabelMatrix::SoftLabelMatrix(Tensor rows) : t_(std::move(rows)) {
    if (t_.rank() != 2 || t_.dim(0) < 1 || t_.dim(1) < 1) throw std::invalid_argument("SoftLabelMatrix: expected [N, C]");
    for (int i = 0; i < t_.dim(0); ++i) {
        double s = 0;
        for (Real v : t_.row(i)) {
            if (!(v >= 0)) throw std::invalid_argument(fmt::format("SoftLabelMatrix: row {} has a negative entry", i));
            s += v;
        }
        if (std::abs(s - 1) > 1e-6) throw std::invalid_argument(fmt::format("SoftLabelMatrix: row {} sums to {}", i, s));
    }
    if (t_.dim(0) > 1 && min_pairwise_distance(t_) == 0) throw std::invalid_argument("SoftLabelMatrix: duplicate rows");
}

SoftLabelMatrix SoftLabelMatrix::identity(int num_classes) {
    Tensor t({num_classes, num_classes});
    for (int i = 0; i < num_classes; ++i) t.row(i)[static_cast<std::size_t>(i)] = 1;
    return SoftLabelMatrix(std::move(t));
}

bool SoftLabelMatrix::is_identity() const {
    if (rows() != classes()) return false;
    for (int i = 0; i < rows(); ++i)
        for (int j = 0; j < classes(); ++j)
            if (t_.row(i)[static_cast<std::size_t>(j)] != (i == j ? 1 : 0)) return false;
    return true;
}

double spread_objective(const Tensor& t) {
    const double s = spread(to_matrix(t));
    if (std::isinf(s)) throw std::domain_error("spread_objective: coincident rows give an infinite objective");
    return s;
}

double min_pairwise_distance(const Tensor& t) { return min_distance(to_matrix(t)); }

std::vector<double> project_simplex(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("project_simplex: empty vector");
    std::vector<double> u(v.begin(), v.end());
    for (double x : u)
        if (!std::isfinite(x)) throw std::invalid_argument("project_simplex: non-finite entry");
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0, tau = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cumulative += u[k];
        const double t = (cumulative - 1) / static_cast<double>(k + 1);
        if (u[k] - t > 0) tau = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
    return out;
}

SoftLabelMatrix optimize_labels(int n, int c, const LabelOptimizerOptions& opt, Rng& rng, LabelOptimizerReport* report) {
    if (n < 2 || c < 2) throw std::invalid_argument("optimize_labels: need N >= 2 and C >= 2");
    if (opt.steps < 0 || !(opt.step_size > 0) || !(opt.jitter >= 0) || opt.max_halvings < 1)
        throw std::invalid_argument("optimize_labels: invalid options");

    Matrix m(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(c), 0.0));
    for (int i = 0; i < n; ++i) {
        auto& row = m[static_cast<std::size_t>(i)];
        row[static_cast<std::size_t>(i % c)] = 1;
        // Positive jitter then renormalization keeps every row interior, so
        // cycled duplicates separate (a projection would often snap back to the vertex).
        double sum = 0;
        for (auto& v : row) sum += (v += opt.jitter * std::abs(rng.normal()));
        for (auto& v : row) v /= sum;
    }
    double obj = spread(m);
    if (std::isinf(obj)) throw std::runtime_error("optimize_labels: initialization produced coincident rows; raise the jitter");

    LabelOptimizerReport rep;
    rep.initial_objective = obj;
    rep.initial_min_distance = min_distance(m);

    double eta = opt.step_size;
    int halvings = 0;
    bool last_nonfinite = false;
    for (int step = 0; step < opt.steps; ++step) {
        const Matrix g = spread_gradient(m);
        Matrix trial = m;
        bool finite = true;
        for (std::size_t i = 0; i < trial.size() && finite; ++i) {
            for (std::size_t q = 0; q < trial[i].size(); ++q) {
                trial[i][q] -= eta * g[i][q];
                finite = finite && std::isfinite(trial[i][q]);
            }
            if (finite) trial[i] = project_simplex(trial[i]);
        }
        const double trial_obj = finite ? spread(trial) : std::numeric_limits<double>::quiet_NaN();
        if (finite && trial_obj < obj) {
            m = std::move(trial);
            obj = trial_obj;
            halvings = 0;
            ++rep.accepted_steps;
            continue;
        }
        last_nonfinite = !finite || std::isnan(trial_obj);
        eta /= 2;
        if (++halvings >= opt.max_halvings) {
            if (last_nonfinite) throw std::runtime_error("optimize_labels: non-finite steps after repeated step halving");
            rep.converged_early = true;
            break;
        }
    }
    rep.final_objective = obj;
    if (report) *report = rep;
    return SoftLabelMatrix(to_tensor(m));
}

SampledRows sample_rows(const SoftLabelMatrix& t, int batch, Rng& rng) {
    if (batch < 1) throw std::invalid_argument("sample_rows: batch must be >= 1");
    SampledRows s;
    s.rows = Tensor({batch, t.classes()});
    s.indices.resize(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(t.rows())));
        s.indices[static_cast<std::size_t>(b)] = idx;
        std::copy(t.row(idx).begin(), t.row(idx).end(), s.rows.row(b).begin());
    }
    return s;
}

void save_labels_csv(const SoftLabelMatrix& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (int i = 0; i < t.rows(); ++i) {
        for (int j = 0; j < t.classes(); ++j) out << (j ? "," : "") << fmt::format("{}", t.row(i)[static_cast<std::size_t>(j)]);
        out << '\n';
    }
}

SoftLabelMatrix load_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Matrix m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!m.empty() && row.size() != m[0].size())
            throw std::runtime_error(path.string() + ": ragged label matrix at row " + std::to_string(m.size()));
        m.push_back(std::move(row));
    }
    if (m.empty()) throw std::runtime_error(path.string() + ": empty label matrix");
    return SoftLabelMatrix(to_tensor(m));
}

}  // namespace ris
