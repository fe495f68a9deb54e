#include "choicectx/identify.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cassert>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <unordered_set>

namespace choicectx {

Vector context_row(const Vector& x_C, const Vector& x_i) {
    const int d = static_cast<int>(x_C.size());
    if (x_i.size() != d) throw DataError("context_row: dimension mismatch");
    const Vector diff = x_i - x_C;
    Vector row(d * d + d);
    for (int b = 0; b < d; ++b) row.segment(b * d, d) = x_C[b] * diff;
    row.tail(d) = diff;
    return row;
}

namespace {

// Canonical form of a choice set as a multiset: rows sorted
// lexicographically.
Matrix canonical_set(const Matrix& items) {
    std::vector<int> order(items.rows());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (Eigen::Index c = 0; c < items.cols(); ++c) {
            if (items(a, c) != items(b, c)) return items(a, c) < items(b, c);
        }
        return false;
    });
    Matrix out(items.rows(), items.cols());
    for (Eigen::Index r = 0; r < items.rows(); ++r) out.row(r) = items.row(order[r]);
    return out;
}

bool sets_close(const Matrix& a, const Matrix& b, double tol) {
    return a.rows() == b.rows() && (a - b).cwiseAbs().maxCoeff() <= tol;
}

std::vector<Matrix> unique_choice_sets(const ChoiceDataset& dataset, double tol) {
    std::vector<Matrix> unique;
    if (tol == 0.0) {
        std::unordered_set<std::string> seen;
        for (const auto& obs : dataset.observations) {
            Matrix canon = canonical_set(obs.items);
            std::string key(reinterpret_cast<const char*>(canon.data()),
                            sizeof(double) * canon.size());
            key += std::to_string(canon.rows());
            if (seen.insert(key).second) unique.push_back(std::move(canon));
        }
    } else {
        for (const auto& obs : dataset.observations) {
            Matrix canon = canonical_set(obs.items);
            bool dup = false;
            for (const auto& kept : unique)
                if (sets_close(kept, canon, tol)) {
                    dup = true;
                    break;
                }
            if (!dup) unique.push_back(std::move(canon));
        }
    }
    return unique;
}

// Numerical rank with the SVD-style tolerance max(rows, cols) * eps * sigma_max.
std::pair<int, double> numerical_rank(const Matrix& rows, long nominal_row_count) {
    const double eps = std::numeric_limits<double>::epsilon();
    const long m = std::max<long>(nominal_row_count, rows.cols());
    if (rows.rows() == 0) return {0, 0.0};
    if (rows.rows() <= 5000) {
        Eigen::BDCSVD<Matrix> svd(rows);
        const double tol = static_cast<double>(m) * eps * svd.singularValues()[0];
        int rank = 0;
        for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > tol) ++rank;
        return {rank, tol};
    }
    // Large row stacks: singular values via the Gram matrix.
    Matrix gram = rows.transpose() * rows;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    Vector sigma = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const double tol = static_cast<double>(m) * eps * sigma.maxCoeff();
    int rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma[i] > tol) ++rank;
    return {rank, tol};
}

}  // namespace

int affinely_independent_count(const std::vector<Vector>& mean_vectors) {
    if (mean_vectors.empty()) throw DataError("affinely_independent_count: empty list");
    const int d = static_cast<int>(mean_vectors[0].size());
    Matrix lifted(mean_vectors.size(), d + 1);
    for (size_t i = 0; i < mean_vectors.size(); ++i) {
        if (mean_vectors[i].size() != d)
            throw DataError("affinely_independent_count: dimension mismatch");
        lifted.row(i).head(d) = mean_vectors[i].transpose();
        lifted(i, d) = 1.0;
    }
    return numerical_rank(lifted, lifted.rows()).first;
}

IdentifiabilityReport lcl_identifiable(const ChoiceDataset& dataset,
                                       const IdentifyOptions& options) {
    if (dataset.empty()) throw DataError("lcl_identifiable: empty dataset");
    const int d = dataset.d;
    const int cols = d * d + d;

    std::vector<Matrix> sets = unique_choice_sets(dataset, options.dedup_tolerance);

    long total_rows = 0;
    for (const auto& s : sets) total_rows += s.rows();

    IdentifiabilityReport report;
    report.d = d;
    report.required = cols;
    report.affine_required = d + 1;

    // One row per (item, unique choice set) pair, uniformly subsampled
    // when the stack is too large to factor.
    std::vector<long> keep;
    report.subsampled = total_rows > options.max_rows;
    if (report.subsampled) {
        std::vector<long> all(total_rows);
        std::iota(all.begin(), all.end(), 0);
        std::mt19937_64 rng(options.subsample_seed);
        std::shuffle(all.begin(), all.end(), rng);
        keep.assign(all.begin(), all.begin() + options.max_rows);
        std::sort(keep.begin(), keep.end());
    }
    const long n_rows = report.subsampled ? options.max_rows : total_rows;
    report.rows_used = n_rows;

    Matrix rows(n_rows, cols);
    std::vector<Vector> means;
    means.reserve(sets.size());
    long global = 0, out_row = 0;
    size_t keep_pos = 0;
    for (const auto& s : sets) {
        const Vector x_C = s.colwise().mean().transpose();
        means.push_back(x_C);
        for (Eigen::Index i = 0; i < s.rows(); ++i, ++global) {
            if (report.subsampled) {
                if (keep_pos >= keep.size() || keep[keep_pos] != global) continue;
                ++keep_pos;
            }
            rows.row(out_row++) = context_row(x_C, s.row(i).transpose()).transpose();
        }
    }

    auto [rank, tol] = numerical_rank(rows, total_rows);
    report.span_dim = rank;
    report.rank_tolerance = tol;
    report.identifiable = rank == cols;

    report.affine_count = affinely_independent_count(means);
    report.necessary_ok = report.affine_count == d + 1;

    // The sufficient condition implies the necessary one; a violation here
    // means a rank-tolerance bug.
    assert(!report.identifiable || report.necessary_ok);
    return report;
}

std::string identifiability_report_json(const IdentifiabilityReport& report) {
    nlohmann::json j;
    j["d"] = report.d;
    j["span"] = std::to_string(report.span_dim) + "/" + std::to_string(report.required);
    j["span_dim"] = report.span_dim;
    j["required"] = report.required;
    j["identifiable"] = report.identifiable;
    j["affine"] =
        std::to_string(report.affine_count) + "/" + std::to_string(report.affine_required);
    j["affine_count"] = report.affine_count;
    j["necessary_ok"] = report.necessary_ok;
    j["rank_tolerance"] = report.rank_tolerance;
    j["rows_used"] = report.rows_used;
    j["subsampled"] = report.subsampled;
    return j.dump(2);
}

}  // namespace choicectx
