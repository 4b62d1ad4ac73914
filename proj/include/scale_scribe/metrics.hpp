#pragma once

// Agreement statistics between true and predicted ratings.
//
// The numeric kernels are free functions over Eigen expressions, templated
// on the scalar type. Integer ratings should be cast to a floating type at
// the call site: `pearson(truth.cast<double>(), pred.cast<double>())`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scale_scribe/corpus.hpp"
#include "scale_scribe/errors.hpp"
#include "scale_scribe/rng.hpp"
#include "scale_scribe/scale.hpp"

namespace scale_scribe {

// Column 0 holds the true total, column 1 the predicted total.
template <typename Scalar>
using PairedTotals = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

// n_cases x n_items true and predicted ratings.
struct ItemPairMatrix {
    Eigen::MatrixXi truth;
    Eigen::MatrixXi predicted;
};

// Sample Pearson correlation. Throws MetricsError(degenerate_variance) when
// either coordinate is constant.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    using Scalar = typename DerivedX::Scalar;
    static_assert(std::is_floating_point_v<Scalar>, "cast integer ratings to a floating type first");
    static_assert(std::is_same_v<Scalar, typename DerivedY::Scalar>, "x and y must share a scalar type");
    static_assert(DerivedX::IsVectorAtCompileTime && DerivedY::IsVectorAtCompileTime, "pearson takes vectors");

    if (x.size() != y.size()) throw MetricsError(MetricsError::Kind::invalid_argument, "pearson: length mismatch");
    if (x.size() < 2) throw MetricsError(MetricsError::Kind::empty_input, "pearson: need at least 2 pairs");

    const auto dx = (x.array() - x.mean()).eval();
    const auto dy = (y.array() - y.mean()).eval();
    const Scalar sxx = dx.square().sum();
    const Scalar syy = dy.square().sum();
    if (sxx == Scalar(0) || syy == Scalar(0))
        throw MetricsError(MetricsError::Kind::degenerate_variance, "pearson: a coordinate is constant");
    const Scalar sxy = dx.matrix().dot(dy.matrix());
    return std::clamp(sxy / std::sqrt(sxx * syy), Scalar(-1), Scalar(1));
}

// ICC(3,k): two-way mixed effects, consistency, mean of k raters.
// Rows are targets, columns raters. (MS_rows - MS_error) / MS_rows, with
// MS_error taken from the interaction residuals.
template <typename Derived>
typename Derived::Scalar icc3k(const Eigen::MatrixBase<Derived>& ratings) {
    using Scalar = typename Derived::Scalar;
    static_assert(std::is_floating_point_v<Scalar>, "cast integer ratings to a floating type first");

    const Eigen::Index n = ratings.rows();
    const Eigen::Index k = ratings.cols();
    if (n < 3) throw MetricsError(MetricsError::Kind::invalid_argument, "icc3k: need at least 3 targets");
    if (k < 2) throw MetricsError(MetricsError::Kind::invalid_argument, "icc3k: need at least 2 raters");

    const Scalar grand = ratings.mean();
    const auto row_means = ratings.rowwise().mean().eval();
    const auto col_means = ratings.colwise().mean().eval();

    const Scalar ss_rows = Scalar(k) * (row_means.array() - grand).square().sum();
    const auto residual = (((ratings.colwise() - row_means).rowwise() - col_means).array() + grand).eval();
    const Scalar ss_error = residual.square().sum();

    const Scalar ms_rows = ss_rows / Scalar(n - 1);
    const Scalar ms_error = ss_error / Scalar((n - 1) * (k - 1));
    if (ms_rows == Scalar(0))
        throw MetricsError(MetricsError::Kind::degenerate, "icc3k: no between-target variance");
    return (ms_rows - ms_error) / ms_rows;
}

template <typename Derived>
typename Derived::Scalar rmse(const Eigen::MatrixBase<Derived>& pairs) {
    using Scalar = typename Derived::Scalar;
    static_assert(std::is_floating_point_v<Scalar>, "cast integer totals to a floating type first");
    if (pairs.cols() != 2) throw MetricsError(MetricsError::Kind::invalid_argument, "rmse: expected 2 columns");
    if (pairs.rows() == 0) throw MetricsError(MetricsError::Kind::empty_input, "rmse: no pairs");
    return std::sqrt((pairs.col(0) - pairs.col(1)).squaredNorm() / Scalar(pairs.rows()));
}

// Standard deviation (divisor B) of `statistic` over B resamples with
// replacement of the rows of `sample`.
//
// Resampling order: one Pcg32(seed, kBootstrapStream) stream; for
// b = 0..B-1, for i = 0..n-1, row i of resample b is
// sample.row(rng.bounded(n)).
template <typename Derived, typename Statistic>
typename Derived::Scalar bootstrap_se(const Eigen::MatrixBase<Derived>& sample, Statistic&& statistic, int resamples,
                                      std::uint64_t seed) {
    using Scalar = typename Derived::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>;
    if (sample.rows() == 0) throw MetricsError(MetricsError::Kind::empty_input, "bootstrap: empty sample");
    if (resamples < 1) throw MetricsError(MetricsError::Kind::invalid_argument, "bootstrap: need B >= 1");

    const auto n = static_cast<std::uint32_t>(sample.rows());
    Pcg32 rng(seed, kBootstrapStream);
    Matrix resample(sample.rows(), sample.cols());
    std::vector<Scalar> stats(static_cast<std::size_t>(resamples));
    for (auto& s : stats) {
        for (Eigen::Index i = 0; i < sample.rows(); ++i) resample.row(i) = sample.row(rng.bounded(n));
        s = statistic(resample);
    }

    // Shifted by the first value so a constant statistic gives exactly 0.
    const Scalar shift = stats.front();
    Scalar sum = 0;
    Scalar sum_sq = 0;
    for (Scalar s : stats) {
        sum += s - shift;
        sum_sq += (s - shift) * (s - shift);
    }
    const Scalar b = Scalar(resamples);
    const Scalar variance = (sum_sq - sum * sum / b) / b;
    return variance > Scalar(0) ? std::sqrt(variance) : Scalar(0);
}

template <typename Derived>
typename Derived::Scalar bootstrap_rmse_se(const Eigen::MatrixBase<Derived>& pairs, int resamples,
                                           std::uint64_t seed) {
    return bootstrap_se(
        pairs, [](const auto& m) { return rmse(m); }, resamples, seed);
}

// Fraction of cases per item whose two ratings differ by at most one point.
Eigen::VectorXd concordance_per_item(const ItemPairMatrix& m);

struct ConcordanceSummary {
    double median = 0;
    int n_below = 0;
};

// Median (mean of the two central values for even counts) and count of
// values strictly below `threshold`.
ConcordanceSummary concordance_summary(std::span<const double> values, double threshold = 0.75);
double median(std::span<const double> values);

struct MannWhitneyResult {
    double u = 0;  // U of the first sample: pairs (x, y) with x > y, ties count 1/2
    double p_two_sided = 1;
};

enum class MannWhitneyMode { exact, normal_approx };

// Exact mode needs untied data and min(|x|, |y|) <= 10; it computes the
// exact null distribution of U. The normal approximation applies the tie
// and continuity corrections.
MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y,
                               MannWhitneyMode mode = MannWhitneyMode::normal_approx);

struct GroupComparison {
    std::string first;
    std::string second;
    std::size_t n_first = 0;
    std::size_t n_second = 0;
    double median_first = 0;
    double median_second = 0;
    MannWhitneyResult test;
};

// Mann-Whitney over per-item values between two item groups. Items whose
// value is missing are left out.
GroupComparison group_compare(std::span<const std::optional<double>> per_item, const std::vector<int>& first_items,
                              const std::vector<int>& second_items, std::string first_label, std::string second_label,
                              MannWhitneyMode mode = MannWhitneyMode::normal_approx);

// ---- full report ----------------------------------------------------------

struct ScoredCase {
    EvalCase truth_case;
    Ratings predicted{};
};

struct MetricsConfig {
    double threshold = 0.75;
    int bootstrap_resamples = 1000;
    std::uint64_t seed = 0;
};

struct ItemStats {
    int index = 0;
    std::string name;
    double true_mean = 0;
    double pred_mean = 0;
    std::optional<double> pearson;
    double concordance = 0;
};

struct GroupSummary {
    std::string grouping;  // "source" or "factor"
    std::string label;
    std::vector<int> items;
    double true_mean_total = 0;
    double pred_mean_total = 0;
    std::optional<double> pearson;
    std::optional<double> icc3k;
    double rmse = 0;
    double median_concordance = 0;
    int n_below_threshold = 0;
};

struct MetricsReport {
    std::size_t n_cases = 0;
    std::optional<double> pearson_total;
    std::optional<double> icc3k;
    std::vector<double> per_item_concordance;
    double median_concordance = 0;
    int n_items_below_threshold = 0;
    double threshold = 0.75;
    double rmse = 0;
    double rmse_bootstrap_se = 0;
    int bootstrap_resamples = 0;
    std::uint64_t seed = 0;
    double mean_true_total = 0;
    double mean_pred_total = 0;
    MannWhitneyResult mannwhitney_means;
    std::vector<std::optional<double>> per_item_pearson;
    std::vector<ItemStats> items;
    std::vector<GroupSummary> groups;
    std::vector<GroupComparison> comparisons;
    std::vector<std::string> warnings;
};

// Cases are sorted by (patient_id, visit_index) before anything is
// computed, so the result does not depend on input order. Correlations that
// are undefined on the data come back empty with a warning.
MetricsReport full_report(std::vector<ScoredCase> cases, const ScaleDefinition& scale, const MetricsConfig& config);

}  // namespace scale_scribe
