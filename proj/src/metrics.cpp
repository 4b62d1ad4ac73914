#include "scale_scribe/metrics.hpp"

#include <numeric>
#include <tuple>

namespace scale_scribe {

namespace {

struct RankSums {
    double rank_sum_x = 0;
    double tie_term = 0;  // sum over tie groups of t^3 - t
    bool has_ties = false;
};

RankSums rank(std::span<const double> x, std::span<const double> y) {
    std::vector<std::pair<double, bool>> pooled;  // (value, from x)
    pooled.reserve(x.size() + y.size());
    for (double v : x) pooled.emplace_back(v, true);
    for (double v : y) pooled.emplace_back(v, false);
    std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    RankSums out;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
        const double t = static_cast<double>(j - i + 1);
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (pooled[k].second) out.rank_sum_x += avg_rank;
        if (t > 1) {
            out.has_ties = true;
            out.tie_term += t * t * t - t;
        }
        i = j + 1;
    }
    return out;
}

// Coefficients of the Gaussian binomial [n+m choose n]_q: entry u counts the
// arrangements of the pooled sample with U == u.
std::vector<long double> u_distribution(std::size_t n, std::size_t m) {
    const std::size_t s = std::min(n, m);
    const std::size_t l = std::max(n, m);
    std::vector<long double> c(s * l + s + 1, 0.0L);
    c[0] = 1.0L;
    for (std::size_t i = 1; i <= s; ++i) {
        const std::size_t shift = l + i;
        for (std::size_t u = c.size(); u-- > shift;) c[u] -= c[u - shift];
        for (std::size_t u = i; u < c.size(); ++u) c[u] += c[u - i];
    }
    c.resize(s * l + 1);
    return c;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

std::optional<double> try_metric(std::vector<std::string>& warnings, const std::string& what, auto&& compute) {
    try {
        return compute();
    } catch (const MetricsError& e) {
        warnings.push_back(what + ": " + e.what());
        return std::nullopt;
    }
}

}  // namespace

Eigen::VectorXd concordance_per_item(const ItemPairMatrix& m) {
    if (m.truth.rows() != m.predicted.rows() || m.truth.cols() != m.predicted.cols())
        throw MetricsError(MetricsError::Kind::invalid_argument, "concordance: shape mismatch");
    if (m.truth.rows() == 0) throw MetricsError(MetricsError::Kind::empty_input, "concordance: no cases");
    return ((m.truth - m.predicted).array().abs() <= 1).cast<double>().colwise().mean().transpose();
}

double median(std::span<const double> values) {
    if (values.empty()) throw MetricsError(MetricsError::Kind::empty_input, "median: no values");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    return sorted.size() % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
}

ConcordanceSummary concordance_summary(std::span<const double> values, double threshold) {
    ConcordanceSummary out;
    out.median = median(values);
    out.n_below = static_cast<int>(std::count_if(values.begin(), values.end(), [&](double v) { return v < threshold; }));
    return out;
}

MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y, MannWhitneyMode mode) {
    if (x.empty() || y.empty()) throw MetricsError(MetricsError::Kind::empty_input, "mann_whitney: empty sample");

    const double n = static_cast<double>(x.size());
    const double m = static_cast<double>(y.size());
    const RankSums ranks = rank(x, y);

    MannWhitneyResult out;
    out.u = ranks.rank_sum_x - n * (n + 1) / 2.0;

    if (mode == MannWhitneyMode::exact) {
        if (ranks.has_ties)
            throw MetricsError(MetricsError::Kind::ties_in_exact_mode, "mann_whitney: exact mode needs untied data");
        if (std::min(x.size(), y.size()) > 10)
            throw MetricsError(MetricsError::Kind::invalid_argument,
                               "mann_whitney: exact mode needs the smaller sample to have at most 10 values");
        const auto dist = u_distribution(x.size(), y.size());
        const auto u = static_cast<std::size_t>(std::llround(out.u));
        const long double total = std::accumulate(dist.begin(), dist.end(), 0.0L);
        const long double at_most = std::accumulate(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(u) + 1, 0.0L);
        const long double at_least = std::accumulate(dist.begin() + static_cast<std::ptrdiff_t>(u), dist.end(), 0.0L);
        out.p_two_sided = static_cast<double>(std::min(1.0L, 2.0L * std::min(at_most, at_least) / total));
        return out;
    }

    const double big_n = n + m;
    const double mu = n * m / 2.0;
    const double variance = n * m / 12.0 * ((big_n + 1) - ranks.tie_term / (big_n * (big_n - 1)));
    if (variance <= 0) {
        out.p_two_sided = 1.0;
        return out;
    }
    const double u_max = std::max(out.u, n * m - out.u);
    const double z = (u_max - mu - 0.5) / std::sqrt(variance);
    out.p_two_sided = std::clamp(2.0 * normal_sf(z), 0.0, 1.0);
    return out;
}

GroupComparison group_compare(std::span<const std::optional<double>> per_item, const std::vector<int>& first_items,
                              const std::vector<int>& second_items, std::string first_label, std::string second_label,
                              MannWhitneyMode mode) {
    auto collect = [&](const std::vector<int>& items) {
        std::vector<double> values;
        for (int index : items) {
            if (index < 1 || static_cast<std::size_t>(index) > per_item.size())
                throw MetricsError(MetricsError::Kind::invalid_argument,
                                   "group_compare: item " + std::to_string(index) + " out of range");
            if (const auto& v = per_item[static_cast<std::size_t>(index - 1)]) values.push_back(*v);
        }
        return values;
    };
    const auto a = collect(first_items);
    const auto b = collect(second_items);

    GroupComparison out;
    out.first = std::move(first_label);
    out.second = std::move(second_label);
    out.n_first = a.size();
    out.n_second = b.size();
    out.test = mann_whitney(a, b, mode);
    out.median_first = median(a);
    out.median_second = median(b);
    return out;
}

MetricsReport full_report(std::vector<ScoredCase> cases, const ScaleDefinition& scale, const MetricsConfig& config) {
    if (cases.size() < 2) throw MetricsError(MetricsError::Kind::empty_input, "full_report: need at least 2 cases");

    std::stable_sort(cases.begin(), cases.end(), [](const ScoredCase& a, const ScoredCase& b) {
        return std::tie(a.truth_case.truth.patient_id, a.truth_case.truth.visit_index, a.truth_case.transcript.kind) <
               std::tie(b.truth_case.truth.patient_id, b.truth_case.truth.visit_index, b.truth_case.transcript.kind);
    });

    const auto n = static_cast<Eigen::Index>(cases.size());
    ItemPairMatrix pairs{Eigen::MatrixXi(n, kItemCount), Eigen::MatrixXi(n, kItemCount)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& c = cases[static_cast<std::size_t>(i)];
        for (int j = 0; j < kItemCount; ++j) {
            pairs.truth(i, j) = c.truth_case.truth.ratings[static_cast<std::size_t>(j)];
            pairs.predicted(i, j) = c.predicted[static_cast<std::size_t>(j)];
        }
    }
    const Eigen::MatrixXd truth = pairs.truth.cast<double>();
    const Eigen::MatrixXd predicted = pairs.predicted.cast<double>();

    PairedTotals<double> totals(n, 2);
    totals.col(0) = truth.rowwise().sum();
    totals.col(1) = predicted.rowwise().sum();

    MetricsReport report;
    report.n_cases = cases.size();
    report.threshold = config.threshold;
    report.bootstrap_resamples = config.bootstrap_resamples;
    report.seed = config.seed;

    report.pearson_total = try_metric(report.warnings, "pearson_total",
                                      [&] { return pearson(totals.col(0), totals.col(1)); });
    report.icc3k = try_metric(report.warnings, "icc3k", [&] { return icc3k(totals); });

    const Eigen::VectorXd concordance = concordance_per_item(pairs);
    report.per_item_concordance.assign(concordance.data(), concordance.data() + concordance.size());
    const auto summary = concordance_summary(report.per_item_concordance, config.threshold);
    report.median_concordance = summary.median;
    report.n_items_below_threshold = summary.n_below;

    report.rmse = rmse(totals);
    report.rmse_bootstrap_se = bootstrap_rmse_se(totals, config.bootstrap_resamples, config.seed);
    report.mean_true_total = totals.col(0).mean();
    report.mean_pred_total = totals.col(1).mean();
    {
        const std::vector<double> t(totals.col(0).data(), totals.col(0).data() + n);
        const std::vector<double> p(totals.col(1).data(), totals.col(1).data() + n);
        report.mannwhitney_means = mann_whitney(t, p, MannWhitneyMode::normal_approx);
    }

    for (int j = 0; j < kItemCount; ++j) {
        const ScaleItem& item = scale.item(j + 1);
        auto r = try_metric(report.warnings, "pearson item " + std::to_string(j + 1) + " (" + item.name + ")",
                            [&] { return pearson(truth.col(j), predicted.col(j)); });
        report.per_item_pearson.push_back(r);
        report.items.push_back(ItemStats{item.index, item.name, truth.col(j).mean(), predicted.col(j).mean(), r,
                                         concordance(j)});
    }

    for (const auto& [grouping, name] : {std::pair{Grouping::source, "source"}, std::pair{Grouping::factor, "factor"}}) {
        std::map<std::string, std::vector<int>> groups;
        try {
            groups = item_groups(scale, grouping);
        } catch (const MissingMetadata& e) {
            report.warnings.push_back(std::string(name) + " grouping skipped: " + e.what());
            continue;
        }
        for (const auto& [label, members] : groups) {
            GroupSummary g;
            g.grouping = name;
            g.label = label;
            g.items = members;
            PairedTotals<double> group_totals = PairedTotals<double>::Zero(n, 2);
            std::vector<double> group_concordance;
            for (int index : members) {
                group_totals.col(0) += truth.col(index - 1);
                group_totals.col(1) += predicted.col(index - 1);
                group_concordance.push_back(concordance(index - 1));
            }
            g.true_mean_total = group_totals.col(0).mean();
            g.pred_mean_total = group_totals.col(1).mean();
            const std::string what = std::string(name) + " group '" + label + "'";
            g.pearson = try_metric(report.warnings, what + " pearson",
                                   [&] { return pearson(group_totals.col(0), group_totals.col(1)); });
            g.icc3k = try_metric(report.warnings, what + " icc3k", [&] { return icc3k(group_totals); });
            g.rmse = rmse(group_totals);
            const auto s = concordance_summary(group_concordance, config.threshold);
            g.median_concordance = s.median;
            g.n_below_threshold = s.n_below;
            report.groups.push_back(std::move(g));
        }
        if (grouping == Grouping::source && groups.contains("self_reported") && groups.contains("observed")) {
            try {
                report.comparisons.push_back(group_compare(report.per_item_pearson, groups.at("self_reported"),
                                                           groups.at("observed"), "self_reported", "observed"));
            } catch (const MetricsError& e) {
                report.warnings.push_back(std::string("self_reported vs observed comparison: ") + e.what());
            }
        }
    }
    return report;
}

}  // namespace scale_scribe
