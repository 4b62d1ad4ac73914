#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "scale_scribe/metrics.hpp"

namespace scale_scribe {

struct RunResult;

// Published human inter/intra-rater reliability figures, printed as the
// first row of every table report.
struct BenchmarkRow {
    const char* label;
    double pearson;
    double median_concordance;
    int n_below_threshold;
    double icc;
};

inline constexpr BenchmarkRow kHumanBenchmark{"Hafkenscheid et al. 1993", 0.62, 0.83, 3, 0.70};

// Published longitudinal RMSE on patients with 2+ visits; context only.
inline constexpr double kReferenceRmseOneShot = 6.32;
inline constexpr double kReferenceRmseLastScore = 7.19;

nlohmann::ordered_json to_json(const MetricsReport& report);
nlohmann::ordered_json to_json(const RunResult& result);

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

std::string text_report(const RunResult& result);
std::string items_csv(const RunResult& result);       // per-item means, pearson, concordance
std::string strategies_csv(const RunResult& result);  // per-strategy RMSE and bootstrap SE

enum class ReportFormat { json, csv, table };

ReportFormat report_format_from_string(const std::string& text);

// Writes report.json, report_items.csv + report_strategies.csv, or
// report.txt into `dir`. Returns the files written.
std::vector<std::filesystem::path> emit_report(const RunResult& result, ReportFormat format,
                                               const std::filesystem::path& dir);

}  // namespace scale_scribe
