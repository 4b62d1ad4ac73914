#include "scale_scribe/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scale_scribe/errors.hpp"
#include "scale_scribe/runner.hpp"

namespace scale_scribe {

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& value) {
    return value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
}

std::string fixed(const std::optional<double>& value, int digits = 2) {
    if (!value) return "n/a";
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << *value;
    return out.str();
}

std::string csv_number(const std::optional<double>& value) { return value ? format_number(*value) : ""; }

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::ordered_json to_json(const MannWhitneyResult& r) { return {{"u", r.u}, {"p_two_sided", r.p_two_sided}}; }

std::string threshold_text(double threshold) {
    std::ostringstream out;
    out << threshold;
    return out.str();
}

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, end);
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["n_cases"] = r.n_cases;
    j["pearson_total"] = optional_number(r.pearson_total);
    j["icc3k"] = optional_number(r.icc3k);
    j["per_item_concordance"] = r.per_item_concordance;
    j["median_concordance"] = r.median_concordance;
    j["n_items_below_threshold"] = r.n_items_below_threshold;
    j["threshold"] = r.threshold;
    j["rmse"] = r.rmse;
    j["rmse_bootstrap_se"] = r.rmse_bootstrap_se;
    j["bootstrap_resamples"] = r.bootstrap_resamples;
    j["seed"] = r.seed;
    j["mean_true_total"] = r.mean_true_total;
    j["mean_pred_total"] = r.mean_pred_total;
    j["mannwhitney_means"] = to_json(r.mannwhitney_means);
    auto& per_item_pearson = j["per_item_pearson"] = nlohmann::ordered_json::array();
    for (const auto& p : r.per_item_pearson) per_item_pearson.push_back(optional_number(p));

    auto& items = j["items"] = nlohmann::ordered_json::array();
    for (const ItemStats& s : r.items) {
        items.push_back({{"index", s.index},
                         {"name", s.name},
                         {"true_mean", s.true_mean},
                         {"pred_mean", s.pred_mean},
                         {"pearson", optional_number(s.pearson)},
                         {"concordance", s.concordance}});
    }
    auto& groups = j["groups"] = nlohmann::ordered_json::array();
    for (const GroupSummary& g : r.groups) {
        groups.push_back({{"grouping", g.grouping},
                          {"label", g.label},
                          {"items", g.items},
                          {"true_mean_total", g.true_mean_total},
                          {"pred_mean_total", g.pred_mean_total},
                          {"pearson", optional_number(g.pearson)},
                          {"icc3k", optional_number(g.icc3k)},
                          {"rmse", g.rmse},
                          {"median_concordance", g.median_concordance},
                          {"n_below_threshold", g.n_below_threshold}});
    }
    auto& comparisons = j["comparisons"] = nlohmann::ordered_json::array();
    for (const GroupComparison& c : r.comparisons) {
        comparisons.push_back({{"first", c.first},
                               {"second", c.second},
                               {"n_first", c.n_first},
                               {"n_second", c.n_second},
                               {"median_first", c.median_first},
                               {"median_second", c.median_second},
                               {"mannwhitney", to_json(c.test)}});
    }
    j["warnings"] = r.warnings;
    return j;
}

nlohmann::ordered_json to_json(const RunResult& result) {
    nlohmann::ordered_json j;
    j["run_id"] = result.run_id;
    j["kind"] = to_string(result.kind);
    j["prompt_version"] = result.prompt_version;
    auto& strategies = j["strategies"] = nlohmann::ordered_json::array();
    for (const StrategyRun& s : result.strategies) {
        nlohmann::ordered_json sj;
        sj["strategy"] = s.strategy.label();
        sj["n_predictions"] = s.predictions.size();
        std::size_t failed = 0;
        for (const auto& p : s.predictions) failed += p.ok() ? 0 : 1;
        sj["n_failed"] = failed;
        sj["n_scored"] = s.n_scored;
        sj["rmse"] = optional_number(s.rmse);
        sj["rmse_bootstrap_se"] = optional_number(s.rmse_bootstrap_se);
        auto& reports = sj["reports"] = nlohmann::ordered_json::object();
        for (const auto& [label, report] : s.reports) reports[label] = to_json(report);
        strategies.push_back(std::move(sj));
    }
    j["excluded"] = result.excluded;
    j["notes"] = result.notes;
    return j;
}

std::string text_report(const RunResult& result) {
    std::ostringstream out;
    out << "Run " << result.run_id << " (" << to_string(result.kind) << ", prompt " << result.prompt_version << ")\n";

    for (const StrategyRun& s : result.strategies) {
        if (s.reports.empty()) continue;
        const double threshold = s.reports.begin()->second.threshold;
        out << "\n== " << s.strategy.label() << " ==\n";
        out << "Source | Pearson r | Median Concordance | Concordance #subscores<" << threshold_text(threshold)
            << " | ICC\n";
        out << kHumanBenchmark.label << " | " << fixed(kHumanBenchmark.pearson) << " | "
            << fixed(kHumanBenchmark.median_concordance) << " | " << kHumanBenchmark.n_below_threshold << " | "
            << fixed(kHumanBenchmark.icc) << "\n";
        for (const auto& [label, r] : s.reports) {
            out << "LLM-" << label << " (n=" << r.n_cases << ") | " << fixed(r.pearson_total) << " | "
                << fixed(r.median_concordance) << " | " << r.n_items_below_threshold << " | " << fixed(r.icc3k)
                << "\n";
        }
    }

    out << "\nStrategy | n | RMSE | Bootstrap SE\n";
    for (const StrategyRun& s : result.strategies) {
        out << s.strategy.label() << " | " << s.n_scored << " | " << fixed(s.rmse) << " | "
            << fixed(s.rmse_bootstrap_se) << "\n";
    }
    out << "\nReference RMSE on patients with 2+ visits: " << fixed(kReferenceRmseOneShot) << " (1-shot), "
        << fixed(kReferenceRmseLastScore) << " (last_score).\n";

    if (!result.excluded.empty()) {
        out << "\nExcluded targets:\n";
        for (const auto& e : result.excluded) out << "  " << e << "\n";
    }
    if (!result.notes.empty()) {
        out << "\nNotes:\n";
        for (const auto& n : result.notes) out << "  " << n << "\n";
    }
    bool any_warning = false;
    for (const StrategyRun& s : result.strategies) {
        for (const auto& [label, r] : s.reports) {
            for (const auto& w : r.warnings) {
                if (!any_warning) out << "\nWarnings:\n";
                any_warning = true;
                out << "  " << s.strategy.label() << "/" << label << ": " << w << "\n";
            }
        }
    }
    return out.str();
}

std::string items_csv(const RunResult& result) {
    std::ostringstream out;
    out << "strategy,group,item_index,item_name,true_mean,pred_mean,pearson,concordance\n";
    for (const StrategyRun& s : result.strategies) {
        for (const auto& [label, r] : s.reports) {
            for (const ItemStats& item : r.items) {
                out << csv_field(s.strategy.label()) << ',' << csv_field(label) << ',' << item.index << ','
                    << csv_field(item.name) << ',' << format_number(item.true_mean) << ','
                    << format_number(item.pred_mean) << ',' << csv_number(item.pearson) << ','
                    << format_number(item.concordance) << '\n';
            }
        }
    }
    return out.str();
}

std::string strategies_csv(const RunResult& result) {
    std::ostringstream out;
    out << "strategy,n,rmse,rmse_se\n";
    for (const StrategyRun& s : result.strategies) {
        out << csv_field(s.strategy.label()) << ',' << s.n_scored << ',' << csv_number(s.rmse) << ','
            << csv_number(s.rmse_bootstrap_se) << '\n';
    }
    return out.str();
}

ReportFormat report_format_from_string(const std::string& text) {
    if (text == "json") return ReportFormat::json;
    if (text == "csv") return ReportFormat::csv;
    if (text == "table") return ReportFormat::table;
    throw ValidationError("unknown report format '" + text + "' (json, csv, table)");
}

std::vector<std::filesystem::path> emit_report(const RunResult& result, ReportFormat format,
                                               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::string& name, const std::string& content) {
        const auto path = dir / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        out << content;
        written.push_back(path);
    };
    switch (format) {
        case ReportFormat::json:
            write("report.json", to_json(result).dump(2) + "\n");
            break;
        case ReportFormat::csv:
            write("report_items.csv", items_csv(result));
            write("report_strategies.csv", strategies_csv(result));
            break;
        case ReportFormat::table:
            write("report.txt", text_report(result));
            break;
    }
    return written;
}

}  // namespace scale_scribe
