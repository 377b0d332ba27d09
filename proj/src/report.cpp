#include "qgdok/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace qgdok::eval {

namespace {

constexpr Metric kJudgeMetrics[] = {Metric::Relevance, Metric::DokAlignment, Metric::Appropriateness};

std::optional<Metric> parse_metric(std::string_view s) {
    for (auto m : {Metric::Relevance, Metric::DokAlignment, Metric::Appropriateness, Metric::Pinc}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

std::string fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

std::string column_label(const Column& c) {
    std::string label(display_name(c.metric));
    if (c.mode) label += " (" + std::string(prompt::display_name(*c.mode)) + ")";
    return label;
}

std::string row_label(int level) { return level == kAverageRow ? "Average" : "Level " + std::to_string(level); }

} // namespace

std::vector<Column> ResultsTable::columns() const {
    std::vector<Column> cols;
    for (auto m : kJudgeMetrics) {
        for (auto mode : modes) cols.push_back({m, mode});
    }
    cols.push_back({Metric::Pinc, std::nullopt});
    return cols;
}

std::vector<std::pair<std::string, int>> ResultsTable::rows() const {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& model : models) {
        for (int level : levels) out.emplace_back(model, level);
        out.emplace_back(model, kAverageRow);
    }
    return out;
}

const MeanStd& ResultsTable::at(const CellKey& key) const {
    auto it = cells.find(key);
    if (it == cells.end()) {
        throw Error(ErrorCode::MissingCell, key.model_id + ": " + row_label(key.level) + ", " +
                                                std::string(to_string(key.metric)));
    }
    return it->second;
}

ResultsTable build_results_table(std::span<const EvaluationRecord> records, std::vector<std::string> models,
                                 std::vector<GenerationMode> modes, std::vector<int> levels) {
    if (models.empty() || modes.empty() || levels.empty()) {
        throw Error(ErrorCode::InvalidArgument, "results table needs at least one model, mode and level");
    }
    for (int l : levels) prompt::dok_level(l);

    auto wanted = [](const auto& v, const auto& x) { return std::find(v.begin(), v.end(), x) != v.end(); };

    // Latest record per (question, metric).
    std::map<std::pair<std::string, Metric>, const EvaluationRecord*> latest;
    for (const auto& r : records) {
        if (r.kind != "judge" && r.kind != "pinc") continue;
        auto metric = parse_metric(r.metric);
        if (!metric) continue;
        if (!wanted(models, r.model_id) || !wanted(levels, r.level) || !wanted(modes, r.mode)) continue;
        latest[{r.question_id, *metric}] = &r;
    }

    std::map<CellKey, std::vector<double>> samples;
    for (const auto& [key, r] : latest) {
        Metric metric = key.second;
        CellKey ck{r->model_id, r->level, metric,
                   metric == Metric::Pinc ? std::nullopt : std::optional<GenerationMode>(r->mode)};
        samples[ck].push_back(r->value);
    }

    std::vector<std::string> missing;
    for (const auto& model : models) {
        for (int level : levels) {
            for (auto mode : modes) {
                std::vector<std::string> absent;
                for (auto m : kJudgeMetrics) {
                    if (!samples.count({model, level, m, mode})) absent.emplace_back(to_string(m));
                }
                std::string where = model + ": level " + std::to_string(level) + ", " + std::string(prompt::to_string(mode));
                if (absent.size() == std::size(kJudgeMetrics)) missing.push_back(where);
                else
                    for (const auto& a : absent) missing.push_back(where + ", " + a);
            }
            if (!samples.count({model, level, Metric::Pinc, std::nullopt})) {
                missing.push_back(model + ": level " + std::to_string(level) + ", PINC");
            }
        }
    }
    if (!missing.empty()) {
        std::string msg;
        for (const auto& m : missing) msg += (msg.empty() ? "" : "; ") + m;
        throw Error(ErrorCode::MissingCell, msg);
    }

    ResultsTable table;
    table.models = std::move(models);
    table.modes = std::move(modes);
    table.levels = std::move(levels);
    // Sorted so the floating-point sums do not depend on question ids.
    for (auto& [key, values] : samples) {
        std::sort(values.begin(), values.end());
        table.cells[key] = aggregate_mean_std(values);
    }

    for (const auto& model : table.models) {
        for (const auto& col : table.columns()) {
            std::vector<double> level_means;
            for (int level : table.levels) level_means.push_back(table.cells.at({model, level, col.metric, col.mode}).mean);
            table.cells[{model, kAverageRow, col.metric, col.mode}] = aggregate_mean_std(level_means);
        }
    }
    return table;
}

std::string emit_markdown(const ResultsTable& table, int precision) {
    auto cols = table.columns();
    std::ostringstream out;
    out << "| Model | Level |";
    for (const auto& c : cols) out << ' ' << column_label(c) << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& [model, level] : table.rows()) {
        out << "| " << model << " | " << row_label(level) << " |";
        for (const auto& c : cols) out << ' ' << fixed(table.at({model, level, c.metric, c.mode}).mean, precision) << " |";
        out << '\n';
    }
    return out.str();
}

std::string emit_csv(const ResultsTable& table) {
    auto cols = table.columns();
    std::ostringstream out;
    out << "model,level";
    for (const auto& c : cols) out << ',' << csv_field(column_label(c));
    out << '\n';
    for (const auto& [model, level] : table.rows()) {
        out << csv_field(model) << ',' << row_label(level);
        for (const auto& c : cols) out << ',' << full(table.at({model, level, c.metric, c.mode}).mean);
        out << '\n';
    }
    return out.str();
}

std::vector<RubricRow> build_rubric_table(std::span<const EvaluationRecord> records) {
    std::vector<std::string> order;
    std::map<std::string, std::array<std::vector<double>, 3>> groups;
    for (const auto& r : records) {
        if (r.kind != "manual" || !r.rubric) continue;
        if (!groups.count(r.group)) order.push_back(r.group);
        auto& g = groups[r.group];
        g[0].push_back(r.rubric->relevance);
        g[1].push_back(r.rubric->depth);
        g[2].push_back(r.rubric->correctness);
    }
    std::vector<RubricRow> rows;
    for (const auto& name : order) {
        const auto& g = groups[name];
        rows.push_back({name, aggregate_mean_std(g[0]), aggregate_mean_std(g[1]), aggregate_mean_std(g[2])});
    }
    return rows;
}

std::string emit_rubric_markdown(std::span<const RubricRow> rows, int precision) {
    std::ostringstream out;
    out << "| Group | Relevance | Depth | Correctness |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
        out << "| " << (r.group.empty() ? "(ungrouped)" : r.group) << " | " << format_mean_std(r.relevance, precision)
            << " | " << format_mean_std(r.depth, precision) << " | " << format_mean_std(r.correctness, precision)
            << " |\n";
    }
    return out.str();
}

} // namespace qgdok::eval
