#pragma once

#include "qgdok/genpipe.hpp"
#include "qgdok/promptkit.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qgdok::eval {

using prompt::Criterion;
using prompt::GenerationMode;

// ---------------------------------------------------------------------------
// PINC
// ---------------------------------------------------------------------------

struct PincConfig {
    int max_n = 4;
};

/// Distinct contiguous n-grams of `tokens`, each joined with single spaces.
std::set<std::string> ngram_set(std::span<const std::string> tokens, int n);

/// Mean over n = 1..max_n (restricted to the n for which the candidate has
/// at least one n-gram) of 1 - |src_n & cand_n| / |cand_n|.
/// Throws EmptyCandidate when the candidate has no tokens.
double pinc_tokens(std::span<const std::string> source, std::span<const std::string> candidate,
                   const PincConfig& cfg = {});
double pinc_score(std::string_view source, std::string_view candidate, const PincConfig& cfg = {});

/// Mean PINC over all ordered pairs (i != j) of texts, text j as source.
/// Returns nullopt for fewer than two texts.
std::optional<double> pairwise_pinc(std::span<const std::string> texts, const PincConfig& cfg = {});

// ---------------------------------------------------------------------------
// LLM judge
// ---------------------------------------------------------------------------

struct JudgeScore {
    Criterion criterion = Criterion::Relevance;
    int raw = 1;
    double normalized = 0.0;
    std::string judge_model;
    std::string rationale;
    std::string rationale_ref;
};

/// (raw - 1) / 4 for raw in 1..5; RangeError otherwise.
double normalize_judge(int raw);

/// Integer from the last "Score: N" line of a judge reply.
/// Throws MalformedJudgeOutput if absent or outside 1..5.
int extract_judge_score(std::string_view text);

prompt::JudgeSubject judge_subject(const gen::GeneratedQuestion& q);

JudgeScore judge(const gen::GeneratedQuestion& question, Criterion criterion, gen::ChatProvider& judge_provider,
                 const std::optional<std::string>& context, ProviderBudget* budget = nullptr,
                 CallLog* log = nullptr);

struct JudgeAverage {
    std::vector<JudgeScore> samples;
    double mean_normalized = 0.0;
};

/// Repeats the judge call `samples` times and averages the normalized scores.
JudgeAverage judge_repeated(const gen::GeneratedQuestion& question, Criterion criterion,
                            gen::ChatProvider& judge_provider, const std::optional<std::string>& context,
                            int samples, ProviderBudget* budget = nullptr);

// ---------------------------------------------------------------------------
// Manual rubrics and aggregation
// ---------------------------------------------------------------------------

enum class Taxonomy { Bloom, Dok };

std::string_view to_string(Taxonomy t) noexcept;

struct ManualRubric {
    int relevance = 0;   // 0/1
    int depth = 0;       // Bloom 0..6, DOK 1..4
    Taxonomy taxonomy = Taxonomy::Bloom;
    int correctness = 0; // 0/1
    std::string rater_id;

    void validate() const;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

/// Arithmetic mean and sample (n - 1) standard deviation; std is 0 for n = 1.
MeanStd aggregate_mean_std(std::span<const double> values);

/// "0.60 ± 0.55" style rendering.
std::string format_mean_std(const MeanStd& m, int precision = 2);

// ---------------------------------------------------------------------------
// Evaluation store
// ---------------------------------------------------------------------------

enum class Metric { Relevance, DokAlignment, Appropriateness, Pinc };

std::string_view to_string(Metric m) noexcept;
std::string_view display_name(Metric m) noexcept;
Metric metric_for(Criterion c) noexcept;

struct EvaluationRecord {
    std::string evaluation_id;
    std::string kind; // "judge", "pinc", "pinc_pairwise", "manual"
    std::string question_id;
    std::string request_id;
    std::string model_id;
    int level = 0;
    GenerationMode mode = GenerationMode::DokOnly;
    std::string metric; // Metric name for judge/pinc records
    double value = 0.0;
    std::optional<int> raw;
    std::string judge_model;
    std::string rationale;
    std::optional<ManualRubric> rubric;
    std::string group; // free label used to group manual rubrics (e.g. a context scenario)
    std::string created_at;
};

nlohmann::json to_json(const EvaluationRecord& r);
EvaluationRecord record_from_json(const nlohmann::json& j);

/// Append-only JSONL store; each record is one atomic line write.
class EvaluationStore {
public:
    EvaluationStore() = default;
    explicit EvaluationStore(std::filesystem::path file);

    EvaluationRecord append(EvaluationRecord rec);
    std::vector<EvaluationRecord> records() const;
    std::vector<EvaluationRecord> for_request(const std::string& request_id) const;

private:
    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::vector<EvaluationRecord> records_;
};

EvaluationRecord make_judge_record(const gen::GeneratedQuestion& q, const JudgeScore& s);
EvaluationRecord make_pinc_record(const gen::GeneratedQuestion& q, double pinc);

/// Validates and appends one rater's rubric; several raters per question
/// are allowed.
EvaluationRecord record_manual(EvaluationStore& store, const std::string& question_id, const ManualRubric& rubric,
                               const std::string& group = {});

// ---------------------------------------------------------------------------
// Results tables
// ---------------------------------------------------------------------------

inline constexpr int kAverageRow = 0;

struct CellKey {
    std::string model_id;
    int level = 1; // 1..4, or kAverageRow
    Metric metric = Metric::Relevance;
    std::optional<GenerationMode> mode; // nullopt for PINC

    auto operator<=>(const CellKey&) const = default;
};

struct Column {
    Metric metric;
    std::optional<GenerationMode> mode;
};

/// Model x level x metric x mode aggregate in the comparison-table layout:
/// per model, one row per level plus an Average row; judge metrics split by
/// mode, then one PINC column.
struct ResultsTable {
    std::vector<std::string> models;
    std::vector<int> levels;
    std::vector<GenerationMode> modes;
    std::map<CellKey, MeanStd> cells;

    std::vector<Column> columns() const;
    std::vector<std::pair<std::string, int>> rows() const;
    const MeanStd& at(const CellKey& key) const;
};

/// Aggregates judge and PINC records (the latest record per question and
/// metric wins). Throws MissingCell listing every absent combination.
ResultsTable build_results_table(std::span<const EvaluationRecord> records, std::vector<std::string> models,
                                 std::vector<GenerationMode> modes, std::vector<int> levels = {1, 2, 3, 4});

std::string emit_markdown(const ResultsTable& table, int precision = 2);
std::string emit_csv(const ResultsTable& table);

/// Manual rubric summary: one row per group with relevance, depth and
/// correctness as mean ± std.
struct RubricRow {
    std::string group;
    MeanStd relevance;
    MeanStd depth;
    MeanStd correctness;
};

std::vector<RubricRow> build_rubric_table(std::span<const EvaluationRecord> records);
std::string emit_rubric_markdown(std::span<const RubricRow> rows, int precision = 2);

} // namespace qgdok::eval
