#pragma once

#include "qgdok/corpus.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qgdok::prompt {

/// One of Webb's four Depth-of-Knowledge levels with its canonical wording.
struct DokLevel {
    int level;
    std::string_view name;
    std::string_view definition;
    /// Verbs used by the generation templates to describe the task.
    std::string_view task_verbs;
};

const std::array<DokLevel, 4>& dok_levels() noexcept;
/// Throws RangeError outside 1..4.
const DokLevel& dok_level(int level);

enum class GenerationMode { DokOnly, DokRag };

std::string_view to_string(GenerationMode mode) noexcept;
/// Accepts "dok" / "DOK_ONLY" and "dok+rag" / "DOK_RAG".
std::optional<GenerationMode> parse_mode(std::string_view name) noexcept;
/// Column label used by reports ("DOK", "DOK+RAG").
std::string_view display_name(GenerationMode mode) noexcept;

enum class Scenario { Minimal, Moderate, Comprehensive };

std::string_view to_string(Scenario s) noexcept;
std::optional<Scenario> parse_scenario(std::string_view name) noexcept;
/// Material labels a scenario requires, in prompt order.
std::vector<std::string_view> required_labels(Scenario s);

struct ContextScenario {
    Scenario scenario = Scenario::Minimal;
    std::vector<std::pair<std::string, std::string>> materials; // (label, text)
};

enum class Criterion { Relevance, DokAlignment, Appropriateness };

std::string_view to_string(Criterion c) noexcept;
std::optional<Criterion> parse_criterion(std::string_view name) noexcept;
inline constexpr std::array<Criterion, 3> kCriteria{Criterion::Relevance, Criterion::DokAlignment,
                                                     Criterion::Appropriateness};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::string template_id;
    std::string template_version;
    std::map<std::string, std::string> filled_slots;

    /// SHA-256 over template id, system and user text.
    std::string hash() const;
};

/// A parsed template file: a header of `key: value` lines followed by
/// `--- <section>` blocks.
struct Template {
    std::string id;
    std::string version;
    std::vector<std::string> slots;
    std::map<std::string, std::string> sections;

    static Template parse(std::string_view text);
    const std::string& section(const std::string& name) const;
};

/// Replaces `{slot}` placeholders; `{{` and `}}` produce literal braces.
/// Throws MissingSlot for a placeholder without a value.
std::string render(std::string_view text, const std::map<std::string, std::string>& slots);

/// Templates compiled into the library, keyed by file stem
/// (e.g. "generation_dok").
const std::map<std::string, Template>& builtin_templates();
const Template& builtin_template(const std::string& name);

struct GenerationPromptOptions {
    std::size_t chunk_token_budget = 300;
};

/// Cuts `text` after its first `max_tokens` tokens (raw text preserved).
std::string truncate_tokens(std::string_view text, std::size_t max_tokens);

PromptBundle build_generation_prompt(std::string_view concept_name, const DokLevel& level, GenerationMode mode,
                                     std::span<const corpus::DocumentChunk> retrieved, int count,
                                     const GenerationPromptOptions& opts = {});

inline constexpr int kDefaultQuestionCount = 5;

PromptBundle build_scenario_prompt(const ContextScenario& scenario, std::string_view topic,
                                   int count = kDefaultQuestionCount);

/// What a judge prompt needs to know about the question under evaluation.
struct JudgeSubject {
    std::string question;
    std::string answer;
    std::optional<int> level;
};

PromptBundle build_judge_prompt(const JudgeSubject& subject, Criterion criterion,
                                const std::optional<std::string>& context);

} // namespace qgdok::prompt
