#include "qgdok/promptkit.hpp"
#include "qgdok/error.hpp"
#include "qgdok/util.hpp"

#include "qgdok_templates.hpp"

#include <algorithm>

namespace qgdok::prompt {

const std::array<DokLevel, 4>& dok_levels() noexcept {
    static const std::array<DokLevel, 4> levels{{
        {1, "Recall and Reproduction",
         "retrieving basic facts, definitions, and formulas with minimal cognitive effort",
         "recall or reproduce a fact, definition, formula, or simple procedure"},
        {2, "Skills and Concepts",
         "selecting appropriate methods and organizing information to solve routine problems",
         "apply and organize: choose an appropriate method and carry out a routine multi-step procedure"},
        {3, "Strategic Thinking", "reasoning, planning, and applying concepts in non-routine scenarios",
         "justify and plan: reason about a non-routine situation, choose a strategy, and defend it"},
        {4, "Extended Thinking",
         "making connections across concepts and solving complex, multi-step problems",
         "synthesize across concepts: connect several ideas and carry out an extended, multi-step investigation"},
    }};
    return levels;
}

const DokLevel& dok_level(int level) {
    if (level < 1 || level > 4) {
        throw Error(ErrorCode::RangeError, "DOK level must be 1..4, got " + std::to_string(level));
    }
    return dok_levels()[static_cast<std::size_t>(level - 1)];
}

std::string_view to_string(GenerationMode mode) noexcept {
    return mode == GenerationMode::DokOnly ? "DOK_ONLY" : "DOK_RAG";
}

std::optional<GenerationMode> parse_mode(std::string_view name) noexcept {
    if (name == "dok" || name == "DOK_ONLY" || name == "DOK") return GenerationMode::DokOnly;
    if (name == "dok+rag" || name == "DOK_RAG" || name == "DOK+RAG") return GenerationMode::DokRag;
    return std::nullopt;
}

std::string_view display_name(GenerationMode mode) noexcept {
    return mode == GenerationMode::DokOnly ? "DOK" : "DOK+RAG";
}

std::string_view to_string(Scenario s) noexcept {
    switch (s) {
    case Scenario::Minimal: return "minimal";
    case Scenario::Moderate: return "moderate";
    case Scenario::Comprehensive: return "comprehensive";
    }
    return "minimal";
}

std::optional<Scenario> parse_scenario(std::string_view name) noexcept {
    for (auto s : {Scenario::Minimal, Scenario::Moderate, Scenario::Comprehensive}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

std::vector<std::string_view> required_labels(Scenario s) {
    std::vector<std::string_view> labels{"syllabus", "topic_summary"};
    if (s == Scenario::Moderate || s == Scenario::Comprehensive) labels.push_back("class_notes");
    if (s == Scenario::Comprehensive) labels.push_back("references");
    return labels;
}

std::string_view to_string(Criterion c) noexcept {
    switch (c) {
    case Criterion::Relevance: return "RELEVANCE";
    case Criterion::DokAlignment: return "DOK_ALIGNMENT";
    case Criterion::Appropriateness: return "APPROPRIATENESS";
    }
    return "RELEVANCE";
}

std::optional<Criterion> parse_criterion(std::string_view name) noexcept {
    for (auto c : kCriteria) {
        if (to_string(c) == name) return c;
    }
    if (name == "relevance") return Criterion::Relevance;
    if (name == "dok_alignment") return Criterion::DokAlignment;
    if (name == "appropriateness") return Criterion::Appropriateness;
    return std::nullopt;
}

std::string PromptBundle::hash() const {
    std::string buf = template_id;
    buf.push_back('\0');
    buf += system_text;
    buf.push_back('\0');
    buf += user_text;
    return util::sha256_hex(buf);
}

Template Template::parse(std::string_view text) {
    Template t;
    std::string current;
    bool in_header = true;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;

        if (line.starts_with("--- ")) {
            in_header = false;
            current = util::trim(line.substr(4));
            t.sections[current];
            continue;
        }
        if (in_header) {
            auto colon = line.find(':');
            if (colon == std::string_view::npos) continue;
            auto key = util::trim(line.substr(0, colon));
            auto value = util::trim(line.substr(colon + 1));
            if (key == "id") t.id = value;
            else if (key == "version") t.version = value;
            else if (key == "slots") {
                std::size_t p = 0;
                while (p <= value.size()) {
                    auto comma = value.find(',', p);
                    auto item = util::trim(std::string_view(value).substr(p, comma == std::string::npos ? std::string::npos : comma - p));
                    if (!item.empty()) t.slots.push_back(item);
                    if (comma == std::string::npos) break;
                    p = comma + 1;
                }
            }
            continue;
        }
        auto& sec = t.sections[current];
        sec.append(line);
        sec.push_back('\n');
    }
    // Section bodies do not carry the newline that precedes the next marker.
    for (auto& [name, body] : t.sections) {
        if (!body.empty() && body.back() == '\n') body.pop_back();
    }
    if (t.id.empty() || t.version.empty()) throw Error(ErrorCode::InvalidConfig, "template without id/version header");
    return t;
}

const std::string& Template::section(const std::string& name) const {
    auto it = sections.find(name);
    if (it == sections.end()) throw Error(ErrorCode::InvalidConfig, "template " + id + " has no section " + name);
    return it->second;
}

std::string render(std::string_view text, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
            out.push_back('{');
            ++i;
        } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
            out.push_back('}');
            ++i;
        } else if (c == '{') {
            auto close = text.find('}', i + 1);
            if (close == std::string_view::npos) throw Error(ErrorCode::InvalidConfig, "unterminated placeholder");
            std::string name(text.substr(i + 1, close - i - 1));
            auto it = slots.find(name);
            if (it == slots.end()) throw Error(ErrorCode::MissingSlot, "no value for slot {" + name + "}");
            out += it->second;
            i = close;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

const std::map<std::string, Template>& builtin_templates() {
    static const std::map<std::string, Template> templates = [] {
        std::map<std::string, Template> m;
        for (const auto& e : detail::kEmbeddedTemplates) m.emplace(e.name, Template::parse(e.text));
        return m;
    }();
    return templates;
}

const Template& builtin_template(const std::string& name) {
    const auto& all = builtin_templates();
    auto it = all.find(name);
    if (it == all.end()) throw Error(ErrorCode::NotFound, "no built-in template " + name);
    return it->second;
}

std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
    auto toks = corpus::tokenize_with_offsets(text);
    if (toks.size() <= max_tokens || max_tokens == 0) return std::string(text);
    return std::string(text.substr(0, toks[max_tokens - 1].end));
}

namespace {

PromptBundle fill(const Template& t, std::map<std::string, std::string> slots) {
    PromptBundle b;
    b.system_text = render(t.section("system"), slots);
    b.user_text = render(t.section("user"), slots);
    b.template_id = t.id;
    b.template_version = t.version;
    b.filled_slots = std::move(slots);
    return b;
}

} // namespace

PromptBundle build_generation_prompt(std::string_view concept_name, const DokLevel& level, GenerationMode mode,
                                     std::span<const corpus::DocumentChunk> retrieved, int count,
                                     const GenerationPromptOptions& opts) {
    if (util::trim(concept_name).empty()) throw Error(ErrorCode::InvalidArgument, "concept must be non-empty");
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be >= 1");
    if (mode == GenerationMode::DokOnly && !retrieved.empty()) {
        throw Error(ErrorCode::ModeContextMismatch, "DOK_ONLY prompt cannot carry retrieved material");
    }
    if (mode == GenerationMode::DokRag && retrieved.empty()) {
        throw Error(ErrorCode::ModeContextMismatch, "DOK_RAG prompt needs retrieved material");
    }

    std::map<std::string, std::string> slots{
        {"concept", util::trim(concept_name)},
        {"count", std::to_string(count)},
        {"level", std::to_string(level.level)},
        {"level_name", std::string(level.name)},
        {"level_definition", std::string(level.definition)},
        {"task_verbs", std::string(level.task_verbs)},
    };
    if (mode == GenerationMode::DokOnly) return fill(builtin_template("generation_dok"), std::move(slots));

    const auto& item = builtin_template("reference_item").section("body");
    std::string refs;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        if (i > 0) refs += "\n\n";
        refs += render(item, {{"index", std::to_string(i + 1)},
                              {"chunk_id", retrieved[i].chunk_id},
                              {"text", truncate_tokens(retrieved[i].text, opts.chunk_token_budget)}});
    }
    slots["references"] = std::move(refs);
    return fill(builtin_template("generation_dok_rag"), std::move(slots));
}

PromptBundle build_scenario_prompt(const ContextScenario& scenario, std::string_view topic, int count) {
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be >= 1");
    if (util::trim(topic).empty()) throw Error(ErrorCode::InvalidArgument, "topic must be non-empty");
    const auto& item = builtin_template("material_item").section("body");
    std::string materials;
    for (auto label : required_labels(scenario.scenario)) {
        auto it = std::find_if(scenario.materials.begin(), scenario.materials.end(),
                               [&](const auto& m) { return m.first == label; });
        if (it == scenario.materials.end()) {
            throw Error(ErrorCode::MissingMaterial, std::string(label));
        }
        if (!materials.empty()) materials += "\n\n";
        materials += render(item, {{"label", std::string(label)}, {"text", util::trim(it->second)}});
    }
    return fill(builtin_template("scenario"),
                {{"materials", materials}, {"topic", util::trim(topic)}, {"count", std::to_string(count)}});
}

PromptBundle build_judge_prompt(const JudgeSubject& subject, Criterion criterion,
                                const std::optional<std::string>& context) {
    bool has_context = context && !util::trim(*context).empty();
    std::map<std::string, std::string> slots{
        {"question", subject.question},
        {"answer", subject.answer},
        {"context", has_context ? util::trim(*context) : std::string("(none)")},
    };
    switch (criterion) {
    case Criterion::Relevance:
        if (!has_context) throw Error(ErrorCode::MissingContext, "relevance judging needs the concept/material context");
        return fill(builtin_template("judge_relevance"), std::move(slots));
    case Criterion::DokAlignment: {
        if (!subject.level) throw Error(ErrorCode::MissingContext, "DOK alignment judging needs the target level");
        const auto& lvl = dok_level(*subject.level);
        slots["level"] = std::to_string(lvl.level);
        slots["level_name"] = std::string(lvl.name);
        slots["level_definition"] = std::string(lvl.definition);
        return fill(builtin_template("judge_dok_alignment"), std::move(slots));
    }
    case Criterion::Appropriateness:
        return fill(builtin_template("judge_appropriateness"), std::move(slots));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown criterion");
}

} // namespace qgdok::prompt
