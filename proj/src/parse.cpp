#include "qgdok/genpipe.hpp"
#include "qgdok/util.hpp"

#include <regex>

namespace qgdok::gen {

using nlohmann::json;

std::string_view to_string(ParseQuality q) noexcept {
    switch (q) {
    case ParseQuality::Structured: return "STRUCTURED";
    case ParseQuality::Fallback: return "FALLBACK";
    case ParseQuality::Partial: return "PARTIAL";
    }
    return "STRUCTURED";
}

namespace {

struct Extracted {
    std::vector<QaPair> pairs;
    bool dropped = false;
};

std::optional<QaPair> pair_from(const json& item) {
    if (!item.is_object()) return std::nullopt;
    auto q = item.find("question");
    auto a = item.find("answer");
    if (q == item.end() || a == item.end() || !q->is_string() || !a->is_string()) return std::nullopt;
    QaPair p{util::trim(q->get<std::string>()), util::trim(a->get<std::string>())};
    if (p.question.empty() || p.answer.empty()) return std::nullopt;
    return p;
}

std::optional<Extracted> from_json_value(const json& j) {
    const json* arr = nullptr;
    if (j.is_array()) arr = &j;
    else if (j.is_object() && j.contains("questions") && j["questions"].is_array()) arr = &j["questions"];
    if (!arr) return std::nullopt;
    Extracted ex;
    for (const auto& item : *arr) {
        if (auto p = pair_from(item)) ex.pairs.push_back(std::move(*p));
        else ex.dropped = true;
    }
    return ex;
}

std::optional<json> try_parse(std::string_view s) {
    auto j = json::parse(s, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

std::string strip_fence(std::string_view raw) {
    auto open = raw.find("```");
    if (open == std::string_view::npos) return std::string(raw);
    auto body = raw.find('\n', open);
    if (body == std::string_view::npos) return std::string(raw);
    auto close = raw.find("```", body);
    return std::string(raw.substr(body + 1, close == std::string_view::npos ? std::string_view::npos : close - body - 1));
}

// Parses each balanced top-level {...} object found after the first '['.
Extracted salvage_objects(std::string_view text) {
    Extracted ex;
    auto start = text.find('[');
    if (start == std::string_view::npos) return ex;
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    std::size_t obj_begin = 0;
    for (std::size_t i = start + 1; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escape) escape = false;
            else if (c == '\\') escape = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') {
            if (depth++ == 0) obj_begin = i;
        } else if (c == '}' && depth > 0) {
            if (--depth == 0) {
                auto j = try_parse(text.substr(obj_begin, i - obj_begin + 1));
                if (j) {
                    if (auto p = pair_from(*j)) ex.pairs.push_back(std::move(*p));
                    else ex.dropped = true;
                } else {
                    ex.dropped = true;
                }
            }
        }
    }
    if (depth > 0) ex.dropped = true;
    return ex;
}

std::optional<Extracted> parse_structured(std::string_view raw, bool& salvaged) {
    salvaged = false;
    auto text = util::trim(strip_fence(raw));
    if (auto j = try_parse(text)) {
        if (auto ex = from_json_value(*j)) return ex;
    }
    auto lb = text.find('[');
    auto rb = text.rfind(']');
    if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
        if (auto j = try_parse(std::string_view(text).substr(lb, rb - lb + 1))) {
            if (auto ex = from_json_value(*j)) return ex;
        }
    }
    auto ex = salvage_objects(text);
    if (!ex.pairs.empty()) {
        salvaged = true;
        return ex;
    }
    return std::nullopt;
}

std::vector<QaPair> parse_layout(std::string_view raw) {
    static const std::regex q_start(R"(^\s*\**\s*(?:(?:Q|Question)\s*(\d*)\s*\**\s*[:.)]|(\d+)\s*[.)])\s*\**\s*(.*)$)",
                                    std::regex::icase);
    static const std::regex a_start(R"(^\s*\**\s*(?:A|Answer)\s*\d*\s*\**\s*:\s*\**\s*(.*)$)", std::regex::icase);
    static const std::regex inline_answer(R"(\s*\**\s*Answer\s*\**\s*:\s*\**\s*)", std::regex::icase);

    std::vector<QaPair> pairs;
    enum class State { None, Question, Answer } state = State::None;
    std::string q, a;
    long qnum = 0;

    auto flush = [&] {
        auto qt = util::trim(q);
        auto at = util::trim(a);
        if (!qt.empty() && !at.empty()) pairs.push_back({qt, at});
        q.clear();
        a.clear();
    };
    auto append = [](std::string& field, std::string_view text) {
        if (!field.empty()) field.push_back('\n');
        field.append(text);
    };
    auto start_question = [&](std::string text) {
        flush();
        std::smatch m;
        if (std::regex_search(text, m, inline_answer)) {
            q = m.prefix().str();
            a = m.suffix().str();
            state = State::Answer;
        } else {
            q = std::move(text);
            state = State::Question;
        }
    };

    std::size_t pos = 0;
    while (pos < raw.size()) {
        auto nl = raw.find('\n', pos);
        std::string line(raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? raw.size() : nl + 1;
        if (util::trim(line).empty()) continue;

        std::smatch m;
        if (std::regex_match(line, m, a_start)) {
            if (state == State::Question) {
                a = m[1].str();
                state = State::Answer;
            } else if (state == State::Answer) {
                append(a, line);
            }
            continue;
        }
        if (std::regex_match(line, m, q_start)) {
            bool numbered = m[2].matched && m[2].length() > 0;
            long num = 0;
            if (numbered) num = std::stol(m[2].str());
            else if (m[1].matched && m[1].length() > 0) num = std::stol(m[1].str());
            // Inside an answer, a numbered line only opens the next question
            // when it continues the question numbering (steps stay in the answer).
            if (state == State::Answer && numbered && num != qnum + 1) {
                append(a, line);
                continue;
            }
            qnum = num > 0 ? num : qnum + 1;
            start_question(m[3].str());
            continue;
        }
        if (state == State::Question) append(q, line);
        else if (state == State::Answer) append(a, line);
    }
    flush();
    return pairs;
}

} // namespace

ParseResult parse_questions(std::string_view raw, int expected_count) {
    ParseResult result;
    bool salvaged = false;
    if (auto ex = parse_structured(raw, salvaged); ex && !ex->pairs.empty()) {
        result.pairs = std::move(ex->pairs);
        result.quality = (ex->dropped || salvaged) ? ParseQuality::Partial : ParseQuality::Structured;
    } else {
        result.pairs = parse_layout(raw);
        result.quality = ParseQuality::Fallback;
    }
    if (result.pairs.empty()) throw Error(ErrorCode::UnparseableOutput, "no question/answer pairs found in model output");
    result.count_mismatch = expected_count > 0 && static_cast<int>(result.pairs.size()) != expected_count;
    return result;
}

} // namespace qgdok::gen
