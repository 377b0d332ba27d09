#include "qgdok/evalkit.hpp"
#include "qgdok/util.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

namespace qgdok::eval {

using nlohmann::json;

std::set<std::string> ngram_set(std::span<const std::string> tokens, int n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
    std::set<std::string> out;
    const auto order = static_cast<std::size_t>(n);
    if (tokens.size() < order) return out;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
        std::string gram = tokens[i];
        for (std::size_t j = 1; j < order; ++j) {
            gram.push_back(' ');
            gram += tokens[i + j];
        }
        out.insert(std::move(gram));
    }
    return out;
}

double pinc_tokens(std::span<const std::string> source, std::span<const std::string> candidate, const PincConfig& cfg) {
    if (cfg.max_n < 1) throw Error(ErrorCode::InvalidConfig, "PINC max_n must be >= 1");
    if (candidate.empty()) throw Error(ErrorCode::EmptyCandidate, "PINC candidate has no tokens");
    double sum = 0.0;
    int valid = 0;
    for (int n = 1; n <= cfg.max_n; ++n) {
        auto cand = ngram_set(candidate, n);
        if (cand.empty()) break;
        auto src = ngram_set(source, n);
        std::size_t shared = 0;
        for (const auto& g : cand) shared += src.count(g);
        sum += 1.0 - static_cast<double>(shared) / static_cast<double>(cand.size());
        ++valid;
    }
    return sum / valid;
}

double pinc_score(std::string_view source, std::string_view candidate, const PincConfig& cfg) {
    auto s = corpus::tokenize(source);
    auto c = corpus::tokenize(candidate);
    return pinc_tokens(s, c, cfg);
}

std::optional<double> pairwise_pinc(std::span<const std::string> texts, const PincConfig& cfg) {
    if (texts.size() < 2) return std::nullopt;
    std::vector<std::vector<std::string>> toks;
    toks.reserve(texts.size());
    for (const auto& t : texts) toks.push_back(corpus::tokenize(t));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].empty()) continue;
        for (std::size_t j = 0; j < toks.size(); ++j) {
            if (i == j) continue;
            sum += pinc_tokens(toks[j], toks[i], cfg);
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;
    return sum / static_cast<double>(pairs);
}

double normalize_judge(int raw) {
    if (raw < 1 || raw > 5) throw Error(ErrorCode::RangeError, "judge score must be 1..5, got " + std::to_string(raw));
    return (raw - 1) / 4.0;
}

int extract_judge_score(std::string_view text) {
    static const std::regex score_line(R"(^\s*[*#]*\s*Score\s*\**\s*:\s*\**\s*(-?\d+)\s*\**\s*(?:/\s*5)?\s*\.?\s*$)",
                                       std::regex::icase);
    std::optional<int> found;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        std::smatch m;
        if (std::regex_match(line, m, score_line)) {
            try {
                found = std::stoi(m[1].str());
            } catch (const std::exception&) {
                found = -1;
            }
        }
    }
    if (!found) throw Error(ErrorCode::MalformedJudgeOutput, "judge reply has no \"Score: N\" line");
    if (*found < 1 || *found > 5) {
        throw Error(ErrorCode::MalformedJudgeOutput, "judge score " + std::to_string(*found) + " outside 1..5");
    }
    return *found;
}

prompt::JudgeSubject judge_subject(const gen::GeneratedQuestion& q) {
    return {q.question_text, q.answer_text, q.level};
}

JudgeScore judge(const gen::GeneratedQuestion& question, Criterion criterion, gen::ChatProvider& judge_provider,
                 const std::optional<std::string>& context, ProviderBudget* budget, CallLog* log) {
    auto bundle = prompt::build_judge_prompt(judge_subject(question), criterion, context);
    auto reply = gen::complete(bundle, judge_provider, log, budget);
    JudgeScore s;
    s.criterion = criterion;
    s.raw = extract_judge_score(reply);
    s.normalized = normalize_judge(s.raw);
    s.judge_model = judge_provider.config().model_id;
    s.rationale = std::move(reply);
    s.rationale_ref = bundle.hash();
    return s;
}

JudgeAverage judge_repeated(const gen::GeneratedQuestion& question, Criterion criterion,
                            gen::ChatProvider& judge_provider, const std::optional<std::string>& context,
                            int samples, ProviderBudget* budget) {
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "judge samples must be >= 1");
    JudgeAverage avg;
    double sum = 0.0;
    for (int i = 0; i < samples; ++i) {
        avg.samples.push_back(judge(question, criterion, judge_provider, context, budget));
        sum += avg.samples.back().normalized;
    }
    avg.mean_normalized = sum / samples;
    return avg;
}

std::string_view to_string(Taxonomy t) noexcept { return t == Taxonomy::Bloom ? "bloom" : "dok"; }

void ManualRubric::validate() const {
    if (relevance != 0 && relevance != 1) throw Error(ErrorCode::RangeError, "relevance must be 0 or 1");
    if (correctness != 0 && correctness != 1) throw Error(ErrorCode::RangeError, "correctness must be 0 or 1");
    if (taxonomy == Taxonomy::Bloom && (depth < 0 || depth > 6)) {
        throw Error(ErrorCode::RangeError, "Bloom depth must be 0..6, got " + std::to_string(depth));
    }
    if (taxonomy == Taxonomy::Dok && (depth < 1 || depth > 4)) {
        throw Error(ErrorCode::RangeError, "DOK depth must be 1..4, got " + std::to_string(depth));
    }
}

MeanStd aggregate_mean_std(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "cannot aggregate an empty sample");
    MeanStd m;
    m.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    m.mean = sum / static_cast<double>(m.n);
    if (m.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
    }
    return m;
}

std::string format_mean_std(const MeanStd& m, int precision) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f", precision, m.mean, precision, m.std);
    return buf;
}

std::string_view to_string(Metric m) noexcept {
    switch (m) {
    case Metric::Relevance: return "RELEVANCE";
    case Metric::DokAlignment: return "DOK_ALIGNMENT";
    case Metric::Appropriateness: return "APPROPRIATENESS";
    case Metric::Pinc: return "PINC";
    }
    return "PINC";
}

std::string_view display_name(Metric m) noexcept {
    switch (m) {
    case Metric::Relevance: return "Relevance";
    case Metric::DokAlignment: return "DOK alignment";
    case Metric::Appropriateness: return "Appropriateness";
    case Metric::Pinc: return "PINC";
    }
    return "PINC";
}

Metric metric_for(Criterion c) noexcept {
    switch (c) {
    case Criterion::Relevance: return Metric::Relevance;
    case Criterion::DokAlignment: return Metric::DokAlignment;
    case Criterion::Appropriateness: return Metric::Appropriateness;
    }
    return Metric::Relevance;
}

json to_json(const EvaluationRecord& r) {
    json j = {{"schema_version", 1},       {"evaluation_id", r.evaluation_id}, {"kind", r.kind},
              {"question_id", r.question_id}, {"request_id", r.request_id},   {"model_id", r.model_id},
              {"level", r.level},          {"mode", prompt::to_string(r.mode)}, {"metric", r.metric},
              {"value", r.value},          {"judge_model", r.judge_model},     {"rationale", r.rationale},
              {"group", r.group},          {"created_at", r.created_at}};
    j["raw"] = r.raw ? json(*r.raw) : json(nullptr);
    if (r.rubric) {
        j["rubric"] = {{"relevance", r.rubric->relevance},
                       {"depth", r.rubric->depth},
                       {"taxonomy", to_string(r.rubric->taxonomy)},
                       {"correctness", r.rubric->correctness},
                       {"rater_id", r.rubric->rater_id}};
    }
    return j;
}

EvaluationRecord record_from_json(const json& j) {
    if (j.value("schema_version", 0) != 1) throw Error(ErrorCode::SchemaVersionMismatch, "evaluation record schema_version");
    EvaluationRecord r;
    r.evaluation_id = j.value("evaluation_id", "");
    r.kind = j.value("kind", "");
    r.question_id = j.value("question_id", "");
    r.request_id = j.value("request_id", "");
    r.model_id = j.value("model_id", "");
    r.level = j.value("level", 0);
    r.mode = prompt::parse_mode(j.value("mode", "DOK_ONLY")).value_or(GenerationMode::DokOnly);
    r.metric = j.value("metric", "");
    r.value = j.value("value", 0.0);
    if (j.contains("raw") && j["raw"].is_number_integer()) r.raw = j["raw"].get<int>();
    r.judge_model = j.value("judge_model", "");
    r.rationale = j.value("rationale", "");
    r.group = j.value("group", "");
    r.created_at = j.value("created_at", "");
    if (j.contains("rubric")) {
        const auto& rj = j["rubric"];
        ManualRubric m;
        m.relevance = rj.value("relevance", 0);
        m.depth = rj.value("depth", 0);
        m.taxonomy = rj.value("taxonomy", "bloom") == "dok" ? Taxonomy::Dok : Taxonomy::Bloom;
        m.correctness = rj.value("correctness", 0);
        m.rater_id = rj.value("rater_id", "");
        r.rubric = m;
    }
    return r;
}

EvaluationStore::EvaluationStore(std::filesystem::path file) : file_(std::move(file)) {
    for (const auto& line : util::read_lines(file_)) {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue; // torn trailing line
        records_.push_back(record_from_json(j));
    }
}

EvaluationRecord EvaluationStore::append(EvaluationRecord rec) {
    if (rec.evaluation_id.empty()) rec.evaluation_id = "eval-" + util::random_hex(8);
    if (rec.created_at.empty()) rec.created_at = util::utc_timestamp();
    std::lock_guard lock(mu_);
    if (!file_.empty()) util::append_line(file_, to_json(rec).dump());
    records_.push_back(rec);
    return rec;
}

std::vector<EvaluationRecord> EvaluationStore::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<EvaluationRecord> EvaluationStore::for_request(const std::string& request_id) const {
    std::lock_guard lock(mu_);
    std::vector<EvaluationRecord> out;
    for (const auto& r : records_) {
        if (r.request_id == request_id) out.push_back(r);
    }
    return out;
}

namespace {

EvaluationRecord base_record(const gen::GeneratedQuestion& q) {
    EvaluationRecord r;
    r.question_id = q.question_id;
    r.request_id = q.request_id;
    r.model_id = q.model_id;
    r.level = q.level;
    r.mode = q.mode;
    return r;
}

} // namespace

EvaluationRecord make_judge_record(const gen::GeneratedQuestion& q, const JudgeScore& s) {
    auto r = base_record(q);
    r.kind = "judge";
    r.metric = std::string(to_string(metric_for(s.criterion)));
    r.value = s.normalized;
    r.raw = s.raw;
    r.judge_model = s.judge_model;
    r.rationale = s.rationale;
    return r;
}

EvaluationRecord make_pinc_record(const gen::GeneratedQuestion& q, double pinc) {
    auto r = base_record(q);
    r.kind = "pinc";
    r.metric = "PINC";
    r.value = pinc;
    return r;
}

EvaluationRecord record_manual(EvaluationStore& store, const std::string& question_id, const ManualRubric& rubric,
                               const std::string& group) {
    rubric.validate();
    EvaluationRecord r;
    r.kind = "manual";
    r.question_id = question_id;
    r.rubric = rubric;
    r.group = group;
    return store.append(std::move(r));
}

} // namespace qgdok::eval
