#include "qgdok/genpipe.hpp"
#include "qgdok/util.hpp"

#include <algorithm>

namespace qgdok::gen {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

RunStatus status_from(std::string_view s) {
    if (s == "DONE") return RunStatus::Done;
    if (s == "FAILED") return RunStatus::Failed;
    return RunStatus::Pending;
}

std::string make_request_id() {
    auto ts = util::utc_timestamp(); // 2026-01-02T03:04:05Z
    std::string compact;
    for (char c : ts) {
        if (std::isdigit(static_cast<unsigned char>(c)) || c == 'T') compact.push_back(c);
    }
    return "req-" + compact + "-" + util::random_hex(4);
}

json call_to_json(const CallLog& log) {
    json attempts = json::array();
    for (const auto& a : log.attempts) {
        attempts.push_back({{"attempt", a.attempt}, {"status", a.status}, {"error", a.error}, {"elapsed_ms", a.elapsed_ms}});
    }
    return {{"schema_version", kSchemaVersion}, {"provider_id", log.provider_id}, {"model_id", log.model_id},
            {"url", log.url},                   {"headers", log.headers},         {"request_body", log.request_body},
            {"attempts", attempts},             {"response_body", log.response_body}, {"text", log.text},
            {"logged_at", util::utc_timestamp()}};
}

} // namespace

json provider_to_json(const ProviderConfig& p) {
    return {{"provider_id", p.provider_id},
            {"model_id", p.model_id},
            {"kind", p.kind},
            {"endpoint", p.endpoint},
            {"api_key_env", p.api_key_env},
            {"temperature", p.temperature ? json(*p.temperature) : json(nullptr)},
            {"max_output_tokens", p.max_output_tokens},
            {"timeout_ms", p.timeout.count()},
            {"retry", {{"max_attempts", p.retry.max_attempts}, {"backoff_base_ms", p.retry.backoff_base.count()}}},
            {"dim", p.dim},
            {"mock_latency_ms", p.mock_latency.count()}};
}

ProviderConfig provider_from_json(const json& j) {
    ProviderConfig p;
    p.provider_id = j.value("provider_id", p.provider_id);
    p.model_id = j.value("model_id", p.model_id);
    p.kind = j.value("kind", p.kind);
    p.endpoint = j.value("endpoint", "");
    p.api_key_env = j.value("api_key_env", "");
    if (j.contains("temperature") && j["temperature"].is_number()) p.temperature = j["temperature"].get<double>();
    p.max_output_tokens = j.value("max_output_tokens", p.max_output_tokens);
    p.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(p.timeout.count())));
    p.dim = j.value("dim", p.dim);
    p.mock_latency = std::chrono::milliseconds(j.value("mock_latency_ms", 0LL));
    if (j.contains("retry")) {
        p.retry.max_attempts = j["retry"].value("max_attempts", p.retry.max_attempts);
        p.retry.backoff_base = std::chrono::milliseconds(
            j["retry"].value("backoff_base_ms", static_cast<long long>(p.retry.backoff_base.count())));
    }
    return p;
}

void GenerationRequest::validate() const {
    if (util::trim(concept_name).empty()) throw Error(ErrorCode::InvalidArgument, "concept must be non-empty", "validate");
    if (level < 1 || level > 4) throw Error(ErrorCode::RangeError, "level must be 1..4", "validate");
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be >= 1", "validate");
    if (mode == GenerationMode::DokRag && k_retrieve < 1) {
        throw Error(ErrorCode::InvalidArgument, "k_retrieve must be >= 1", "validate");
    }
}

json to_json(const GeneratedQuestion& q) {
    return {{"schema_version", kSchemaVersion},
            {"question_id", q.question_id},
            {"request_id", q.request_id},
            {"concept", q.concept_name},
            {"question", q.question_text},
            {"answer", q.answer_text},
            {"level", q.level},
            {"mode", prompt::to_string(q.mode)},
            {"model_id", q.model_id},
            {"provenance", q.provenance},
            {"raw_model_output_ref", q.raw_model_output_ref},
            {"created_at", q.created_at}};
}

GeneratedQuestion question_from_json(const json& j) {
    GeneratedQuestion q;
    q.question_id = j.at("question_id").get<std::string>();
    q.request_id = j.at("request_id").get<std::string>();
    q.concept_name = j.value("concept", "");
    q.question_text = j.at("question").get<std::string>();
    q.answer_text = j.at("answer").get<std::string>();
    q.level = j.at("level").get<int>();
    q.mode = prompt::parse_mode(j.at("mode").get<std::string>()).value_or(GenerationMode::DokOnly);
    q.model_id = j.value("model_id", "");
    q.provenance = j.value("provenance", std::vector<std::string>{});
    q.raw_model_output_ref = j.value("raw_model_output_ref", "");
    q.created_at = j.value("created_at", "");
    return q;
}

json to_json(const GenerationRequest& r) {
    return {{"concept", r.concept_name},   {"level", r.level},           {"mode", prompt::to_string(r.mode)},
            {"count", r.count},       {"k_retrieve", r.k_retrieve}, {"provider", provider_to_json(r.provider)}};
}

GenerationRequest request_from_json(const json& j) {
    GenerationRequest r;
    r.concept_name = j.at("concept").get<std::string>();
    r.level = j.at("level").get<int>();
    r.mode = prompt::parse_mode(j.at("mode").get<std::string>()).value_or(GenerationMode::DokOnly);
    r.count = j.value("count", r.count);
    r.k_retrieve = j.value("k_retrieve", r.k_retrieve);
    if (j.contains("provider")) r.provider = provider_from_json(j["provider"]);
    return r;
}

std::string_view to_string(RunStatus s) noexcept {
    switch (s) {
    case RunStatus::Pending: return "PENDING";
    case RunStatus::Done: return "DONE";
    case RunStatus::Failed: return "FAILED";
    }
    return "PENDING";
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

std::filesystem::path RunStore::dir_of(const std::string& request_id) const {
    if (request_id.empty() || request_id.find('/') != std::string::npos || request_id.find("..") != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "invalid request id: " + request_id);
    }
    return root_ / request_id;
}

std::shared_ptr<std::mutex> RunStore::lock_for(const std::string& request_id) {
    std::lock_guard lock(table_mu_);
    auto& m = locks_[request_id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
}

void RunStore::save(const RunRecord& rec) {
    json j = {{"schema_version", kSchemaVersion},     {"request_id", rec.request_id},
              {"status", to_string(rec.status)},      {"failed_stage", rec.failed_stage},
              {"error", rec.error},                   {"created_at", rec.created_at},
              {"question_ids", rec.question_ids},     {"evaluation_ids", rec.evaluation_ids},
              {"request", to_json(rec.request)}};
    util::atomic_write(dir_of(rec.request_id) / "run.json", j.dump(2));
}

RunRecord RunStore::create(const GenerationRequest& request) {
    RunRecord rec;
    do {
        rec.request_id = make_request_id();
    } while (std::filesystem::exists(dir_of(rec.request_id)));
    rec.request = request;
    rec.created_at = util::utc_timestamp();
    auto m = lock_for(rec.request_id);
    std::lock_guard lock(*m);
    std::filesystem::create_directories(dir_of(rec.request_id));
    util::atomic_write(dir_of(rec.request_id) / "request.json", to_json(request).dump(2));
    save(rec);
    return rec;
}

RunRecord RunStore::load(const std::string& request_id) const {
    auto path = dir_of(request_id) / "run.json";
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "unknown request " + request_id);
    auto j = json::parse(util::read_file(path));
    if (j.value("schema_version", 0) != kSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionMismatch, "run " + request_id + " has unsupported schema_version");
    }
    RunRecord rec;
    rec.request_id = j.at("request_id").get<std::string>();
    rec.status = status_from(j.value("status", "PENDING"));
    rec.failed_stage = j.value("failed_stage", "");
    rec.error = j.value("error", "");
    rec.created_at = j.value("created_at", "");
    rec.question_ids = j.value("question_ids", std::vector<std::string>{});
    rec.evaluation_ids = j.value("evaluation_ids", std::vector<std::string>{});
    rec.request = request_from_json(j.at("request"));
    return rec;
}

void RunStore::finish(const std::string& request_id, RunStatus status, const std::string& stage,
                      const std::string& error) {
    auto m = lock_for(request_id);
    std::lock_guard lock(*m);
    auto rec = load(request_id);
    if (rec.status != RunStatus::Pending || status == RunStatus::Pending) {
        throw Error(ErrorCode::InvalidTransition, "run " + request_id + ": " + std::string(to_string(rec.status)) +
                                                      " -> " + std::string(to_string(status)) + " not allowed");
    }
    rec.status = status;
    rec.failed_stage = status == RunStatus::Failed ? stage : std::string{};
    rec.error = error;
    save(rec);
}

void RunStore::set_questions(const std::string& request_id, const std::vector<GeneratedQuestion>& questions) {
    auto m = lock_for(request_id);
    std::lock_guard lock(*m);
    json arr = json::array();
    std::vector<std::string> ids;
    for (const auto& q : questions) {
        arr.push_back(to_json(q));
        ids.push_back(q.question_id);
    }
    util::atomic_write(dir_of(request_id) / "questions.json", arr.dump(2));
    auto rec = load(request_id);
    rec.question_ids = std::move(ids);
    save(rec);
}

void RunStore::add_evaluation_ids(const std::string& request_id, const std::vector<std::string>& ids) {
    auto m = lock_for(request_id);
    std::lock_guard lock(*m);
    auto rec = load(request_id);
    rec.evaluation_ids.insert(rec.evaluation_ids.end(), ids.begin(), ids.end());
    save(rec);
}

void RunStore::write_artifact(const std::string& request_id, const std::string& name, const std::string& content) {
    auto m = lock_for(request_id);
    std::lock_guard lock(*m);
    util::atomic_write(dir_of(request_id) / name, content);
}

void RunStore::append_call(const std::string& request_id, const CallLog& log) {
    auto m = lock_for(request_id);
    std::lock_guard lock(*m);
    util::append_line(dir_of(request_id) / "calls.jsonl", call_to_json(log).dump());
}

std::optional<std::string> RunStore::read_artifact(const std::string& request_id, const std::string& name) const {
    auto path = dir_of(request_id) / name;
    if (!std::filesystem::exists(path)) return std::nullopt;
    return util::read_file(path);
}

std::vector<GeneratedQuestion> RunStore::questions(const std::string& request_id) const {
    if (!exists(request_id)) throw Error(ErrorCode::NotFound, "unknown request " + request_id);
    std::vector<GeneratedQuestion> out;
    auto text = read_artifact(request_id, "questions.json");
    if (!text) return out;
    for (const auto& j : json::parse(*text)) out.push_back(question_from_json(j));
    return out;
}

std::vector<RetrievedChunk> RunStore::retrieved(const std::string& request_id) const {
    std::vector<RetrievedChunk> out;
    auto text = read_artifact(request_id, "retrieved.json");
    if (!text) return out;
    for (const auto& j : json::parse(*text)) {
        out.push_back({j.at("chunk_id").get<std::string>(), j.at("score").get<double>(), j.at("rank").get<std::size_t>(),
                       j.at("text").get<std::string>()});
    }
    return out;
}

std::vector<std::string> RunStore::list() const {
    std::vector<std::string> ids;
    if (!std::filesystem::is_directory(root_)) return ids;
    for (const auto& e : std::filesystem::directory_iterator(root_)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "run.json")) ids.push_back(e.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool RunStore::exists(const std::string& request_id) const {
    return std::filesystem::exists(dir_of(request_id) / "run.json");
}

GenerationResult generate_questions(const GenerationRequest& req, const PipelineContext& ctx) {
    req.validate();
    if (!ctx.chat) throw Error(ErrorCode::InvalidConfig, "no chat provider configured", "validate");
    const auto& level = prompt::dok_level(req.level);

    std::optional<RunRecord> run;
    std::string stage = "retrieval";
    auto fail = [&](const Error& e) -> Error {
        auto tagged = e.stage().empty() ? e.with_stage(stage) : e;
        if (run && ctx.store) {
            try {
                ctx.store->finish(run->request_id, RunStatus::Failed, tagged.stage(), tagged.what());
            } catch (const Error&) {
            }
        }
        return tagged;
    };

    try {
        // DOK_RAG preconditions are checked before anything is persisted or sent.
        if (req.mode == GenerationMode::DokRag) {
            if (!ctx.index || ctx.index->empty()) throw Error(ErrorCode::EmptyIndex, "no indexed chunks to retrieve from", "retrieval");
            if (!ctx.embedder) throw Error(ErrorCode::InvalidConfig, "no embedder configured", "retrieval");
        }
        if (ctx.store) run = ctx.store->create(req);
        const std::string request_id = run ? run->request_id : "req-ephemeral";

        std::vector<corpus::DocumentChunk> retrieved;
        std::vector<retrieval::RetrievalHit> hits;
        if (req.mode == GenerationMode::DokRag) {
            hits = retrieval::search_topk(req.concept_name, req.k_retrieve, *ctx.index, *ctx.embedder);
            json rj = json::array();
            for (const auto& h : hits) {
                std::optional<corpus::DocumentChunk> chunk;
                if (ctx.chunk_lookup) chunk = ctx.chunk_lookup(h.chunk_id);
                if (!chunk) throw Error(ErrorCode::NotFound, "indexed chunk " + h.chunk_id + " missing from corpus");
                rj.push_back({{"chunk_id", h.chunk_id}, {"score", h.score}, {"rank", h.rank}, {"text", chunk->text}});
                retrieved.push_back(std::move(*chunk));
            }
            if (ctx.store) ctx.store->write_artifact(request_id, "retrieved.json", rj.dump(2));
        }

        stage = "prompt";
        auto bundle = prompt::build_generation_prompt(req.concept_name, level, req.mode, retrieved, req.count,
                                                      ctx.prompt_options);
        if (ctx.store) {
            json pj = {{"template_id", bundle.template_id}, {"template_version", bundle.template_version},
                       {"prompt_hash", bundle.hash()},      {"system", bundle.system_text},
                       {"user", bundle.user_text},          {"slots", bundle.filled_slots}};
            ctx.store->write_artifact(request_id, "prompt.json", pj.dump(2));
        }

        stage = "generation";
        CallLog log;
        std::string raw;
        try {
            raw = complete(bundle, *ctx.chat, &log, ctx.budget);
        } catch (...) {
            if (ctx.store) ctx.store->append_call(request_id, log);
            throw;
        }
        if (ctx.store) {
            ctx.store->append_call(request_id, log);
            ctx.store->write_artifact(request_id, "raw_output.txt", raw);
        }

        stage = "parse";
        auto parsed = parse_questions(raw, req.count);

        stage = "persist";
        GenerationResult result;
        result.request_id = request_id;
        result.parse_quality = parsed.quality;
        result.count_mismatch = parsed.count_mismatch;
        std::vector<std::string> provenance;
        for (const auto& h : hits) provenance.push_back(h.chunk_id);
        const auto now = util::utc_timestamp();
        for (std::size_t i = 0; i < parsed.pairs.size(); ++i) {
            GeneratedQuestion q;
            char suffix[16];
            std::snprintf(suffix, sizeof suffix, "-q%02zu", i + 1);
            q.question_id = request_id + suffix;
            q.request_id = request_id;
            q.concept_name = util::trim(req.concept_name);
            q.question_text = parsed.pairs[i].question;
            q.answer_text = parsed.pairs[i].answer;
            q.level = req.level;
            q.mode = req.mode;
            q.model_id = ctx.chat->config().model_id;
            q.provenance = provenance;
            q.raw_model_output_ref = request_id + "/raw_output.txt";
            q.created_at = now;
            result.questions.push_back(std::move(q));
        }
        if (ctx.store) {
            ctx.store->set_questions(request_id, result.questions);
            ctx.store->finish(request_id, RunStatus::Done);
        }
        return result;
    } catch (const Error& e) {
        throw fail(e);
    } catch (const std::exception& e) {
        throw fail(Error(ErrorCode::IoError, e.what()));
    }
}

} // namespace qgdok::gen
