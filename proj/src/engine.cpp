#include "qgdok/service.hpp"
#include "qgdok/util.hpp"

#include <algorithm>
#include <set>

namespace qgdok::service {

using nlohmann::json;

json to_json(const EvaluationSummary& s) {
    json questions = json::array();
    for (const auto& q : s.questions) {
        json judge = json::object();
        for (const auto& [crit, score] : q.judge) {
            judge[crit] = {{"raw", score.raw}, {"normalized", score.normalized}, {"judge_model", score.judge_model}};
        }
        questions.push_back({{"question_id", q.question_id},
                             {"pinc", q.pinc ? json(*q.pinc) : json(nullptr)},
                             {"judge", judge}});
    }
    json errors = json::array();
    for (const auto& e : s.errors) errors.push_back({{"stage", e.stage}, {"code", e.code}, {"message", e.message}});
    return {{"request_id", s.request_id},
            {"scores", questions},
            {"pairwise_pinc", s.pairwise_pinc ? json(*s.pairwise_pinc) : json(nullptr)},
            {"errors", errors},
            {"evaluation_ids", s.evaluation_ids}};
}

Engine::Engine(AppConfig cfg, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)),
      transport_(transport ? std::move(transport) : make_default_transport()),
      budget_(std::make_shared<ProviderBudget>(static_cast<std::ptrdiff_t>(cfg_.provider_budget))),
      corpus_(cfg_.data_dir / "corpus"),
      runs_(cfg_.data_dir / "runs"),
      evals_(cfg_.data_dir / "evaluations.jsonl"),
      cache_(std::make_shared<retrieval::EmbeddingCache>(cfg_.data_dir / "cache" / "embeddings.jsonl")) {
    cfg_.validate();
    std::filesystem::create_directories(cfg_.data_dir);
    embedder_ = retrieval::make_embedding_service(cfg_.role("embedder"), cache_, budget_, transport_);
    judge_ = gen::make_chat_provider(cfg_.role("judge"), transport_);
    if (auto* mock = dynamic_cast<gen::MockChatProvider*>(judge_.get())) mock->load_fixtures(cfg_.data_dir / "fixtures");
}

corpus::SourceDocument Engine::ingest(std::string title, std::string body, corpus::DocumentKind kind) {
    try {
        return corpus_.ingest_document(std::move(title), std::move(body), kind);
    } catch (const Error& e) {
        throw e.with_stage("ingest");
    }
}

std::vector<corpus::SourceDocument> Engine::ingest_file(const std::filesystem::path& path, corpus::DocumentKind kind) {
    std::string text;
    try {
        text = util::read_file(path);
    } catch (const Error& e) {
        throw e.with_stage("ingest");
    }
    if (path.extension() == ".jsonl") {
        try {
            return corpus_.ingest_jsonl(text);
        } catch (const Error& e) {
            throw e.with_stage("ingest");
        }
    }
    std::string title = path.stem().string();
    auto first = util::trim(text.substr(0, text.find('\n')));
    if (first.starts_with("# ")) title = util::trim(std::string_view(first).substr(2));
    return {ingest(std::move(title), std::move(text), kind)};
}

IndexSummary Engine::build_index() {
    std::lock_guard lock(index_build_mu_);
    try {
        auto chunks = corpus_.rebuild_chunks(cfg_.chunking);
        if (chunks.empty()) throw Error(ErrorCode::EmptyIndex, "corpus has no documents to index");
        auto built = retrieval::index_chunks(chunks, *embedder_, {}, cfg_.index_parallelism);
        retrieval::save_index(built, index_path());
        IndexSummary summary{corpus_.size(), built.size()};
        index_.publish(std::make_shared<const retrieval::VectorIndex>(std::move(built)));
        return summary;
    } catch (const Error& e) {
        throw e.stage().empty() ? e.with_stage("index") : e;
    }
}

std::shared_ptr<const retrieval::VectorIndex> Engine::index() {
    if (auto current = index_.get()) return current;
    std::lock_guard lock(index_build_mu_);
    if (auto current = index_.get()) return current;
    if (!std::filesystem::exists(index_path())) return nullptr;
    try {
        auto loaded = std::make_shared<const retrieval::VectorIndex>(retrieval::load_index(index_path()));
        index_.publish(loaded);
        return loaded;
    } catch (const Error& e) {
        throw e.with_stage("retrieval");
    }
}

gen::ChatProvider& Engine::chat_for(const std::optional<std::string>& model) {
    std::lock_guard lock(providers_mu_);
    const std::string key = model.value_or("");
    if (auto it = chat_.find(key); it != chat_.end()) return *it->second;

    ProviderConfig pc = cfg_.role("generator");
    if (model) {
        if (auto p = cfg_.providers.find(*model); p != cfg_.providers.end()) {
            pc = p->second;
        } else {
            auto same_model = std::find_if(cfg_.providers.begin(), cfg_.providers.end(),
                                           [&](const auto& kv) { return kv.second.model_id == *model; });
            if (same_model != cfg_.providers.end()) pc = same_model->second;
            else pc.model_id = *model;
        }
    }
    auto provider = gen::make_chat_provider(pc, transport_);
    if (auto* mock = dynamic_cast<gen::MockChatProvider*>(provider.get())) mock->load_fixtures(cfg_.data_dir / "fixtures");
    auto& ref = *provider;
    chat_[key] = std::move(provider);
    return ref;
}

gen::ChatProvider& Engine::judge_provider() { return *judge_; }

gen::GenerationResult Engine::generate(const GenerateParams& params) {
    gen::GenerationRequest req;
    req.concept_name = params.concept_name;
    req.level = params.level;
    req.mode = params.mode;
    req.count = params.count.value_or(prompt::kDefaultQuestionCount);
    req.k_retrieve = params.k_retrieve.value_or(cfg_.k_retrieve);
    req.validate();

    auto& chat = chat_for(params.model);
    req.provider = chat.config();

    gen::PipelineContext ctx;
    if (req.mode == prompt::GenerationMode::DokRag) ctx.index = index();
    ctx.embedder = embedder_.get();
    ctx.chunk_lookup = [this](const std::string& id) { return corpus_.find_chunk(id); };
    ctx.chat = &chat;
    ctx.store = &runs_;
    ctx.budget = budget_.get();
    ctx.prompt_options.chunk_token_budget = cfg_.chunk_token_budget;
    return gen::generate_questions(req, ctx);
}

EvaluationSummary Engine::evaluate(const std::string& request_id, bool pinc, bool judge) {
    gen::RunRecord run;
    try {
        run = runs_.load(request_id);
    } catch (const Error& e) {
        throw e.with_stage("evaluate");
    }
    if (run.status != gen::RunStatus::Done) {
        throw Error(ErrorCode::InvalidArgument,
                    "run " + request_id + " is " + std::string(gen::to_string(run.status)) + ", not DONE", "evaluate");
    }
    auto questions = runs_.questions(request_id);
    auto retrieved = runs_.retrieved(request_id);

    std::string material;
    for (const auto& r : retrieved) {
        if (!material.empty()) material += "\n\n";
        material += r.text;
    }
    const auto& level = prompt::dok_level(run.request.level);
    const std::string pinc_source = run.request.mode == prompt::GenerationMode::DokRag
                                        ? material
                                        : std::string(level.definition) + " " + run.request.concept_name;
    std::string judge_context = "Concept: " + run.request.concept_name;
    if (!material.empty()) judge_context += "\n\nReference material:\n" + material;

    EvaluationSummary summary;
    summary.request_id = request_id;
    std::set<std::string> reported;
    auto report_error = [&](const std::string& stage, const Error& e) {
        std::string key = stage + std::string(qgdok::to_string(e.code()));
        if (reported.insert(key).second) summary.errors.push_back({stage, std::string(qgdok::to_string(e.code())), e.what()});
    };

    for (const auto& q : questions) {
        QuestionScores scores;
        scores.question_id = q.question_id;
        if (pinc) {
            try {
                double v = eval::pinc_score(pinc_source, q.question_text);
                scores.pinc = v;
                summary.evaluation_ids.push_back(evals_.append(eval::make_pinc_record(q, v)).evaluation_id);
            } catch (const Error& e) {
                report_error("pinc", e);
            }
        }
        if (judge) {
            for (auto criterion : prompt::kCriteria) {
                try {
                    eval::JudgeScore s;
                    if (cfg_.judge_samples > 1) {
                        auto avg = eval::judge_repeated(q, criterion, *judge_, judge_context, cfg_.judge_samples,
                                                        budget_.get());
                        s = avg.samples.front();
                        s.normalized = avg.mean_normalized;
                    } else {
                        CallLog log;
                        s = eval::judge(q, criterion, *judge_, judge_context, budget_.get(), &log);
                        runs_.append_call(request_id, log);
                    }
                    auto rec = eval::make_judge_record(q, s);
                    if (cfg_.judge_samples > 1) rec.raw.reset();
                    summary.evaluation_ids.push_back(evals_.append(std::move(rec)).evaluation_id);
                    scores.judge[std::string(prompt::to_string(criterion))] = s;
                } catch (const Error& e) {
                    report_error("judge", e);
                }
            }
        }
        summary.questions.push_back(std::move(scores));
    }

    if (pinc && cfg_.pairwise_pinc) {
        std::vector<std::string> texts;
        for (const auto& q : questions) texts.push_back(q.question_text);
        summary.pairwise_pinc = eval::pairwise_pinc(texts);
        if (summary.pairwise_pinc && !questions.empty()) {
            auto rec = eval::make_pinc_record(questions.front(), *summary.pairwise_pinc);
            rec.kind = "pinc_pairwise";
            rec.question_id.clear();
            summary.evaluation_ids.push_back(evals_.append(std::move(rec)).evaluation_id);
        }
    }
    runs_.add_evaluation_ids(request_id, summary.evaluation_ids);
    return summary;
}

std::string Engine::report(const ReportOptions& opts) {
    if (opts.format != "csv" && opts.format != "md" && opts.format != "json") {
        throw Error(ErrorCode::InvalidArgument, "unknown report format " + opts.format, "report");
    }
    auto records = evals_.records();
    auto models = opts.models;
    if (models.empty()) {
        std::set<std::string> seen;
        for (const auto& r : records) {
            if ((r.kind == "judge" || r.kind == "pinc") && !r.model_id.empty()) seen.insert(r.model_id);
        }
        models.assign(seen.begin(), seen.end());
    }
    if (models.empty()) throw Error(ErrorCode::NotFound, "no evaluations recorded yet", "report");
    eval::ResultsTable table;
    try {
        table = eval::build_results_table(records, models, opts.modes, opts.levels);
    } catch (const Error& e) {
        throw e.with_stage("report");
    }
    if (opts.format == "csv") return eval::emit_csv(table);
    if (opts.format == "md") return eval::emit_markdown(table, opts.precision);
    if (opts.format == "json") {
        json cells = json::array();
        for (const auto& [model, level] : table.rows()) {
            for (const auto& col : table.columns()) {
                const auto& c = table.at({model, level, col.metric, col.mode});
                cells.push_back({{"model", model},
                                 {"level", level == eval::kAverageRow ? json("AVERAGE") : json(level)},
                                 {"metric", eval::to_string(col.metric)},
                                 {"mode", col.mode ? json(prompt::to_string(*col.mode)) : json(nullptr)},
                                 {"mean", c.mean},
                                 {"std", c.std},
                                 {"n", c.n}});
            }
        }
        return json{{"cells", cells}}.dump(2);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown report format " + opts.format, "report");
}

} // namespace qgdok::service
