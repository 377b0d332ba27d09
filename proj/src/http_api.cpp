#include "qgdok/service.hpp"
#include "qgdok/util.hpp"

#include <httplib.h>

#include <atomic>

namespace qgdok::service {

using nlohmann::json;

int http_status_for(const Error& e) {
    switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
    case ErrorCode::RangeError:
    case ErrorCode::EmptyDocument:
    case ErrorCode::EmptyText:
    case ErrorCode::ModeContextMismatch:
    case ErrorCode::MissingMaterial:
    case ErrorCode::MissingContext:
    case ErrorCode::MissingSlot:
        return 422;
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::EmptyIndex:
    case ErrorCode::MissingCell:
    case ErrorCode::InvalidTransition:
        return 409;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::ContentBlocked:
    case ErrorCode::UnparseableOutput:
    case ErrorCode::MalformedJudgeOutput:
        return 502;
    case ErrorCode::TimeoutExceeded:
        return 504;
    default:
        return 500;
    }
}

namespace {

constexpr const char* kSchemaVersion = "1";

std::string new_request_id() { return "api-" + util::random_hex(8); }

// Responses about a generation run reuse its request id; everything else
// gets a fresh per-call id.
void send_json(httplib::Response& res, int status, json body, const std::string& fallback_id) {
    if (!body.contains("request_id")) body["request_id"] = fallback_id;
    res.status = status;
    res.set_header("X-Schema-Version", kSchemaVersion);
    res.set_header("X-Request-Id", body["request_id"].get<std::string>());
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string stage, std::string code, std::string message,
                const std::string& request_id) {
    send_json(res, status, {{"stage", std::move(stage)}, {"code", std::move(code)}, {"message", std::move(message)}},
              request_id);
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body);
    if (!body.is_object()) throw json::type_error::create(302, "request body must be a JSON object", nullptr);
    return body;
}

json question_json(const gen::GeneratedQuestion& q) {
    return {{"question_id", q.question_id}, {"question", q.question_text}, {"answer", q.answer_text},
            {"level", q.level},             {"mode", prompt::to_string(q.mode)}, {"model_id", q.model_id},
            {"provenance", q.provenance}};
}

json run_json(const gen::RunRecord& r) {
    return {{"request_id", r.request_id},
            {"status", gen::to_string(r.status)},
            {"failed_stage", r.failed_stage},
            {"error", r.error},
            {"created_at", r.created_at},
            {"question_ids", r.question_ids},
            {"evaluation_ids", r.evaluation_ids},
            {"request", gen::to_json(r.request)}};
}

// Wraps a handler so every failure becomes a structured response.
template <typename F>
httplib::Server::Handler guarded(std::string stage, F handler) {
    return [stage = std::move(stage), handler](const httplib::Request& req, httplib::Response& res) {
        const std::string rid = new_request_id();
        try {
            send_json(res, 200, handler(req), rid);
        } catch (const Error& e) {
            send_error(res, http_status_for(e), e.stage().empty() ? stage : e.stage(),
                       std::string(qgdok::to_string(e.code())), e.what(), rid);
        } catch (const json::parse_error& e) {
            send_error(res, 400, stage, "BadRequest", std::string("malformed JSON: ") + e.what(), rid);
        } catch (const json::exception& e) {
            send_error(res, 422, stage, "InvalidArgument", e.what(), rid);
        } catch (const std::exception& e) {
            send_error(res, 500, stage, "Internal", e.what(), rid);
        }
    };
}

template <typename T>
T required(const json& body, const char* key) {
    if (!body.contains(key)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + key + "'");
    try {
        return body.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace

struct ApiServer::Impl {
    Engine& engine;
    httplib::Server server;
    std::atomic<bool> bound{false};

    explicit Impl(Engine& e) : engine(e) {
        // httplib's default sets SO_REUSEPORT, which lets a second server
        // share a busy port silently.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        routes();
    }

    void routes() {
        server.Get("/api/health", guarded("health", [](const httplib::Request&) {
                       return json{{"status", "ok"}};
                   }));

        server.Get("/api/levels", guarded("levels", [](const httplib::Request&) {
                       json levels = json::array();
                       for (const auto& l : prompt::dok_levels()) {
                           levels.push_back({{"level", l.level}, {"name", l.name}, {"definition", l.definition}});
                       }
                       return json{{"levels", levels}};
                   }));

        server.Post("/api/corpus/documents", guarded("ingest", [this](const httplib::Request& req) {
                        auto body = parse_body(req);
                        auto kind_name = body.value("kind", std::string("notes"));
                        auto kind = corpus::parse_kind(kind_name);
                        if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown document kind " + kind_name);
                        auto doc = engine.ingest(required<std::string>(body, "title"),
                                                 required<std::string>(body, "body"), *kind);
                        return json{{"doc_id", doc.doc_id}};
                    }));

        server.Post("/api/index/build", guarded("index", [this](const httplib::Request& req) {
                        parse_body(req);
                        auto s = engine.build_index();
                        return json{{"documents", s.documents}, {"chunks_indexed", s.chunks_indexed}};
                    }));

        server.Post("/api/generate", guarded("validate", [this](const httplib::Request& req) {
                        auto body = parse_body(req);
                        GenerateParams p;
                        p.concept_name = required<std::string>(body, "concept");
                        p.level = required<int>(body, "level");
                        auto mode_name = body.value("mode", std::string("DOK_ONLY"));
                        auto mode = prompt::parse_mode(mode_name);
                        if (!mode) throw Error(ErrorCode::InvalidArgument, "unknown mode " + mode_name);
                        p.mode = *mode;
                        if (body.contains("model") && !body["model"].is_null()) {
                            p.model = required<std::string>(body, "model");
                        }
                        if (body.contains("count") && !body["count"].is_null()) p.count = required<int>(body, "count");
                        if (body.contains("k") && !body["k"].is_null()) p.k_retrieve = required<std::size_t>(body, "k");
                        auto result = engine.generate(p);
                        json questions = json::array();
                        for (const auto& q : result.questions) questions.push_back(question_json(q));
                        return json{{"request_id", result.request_id},
                                    {"questions", questions},
                                    {"parse_quality", gen::to_string(result.parse_quality)},
                                    {"count_mismatch", result.count_mismatch}};
                    }));

        server.Post("/api/evaluate", guarded("evaluate", [this](const httplib::Request& req) {
                        auto body = parse_body(req);
                        auto run_id = required<std::string>(body, "request_id");
                        bool pinc = true, judge = true;
                        if (body.contains("metrics")) {
                            auto metrics = required<std::vector<std::string>>(body, "metrics");
                            pinc = judge = false;
                            for (const auto& m : metrics) {
                                if (m == "pinc") pinc = true;
                                else if (m == "judge") judge = true;
                                else if (m == "all") pinc = judge = true;
                                else throw Error(ErrorCode::InvalidArgument, "unknown metric " + m);
                            }
                        }
                        return to_json(engine.evaluate(run_id, pinc, judge));
                    }));

        server.Get("/api/report", guarded("report", [this](const httplib::Request& req) {
                       ReportOptions opts;
                       if (req.has_param("format")) opts.format = req.get_param_value("format");
                       if (req.has_param("precision")) opts.precision = std::stoi(req.get_param_value("precision"));
                       for (std::size_t i = 0; i < req.get_param_value_count("model"); ++i) {
                           opts.models.push_back(req.get_param_value("model", i));
                       }
                       auto text = engine.report(opts);
                       if (opts.format == "json") return json::parse(text);
                       return json{{"format", opts.format}, {"content", text}};
                   }));

        server.Get(R"(/api/runs/([A-Za-z0-9_\-]+))", guarded("runs", [this](const httplib::Request& req) {
                       const std::string id = req.matches[1];
                       auto run = run_json(engine.runs().load(id));
                       json questions = json::array();
                       if (run["status"] == "DONE") {
                           for (const auto& q : engine.runs().questions(id)) questions.push_back(question_json(q));
                       }
                       run["questions"] = questions;
                       return run;
                   }));

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            send_error(res, res.status, "routing", res.status == 404 ? "NotFound" : "HttpError",
                       "no route for this request", new_request_id());
        });

        if (!engine.config().static_dir.empty()) server.set_mount_point("/", engine.config().static_dir);
    }
};

ApiServer::ApiServer(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    int bound = 0;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) bound = -1;
    } else {
        bound = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (bound < 0) {
        throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port) + " (address in use?)",
                    "serve");
    }
    impl_->bound = true;
    return bound;
}

void ApiServer::listen() {
    if (!impl_->bound) throw Error(ErrorCode::InvalidArgument, "listen() before bind()", "serve");
    impl_->server.listen_after_bind();
}

void ApiServer::stop() {
    if (impl_->server.is_running() || impl_->bound) impl_->server.stop();
}

bool ApiServer::running() const { return impl_->server.is_running(); }

} // namespace qgdok::service
