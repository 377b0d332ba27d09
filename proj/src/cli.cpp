#include "qgdok/service.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace qgdok::service {

namespace {

using nlohmann::json;

struct Globals {
    std::string data_dir;
    std::string config_file;
    bool mock = false;
};

AppConfig resolve_config(const Globals& g, const EnvFn& env) {
    std::optional<std::filesystem::path> file;
    if (!g.config_file.empty()) file = g.config_file;
    EnvFn effective = env;
    if (!g.data_dir.empty()) {
        // --data-dir decides where qgdok.json is looked up, so it overrides the
        // environment before loading.
        effective = [env, dir = g.data_dir](const std::string& name) -> std::optional<std::string> {
            if (name == "QGDOK_DATA_DIR") return dir;
            return env(name);
        };
    }
    auto cfg = load_config(file, effective);
    if (g.mock && !cfg.mock_mode) apply_mock_mode(cfg);
    return cfg;
}

void print_questions(std::ostream& out, const gen::GenerationResult& r) {
    out << "request " << r.request_id << " (" << gen::to_string(r.parse_quality)
        << (r.count_mismatch ? ", count mismatch" : "") << ")\n";
    for (const auto& q : r.questions) {
        out << "\n[" << q.question_id << "] DOK " << q.level << ", " << prompt::display_name(q.mode) << ", "
            << q.model_id << "\nQ: " << q.question_text << "\nA: " << q.answer_text << "\n";
        if (!q.provenance.empty()) {
            out << "provenance:";
            for (const auto& c : q.provenance) out << " " << c;
            out << "\n";
        }
    }
}

void print_evaluation(std::ostream& out, const EvaluationSummary& s) {
    out << "request " << s.request_id << "\n";
    char buf[64];
    for (const auto& q : s.questions) {
        out << q.question_id;
        if (q.pinc) {
            std::snprintf(buf, sizeof buf, " PINC=%.4f", *q.pinc);
            out << buf;
        }
        for (const auto& [crit, score] : q.judge) {
            std::snprintf(buf, sizeof buf, " %s=%d(%.2f)", crit.c_str(), score.raw, score.normalized);
            out << buf;
        }
        out << "\n";
    }
    if (s.pairwise_pinc) {
        std::snprintf(buf, sizeof buf, "pairwise PINC=%.4f\n", *s.pairwise_pinc);
        out << buf;
    }
    for (const auto& e : s.errors) out << "warning [" << e.stage << "/" << e.code << "]: " << e.message << "\n";
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const EnvFn& env) {
    CLI::App app{"Question generation aligned to Depth-of-Knowledge levels", "qgdok"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--data-dir", g.data_dir, "Data directory (default: $QGDOK_DATA_DIR or ./qgdok-data)");
    app.add_option("--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_flag("--mock", g.mock, "Use deterministic mock providers (no network)");

    auto* ingest = app.add_subcommand("ingest", "Add documents to the corpus");
    std::vector<std::string> files;
    std::string kind_name = "notes";
    ingest->add_option("files", files, "Text, Markdown or JSONL files")->required()->check(CLI::ExistingFile);
    ingest->add_option("--kind", kind_name, "textbook|tutorial|practice_problems|notes|syllabus")
        ->check(CLI::IsMember({"textbook", "tutorial", "practice_problems", "notes", "syllabus"}));

    auto* index = app.add_subcommand("index", "Chunk the corpus and build the vector index");

    auto* generate = app.add_subcommand("generate", "Generate questions for a concept");
    GenerateParams gp;
    std::string mode_name = "dok";
    std::string model;
    int count = prompt::kDefaultQuestionCount;
    std::size_t k = 0;
    bool gen_json = false;
    generate->add_option("--concept", gp.concept_name, "Concept to generate questions about")->required();
    generate->add_option("--level", gp.level, "DOK level")->required()->check(CLI::Range(1, 4));
    generate->add_option("--mode", mode_name, "dok or dok+rag")->check(CLI::IsMember({"dok", "dok+rag"}));
    generate->add_option("--model", model, "Provider name or model id");
    generate->add_option("--count", count, "Number of questions")->check(CLI::PositiveNumber);
    generate->add_option("--k", k, "Chunks to retrieve in dok+rag mode")->check(CLI::PositiveNumber);
    generate->add_flag("--json", gen_json, "Print the result as JSON");

    auto* evaluate = app.add_subcommand("eval", "Score the questions of a run");
    std::string request_id;
    std::string metrics = "all";
    bool eval_json = false;
    evaluate->add_option("--request", request_id, "Request id printed by generate")->required();
    evaluate->add_option("--metrics", metrics, "pinc, judge or all")->check(CLI::IsMember({"pinc", "judge", "all"}));
    evaluate->add_flag("--json", eval_json, "Print the result as JSON");

    auto* report = app.add_subcommand("report", "Aggregate evaluations into the comparison table");
    ReportOptions ro;
    report->add_option("--format", ro.format, "csv, md or json")->check(CLI::IsMember({"csv", "md", "json"}));
    report->add_option("--models", ro.models, "Models to include (default: all evaluated)");
    report->add_option("--levels", ro.levels, "Levels to include")->check(CLI::Range(1, 4));
    report->add_option("--precision", ro.precision, "Decimals in the Markdown table")->check(CLI::Range(0, 12));

    auto* show = app.add_subcommand("show", "Show a run record and its questions");
    std::string show_id;
    show->add_option("request", show_id, "Request id")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::optional<int> port;
    std::string host;
    std::string static_dir;
    serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--static-dir", static_dir, "Serve console assets from this directory")
        ->check(CLI::ExistingDirectory);

    auto* levels = app.add_subcommand("levels", "List the DOK levels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return 2;
    }

    try {
        if (levels->parsed()) {
            for (const auto& l : prompt::dok_levels()) {
                out << "DOK " << l.level << ": " << l.name << "\n  " << l.definition << "\n";
            }
            return 0;
        }

        auto cfg = resolve_config(g, env);
        if (!static_dir.empty()) cfg.static_dir = static_dir;
        Engine engine(std::move(cfg));

        if (ingest->parsed()) {
            auto kind = *corpus::parse_kind(kind_name);
            for (const auto& f : files) {
                for (const auto& doc : engine.ingest_file(f, kind)) {
                    out << doc.doc_id << "\t" << doc.title << "\n";
                }
            }
        } else if (index->parsed()) {
            auto s = engine.build_index();
            out << "indexed " << s.chunks_indexed << " chunks from " << s.documents << " documents\n";
        } else if (generate->parsed()) {
            gp.mode = *prompt::parse_mode(mode_name);
            if (!model.empty()) gp.model = model;
            gp.count = count;
            if (k > 0) gp.k_retrieve = k;
            auto r = engine.generate(gp);
            if (gen_json) {
                json qs = json::array();
                for (const auto& q : r.questions) qs.push_back(gen::to_json(q));
                out << json{{"request_id", r.request_id}, {"questions", qs}}.dump(2) << "\n";
            } else {
                print_questions(out, r);
            }
        } else if (evaluate->parsed()) {
            auto s = engine.evaluate(request_id, metrics != "judge", metrics != "pinc");
            if (eval_json) out << to_json(s).dump(2) << "\n";
            else print_evaluation(out, s);
        } else if (report->parsed()) {
            out << engine.report(ro);
        } else if (show->parsed()) {
            auto run = engine.runs().load(show_id);
            out << "request " << run.request_id << ": " << gen::to_string(run.status);
            if (!run.failed_stage.empty()) out << " at " << run.failed_stage << " (" << run.error << ")";
            out << "\nconcept " << run.request.concept_name << ", DOK " << run.request.level << ", "
                << prompt::display_name(run.request.mode) << ", model " << run.request.provider.model_id << "\n";
            if (run.status == gen::RunStatus::Done) {
                print_questions(out, gen::GenerationResult{run.request_id, engine.runs().questions(show_id)});
            }
        } else if (serve->parsed()) {
            ApiServer server(engine);
            auto bound = server.bind(host.empty() ? engine.config().server.host : host,
                                     port.value_or(engine.config().server.port));
            out << "listening on http://" << (host.empty() ? engine.config().server.host : host) << ":" << bound
                << std::endl;
            server.listen();
        }
        return 0;
    } catch (const Error& e) {
        err << "error [" << (e.stage().empty() ? "run" : e.stage()) << "/" << qgdok::to_string(e.code())
            << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error [run/Internal]: " << e.what() << "\n";
        return 1;
    }
}

} // namespace qgdok::service
