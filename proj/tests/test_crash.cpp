#include "qgdok/util.hpp"
#include "service_support.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <csignal>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

using namespace qgdok;
using namespace qgdok::service;
using namespace std::chrono_literals;

namespace {

// Runs `body` in a child process, waits until `ready` holds (or 10 s pass)
// and then kills the child with SIGKILL.
bool kill_when(const std::function<void()>& body, const std::function<bool()>& ready) {
    pid_t pid = fork();
    if (pid == 0) {
        try {
            body();
        } catch (...) {
        }
        _exit(0);
    }
    auto deadline = std::chrono::steady_clock::now() + 10s;
    bool hit = false;
    while (std::chrono::steady_clock::now() < deadline) {
        if (ready()) {
            hit = true;
            break;
        }
        std::this_thread::sleep_for(2ms);
    }
    kill(pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    return hit && WIFSIGNALED(status);
}

AppConfig slow_config(const std::filesystem::path& dir, const std::string& role, int latency_ms) {
    auto cfg = test::mock_config(dir);
    cfg.providers[cfg.roles[role]].mock_latency = std::chrono::milliseconds(latency_ms);
    return cfg;
}

} // namespace

TEST(Crash, KillDuringGenerationLeavesPendingRun) {
    test::TempDir dir;
    {
        Engine seed(test::mock_config(dir.path()));
        test::ingest_fixture_docs(seed);
        seed.build_index();
    }
    auto runs_dir = dir / "runs";
    bool killed = kill_when(
        [&] {
            Engine engine(slow_config(dir.path(), "generator", 5000));
            GenerateParams p;
            p.concept_name = "limits";
            p.level = 3;
            p.mode = prompt::GenerationMode::DokRag;
            engine.generate(p);
        },
        [&] { return std::filesystem::exists(runs_dir) && !gen::RunStore(runs_dir).list().empty(); });
    ASSERT_TRUE(killed);

    Engine reopened(test::mock_config(dir.path()));
    auto ids = reopened.runs().list();
    ASSERT_EQ(ids.size(), 1u);
    auto rec = reopened.runs().load(ids[0]);
    EXPECT_TRUE(rec.status == gen::RunStatus::Pending || rec.status == gen::RunStatus::Failed);
    EXPECT_TRUE(reopened.runs().questions(ids[0]).empty());
    EXPECT_THROW(reopened.evaluate(ids[0], true, true), Error);

    // The store keeps working after the crash.
    GenerateParams p;
    p.concept_name = "limits";
    p.level = 1;
    auto r = reopened.generate(p);
    EXPECT_EQ(reopened.runs().load(r.request_id).status, gen::RunStatus::Done);
}

TEST(Crash, KillDuringIndexBuildKeepsPreviousIndex) {
    test::TempDir dir;
    std::vector<retrieval::RetrievalHit> before;
    {
        Engine seed(test::mock_config(dir.path()));
        seed.ingest("Limits", test::fixture_docs()[0].body, corpus::DocumentKind::Textbook);
        seed.build_index();
        before = retrieval::search_topk("limit", 3, *seed.index(), seed.embedder());
    }
    auto index_file = dir / "index" / "index.bin";
    auto stamp = std::filesystem::last_write_time(index_file);
    auto started = dir / "started";
    bool killed = kill_when(
        [&] {
            auto cfg = slow_config(dir.path(), "embedder", 5000);
            Engine engine(cfg);
            engine.ingest("Derivatives", test::fixture_docs()[1].body, corpus::DocumentKind::Tutorial);
            util::atomic_write(started, "1");
            engine.build_index();
        },
        [&] { return std::filesystem::exists(started); });
    ASSERT_TRUE(killed);
    std::this_thread::sleep_for(20ms);
    EXPECT_EQ(std::filesystem::last_write_time(index_file), stamp);

    Engine reopened(test::mock_config(dir.path()));
    EXPECT_EQ(reopened.corpus().size(), 2u);
    ASSERT_TRUE(reopened.index());
    EXPECT_EQ(retrieval::search_topk("limit", 3, *reopened.index(), reopened.embedder()), before);
    auto rebuilt = reopened.build_index();
    EXPECT_EQ(rebuilt.documents, 2u);
}

TEST(Crash, KillDuringEvaluationKeepsStoreReadable) {
    test::TempDir dir;
    std::string rid;
    {
        Engine seed(test::mock_config(dir.path()));
        GenerateParams p;
        p.concept_name = "limits";
        p.level = 2;
        rid = seed.generate(p).request_id;
    }
    auto evals = dir / "evaluations.jsonl";
    bool killed = kill_when(
        [&] {
            Engine engine(slow_config(dir.path(), "judge", 40));
            engine.evaluate(rid, true, true);
        },
        [&] { return std::filesystem::exists(evals) && std::filesystem::file_size(evals) > 0; });
    ASSERT_TRUE(killed);

    Engine reopened(test::mock_config(dir.path()));
    auto partial = reopened.evaluations().records().size();
    EXPECT_GT(partial, 0u);
    EXPECT_LT(partial, 20u);
    auto s = reopened.evaluate(rid, true, true);
    EXPECT_TRUE(s.errors.empty());
    EXPECT_EQ(reopened.evaluations().records().size(), partial + 20);
}
