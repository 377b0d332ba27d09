#include "qgdok/error.hpp"
#include "qgdok/genpipe.hpp"
#include "qgdok/provider.hpp"
#include "qgdok/retrieval.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace qgdok;
using test::ScriptedTransport;
using Kind = TransportError::Kind;

namespace {

ProviderConfig live_cfg() {
    ProviderConfig c;
    c.provider_id = "remote";
    c.model_id = "gpt-test";
    c.kind = "openai";
    c.endpoint = "http://example.invalid/v1/chat/completions";
    c.retry.max_attempts = 3;
    c.retry.backoff_base = std::chrono::milliseconds(500);
    return c;
}

struct SleepRecorder {
    std::vector<long long> delays;
    SleepFn fn() {
        return [this](std::chrono::milliseconds d) { delays.push_back(d.count()); };
    }
};

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::IoError;
}

prompt::PromptBundle sample_prompt() {
    prompt::PromptBundle b;
    b.template_id = "t";
    b.system_text = "sys";
    b.user_text = "user";
    return b;
}

} // namespace

TEST(Retry, BackoffDoubles) {
    RetryPolicy p;
    EXPECT_EQ(p.delay_after(1).count(), 500);
    EXPECT_EQ(p.delay_after(2).count(), 1000);
    EXPECT_EQ(p.delay_after(3).count(), 2000);
}

TEST(Retry, RecoversAfterRateLimits) {
    ScriptedTransport t({HttpResponse{429, "slow down"}, HttpResponse{503, ""}, HttpResponse{200, "ok"}});
    SleepRecorder sleeps;
    CallLog log;
    auto res = post_with_retry(t, live_cfg(), "http://x/y", {}, "{}", &log, sleeps.fn());
    EXPECT_EQ(res.status, 200);
    EXPECT_EQ(res.body, "ok");
    EXPECT_EQ(sleeps.delays, (std::vector<long long>{500, 1000}));
    ASSERT_EQ(log.attempts.size(), 3u);
    EXPECT_EQ(log.attempts[0].status, 429);
    EXPECT_EQ(log.attempts[2].status, 200);
}

TEST(Retry, NonRetryableStatusReturnedImmediately) {
    ScriptedTransport t({HttpResponse{400, "bad"}, HttpResponse{200, "never"}});
    SleepRecorder sleeps;
    auto res = post_with_retry(t, live_cfg(), "u", {}, "{}", nullptr, sleeps.fn());
    EXPECT_EQ(res.status, 400);
    EXPECT_TRUE(sleeps.delays.empty());
    EXPECT_EQ(t.seen.size(), 1u);
}

TEST(Retry, ExhaustedGivesProviderUnavailable) {
    ScriptedTransport t({Kind::Connection, HttpResponse{500, ""}, HttpResponse{502, ""}});
    SleepRecorder sleeps;
    EXPECT_EQ(code_of([&] { post_with_retry(t, live_cfg(), "u", {}, "{}", nullptr, sleeps.fn()); }),
              ErrorCode::ProviderUnavailable);
    EXPECT_EQ(t.seen.size(), 3u);
}

TEST(Retry, TimeoutsGiveTimeoutExceeded) {
    ScriptedTransport t({Kind::Timeout, Kind::Timeout, Kind::Timeout});
    SleepRecorder sleeps;
    EXPECT_EQ(code_of([&] { post_with_retry(t, live_cfg(), "u", {}, "{}", nullptr, sleeps.fn()); }),
              ErrorCode::TimeoutExceeded);
}

TEST(Retry, SecretsAreRedactedInLogs) {
    ::setenv("QGDOK_TEST_SECRET", "sk-very-secret-123", 1);
    auto cfg = live_cfg();
    cfg.api_key_env = "QGDOK_TEST_SECRET";
    ScriptedTransport t({HttpResponse{200, "echo sk-very-secret-123"}});
    CallLog log;
    post_with_retry(t, cfg, "u", {{"Authorization", "Bearer sk-very-secret-123"}}, "{\"k\":\"sk-very-secret-123\"}",
                    &log, [](auto) {});
    EXPECT_EQ(t.seen[0].headers.at("Authorization"), "Bearer sk-very-secret-123");
    EXPECT_EQ(log.headers.at("Authorization").find("sk-very-secret-123"), std::string::npos);
    EXPECT_EQ(log.request_body.find("sk-very-secret-123"), std::string::npos);
    EXPECT_EQ(log.response_body.find("sk-very-secret-123"), std::string::npos);
    EXPECT_EQ(redact("abc", ""), "abc");
    ::unsetenv("QGDOK_TEST_SECRET");
}

TEST(ChatProvider, SendsOpenAiShapedRequest) {
    auto t = std::make_shared<ScriptedTransport>(std::vector<ScriptedTransport::Step>{HttpResponse{200, test::chat_reply("hi")}});
    auto cfg = live_cfg();
    gen::HttpChatProvider p(cfg, t, [](auto) {});
    CallLog log;
    EXPECT_EQ(p.complete(sample_prompt(), &log), "hi");
    auto body = nlohmann::json::parse(t->seen[0].body);
    EXPECT_EQ(body["model"], "gpt-test");
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["content"], "user");
    EXPECT_FALSE(body.contains("temperature"));
    EXPECT_EQ(log.text, "hi");

    cfg.temperature = 0.0;
    gen::HttpChatProvider judge(cfg, t, [](auto) {});
    t->push(HttpResponse{200, test::chat_reply("x")});
    judge.complete(sample_prompt(), nullptr);
    EXPECT_EQ(nlohmann::json::parse(t->seen[1].body)["temperature"], 0.0);
}

TEST(ChatProvider, ContentPolicyRefusalsAreContentBlocked) {
    auto t = std::make_shared<ScriptedTransport>();
    gen::HttpChatProvider p(live_cfg(), t, [](auto) {});
    t->push(HttpResponse{400, R"({"error":{"code":"content_filter","message":"blocked"}})"});
    EXPECT_EQ(code_of([&] { p.complete(sample_prompt(), nullptr); }), ErrorCode::ContentBlocked);
    t->push(HttpResponse{200, R"({"choices":[{"finish_reason":"content_filter","message":{"content":null}}]})"});
    EXPECT_EQ(code_of([&] { p.complete(sample_prompt(), nullptr); }), ErrorCode::ContentBlocked);
    t->push(HttpResponse{200, R"({"choices":[{"finish_reason":"stop","message":{"content":null,"refusal":"no"}}]})"});
    EXPECT_EQ(code_of([&] { p.complete(sample_prompt(), nullptr); }), ErrorCode::ContentBlocked);
    t->push(HttpResponse{401, "unauthorized"});
    EXPECT_EQ(code_of([&] { p.complete(sample_prompt(), nullptr); }), ErrorCode::ProviderUnavailable);
    t->push(HttpResponse{200, "not json"});
    EXPECT_EQ(code_of([&] { p.complete(sample_prompt(), nullptr); }), ErrorCode::ProviderUnavailable);
}

TEST(EmbeddingProvider, ParsesEmbeddingsResponse) {
    auto t = std::make_shared<ScriptedTransport>(std::vector<ScriptedTransport::Step>{
        HttpResponse{200, R"({"data":[{"embedding":[0.5,0.5,0.0]}]})"}});
    ProviderConfig cfg = live_cfg();
    cfg.dim = 3;
    retrieval::HttpEmbeddingBackend backend(cfg, t, [](auto) {});
    auto v = backend.embed("text", nullptr);
    EXPECT_EQ(v, (std::vector<float>{0.5f, 0.5f, 0.0f}));
    auto body = nlohmann::json::parse(t->seen[0].body);
    EXPECT_EQ(body["input"], "text");
    EXPECT_EQ(body["model"], "gpt-test");
}

TEST(ProviderBudget, CapsConcurrentCalls) {
    ProviderBudget budget(2);
    std::atomic<int> active{0}, peak{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            ProviderBudget::Lease lease(budget);
            int now = ++active;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
            --active;
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}

TEST(DefaultTransport, RetriesAgainstLocalServer) {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int n = ++hits;
        if (n <= 2) {
            res.status = 429;
            res.set_content("rate limited", "text/plain");
        } else {
            res.set_content(test::chat_reply("served"), "application/json");
        }
    });
    int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto cfg = live_cfg();
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.retry.backoff_base = std::chrono::milliseconds(1);
    auto provider = gen::make_chat_provider(cfg);
    CallLog log;
    EXPECT_EQ(provider->complete(sample_prompt(), &log), "served");
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(log.attempts.size(), 3u);

    server.stop();
    th.join();

    // Nothing listening any more: connection failures exhaust the retries.
    EXPECT_EQ(code_of([&] { provider->complete(sample_prompt(), nullptr); }), ErrorCode::ProviderUnavailable);
}
