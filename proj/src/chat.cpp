#include "qgdok/genpipe.hpp"
#include "qgdok/util.hpp"

#include <array>
#include <thread>

namespace qgdok::gen {

using nlohmann::json;

namespace {

constexpr std::array<std::array<const char*, 5>, 4> kMockStems{{
    {"What is the definition of {c}?", "State the key formula associated with {c}.",
     "Identify the main property of {c}.", "Recall the standard notation used for {c}.",
     "Name one basic fact about {c}."},
    {"Apply {c} to compute a routine example.", "Organize the steps needed to solve a standard problem on {c}.",
     "Choose an appropriate method to evaluate an expression involving {c}.",
     "Classify the given examples using {c}.", "Compare two routine procedures that use {c}."},
    {"Justify why {c} holds in a non-routine case.", "Plan a strategy to prove a claim about {c}.",
     "Explain how you would decide whether {c} applies in an unfamiliar situation.",
     "Construct a counterexample related to {c} and defend it.", "Analyze an error in a solution that uses {c}."},
    {"Connect {c} with another concept and investigate a multi-step problem.",
     "Design an extended investigation that uses {c} across several topics.",
     "Synthesize results about {c} to solve a complex problem.",
     "Develop a generalization of {c} and test it on several cases.",
     "Relate {c} to an application and model it in multiple steps."},
}};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string slot(const PromptBundle& p, const std::string& name, std::string fallback = {}) {
    auto it = p.filled_slots.find(name);
    return it == p.filled_slots.end() ? fallback : it->second;
}

// A window of raw reference words, skipping the "[n] (chunk id)" headers.
std::string reference_snippet(const std::string& references, std::size_t item) {
    std::vector<std::string> words;
    std::size_t pos = 0;
    while (pos < references.size()) {
        auto nl = references.find('\n', pos);
        auto line = references.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? references.size() : nl + 1;
        if (line.starts_with("[") && line.find("(chunk ") != std::string::npos) continue;
        for (const auto& t : corpus::tokenize(line)) words.push_back(t);
    }
    if (words.empty()) return {};
    constexpr std::size_t kWidth = 10;
    std::size_t start = (item * 7) % words.size();
    std::string out;
    for (std::size_t i = 0; i < std::min(kWidth, words.size()); ++i) {
        if (i) out.push_back(' ');
        out += words[(start + i) % words.size()];
    }
    return out;
}

std::string mock_generation(const PromptBundle& p) {
    const std::string concept_name = slot(p, "concept", "the concept");
    int level = std::clamp(std::stoi(slot(p, "level", "1")), 1, 4);
    int count = std::max(1, std::stoi(slot(p, "count", "5")));
    const std::string refs = slot(p, "references");
    json arr = json::array();
    for (int i = 0; i < count; ++i) {
        const auto& stems = kMockStems[static_cast<std::size_t>(level - 1)];
        std::string q = replace_all(stems[static_cast<std::size_t>(i) % stems.size()], "{c}", concept_name);
        if (i >= static_cast<int>(stems.size())) q += " (variant " + std::to_string(i / stems.size() + 1) + ")";
        if (!refs.empty()) q += " Base your work on: \"" + reference_snippet(refs, static_cast<std::size_t>(i)) + "\".";
        std::string a = "A level-" + std::to_string(level) + " answer on " + concept_name + " for item " +
                        std::to_string(i + 1) + ".";
        arr.push_back({{"question", q}, {"answer", a}});
    }
    return arr.dump(2);
}

std::string mock_scenario(const PromptBundle& p) {
    const std::string topic = slot(p, "topic", "the topic");
    int count = std::max(1, std::stoi(slot(p, "count", "5")));
    std::string out = "Here are the questions.\n\n";
    for (int i = 1; i <= count; ++i) {
        out += std::to_string(i) + ". Comprehension question " + std::to_string(i) + " about " + topic + "?\n";
        out += "Answer: Answer " + std::to_string(i) + " about " + topic + ".\n\n";
    }
    return out;
}

std::string mock_judge(const PromptBundle& p) {
    auto h = util::fnv1a64(p.hash());
    int score = 2 + static_cast<int>(h % 4);
    return "1. The context and question were read.\n2. The criterion was checked against the question.\n"
           "3. Deterministic mock assessment.\nScore: " +
           std::to_string(score);
}

bool mentions_content_filter(const std::string& body) {
    return body.find("content_filter") != std::string::npos || body.find("content_policy") != std::string::npos;
}

} // namespace

MockChatProvider::MockChatProvider(ProviderConfig cfg, std::map<std::string, std::string> fixtures)
    : ChatProvider(std::move(cfg)), fixtures_(std::move(fixtures)) {}

void MockChatProvider::add_fixture(const std::string& prompt_hash, std::string text) {
    std::lock_guard lock(mu_);
    fixtures_[prompt_hash] = std::move(text);
}

void MockChatProvider::load_fixtures(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) return;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".txt") add_fixture(entry.path().stem().string(), util::read_file(entry.path()));
    }
}

std::string MockChatProvider::complete(const PromptBundle& prompt, CallLog* log) {
    if (cfg_.mock_latency.count() > 0) std::this_thread::sleep_for(cfg_.mock_latency);
    std::string text;
    bool found = false;
    {
        std::lock_guard lock(mu_);
        if (auto it = fixtures_.find(prompt.hash()); it != fixtures_.end()) {
            text = it->second;
            found = true;
        }
    }
    if (!found) {
        if (prompt.template_id.starts_with("generation.")) text = mock_generation(prompt);
        else if (prompt.template_id == "scenario") text = mock_scenario(prompt);
        else if (prompt.template_id.starts_with("judge.")) text = mock_judge(prompt);
        else text = prompt.user_text;
    }
    if (log) {
        log->provider_id = cfg_.provider_id;
        log->model_id = cfg_.model_id;
        log->url = "mock://" + cfg_.model_id;
        log->request_body = json{{"template_id", prompt.template_id}, {"prompt_hash", prompt.hash()}}.dump();
        log->attempts.push_back({1, 200, {}, cfg_.mock_latency.count()});
        log->response_body = text;
        log->text = text;
    }
    return text;
}

HttpChatProvider::HttpChatProvider(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport, SleepFn sleep)
    : ChatProvider(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {}

std::string HttpChatProvider::complete(const PromptBundle& prompt, CallLog* log) {
    json body = {{"model", cfg_.model_id},
                 {"messages",
                  json::array({{{"role", "system"}, {"content", prompt.system_text}},
                               {{"role", "user"}, {"content", prompt.user_text}}})},
                 {"max_tokens", cfg_.max_output_tokens}};
    if (cfg_.temperature) body["temperature"] = *cfg_.temperature;

    HeaderMap headers;
    if (auto key = cfg_.api_key(); !key.empty()) headers["Authorization"] = "Bearer " + key;
    auto res = post_with_retry(*transport_, cfg_, cfg_.endpoint, headers, body.dump(), log, sleep_);

    if (res.status != 200) {
        if ((res.status == 400 || res.status == 403) && mentions_content_filter(res.body)) {
            throw Error(ErrorCode::ContentBlocked, cfg_.provider_id + " refused the prompt (content policy)");
        }
        throw Error(ErrorCode::ProviderUnavailable, cfg_.provider_id + " returned HTTP " + std::to_string(res.status));
    }
    std::string text;
    try {
        auto j = json::parse(res.body);
        const auto& choice = j.at("choices").at(0);
        if (choice.value("finish_reason", "") == "content_filter") {
            throw Error(ErrorCode::ContentBlocked, cfg_.provider_id + " blocked the completion (content_filter)");
        }
        const auto& msg = choice.at("message");
        if (msg.contains("refusal") && msg["refusal"].is_string() &&
            (!msg.contains("content") || msg["content"].is_null())) {
            throw Error(ErrorCode::ContentBlocked, cfg_.provider_id + " refused: " + msg["refusal"].get<std::string>());
        }
        text = msg.at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, cfg_.provider_id + " returned a malformed completion: " + e.what());
    }
    if (log) log->text = text;
    return text;
}

std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg, std::shared_ptr<HttpTransport> transport) {
    if (cfg.kind == "mock") return std::make_shared<MockChatProvider>(cfg);
    if (cfg.kind == "openai") {
        return std::make_shared<HttpChatProvider>(cfg, transport ? std::move(transport) : make_default_transport());
    }
    throw Error(ErrorCode::InvalidConfig, "unknown provider kind: " + cfg.kind);
}

std::string complete(const PromptBundle& prompt, ChatProvider& provider, CallLog* log, ProviderBudget* budget) {
    if (prompt.user_text.empty() && prompt.system_text.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty prompt");
    }
    std::optional<ProviderBudget::Lease> lease;
    if (budget) lease.emplace(*budget);
    return provider.complete(prompt, log);
}

} // namespace qgdok::gen
