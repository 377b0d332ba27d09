#include "qgdok/service.hpp"
#include "qgdok/util.hpp"

#include <cstdlib>

namespace qgdok::service {

using nlohmann::json;

std::optional<std::string> process_env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
}

void AppConfig::validate() const {
    chunking.validate();
    if (k_retrieve < 1) throw Error(ErrorCode::InvalidConfig, "k_retrieve must be >= 1");
    if (provider_budget < 1) throw Error(ErrorCode::InvalidConfig, "provider_budget must be >= 1");
    if (judge_samples < 1) throw Error(ErrorCode::InvalidConfig, "judge_samples must be >= 1");
    for (const char* r : {"embedder", "generator", "judge"}) {
        auto it = roles.find(r);
        if (it == roles.end()) throw Error(ErrorCode::InvalidConfig, std::string("no provider assigned to role ") + r);
        if (!providers.count(it->second)) {
            throw Error(ErrorCode::InvalidConfig, std::string("role ") + r + " names undefined provider " + it->second);
        }
    }
    for (const auto& [name, p] : providers) {
        if (p.kind != "mock" && p.kind != "openai") {
            throw Error(ErrorCode::InvalidConfig, "provider " + name + " has unknown kind " + p.kind);
        }
        if (p.temperature && *p.temperature < 0) throw Error(ErrorCode::InvalidConfig, "provider " + name + ": temperature < 0");
    }
}

const ProviderConfig& AppConfig::role(const std::string& name) const {
    auto it = roles.find(name);
    if (it == roles.end()) throw Error(ErrorCode::InvalidConfig, "no provider assigned to role " + name);
    auto p = providers.find(it->second);
    if (p == providers.end()) throw Error(ErrorCode::InvalidConfig, "role " + name + " names undefined provider " + it->second);
    return p->second;
}

AppConfig default_config() {
    AppConfig cfg;

    ProviderConfig embed;
    embed.provider_id = "openai-embeddings";
    embed.model_id = "text-embedding-ada-002";
    embed.kind = "openai";
    embed.endpoint = "https://api.openai.com/v1/embeddings";
    embed.api_key_env = "QGDOK_EMBED_KEY";
    embed.dim = 1536;

    ProviderConfig generator;
    generator.provider_id = "openai-chat";
    generator.model_id = "gpt-4o";
    generator.kind = "openai";
    generator.endpoint = "https://api.openai.com/v1/chat/completions";
    generator.api_key_env = "QGDOK_LLM_KEY";

    ProviderConfig judge = generator;
    judge.provider_id = "openai-judge";
    judge.temperature = 0.0;

    cfg.providers = {{"embedder", embed}, {"generator", generator}, {"judge", judge}};
    cfg.roles = {{"embedder", "embedder"}, {"generator", "generator"}, {"judge", "judge"}};
    return cfg;
}

AppConfig merge_config_json(AppConfig cfg, const json& doc) {
    if (doc.contains("data_dir")) cfg.data_dir = doc["data_dir"].get<std::string>();
    if (doc.contains("chunking")) {
        cfg.chunking.window_tokens = doc["chunking"].value("window_tokens", cfg.chunking.window_tokens);
        cfg.chunking.stride_tokens = doc["chunking"].value("stride_tokens", cfg.chunking.stride_tokens);
    }
    cfg.k_retrieve = doc.value("k_retrieve", cfg.k_retrieve);
    cfg.mock_mode = doc.value("mock_mode", cfg.mock_mode);
    cfg.provider_budget = doc.value("provider_budget", cfg.provider_budget);
    cfg.index_parallelism = doc.value("index_parallelism", cfg.index_parallelism);
    cfg.chunk_token_budget = doc.value("chunk_token_budget", cfg.chunk_token_budget);
    cfg.judge_samples = doc.value("judge_samples", cfg.judge_samples);
    cfg.pairwise_pinc = doc.value("pairwise_pinc", cfg.pairwise_pinc);
    cfg.static_dir = doc.value("static_dir", cfg.static_dir);
    if (doc.contains("server")) {
        cfg.server.host = doc["server"].value("host", cfg.server.host);
        cfg.server.port = doc["server"].value("port", cfg.server.port);
    }
    if (doc.contains("providers")) {
        for (const auto& [name, pj] : doc["providers"].items()) {
            json merged = cfg.providers.count(name) ? gen::provider_to_json(cfg.providers[name]) : json::object();
            merged.merge_patch(pj);
            cfg.providers[name] = gen::provider_from_json(merged);
        }
    }
    if (doc.contains("roles")) {
        for (const auto& [role, name] : doc["roles"].items()) cfg.roles[role] = name.get<std::string>();
    }
    return cfg;
}

void apply_mock_mode(AppConfig& cfg) {
    cfg.mock_mode = true;
    for (auto& [name, p] : cfg.providers) {
        p.kind = "mock";
        p.provider_id = "mock";
        if (cfg.roles.count("embedder") && cfg.roles["embedder"] == name) {
            p.model_id = "mock-fnv1a-256";
            p.dim = retrieval::kMockDim;
        } else if (cfg.roles.count("generator") && cfg.roles["generator"] == name) {
            p.model_id = "mock-generator";
        } else if (cfg.roles.count("judge") && cfg.roles["judge"] == name) {
            p.model_id = "mock-judge";
        }
    }
}

AppConfig load_config(const std::optional<std::filesystem::path>& config_file, const EnvFn& env) {
    auto get = [&](const char* name) { return env ? env(name) : std::nullopt; };
    AppConfig cfg = default_config();
    if (auto dir = get("QGDOK_DATA_DIR")) cfg.data_dir = *dir;

    std::filesystem::path file = config_file ? *config_file : cfg.data_dir / "qgdok.json";
    if (config_file && !std::filesystem::exists(file)) {
        throw Error(ErrorCode::NotFound, "config file not found: " + file.string());
    }
    if (std::filesystem::exists(file)) {
        json doc;
        try {
            doc = json::parse(util::read_file(file));
            cfg = merge_config_json(std::move(cfg), doc);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, "cannot read " + file.string() + ": " + e.what());
        }
    }

    // Environment wins over the file.
    if (auto dir = get("QGDOK_DATA_DIR")) cfg.data_dir = *dir;
    if (auto url = get("QGDOK_EMBED_URL")) {
        auto& p = cfg.providers[cfg.roles["embedder"]];
        p.endpoint = *url;
        p.kind = "openai";
    }
    if (auto url = get("QGDOK_LLM_URL")) {
        for (const char* r : {"generator", "judge"}) {
            auto& p = cfg.providers[cfg.roles[r]];
            p.endpoint = *url;
            p.kind = "openai";
        }
    }
    if (auto mock = get("QGDOK_MOCK"); mock && (*mock == "1" || *mock == "true")) cfg.mock_mode = true;
    if (cfg.mock_mode) apply_mock_mode(cfg);
    cfg.validate();
    return cfg;
}

} // namespace qgdok::service
