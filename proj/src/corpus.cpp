#include "qgdok/corpus.hpp"
#include "qgdok/error.hpp"
#include "qgdok/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace qgdok::corpus {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_edge_punct(unsigned char c) noexcept {
    switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '"': case '\'': case '`':
    case '(': case ')': case '[': case ']': case '{': case '}':
        return true;
    default:
        return false;
    }
}

json to_json(const SourceDocument& d) {
    return {{"schema_version", kSchemaVersion}, {"doc_id", d.doc_id},   {"title", d.title},
            {"body", d.body},                   {"kind", to_string(d.kind)}, {"ingested_at", d.ingested_at}};
}

json to_json(const DocumentChunk& c) {
    return {{"schema_version", kSchemaVersion}, {"chunk_id", c.chunk_id},       {"doc_id", c.doc_id},
            {"token_start", c.token_start},     {"token_end", c.token_end},     {"text", c.text},
            {"ordinal", c.ordinal}};
}

void check_schema(const json& j, const std::string& what) {
    if (j.value("schema_version", 0) != kSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionMismatch, what + ": unsupported schema_version");
    }
}

} // namespace

std::string_view to_string(DocumentKind kind) noexcept {
    switch (kind) {
    case DocumentKind::Textbook: return "textbook";
    case DocumentKind::Tutorial: return "tutorial";
    case DocumentKind::PracticeProblems: return "practice_problems";
    case DocumentKind::Notes: return "notes";
    case DocumentKind::Syllabus: return "syllabus";
    }
    return "notes";
}

std::optional<DocumentKind> parse_kind(std::string_view name) noexcept {
    for (auto k : {DocumentKind::Textbook, DocumentKind::Tutorial, DocumentKind::PracticeProblems,
                   DocumentKind::Notes, DocumentKind::Syllabus}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::vector<Token> tokenize_with_offsets(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        std::size_t word_begin = i;
        while (i < n && !is_space(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t word_end = i;

        std::size_t b = word_begin;
        std::size_t e = word_end;
        while (b < e && is_edge_punct(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && is_edge_punct(static_cast<unsigned char>(text[e - 1]))) --e;
        if (b == e) continue;

        Token tok;
        tok.text.assign(text.substr(b, e - b));
        for (auto& c : tok.text) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        }
        tok.begin = word_begin;
        tok.end = word_end;
        out.push_back(std::move(tok));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    auto toks = tokenize_with_offsets(text);
    std::vector<std::string> out;
    out.reserve(toks.size());
    for (auto& t : toks) out.push_back(std::move(t.text));
    return out;
}

void ChunkingConfig::validate() const {
    if (window_tokens == 0) throw Error(ErrorCode::InvalidConfig, "window_tokens must be > 0");
    if (stride_tokens == 0 || stride_tokens > window_tokens) {
        throw Error(ErrorCode::InvalidConfig, "stride_tokens must satisfy 0 < stride <= window");
    }
}

std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t token_count, const ChunkingConfig& cfg) {
    cfg.validate();
    if (token_count == 0) throw Error(ErrorCode::EmptyDocument, "document has no tokens");
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t start = 0;; start += cfg.stride_tokens) {
        std::size_t end = std::min(start + cfg.window_tokens, token_count);
        spans.emplace_back(start, end);
        if (end == token_count) break;
    }
    return spans;
}

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06zu", ordinal);
    return std::string(doc_id) + "#" + buf;
}

std::vector<DocumentChunk> chunk_document(const SourceDocument& doc, const ChunkingConfig& cfg) {
    auto tokens = tokenize_with_offsets(doc.body);
    if (tokens.empty()) throw Error(ErrorCode::EmptyDocument, "document " + doc.doc_id + " has no tokens");
    auto spans = window_spans(tokens.size(), cfg);

    std::vector<DocumentChunk> chunks;
    chunks.reserve(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        auto [start, end] = spans[i];
        DocumentChunk c;
        c.chunk_id = make_chunk_id(doc.doc_id, i);
        c.doc_id = doc.doc_id;
        c.token_start = start;
        c.token_end = end;
        c.ordinal = i;
        std::size_t cb = tokens[start].begin;
        std::size_t ce = tokens[end - 1].end;
        c.text = doc.body.substr(cb, ce - cb);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

Corpus::Corpus(std::filesystem::path dir) : dir_(std::move(dir)) { load(); }

void Corpus::load() {
    if (dir_.empty()) return;
    for (const auto& line : util::read_lines(dir_ / "documents.jsonl")) {
        auto j = json::parse(line);
        check_schema(j, "documents.jsonl");
        SourceDocument d;
        d.doc_id = j.at("doc_id").get<std::string>();
        d.title = j.at("title").get<std::string>();
        d.body = j.at("body").get<std::string>();
        d.kind = parse_kind(j.at("kind").get<std::string>()).value_or(DocumentKind::Notes);
        d.ingested_at = j.value("ingested_at", "");
        docs_.push_back(std::move(d));
    }
    for (const auto& line : util::read_lines(dir_ / "chunks.jsonl")) {
        auto j = json::parse(line);
        check_schema(j, "chunks.jsonl");
        DocumentChunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.token_start = j.at("token_start").get<std::size_t>();
        c.token_end = j.at("token_end").get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        c.ordinal = j.at("ordinal").get<std::size_t>();
        chunks_.push_back(std::move(c));
    }
    next_id_ = docs_.size() + 1;
}

SourceDocument Corpus::ingest_document(std::string title, std::string body, DocumentKind kind,
                                       bool* duplicate_title) {
    if (util::trim(body).empty()) throw Error(ErrorCode::EmptyDocument, "document body is empty");

    std::unique_lock lock(mu_);
    bool dup = std::any_of(docs_.begin(), docs_.end(), [&](const auto& d) { return d.title == title; });
    if (duplicate_title) *duplicate_title = dup;

    char id[24];
    std::snprintf(id, sizeof id, "doc-%06zu", next_id_);
    SourceDocument doc{id, std::move(title), std::move(body), kind, util::utc_timestamp()};
    if (!dir_.empty()) util::append_line(dir_ / "documents.jsonl", to_json(doc).dump());
    ++next_id_;
    docs_.push_back(doc);
    return doc;
}

std::vector<SourceDocument> Corpus::ingest_jsonl(std::string_view jsonl) {
    std::vector<SourceDocument> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto line = util::trim(jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        ++line_no;
        pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, "jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        auto kind_name = j.value("kind", std::string("notes"));
        auto kind = parse_kind(kind_name);
        if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown document kind: " + kind_name);
        out.push_back(ingest_document(j.value("title", ""), j.value("body", ""), *kind));
    }
    return out;
}

std::vector<SourceDocument> Corpus::documents() const {
    std::shared_lock lock(mu_);
    return docs_;
}

std::optional<SourceDocument> Corpus::find(std::string_view doc_id) const {
    std::shared_lock lock(mu_);
    for (const auto& d : docs_) {
        if (d.doc_id == doc_id) return d;
    }
    return std::nullopt;
}

std::size_t Corpus::size() const {
    std::shared_lock lock(mu_);
    return docs_.size();
}

std::vector<DocumentChunk> Corpus::rebuild_chunks(const ChunkingConfig& cfg) {
    cfg.validate();
    std::unique_lock lock(mu_);
    std::vector<DocumentChunk> all;
    for (const auto& d : docs_) {
        auto cs = chunk_document(d, cfg);
        all.insert(all.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
    }
    if (!dir_.empty()) {
        std::string content;
        for (const auto& c : all) {
            content += to_json(c).dump();
            content += '\n';
        }
        util::atomic_write(dir_ / "chunks.jsonl", content);
    }
    chunks_ = all;
    return all;
}

std::vector<DocumentChunk> Corpus::chunks() const {
    std::shared_lock lock(mu_);
    return chunks_;
}

std::optional<DocumentChunk> Corpus::find_chunk(std::string_view chunk_id) const {
    std::shared_lock lock(mu_);
    for (const auto& c : chunks_) {
        if (c.chunk_id == chunk_id) return c;
    }
    return std::nullopt;
}

} // namespace qgdok::corpus
