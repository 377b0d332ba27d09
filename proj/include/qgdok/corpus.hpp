#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace qgdok::corpus {

enum class DocumentKind { Textbook, Tutorial, PracticeProblems, Notes, Syllabus };

std::string_view to_string(DocumentKind kind) noexcept;
std::optional<DocumentKind> parse_kind(std::string_view name) noexcept;

/// A normalized token plus the byte range of the whitespace-delimited word
/// it came from in the original text.
struct Token {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Lowercases ASCII letters, strips sentence punctuation and brackets from
/// both ends of each whitespace-delimited word and drops words that become
/// empty. Operator characters such as "+", "=", "^" are kept.
std::vector<Token> tokenize_with_offsets(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

struct SourceDocument {
    std::string doc_id;
    std::string title;
    std::string body;
    DocumentKind kind = DocumentKind::Notes;
    std::string ingested_at;
};

struct DocumentChunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t token_start = 0;
    std::size_t token_end = 0; // exclusive
    std::string text;
    std::size_t ordinal = 0;
};

struct ChunkingConfig {
    std::size_t window_tokens = 256;
    std::size_t stride_tokens = 192;

    std::size_t overlap() const noexcept { return window_tokens - stride_tokens; }
    void validate() const;
};

/// Token spans [start, end) of the sliding windows over `token_count` tokens.
/// Throws EmptyDocument when token_count is zero.
std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t token_count, const ChunkingConfig& cfg);

std::vector<DocumentChunk> chunk_document(const SourceDocument& doc, const ChunkingConfig& cfg);

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal);

/// Document store backed by `<dir>/documents.jsonl` and `<dir>/chunks.jsonl`.
/// One writer at a time; any number of concurrent readers.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::filesystem::path dir);

    /// Assigns a fresh doc_id, persists and returns the document. A repeated
    /// title is accepted; `duplicate_title` (if given) reports it.
    SourceDocument ingest_document(std::string title, std::string body, DocumentKind kind,
                                   bool* duplicate_title = nullptr);

    /// Bulk ingest from JSONL lines of {"title","body","kind"}.
    std::vector<SourceDocument> ingest_jsonl(std::string_view jsonl);

    std::vector<SourceDocument> documents() const;
    std::optional<SourceDocument> find(std::string_view doc_id) const;
    std::size_t size() const;

    /// Re-chunks every document and atomically rewrites the chunk store.
    std::vector<DocumentChunk> rebuild_chunks(const ChunkingConfig& cfg);
    std::vector<DocumentChunk> chunks() const;
    std::optional<DocumentChunk> find_chunk(std::string_view chunk_id) const;

private:
    void load();

    std::filesystem::path dir_;
    mutable std::shared_mutex mu_;
    std::vector<SourceDocument> docs_;
    std::vector<DocumentChunk> chunks_;
    std::size_t next_id_ = 1;
};

} // namespace qgdok::corpus
