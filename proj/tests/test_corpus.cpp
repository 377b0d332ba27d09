#include "qgdok/corpus.hpp"
#include "qgdok/error.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>

using namespace qgdok;
using namespace qgdok::corpus;
using Spans = std::vector<std::pair<std::size_t, std::size_t>>;

TEST(Tokenize, LowercasesAndStripsEdgePunctuation) {
    EXPECT_EQ(tokenize("Hello, world!"), (std::vector<std::string>{"hello", "world"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize("  \n\t ").empty());
}

TEST(Tokenize, KeepsInternalSymbolsAndOperators) {
    EXPECT_EQ(tokenize("x^2 + y = 3"), (std::vector<std::string>{"x^2", "+", "y", "=", "3"}));
    EXPECT_EQ(tokenize("f(x), (a.b) \"quoted\""), (std::vector<std::string>{"f(x", "a.b", "quoted"}));
}

TEST(Tokenize, DropsPurePunctuationWords) {
    EXPECT_EQ(tokenize("a -- ... , b"), (std::vector<std::string>{"a", "--", "b"}));
    EXPECT_EQ(tokenize("a ... , b"), (std::vector<std::string>{"a", "b"}));
}

TEST(Tokenize, OffsetsCoverRawWords) {
    std::string text = "  Limits, (one-sided)!";
    auto toks = tokenize_with_offsets(text);
    ASSERT_EQ(toks.size(), 2u);
    EXPECT_EQ(text.substr(toks[0].begin, toks[0].end - toks[0].begin), "Limits,");
    EXPECT_EQ(text.substr(toks[1].begin, toks[1].end - toks[1].begin), "(one-sided)!");
    EXPECT_EQ(toks[1].text, "one-sided");
}

TEST(WindowSpans, DocumentedExamples) {
    EXPECT_EQ(window_spans(4, {4, 3}), (Spans{{0, 4}}));
    EXPECT_EQ(window_spans(10, {4, 3}), (Spans{{0, 4}, {3, 7}, {6, 10}}));
    EXPECT_EQ(window_spans(10, {12, 12}), (Spans{{0, 10}}));
}

TEST(WindowSpans, EmptyDocumentFails) {
    try {
        window_spans(0, {4, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDocument);
    }
}

TEST(WindowSpans, InvalidConfigRejected) {
    EXPECT_THROW(window_spans(10, {0, 1}), Error);
    EXPECT_THROW(window_spans(10, {4, 0}), Error);
    EXPECT_THROW(window_spans(10, {4, 5}), Error);
}

TEST(WindowSpans, CoverageWidthAndOverlapProperties) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> t_dist(1, 5000), w_dist(1, 600);
    for (int iter = 0; iter < 500; ++iter) {
        std::size_t T = t_dist(rng), W = w_dist(rng);
        std::size_t S = std::uniform_int_distribution<std::size_t>(1, W)(rng);
        auto spans = window_spans(T, {W, S});
        ASSERT_FALSE(spans.empty());
        EXPECT_EQ(spans.front().first, 0u);
        EXPECT_EQ(spans.back().second, T);
        for (std::size_t i = 0; i < spans.size(); ++i) {
            EXPECT_LT(spans[i].first, spans[i].second);
            EXPECT_LE(spans[i].second - spans[i].first, W);
            if (i + 1 < spans.size()) {
                EXPECT_LT(spans[i].first, spans[i + 1].first);
                EXPECT_LT(spans[i].second, T) << "emission must stop at the first chunk reaching T";
                EXPECT_EQ(spans[i].second - spans[i + 1].first, W - S);
            }
        }
        EXPECT_EQ(spans, window_spans(T, {W, S}));
    }
}

TEST(ChunkDocument, TextIsRawSpanOfTokens) {
    SourceDocument doc{"doc-000001", "t", "Alpha, beta gamma.\n\nDelta epsilon (zeta) eta!", DocumentKind::Notes, ""};
    auto chunks = chunk_document(doc, {3, 2});
    ASSERT_EQ(chunks.size(), 3u);
    EXPECT_EQ(chunks[0].text, "Alpha, beta gamma.");
    EXPECT_EQ(chunks[1].text, "gamma.\n\nDelta epsilon");
    EXPECT_EQ(chunks[2].text, "epsilon (zeta) eta!");
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        EXPECT_EQ(chunks[i].ordinal, i);
        EXPECT_EQ(chunks[i].doc_id, "doc-000001");
        EXPECT_EQ(chunks[i].chunk_id, make_chunk_id("doc-000001", i));
        auto toks = tokenize(chunks[i].text);
        EXPECT_EQ(toks.size(), chunks[i].token_end - chunks[i].token_start);
    }
}

TEST(Corpus, IngestAssignsFreshIdsAndAllowsDuplicateTitles) {
    Corpus c;
    bool dup = true;
    auto a = c.ingest_document("Compactness notes", "Every open cover has a finite subcover.", DocumentKind::Notes, &dup);
    EXPECT_FALSE(dup);
    auto b = c.ingest_document("Compactness notes", "Heine-Borel for closed bounded sets.", DocumentKind::Notes, &dup);
    EXPECT_TRUE(dup);
    EXPECT_NE(a.doc_id, b.doc_id);
    EXPECT_EQ(c.size(), 2u);
    EXPECT_FALSE(a.ingested_at.empty());
}

TEST(Corpus, BlankBodyIsEmptyDocument) {
    Corpus c;
    try {
        c.ingest_document("", "   ", DocumentKind::Notes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDocument);
    }
    EXPECT_EQ(c.size(), 0u);
}

TEST(Corpus, PersistsAndReloads) {
    test::TempDir dir;
    std::string id;
    {
        Corpus c(dir.path());
        id = c.ingest_document("Limits", "A limit is approached.", DocumentKind::Textbook).doc_id;
        c.ingest_jsonl(R"({"title":"Series","body":"Sum of terms.","kind":"tutorial"})"
                       "\n"
                       R"({"title":"Drill","body":"Compute 2+2.","kind":"practice_problems"})");
        c.rebuild_chunks({3, 2});
    }
    Corpus reopened(dir.path());
    EXPECT_EQ(reopened.size(), 3u);
    auto doc = reopened.find(id);
    ASSERT_TRUE(doc);
    EXPECT_EQ(doc->title, "Limits");
    EXPECT_EQ(doc->kind, DocumentKind::Textbook);
    EXPECT_EQ(reopened.chunks().size(), 4u);
    EXPECT_TRUE(reopened.find_chunk(make_chunk_id(id, 1)));
    auto fresh = reopened.ingest_document("More", "text here", DocumentKind::Notes);
    EXPECT_NE(fresh.doc_id, id);
    EXPECT_FALSE(reopened.find(fresh.doc_id + "x"));
}

TEST(Corpus, JsonlRejectsUnknownKind) {
    Corpus c;
    EXPECT_THROW(c.ingest_jsonl(R"({"title":"x","body":"y","kind":"video"})"), Error);
}

TEST(Corpus, SchemaVersionChecked) {
    test::TempDir dir;
    std::filesystem::create_directories(dir.path());
    std::ofstream(dir / "documents.jsonl")
        << R"({"schema_version":2,"doc_id":"doc-000001","title":"t","body":"b","kind":"notes","ingested_at":""})"
        << "\n";
    try {
        Corpus c(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaVersionMismatch);
    }
}

TEST(DocumentKind, RoundTrip) {
    for (auto name : {"textbook", "tutorial", "practice_problems", "notes", "syllabus"}) {
        auto k = parse_kind(name);
        ASSERT_TRUE(k);
        EXPECT_EQ(to_string(*k), name);
    }
    EXPECT_FALSE(parse_kind("video"));
}
