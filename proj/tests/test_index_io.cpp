#include "qgdok/error.hpp"
#include "qgdok/retrieval.hpp"
#include "qgdok/util.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace qgdok;
using namespace qgdok::retrieval;

namespace {

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    VectorIndex idx;
    for (std::size_t i = 0; i < n; ++i) idx.upsert("doc-1#" + std::to_string(100000 + i), test::tagged(test::random_vector(rng, dim)));
    return idx;
}

ErrorCode load_code(std::string_view bytes) {
    try {
        deserialize_index(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::IoError;
}

} // namespace

TEST(IndexIo, HeaderLayout) {
    VectorIndex idx;
    idx.upsert("a", test::tagged({1.0f, 2.0f}));
    auto bytes = serialize_index(idx);
    EXPECT_EQ(bytes.substr(0, 8), "QGDKIDX1");
    std::uint32_t version = 0, dim = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    std::memcpy(&dim, bytes.data() + 12, 4);
    EXPECT_EQ(version, 1u);
    EXPECT_EQ(dim, 2u);
    // Trailing checksum covers everything before it.
    auto body = bytes.substr(0, bytes.size() - 32);
    auto digest = util::sha256(body);
    EXPECT_EQ(0, std::memcmp(digest.data(), bytes.data() + body.size(), 32));
}

TEST(IndexIo, RoundTripPreservesSearchResults) {
    test::TempDir dir;
    std::mt19937_64 rng(5);
    auto idx = random_index(rng, 300, 24);
    save_index(idx, dir / "index" / "index.bin");
    auto loaded = load_index(dir / "index" / "index.bin");
    EXPECT_EQ(loaded, idx);
    EXPECT_EQ(loaded.provider_id(), "test");
    EXPECT_EQ(loaded.model_id(), "test-model");
    for (int i = 0; i < 10; ++i) {
        auto q = test::random_vector(rng, 24);
        EXPECT_EQ(search_topk(q, 7, loaded), search_topk(q, 7, idx));
    }
}

TEST(IndexIo, EmptyIndexRoundTrips) {
    VectorIndex empty;
    EXPECT_EQ(deserialize_index(serialize_index(empty)), empty);
}

TEST(IndexIo, CorruptionDetected) {
    std::mt19937_64 rng(9);
    auto bytes = serialize_index(random_index(rng, 5, 4));

    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    EXPECT_EQ(load_code(flipped), ErrorCode::CorruptIndex);

    EXPECT_EQ(load_code(bytes.substr(0, bytes.size() - 1)), ErrorCode::CorruptIndex);
    EXPECT_EQ(load_code(bytes.substr(0, 20)), ErrorCode::CorruptIndex);
    EXPECT_EQ(load_code(bytes + "x"), ErrorCode::CorruptIndex);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_EQ(load_code(bad_magic), ErrorCode::CorruptIndex);
}

TEST(IndexIo, SchemaVersionCheckedFirst) {
    std::mt19937_64 rng(11);
    auto bytes = serialize_index(random_index(rng, 3, 4));
    std::uint32_t v2 = 2;
    std::memcpy(bytes.data() + 8, &v2, 4);
    EXPECT_EQ(load_code(bytes), ErrorCode::SchemaVersionMismatch);
}

TEST(IndexIo, MissingFileIsNotFound) {
    try {
        load_index("/nonexistent/qgdok/index.bin");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}
