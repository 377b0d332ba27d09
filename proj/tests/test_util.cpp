#include "qgdok/error.hpp"
#include "qgdok/util.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace qgdok;

TEST(Util, Fnv1aKnownValues) {
    // Reference values from tests/oracles/mock_embed.py.
    EXPECT_EQ(util::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(util::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(util::fnv1a64("limits"), 0x7283aeddbebbd745ULL);
}

TEST(Util, Sha256KnownValues) {
    EXPECT_EQ(util::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(util::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(util::sha256("abc").size(), 32u);
}

TEST(Util, Trim) {
    EXPECT_EQ(util::trim("  a b \n\t"), "a b");
    EXPECT_EQ(util::trim("   "), "");
}

TEST(Util, AtomicWriteReplacesWholeFile) {
    test::TempDir dir;
    auto p = dir / "x.txt";
    util::atomic_write(p, "first version, fairly long");
    util::atomic_write(p, "second");
    EXPECT_EQ(util::read_file(p), "second");
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
        EXPECT_EQ(e.path().filename(), "x.txt") << "temp file left behind";
    }
}

TEST(Util, AppendLineIsLineAtomicUnderConcurrency) {
    test::TempDir dir;
    auto p = dir / "log.jsonl";
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 200; ++i) util::append_line(p, std::string(100, static_cast<char>('a' + t)));
        });
    }
    for (auto& th : threads) th.join();
    auto lines = util::read_lines(p);
    ASSERT_EQ(lines.size(), 800u);
    for (const auto& l : lines) {
        ASSERT_EQ(l.size(), 100u);
        EXPECT_EQ(l.find_first_not_of(l[0]), std::string::npos);
    }
}

TEST(Util, ReadMissingFileIsNotFound) {
    try {
        util::read_file("/nonexistent/qgdok/file");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(Util, RandomHexLength) {
    auto a = util::random_hex(4);
    EXPECT_EQ(a.size(), 8u);
    EXPECT_EQ(a.find_first_not_of("0123456789abcdef"), std::string::npos);
}
