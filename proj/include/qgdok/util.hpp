#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qgdok::util {

/// 64-bit FNV-1a over the raw bytes of `data`.
constexpr std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string sha256_hex(std::string_view data);
std::vector<std::uint8_t> sha256(std::string_view data);

std::string utc_timestamp();

std::string trim(std::string_view s);

/// Writes `content` to a sibling temp file, fsyncs it and renames it over
/// `path`; readers observe either the old or the new file.
void atomic_write(const std::filesystem::path& path, std::string_view content);

/// Appends exactly one line (a trailing newline is added) with a single
/// write(2) on an O_APPEND descriptor.
void append_line(const std::filesystem::path& path, std::string_view line);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string random_hex(std::size_t bytes);

} // namespace qgdok::util
