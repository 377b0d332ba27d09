#include "qgdok/util.hpp"
#include "qgdok/error.hpp"

#include <openssl/evp.h>

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

namespace qgdok {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ProviderFingerprintMixed: return "ProviderFingerprintMixed";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::TimeoutExceeded: return "TimeoutExceeded";
    case ErrorCode::ContentBlocked: return "ContentBlocked";
    case ErrorCode::ModeContextMismatch: return "ModeContextMismatch";
    case ErrorCode::MissingMaterial: return "MissingMaterial";
    case ErrorCode::MissingContext: return "MissingContext";
    case ErrorCode::MissingSlot: return "MissingSlot";
    case ErrorCode::UnparseableOutput: return "UnparseableOutput";
    case ErrorCode::EmptyCandidate: return "EmptyCandidate";
    case ErrorCode::MalformedJudgeOutput: return "MalformedJudgeOutput";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

namespace util {

std::vector<std::uint8_t> sha256(std::string_view data) {
    std::vector<std::uint8_t> out(32);
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != 32) {
        throw Error(ErrorCode::IoError, "sha256 digest failed");
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(64);
    for (auto b : sha256(data)) {
        hex.push_back(kHex[b >> 4]);
        hex.push_back(kHex[b & 0xF]);
    }
    return hex;
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\n\r\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

namespace {

void write_all(int fd, std::string_view content, const std::filesystem::path& path) {
    const char* p = content.data();
    std::size_t left = content.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::IoError, "write failed: " + path.string() + ": " + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

} // namespace

void atomic_write(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + random_hex(4);
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, content, tmp);
    } catch (...) {
        ::close(fd);
        std::filesystem::remove(tmp);
        throw;
    }
    ::fsync(fd);
    ::close(fd);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error(ErrorCode::IoError, "rename failed: " + path.string() + ": " + ec.message());
    }
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
    std::string buf(line);
    buf.push_back('\n');
    try {
        write_all(fd, buf, path);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    if (!in) return lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) lines.push_back(std::move(line));
    }
    return lines;
}

std::string random_hex(std::size_t bytes) {
    static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                            static_cast<std::uint64_t>(
                                                std::chrono::high_resolution_clock::now().time_since_epoch().count())};
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes * 2);
    for (std::size_t i = 0; i < bytes; ++i) {
        auto b = static_cast<unsigned>(rng() & 0xFF);
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

} // namespace util
} // namespace qgdok
