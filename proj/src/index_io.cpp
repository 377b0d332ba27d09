#include "qgdok/retrieval.hpp"
#include "qgdok/util.hpp"

#include <bit>
#include <cstring>

namespace qgdok::retrieval {

namespace {

constexpr char kMagic[8] = {'Q', 'G', 'D', 'K', 'I', 'D', 'X', '1'};
constexpr std::size_t kChecksumBytes = 32;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string str() {
        auto n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw Error(ErrorCode::CorruptIndex, "index file truncated");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

} // namespace

std::string serialize_index(const VectorIndex& index) {
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kIndexSchemaVersion);
    put_u32(out, static_cast<std::uint32_t>(index.dim()));
    put_str(out, index.provider_id());
    put_str(out, index.model_id());
    put_u64(out, index.size());
    for (const auto& [id, entry] : index.entries()) {
        put_str(out, id);
        for (float f : entry.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    auto digest = util::sha256(out);
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    return out;
}

VectorIndex deserialize_index(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(ErrorCode::CorruptIndex, "not an index file (bad magic)");
    }
    Reader header(bytes.substr(sizeof kMagic));
    auto version = header.u32();
    if (version != kIndexSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionMismatch, "index schema_version " + std::to_string(version) +
                                                          ", reader supports " + std::to_string(kIndexSchemaVersion));
    }
    if (bytes.size() < sizeof kMagic + 4 + kChecksumBytes) throw Error(ErrorCode::CorruptIndex, "index file truncated");
    auto payload = bytes.substr(0, bytes.size() - kChecksumBytes);
    auto stored = bytes.substr(bytes.size() - kChecksumBytes);
    auto digest = util::sha256(payload);
    if (std::memcmp(digest.data(), stored.data(), kChecksumBytes) != 0) {
        throw Error(ErrorCode::CorruptIndex, "index checksum mismatch");
    }

    Reader r(payload.substr(sizeof kMagic + 4));
    VectorIndex index;
    index.dim_ = r.u32();
    index.provider_id_ = r.str();
    index.model_id_ = r.str();
    auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        auto id = r.str();
        VectorIndex::Entry e;
        e.values.resize(index.dim_);
        for (auto& f : e.values) f = r.f32();
        e.norm = l2_norm(e.values);
        index.entries_.emplace(std::move(id), std::move(e));
    }
    if (sizeof kMagic + 4 + r.pos() != payload.size()) throw Error(ErrorCode::CorruptIndex, "trailing bytes in index");
    return index;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
    util::atomic_write(path, serialize_index(index));
}

VectorIndex load_index(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "no index at " + path.string());
    return deserialize_index(util::read_file(path));
}

} // namespace qgdok::retrieval
