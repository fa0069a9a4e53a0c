#include "crys/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "crys/errors.hpp"

namespace crys {

namespace {

constexpr char kMagic[6] = {'C', 'R', 'Y', 'S', 'G', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

class Reader {
public:
    Reader(const char* data, std::size_t len) : data_(data), len_(len) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return len_ - pos_; }

private:
    void need(std::size_t n) const {
        if (len_ - pos_ < n) throw FormatError("truncated checkpoint body");
    }
    const char* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
};

void put_layout(std::string& out, const FeatureLayout& l) {
    put_u32(out, static_cast<std::uint32_t>(l.group_dim));
    put_u32(out, static_cast<std::uint32_t>(l.period_dim));
    put_u32(out, static_cast<std::uint32_t>(l.en_buckets));
    put_f64(out, l.en_lo);
    put_f64(out, l.en_hi);
    put_u32(out, static_cast<std::uint32_t>(l.radius_buckets));
    put_f64(out, l.radius_lo);
    put_f64(out, l.radius_hi);
    put_u32(out, static_cast<std::uint32_t>(l.valence_dim));
    put_u32(out, static_cast<std::uint32_t>(l.ie_buckets));
    put_f64(out, l.ie_lo);
    put_f64(out, l.ie_hi);
    put_u32(out, static_cast<std::uint32_t>(l.ea_buckets));
    put_f64(out, l.ea_lo);
    put_f64(out, l.ea_hi);
    put_u32(out, static_cast<std::uint32_t>(l.block_dim));
    put_u32(out, static_cast<std::uint32_t>(l.volume_buckets));
    put_f64(out, l.volume_lo);
    put_f64(out, l.volume_hi);
}

FeatureLayout read_layout(Reader& r) {
    FeatureLayout l;
    l.group_dim = static_cast<int>(r.u32());
    l.period_dim = static_cast<int>(r.u32());
    l.en_buckets = static_cast<int>(r.u32());
    l.en_lo = r.f64();
    l.en_hi = r.f64();
    l.radius_buckets = static_cast<int>(r.u32());
    l.radius_lo = r.f64();
    l.radius_hi = r.f64();
    l.valence_dim = static_cast<int>(r.u32());
    l.ie_buckets = static_cast<int>(r.u32());
    l.ie_lo = r.f64();
    l.ie_hi = r.f64();
    l.ea_buckets = static_cast<int>(r.u32());
    l.ea_lo = r.f64();
    l.ea_hi = r.f64();
    l.block_dim = static_cast<int>(r.u32());
    l.volume_buckets = static_cast<int>(r.u32());
    l.volume_lo = r.f64();
    l.volume_hi = r.f64();
    return l;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const CheckpointMeta& meta,
                     const std::string& path) {
    std::string body;
    put_layout(body, meta.layout);
    put_u32(body, static_cast<std::uint32_t>(meta.encoder.num_layers));
    put_u32(body, static_cast<std::uint32_t>(meta.encoder.embed_dim));
    put_u32(body, static_cast<std::uint32_t>(meta.encoder.feature_dim));
    put_u32(body, static_cast<std::uint32_t>(store.size()));
    for (const std::string& name : store.names()) {
        const Tensor& t = store.at(name);
        put_u32(body, static_cast<std::uint32_t>(name.size()));
        body.append(name);
        put_u32(body, static_cast<std::uint32_t>(t.rows));
        put_u32(body, static_cast<std::uint32_t>(t.cols));
        for (double v : t.values) put_f64(body, v);
    }

    std::string blob;
    blob.reserve(body.size() + 18);
    blob.append(kMagic, sizeof(kMagic));
    put_u32(blob, kCheckpointVersion);
    blob.append(body);
    put_u64(blob, fnv1a(body.data(), body.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw DataError("checkpoint read failed: " + path);

    if (blob.size() < sizeof(kMagic) + 4 + 8) throw FormatError("checkpoint too short: " + path);
    if (std::string_view(blob.data(), sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
        throw FormatError("bad checkpoint magic: " + path);

    Reader head(blob.data() + sizeof(kMagic), 4);
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint version mismatch: expected " +
                           std::to_string(kCheckpointVersion) + ", found " +
                           std::to_string(version));

    const std::size_t body_len = blob.size() - sizeof(kMagic) - 4 - 8;
    const char* body = blob.data() + sizeof(kMagic) + 4;
    Reader tail(body + body_len, 8);
    if (fnv1a(body, body_len) != tail.u64())
        throw CorruptionError("checkpoint checksum mismatch: " + path);

    Reader r(body, body_len);
    LoadedCheckpoint loaded;
    loaded.meta.layout = read_layout(r);
    loaded.meta.encoder.num_layers = static_cast<int>(r.u32());
    loaded.meta.encoder.embed_dim = static_cast<int>(r.u32());
    loaded.meta.encoder.feature_dim = static_cast<int>(r.u32());
    loaded.meta.layout.validate();
    loaded.meta.encoder.validate();

    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        if (rows < 0 || cols < 0 || (rows > 0 && cols > 0 && rows > (1 << 24) / cols))
            throw FormatError("implausible parameter shape for '" + name + "'");
        Tensor t(rows, cols);
        for (double& v : t.values) v = r.f64();
        loaded.params.add(name, std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload");
    return loaded;
}

}  // namespace crys
