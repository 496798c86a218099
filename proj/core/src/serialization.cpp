#include "ucan/serialization.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ucan {

namespace {

constexpr char kTensorMagic[4] = {'U', 'C', 'T', 'N'};
constexpr char kWeightMagic[4] = {'U', 'C', 'W', 'T'};

void put_u8(std::ostream& os, std::uint8_t v) { os.put(char(v)); }

void put_u16(std::ostream& os, std::uint16_t v) {
    os.put(char(v & 0xff));
    os.put(char((v >> 8) & 0xff));
}

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
}

std::uint8_t get_u8(std::istream& is) {
    const int c = is.get();
    if (c < 0) throw IoError("unexpected end of stream");
    return std::uint8_t(c);
}

std::uint16_t get_u16(std::istream& is) {
    std::uint16_t v = get_u8(is);
    v |= std::uint16_t(get_u8(is)) << 8;
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(get_u8(is)) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(get_u8(is)) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace

void write_tensor_blob(std::ostream& os, const std::vector<std::uint32_t>& dims,
                       const float* data) {
    os.write(kTensorMagic, 4);
    put_u8(os, 1);
    put_u8(os, std::uint8_t(dims.size()));
    std::uint64_t count = 1;
    for (std::uint32_t d : dims) {
        put_u32(os, d);
        count *= d;
    }
    for (std::uint64_t i = 0; i < count; ++i) put_f32(os, data[i]);
}

std::pair<std::vector<std::uint32_t>, std::vector<float>> read_tensor_blob(
    std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw IoError("tensor blob: bad magic");
    const std::uint8_t version = get_u8(is);
    if (version != 1) throw IoError("tensor blob: unsupported version");
    const std::uint8_t ndim = get_u8(is);
    std::vector<std::uint32_t> dims(ndim);
    std::uint64_t count = 1;
    for (auto& d : dims) {
        d = get_u32(is);
        count *= d;
    }
    std::vector<float> data(count);
    for (auto& f : data) f = get_f32(is);
    if (!is) throw IoError("tensor blob: truncated payload");
    return {std::move(dims), std::move(data)};
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    const Shape& s = t.shape();
    write_tensor_blob(os, {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h),
                           std::uint32_t(s.w)},
                      t.data());
    if (!os) throw IoError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    auto [dims, data] = read_tensor_blob(is);
    if (dims.size() != 4) throw IoError("expected a rank-4 tensor in " + path);
    return Tensor({int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])},
                  std::move(data));
}

// ---------------------------------------------------------------------------
// Weight file
// ---------------------------------------------------------------------------

namespace {

enum EntryKind : std::uint8_t { kTensorEntry = 0, kFeatureMapEntry = 1, kTextEntry = 2 };

struct Entry {
    std::string name;
    std::uint8_t kind = kTensorEntry;
    std::vector<std::uint32_t> dims;
    std::string payload; // serialised blob
};

std::string tensor_payload(const std::vector<std::uint32_t>& dims, const float* data) {
    std::ostringstream os(std::ios::binary);
    write_tensor_blob(os, dims, data);
    return os.str();
}

// feature-map payload: one-byte kind tag, then for the Hedgehog map the
// post-norm flag, the pair count, W and the stacked biases
std::string feature_map_payload(const HedgehogParams& p) {
    std::ostringstream os(std::ios::binary);
    put_u8(os, std::uint8_t(FeatureMapTag::Hedgehog));
    put_u8(os, p.post_normalize ? 1 : 0);
    put_u32(os, std::uint32_t(p.pairs()));
    write_tensor_blob(os, {std::uint32_t(p.w.rows()), std::uint32_t(p.w.cols())},
                      p.w.data());
    std::vector<float> stacked;
    for (const auto& b : p.b) stacked.insert(stacked.end(), b.begin(), b.end());
    write_tensor_blob(
        os, {std::uint32_t(p.pairs()), std::uint32_t(p.input_dim())}, stacked.data());
    return os.str();
}

HedgehogParams parse_feature_map(const std::string& payload, const std::string& name) {
    std::istringstream is(payload, std::ios::binary);
    const auto tag = FeatureMapTag(get_u8(is));
    if (tag != FeatureMapTag::Hedgehog)
        throw IoError("weight entry " + name + ": unsupported feature map tag");
    HedgehogParams p;
    p.post_normalize = get_u8(is) != 0;
    const std::uint32_t m = get_u32(is);
    auto [wdims, wdata] = read_tensor_blob(is);
    if (wdims.size() != 2 || wdims[0] != wdims[1])
        throw IoError("weight entry " + name + ": bad W shape");
    p.w = Mat(int(wdims[0]), int(wdims[1]), std::move(wdata));
    auto [bdims, bdata] = read_tensor_blob(is);
    if (bdims.size() != 2 || bdims[0] != m || bdims[1] != wdims[0])
        throw IoError("weight entry " + name + ": bad bias shape");
    p.b.resize(m);
    for (std::uint32_t i = 0; i < m; ++i)
        p.b[i].assign(bdata.begin() + i * wdims[0], bdata.begin() + (i + 1) * wdims[0]);
    return p;
}

} // namespace

void save_weights(const std::string& path, UcanWeights& weights, const ModelConfig& cfg) {
    std::vector<Entry> entries;
    entries.push_back({"config", kTextEntry, {}, cfg.to_text()});

    WeightVisitor v;
    v.on_tensor = [&entries](const std::string& name, Tensor& t) {
        const Shape& s = t.shape();
        entries.push_back({name,
                           kTensorEntry,
                           {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h),
                            std::uint32_t(s.w)},
                           tensor_payload({std::uint32_t(s.n), std::uint32_t(s.c),
                                           std::uint32_t(s.h), std::uint32_t(s.w)},
                                          t.data())});
    };
    v.on_mat = [&entries](const std::string& name, Mat& m) {
        entries.push_back({name,
                           kTensorEntry,
                           {std::uint32_t(m.rows()), std::uint32_t(m.cols())},
                           tensor_payload({std::uint32_t(m.rows()), std::uint32_t(m.cols())},
                                          m.data())});
    };
    v.on_vector = [&entries](const std::string& name, std::vector<float>& vec) {
        entries.push_back({name,
                           kTensorEntry,
                           {std::uint32_t(vec.size())},
                           tensor_payload({std::uint32_t(vec.size())}, vec.data())});
    };
    v.on_feature_map = [&entries](const std::string& name, HedgehogParams& p) {
        entries.push_back({name,
                           kFeatureMapEntry,
                           {std::uint32_t(p.pairs()), std::uint32_t(p.input_dim())},
                           feature_map_payload(p)});
    };
    visit_weights(weights, v);

    // manifest layout pass: fixed-size header fields, then payloads
    std::uint64_t header_size = 4 + 1 + 4;
    for (const Entry& e : entries)
        header_size += 2 + e.name.size() + 1 + 1 + 4 * e.dims.size() + 8 + 8;
    std::uint64_t offset = header_size;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kWeightMagic, 4);
    put_u8(os, 1);
    put_u32(os, std::uint32_t(entries.size()));
    for (const Entry& e : entries) {
        put_u16(os, std::uint16_t(e.name.size()));
        os.write(e.name.data(), std::streamsize(e.name.size()));
        put_u8(os, e.kind);
        put_u8(os, std::uint8_t(e.dims.size()));
        for (std::uint32_t d : e.dims) put_u32(os, d);
        put_u64(os, offset);
        put_u64(os, e.payload.size());
        offset += e.payload.size();
    }
    for (const Entry& e : entries)
        os.write(e.payload.data(), std::streamsize(e.payload.size()));
    if (!os) throw IoError("write failed: " + path);
}

std::pair<UcanWeights, ModelConfig> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kWeightMagic, 4) != 0)
        throw IoError("weight file " + path + ": bad magic");
    if (get_u8(is) != 1) throw IoError("weight file " + path + ": unsupported version");
    const std::uint32_t count = get_u32(is);

    struct Located {
        std::uint8_t kind;
        std::vector<std::uint32_t> dims;
        std::uint64_t offset, size;
    };
    std::map<std::string, Located> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        Located loc;
        loc.kind = get_u8(is);
        const std::uint8_t ndim = get_u8(is);
        loc.dims.resize(ndim);
        for (auto& d : loc.dims) d = get_u32(is);
        loc.offset = get_u64(is);
        loc.size = get_u64(is);
        manifest.emplace(std::move(name), std::move(loc));
    }
    if (!is) throw IoError("weight file " + path + ": truncated manifest");

    auto read_payload = [&is, &path](const std::string& name, const Located& loc) {
        is.clear();
        is.seekg(std::streamoff(loc.offset));
        std::string payload(loc.size, '\0');
        is.read(payload.data(), std::streamsize(loc.size));
        if (is.gcount() != std::streamsize(loc.size))
            throw IoError("weight file " + path + ": entry '" + name + "' truncated");
        return payload;
    };

    auto config_it = manifest.find("config");
    if (config_it == manifest.end())
        throw IoError("weight file " + path + ": missing manifest field 'config'");
    ModelConfig cfg = ModelConfig::from_text(read_payload("config", config_it->second));

    UcanWeights weights = ucan_weights_seeded(cfg);

    auto fetch = [&](const std::string& name, std::uint8_t kind) {
        auto it = manifest.find(name);
        if (it == manifest.end())
            throw IoError("weight file " + path + ": missing manifest field '" + name +
                          "'");
        if (it->second.kind != kind)
            throw IoError("weight file " + path + ": entry '" + name +
                          "' has the wrong kind");
        return read_payload(name, it->second);
    };

    WeightVisitor v;
    v.on_tensor = [&](const std::string& name, Tensor& t) {
        std::istringstream ps(fetch(name, kTensorEntry), std::ios::binary);
        auto [dims, data] = read_tensor_blob(ps);
        if (dims.size() != 4 || std::int64_t(data.size()) != t.numel())
            throw IoError("weight file: entry '" + name + "' has mismatched shape");
        std::copy(data.begin(), data.end(), t.data());
    };
    v.on_mat = [&](const std::string& name, Mat& m) {
        std::istringstream ps(fetch(name, kTensorEntry), std::ios::binary);
        auto [dims, data] = read_tensor_blob(ps);
        if (dims.size() != 2 || int(dims[0]) != m.rows() || int(dims[1]) != m.cols())
            throw IoError("weight file: entry '" + name + "' has mismatched shape");
        std::copy(data.begin(), data.end(), m.data());
    };
    v.on_vector = [&](const std::string& name, std::vector<float>& vec) {
        std::istringstream ps(fetch(name, kTensorEntry), std::ios::binary);
        auto [dims, data] = read_tensor_blob(ps);
        if (dims.size() != 1 || data.size() != vec.size())
            throw IoError("weight file: entry '" + name + "' has mismatched shape");
        vec = std::move(data);
    };
    v.on_feature_map = [&](const std::string& name, HedgehogParams& p) {
        const std::string payload = fetch(name, kFeatureMapEntry);
        HedgehogParams loaded = parse_feature_map(payload, name);
        if (loaded.input_dim() != p.input_dim())
            throw IoError("weight file: entry '" + name + "' has mismatched dimension");
        p = std::move(loaded);
    };
    visit_weights(weights, v);
    return {std::move(weights), cfg};
}

// ---------------------------------------------------------------------------
// PPM
// ---------------------------------------------------------------------------

namespace {

int read_ppm_int(std::istream& is) {
    int c = is.get();
    // skip whitespace and comment lines
    while (c >= 0 && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c >= 0 && c != '\n') c = is.get();
        c = is.get();
    }
    int value = 0;
    bool any = false;
    while (c >= 0 && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw IoError("ppm: malformed header");
    return value;
}

} // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char p, six;
    is.get(p);
    is.get(six);
    if (p != 'P' || six != '6') throw IoError("ppm: " + path + " is not a P6 file");
    const int w = read_ppm_int(is);
    const int h = read_ppm_int(is);
    const int maxval = read_ppm_int(is);
    if (maxval != 255) throw IoError("ppm: only maxval 255 is supported");
    std::vector<unsigned char> raw(std::size_t(w) * h * 3);
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (is.gcount() != std::streamsize(raw.size()))
        throw IoError("ppm: " + path + " truncated pixel data");
    Tensor img({1, 3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(0, c, y, x) = float(raw[(std::size_t(y) * w + x) * 3 + c]) / 255.0f;
    return img;
}

void write_ppm(const std::string& path, const Tensor& img) {
    const Shape& s = img.shape();
    if (s.n != 1 || s.c != 3) throw DimensionError("ppm: expected a (1, 3, h, w) tensor");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << s.w << " " << s.h << "\n255\n";
    std::vector<unsigned char> raw(std::size_t(s.w) * s.h * 3);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = img.at(0, c, y, x);
                v = std::min(1.0f, std::max(0.0f, v));
                raw[(std::size_t(y) * s.w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!os) throw IoError("write failed: " + path);
}

} // namespace ucan
