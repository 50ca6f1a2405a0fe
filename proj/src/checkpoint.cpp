#include "ovlm/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace ovlm {

namespace {

constexpr char kMagic[4] = {'O', 'V', 'L', 'M'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxNameLen = 4096;
constexpr uint64_t kMaxElems = 1ull << 31;

void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
void put_u16(std::ofstream& f, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}

struct Reader {
    std::ifstream f;
    std::string path;
    void read(void* dst, size_t n, const std::string& what) {
        f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (f.gcount() != static_cast<std::streamsize>(n)) {
            throw CheckpointError("truncated checkpoint '" + path + "' while reading " + what);
        }
    }
    uint32_t u32(const std::string& what) {
        unsigned char b[4];
        read(b, 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    uint16_t u16(const std::string& what) {
        unsigned char b[2];
        read(b, 2, what);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint8_t u8(const std::string& what) {
        unsigned char b;
        read(&b, 1, what);
        return b;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Weights& w) {
    cfg.validate();
    const auto expected = expected_tensors(cfg);
    for (const auto& [name, shape] : expected) {
        const Tensor& t = w.at(name);  // throws on missing
        if (t.shape() != shape) {
            throw CheckpointError("tensor '" + name + "' has shape " + shape_str(t.shape()) +
                                  ", config requires " + shape_str(shape));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    const std::string cfg_json = cfg.to_json();
    put_u32(f, static_cast<uint32_t>(cfg_json.size()));
    f.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    put_u32(f, static_cast<uint32_t>(expected.size()));
    for (const auto& [name, shape] : expected) {
        const Tensor& t = w.at(name);
        put_u16(f, static_cast<uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        f.put(static_cast<char>(shape.size()));
        for (int64_t d : shape) put_u32(f, static_cast<uint32_t>(d));
        f.put(0);  // dtype f32 LE
        // payload is always f32 regardless of the build's compute type
        std::vector<float> buf(t.vec().begin(), t.vec().end());
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw CheckpointError("write failure on '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Reader r;
    r.path = path;
    r.f.open(path, std::ios::binary);
    if (!r.f) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError("'" + path + "' has bad magic, not an OVLM checkpoint");
    }
    const uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const uint32_t cfg_len = r.u32("config length");
    if (cfg_len > 1u << 20) throw CheckpointError("config block implausibly large");
    std::string cfg_json(cfg_len, '\0');
    r.read(cfg_json.data(), cfg_len, "config JSON");
    ModelConfig cfg = ModelConfig::from_json(cfg_json);

    const uint32_t count = r.u32("tensor count");
    if (count > 1u << 20) throw CheckpointError("tensor count implausibly large");
    Weights w;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = r.u16("tensor name length");
        if (name_len == 0 || name_len > kMaxNameLen) {
            throw CheckpointError("bad tensor name length " + std::to_string(name_len));
        }
        std::string name(name_len, '\0');
        r.read(name.data(), name_len, "tensor name");
        const uint8_t ndim = r.u8("ndim of '" + name + "'");
        if (ndim == 0 || ndim > 8) {
            throw CheckpointError("tensor '" + name + "' has bad ndim " + std::to_string(ndim));
        }
        Shape shape(ndim);
        uint64_t elems = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            shape[d] = r.u32("dims of '" + name + "'");
            if (shape[d] <= 0) throw CheckpointError("tensor '" + name + "' has zero dimension");
            elems *= static_cast<uint64_t>(shape[d]);
            if (elems > kMaxElems) {
                throw CheckpointError("tensor '" + name + "' declares implausible size");
            }
        }
        const uint8_t dtype = r.u8("dtype of '" + name + "'");
        if (dtype != 0) {
            throw CheckpointError("tensor '" + name + "' has unsupported dtype " +
                                  std::to_string(dtype));
        }
        if (w.contains(name)) throw CheckpointError("duplicate tensor '" + name + "'");
        std::vector<float> buf(elems);
        r.read(buf.data(), elems * sizeof(float), "payload of '" + name + "'");
        std::vector<real> data(buf.begin(), buf.end());
        w.put(name, Tensor::from(shape, std::move(data)));
    }

    // The config determines the exact tensor set; verify before returning.
    std::string missing, mismatched;
    const auto expected = expected_tensors(cfg);
    for (const auto& [name, shape] : expected) {
        if (!w.contains(name)) {
            missing += (missing.empty() ? "" : ", ") + name;
        } else if (w.at(name).shape() != shape) {
            mismatched += (mismatched.empty() ? "" : ", ") + name + " is " +
                          shape_str(w.at(name).shape()) + " want " + shape_str(shape);
        }
    }
    std::string extra;
    for (const auto& name : w.names()) {
        bool known = false;
        for (const auto& [ename, eshape] : expected) {
            if (ename == name) {
                known = true;
                break;
            }
        }
        if (!known) extra += (extra.empty() ? "" : ", ") + name;
    }
    if (!missing.empty() || !mismatched.empty() || !extra.empty()) {
        std::string msg = "checkpoint tensor set does not match its config (" +
                          strategy_kind_name(cfg.strategy.kind) + ", ratio " +
                          std::to_string(cfg.strategy.ratio) + ")";
        if (!missing.empty()) msg += "; missing: " + missing;
        if (!mismatched.empty()) msg += "; shape mismatch: " + mismatched;
        if (!extra.empty()) msg += "; unexpected: " + extra;
        throw CheckpointError(msg);
    }
    return {cfg, std::move(w)};
}

namespace {

template <typename Rec, typename Parse>
DatasetResult<Rec> read_jsonl(const std::string& path, Parse parse) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open dataset '" + path + "'");
    DatasetResult<Rec> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            out.records.push_back(parse(j));
        } catch (const std::exception& e) {
            ++out.skipped;
            out.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.records.empty()) {
        throw InputError("dataset '" + path + "' contains no valid records");
    }
    return out;
}

}  // namespace

DatasetResult<CaptionRecord> read_caption_dataset(const std::string& path) {
    return read_jsonl<CaptionRecord>(path, [](const nlohmann::json& j) {
        return CaptionRecord{j.at("image").get<std::string>(), j.at("prompt").get<std::string>(),
                             j.at("response").get<std::string>()};
    });
}

DatasetResult<DpoRecord> read_dpo_dataset(const std::string& path) {
    return read_jsonl<DpoRecord>(path, [](const nlohmann::json& j) {
        return DpoRecord{j.at("image").get<std::string>(), j.at("prompt").get<std::string>(),
                         j.at("original").get<std::string>(), j.at("edited").get<std::string>()};
    });
}

}  // namespace ovlm
