#include "ovlm/model.hpp"

#include <json.hpp>

namespace ovlm {

using nlohmann::json;

std::string strategy_kind_name(CompressionStrategy::Kind k) {
    switch (k) {
        case CompressionStrategy::Kind::Reshape: return "reshape";
        case CompressionStrategy::Kind::Conv1D: return "conv1d";
        case CompressionStrategy::Kind::Conv2D: return "conv2d";
    }
    return "reshape";
}

CompressionStrategy::Kind strategy_kind_from_name(const std::string& s) {
    if (s == "reshape") return CompressionStrategy::Kind::Reshape;
    if (s == "conv1d") return CompressionStrategy::Kind::Conv1D;
    if (s == "conv2d") return CompressionStrategy::Kind::Conv2D;
    throw ConfigError("unknown compression strategy '" + s + "' (expected reshape|conv1d|conv2d)");
}

void ModelConfig::validate() const {
    if (vision.image_size <= 0 || vision.patch_size <= 0) {
        throw ConfigError("vision image_size/patch_size must be positive");
    }
    if (vision.image_size % vision.patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(vision.image_size) +
                          " not divisible by patch_size " + std::to_string(vision.patch_size));
    }
    if (vision.d_vision <= 0 || vision.n_heads <= 0 || vision.d_vision % vision.n_heads != 0) {
        throw ConfigError("d_vision must be positive and divisible by vision n_heads");
    }
    if (strategy.ratio != 1 && strategy.ratio != 3 && strategy.ratio != 9 && strategy.ratio != 81) {
        throw ConfigError("compression ratio must be one of {1,3,9,81}, got " +
                          std::to_string(strategy.ratio));
    }
    if (vision.seq_len() % strategy.ratio != 0) {
        throw ConfigError("grid^2 = " + std::to_string(vision.seq_len()) +
                          " not divisible by ratio " + std::to_string(strategy.ratio));
    }
    if (lm.d_lm <= 0 || lm.n_heads <= 0 || lm.d_lm % lm.n_heads != 0) {
        throw ConfigError("d_lm must be positive and divisible by lm n_heads");
    }
    if (lm.head_dim() % 2 != 0) {
        throw ConfigError("lm head_dim must be even for rotary embeddings");
    }
    if (lm.vocab_size < 261) {
        throw ConfigError("vocab_size must be >= 261 (256 bytes + 5 specials)");
    }
    if (lm.max_seq < vision.seq_len() + 8) {
        throw ConfigError("max_seq " + std::to_string(lm.max_seq) +
                          " too small to hold the uncompressed image span of " +
                          std::to_string(vision.seq_len()) + " tokens");
    }
    if (d_proj <= 0) throw ConfigError("d_proj must be positive");
}

std::string ModelConfig::to_json() const {
    json j;
    j["vision"] = {{"image_size", vision.image_size}, {"patch_size", vision.patch_size},
                   {"d_vision", vision.d_vision},     {"n_layers", vision.n_layers},
                   {"n_heads", vision.n_heads},       {"d_ff", vision.d_ff}};
    j["lm"] = {{"d_lm", lm.d_lm},           {"n_layers", lm.n_layers}, {"n_heads", lm.n_heads},
               {"d_ff", lm.d_ff},           {"vocab_size", lm.vocab_size},
               {"max_seq", lm.max_seq},     {"rope_theta", lm.rope_theta}};
    j["strategy"] = {{"kind", strategy_kind_name(strategy.kind)}, {"ratio", strategy.ratio}};
    j["d_proj"] = d_proj;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        if (j.contains("vision")) {
            const auto& v = j["vision"];
            cfg.vision.image_size = v.value("image_size", cfg.vision.image_size);
            cfg.vision.patch_size = v.value("patch_size", cfg.vision.patch_size);
            cfg.vision.d_vision = v.value("d_vision", cfg.vision.d_vision);
            cfg.vision.n_layers = v.value("n_layers", cfg.vision.n_layers);
            cfg.vision.n_heads = v.value("n_heads", cfg.vision.n_heads);
            cfg.vision.d_ff = v.value("d_ff", cfg.vision.d_ff);
        }
        if (j.contains("lm")) {
            const auto& l = j["lm"];
            cfg.lm.d_lm = l.value("d_lm", cfg.lm.d_lm);
            cfg.lm.n_layers = l.value("n_layers", cfg.lm.n_layers);
            cfg.lm.n_heads = l.value("n_heads", cfg.lm.n_heads);
            cfg.lm.d_ff = l.value("d_ff", cfg.lm.d_ff);
            cfg.lm.vocab_size = l.value("vocab_size", cfg.lm.vocab_size);
            cfg.lm.max_seq = l.value("max_seq", cfg.lm.max_seq);
            cfg.lm.rope_theta = l.value("rope_theta", cfg.lm.rope_theta);
        }
        if (j.contains("strategy")) {
            cfg.strategy.kind = strategy_kind_from_name(j["strategy"].value("kind", "reshape"));
            cfg.strategy.ratio = j["strategy"].value("ratio", cfg.strategy.ratio);
        }
        cfg.d_proj = j.value("d_proj", cfg.d_proj);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void Weights::put(const std::string& name, Tensor t) {
    if (!map_.count(name)) order_.push_back(name);
    map_[name] = std::move(t);
}

Tensor& Weights::at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw CheckpointError("missing tensor '" + name + "'");
    return it->second;
}

const Tensor& Weights::at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw CheckpointError("missing tensor '" + name + "'");
    return it->second;
}

bool Weights::contains(const std::string& name) const { return map_.count(name) != 0; }

int64_t Weights::param_count(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& name : order_) {
        if (prefix.empty() || name.rfind(prefix, 0) == 0) n += map_.at(name).numel();
    }
    return n;
}

Weights Weights::deep_copy() const {
    Weights w;
    for (const auto& name : order_) w.put(name, map_.at(name).clone());
    return w;
}

void Weights::set_requires_grad_all(bool v) {
    for (const auto& name : order_) map_.at(name).set_requires_grad(v);
}

void Weights::zero_grads() {
    for (const auto& name : order_) map_.at(name).zero_grad();
}

std::string component_of(const std::string& name) {
    auto pos = name.find('.');
    std::string head = pos == std::string::npos ? name : name.substr(0, pos);
    if (head != "vision" && head != "proj" && head != "lm") {
        throw ConfigError("parameter '" + name + "' has no component label");
    }
    return head;
}

std::vector<std::pair<std::string, Shape>> expected_tensors(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, Shape>> out;
    const auto& v = cfg.vision;
    const auto& l = cfg.lm;
    const int64_t dv = v.d_vision, dl = l.d_lm, r = cfg.strategy.ratio;

    out.push_back({"vision.patch_embed.w", {v.patch_dim(), dv}});
    out.push_back({"vision.patch_embed.b", {dv}});
    out.push_back({"vision.pos", {v.seq_len(), dv}});
    for (int i = 0; i < v.n_layers; ++i) {
        const std::string p = "vision.blocks." + std::to_string(i) + ".";
        out.push_back({p + "ln1.g", {dv}});
        out.push_back({p + "ln1.b", {dv}});
        out.push_back({p + "wq", {dv, dv}});
        out.push_back({p + "wk", {dv, dv}});
        out.push_back({p + "wv", {dv, dv}});
        out.push_back({p + "wo", {dv, dv}});
        out.push_back({p + "ln2.g", {dv}});
        out.push_back({p + "ln2.b", {dv}});
        out.push_back({p + "fc1.w", {dv, v.d_ff}});
        out.push_back({p + "fc1.b", {v.d_ff}});
        out.push_back({p + "fc2.w", {v.d_ff, dv}});
        out.push_back({p + "fc2.b", {dv}});
    }
    out.push_back({"vision.ln_f.g", {dv}});
    out.push_back({"vision.ln_f.b", {dv}});

    switch (cfg.strategy.kind) {
        case CompressionStrategy::Kind::Reshape:
            out.push_back({"proj.fc1.w", {r * dv, cfg.d_proj}});
            break;
        case CompressionStrategy::Kind::Conv1D:
            out.push_back({"proj.conv.w", {dv, dv, r}});
            out.push_back({"proj.fc1.w", {dv, cfg.d_proj}});
            break;
        case CompressionStrategy::Kind::Conv2D:
            out.push_back({"proj.conv.w", {dv, dv, r, 1}});
            out.push_back({"proj.fc1.w", {dv, cfg.d_proj}});
            break;
    }
    out.push_back({"proj.fc1.b", {cfg.d_proj}});
    out.push_back({"proj.fc2.w", {cfg.d_proj, dl}});
    out.push_back({"proj.fc2.b", {dl}});

    out.push_back({"lm.tok_embed", {l.vocab_size, dl}});
    for (int i = 0; i < l.n_layers; ++i) {
        const std::string p = "lm.blocks." + std::to_string(i) + ".";
        out.push_back({p + "ln1.g", {dl}});
        out.push_back({p + "ln1.b", {dl}});
        out.push_back({p + "wq", {dl, dl}});
        out.push_back({p + "wk", {dl, dl}});
        out.push_back({p + "wv", {dl, dl}});
        out.push_back({p + "wo", {dl, dl}});
        out.push_back({p + "ln2.g", {dl}});
        out.push_back({p + "ln2.b", {dl}});
        out.push_back({p + "gate.w", {dl, l.d_ff}});
        out.push_back({p + "up.w", {dl, l.d_ff}});
        out.push_back({p + "down.w", {l.d_ff, dl}});
    }
    out.push_back({"lm.ln_f.g", {dl}});
    out.push_back({"lm.ln_f.b", {dl}});
    out.push_back({"lm.head.w", {dl, l.vocab_size}});
    return out;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

bool is_gain(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}
bool is_zero_init(const std::string& name) {
    return (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0);
}

}  // namespace

Weights init_weights(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Weights w;
    for (const auto& [name, shape] : expected_tensors(cfg)) {
        if (is_gain(name)) {
            w.put(name, Tensor::full(shape, real(1)));
        } else if (is_zero_init(name)) {
            w.put(name, Tensor::zeros(shape));
        } else {
            std::mt19937_64 rng(seed ^ fnv1a(name));
            // Vision/projector use the fixed 0.02 convention. LM tensors get a
            // width-aware scale so toy-sized models have usable signal
            // propagation instead of the near-uniform regime 0.02 gives at
            // small d_lm; the head and embedding stay cooler so initial logits
            // remain close to uniform.
            real sigma = real(0.02);
            if (component_of(name) == "lm") {
                const real root_d = std::sqrt(static_cast<real>(cfg.lm.d_lm));
                const bool edge = name == "lm.head.w" || name == "lm.tok_embed";
                sigma = (edge ? real(0.75) : real(1.1)) / root_d;
            }
            w.put(name, Tensor::randn(shape, rng, sigma));
        }
    }
    return w;
}

}  // namespace ovlm
