#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovlm/tensor.hpp"

namespace ovlm {

struct VisionConfig {
    int image_size = 216;
    int patch_size = 8;
    int d_vision = 32;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 64;

    int grid() const { return image_size / patch_size; }
    int seq_len() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * 3; }
};

struct LMConfig {
    int d_lm = 128;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 261;
    int max_seq = 1024;
    float rope_theta = 10000.0f;

    int head_dim() const { return d_lm / n_heads; }
};

struct CompressionStrategy {
    enum class Kind { Reshape, Conv1D, Conv2D };
    Kind kind = Kind::Reshape;
    int ratio = 9;
};

std::string strategy_kind_name(CompressionStrategy::Kind k);
CompressionStrategy::Kind strategy_kind_from_name(const std::string& s);

struct ModelConfig {
    VisionConfig vision;
    LMConfig lm;
    CompressionStrategy strategy;
    int d_proj = 128;

    void validate() const;  // throws ConfigError
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Named parameter set, insertion-ordered for deterministic serialization.
class Weights {
public:
    void put(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;  // throws CheckpointError
    bool contains(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }
    int64_t param_count(const std::string& prefix = "") const;
    Weights deep_copy() const;
    void set_requires_grad_all(bool v);
    void zero_grads();

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> map_;
};

// Component label of a parameter: "vision", "proj" or "lm".
std::string component_of(const std::string& name);

// Expected tensor names and shapes for a config, in serialization order.
std::vector<std::pair<std::string, Shape>> expected_tensors(const ModelConfig& cfg);

// Deterministic init: each tensor gets its own RNG stream seeded from
// (seed, name), so shared tensors are identical across configs that differ
// only in compression strategy.
Weights init_weights(const ModelConfig& cfg, uint64_t seed);

uint64_t fnv1a(const std::string& s);

}  // namespace ovlm
