#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "ovlm/model.hpp"
#include "ovlm/tensor.hpp"
#include "ovlm/vision.hpp"

namespace ovlm {

// Byte-level tokenizer: ids 0..255 are raw byte values, specials follow.
namespace tok {
constexpr int BOS = 256;
constexpr int EOS = 257;
constexpr int IMG_START = 258;
constexpr int IMG_END = 259;
constexpr int PAD = 260;
constexpr int VOCAB = 261;
}  // namespace tok

std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);  // throws on special ids

// Per-layer K/V buffers laid out [n_heads][max_seq][head_dim], post-rope.
struct KVCache {
    int n_layers = 0, n_heads = 0, head_dim = 0, max_seq = 0;
    int filled_len = 0;
    std::vector<std::vector<real>> k, v;  // one buffer per layer

    static KVCache make(const LMConfig& cfg);
    real* k_at(int layer, int head, int t);
    real* v_at(int layer, int head, int t);
};

// Embedded [BOS][IMG_START][image tokens][IMG_END][prompt] sequence.
struct MultimodalSequence {
    Tensor embeddings;  // [T, d_lm]
    int image_span_start = 0;
    int image_span_len = 0;
    std::vector<int> prompt_ids;
};

// Splices projected image tokens into the embedded prompt. img_tokens is
// [1, S, d_lm] from the projector.
MultimodalSequence assemble_sequence(const Tensor& img_tokens, const std::vector<int>& prompt_ids,
                                     const LMConfig& cfg, const Weights& w, Graph* g = nullptr);

// Causal forward over embedded inputs [T, d_lm] -> logits [T, vocab].
// When cache is given it is filled with all K/V (prefill) starting at the
// cache's current filled_len.
Tensor lm_forward(const Tensor& embeddings, const LMConfig& cfg, const Weights& w,
                  Graph* g = nullptr, KVCache* cache = nullptr);

// Prefill: full pass over the sequence; returns last-position logits.
Tensor prefill(const MultimodalSequence& seq, const LMConfig& cfg, const Weights& w, KVCache& cache);

// Single-token step using cached K/V; fast inference-only path.
std::vector<real> decode_step(KVCache& cache, const std::vector<real>& last_token_embedding,
                              const LMConfig& cfg, const Weights& w);

struct GenerateParams {
    int max_new = 64;
    bool greedy = true;
    float temperature = 1.0f;
    uint64_t seed = 0;
    bool ignore_eos = false;  // benchmark mode: always run max_new steps
};

struct GenerationResult {
    std::string text;
    std::vector<int> token_ids;
    std::chrono::steady_clock::time_point t_start;
    std::vector<std::chrono::steady_clock::time_point> per_token_timestamps;
    int prefill_tokens = 0;
    int image_tokens = 0;

    double ttft_seconds() const;
    double decode_tokens_per_second() const;  // (n-1)/(t_last - t_first)
};

GenerationResult generate(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                          const Weights& w, const GenerateParams& params);

// Teacher-forced log P(response | image, prompt): sum over response token
// positions only. Differentiable when a graph is supplied. img_tokens is the
// projector output [1, S, d_lm].
Tensor sequence_logprob(const Tensor& img_tokens, const std::string& prompt,
                        const std::string& response, const ModelConfig& cfg, const Weights& w,
                        Graph* g = nullptr);

}  // namespace ovlm
