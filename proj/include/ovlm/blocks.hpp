#pragma once

#include "ovlm/tensor.hpp"

namespace ovlm {

// Multi-head self attention over x: [T, d]. Weight matrices are [d, d].
// rope_theta > 0 applies rotary embeddings to q/k with positions starting at
// pos_offset. Optionally returns the post-rope per-head K/V ([H, T, hd]) for
// cache population.
struct AttentionKV {
    Tensor k;
    Tensor v;
};

Tensor multihead_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                           const Tensor& wo, int n_heads, bool causal, real rope_theta,
                           int pos_offset, Graph* g, AttentionKV* kv_out = nullptr);

}  // namespace ovlm
