#pragma once

#include "ovlm/model.hpp"
#include "ovlm/tensor.hpp"

namespace ovlm {

// Token compression over the vision embedding sequence [1, S, d_vision].
// All three strategies reduce S by the configured ratio; the shared 2-layer
// GELU MLP then maps features to d_lm.

// r consecutive tokens concatenated along the feature axis; a pure row-major
// buffer reinterpretation, no arithmetic.
Tensor compress_reshape(const Tensor& emb, int ratio, Graph* g = nullptr);

// Strided conv over the sequence axis: kernel = stride = ratio, no padding,
// channel count held at d_vision. w: [d_vision, d_vision, ratio].
Tensor compress_conv1d(const Tensor& emb, const Tensor& w, int ratio, Graph* g = nullptr);

// 2-d variant: kernel (ratio, 1), stride (ratio, 1) over [S, 1] spatial dims.
// w: [d_vision, d_vision, ratio, 1].
Tensor compress_conv2d(const Tensor& emb, const Tensor& w, int ratio, Graph* g = nullptr);

// compress (per configured strategy) then MLP; output [1, S/ratio, d_lm].
Tensor project(const Tensor& emb, const ModelConfig& cfg, const Weights& w, Graph* g = nullptr);

}  // namespace ovlm
