#include "ovlm/projector.hpp"

namespace ovlm {

namespace {

void check_divisible(const Tensor& emb, int ratio) {
    if (emb.ndim() != 3 || emb.dim(0) != 1) {
        throw DimensionError("projector expects [1, S, d] embeddings, got " + shape_str(emb.shape()));
    }
    if (ratio < 1 || emb.dim(1) % ratio != 0) {
        throw ConfigError("sequence length " + std::to_string(emb.dim(1)) +
                          " not divisible by compression ratio " + std::to_string(ratio));
    }
}

}  // namespace

Tensor compress_reshape(const Tensor& emb, int ratio, Graph* g) {
    check_divisible(emb, ratio);
    const int64_t S = emb.dim(1), d = emb.dim(2);
    return reshape(emb, {1, S / ratio, ratio * d}, g);
}

Tensor compress_conv1d(const Tensor& emb, const Tensor& w, int ratio, Graph* g) {
    check_divisible(emb, ratio);
    // [1,S,d] -> [1,d,S] -> conv -> [1,d,S/r] -> [1,S/r,d]
    Tensor x = transpose_12(emb, g);
    Tensor y = conv1d(x, w, ratio, g);
    return transpose_12(y, g);
}

Tensor compress_conv2d(const Tensor& emb, const Tensor& w, int ratio, Graph* g) {
    check_divisible(emb, ratio);
    const int64_t S = emb.dim(1), d = emb.dim(2);
    Tensor x = transpose_12(emb, g);                 // [1, d, S]
    x = reshape(x, {1, d, S, 1}, g);                 // [1, d, S, 1]
    Tensor y = conv2d(x, w, ratio, 1, g);            // [1, d, S/r, 1]
    y = reshape(y, {1, d, S / ratio}, g);
    return transpose_12(y, g);                       // [1, S/r, d]
}

Tensor project(const Tensor& emb, const ModelConfig& cfg, const Weights& w, Graph* g) {
    const int r = cfg.strategy.ratio;
    Tensor compressed;
    switch (cfg.strategy.kind) {
        case CompressionStrategy::Kind::Reshape:
            compressed = compress_reshape(emb, r, g);
            break;
        case CompressionStrategy::Kind::Conv1D:
            compressed = compress_conv1d(emb, w.at("proj.conv.w"), r, g);
            break;
        case CompressionStrategy::Kind::Conv2D:
            compressed = compress_conv2d(emb, w.at("proj.conv.w"), r, g);
            break;
    }
    const int64_t S_out = compressed.dim(1);
    const int64_t feat = compressed.dim(2);
    const Tensor& fc1 = w.at("proj.fc1.w");
    if (fc1.dim(0) != feat) {
        throw CheckpointError("proj.fc1.w expects input dim " + std::to_string(fc1.dim(0)) +
                              " but compression produced " + std::to_string(feat));
    }
    Tensor x = reshape(compressed, {S_out, feat}, g);
    x = add_broadcast(matmul(x, fc1, g), w.at("proj.fc1.b"), g);
    x = gelu(x, g);
    x = add_broadcast(matmul(x, w.at("proj.fc2.w"), g), w.at("proj.fc2.b"), g);
    return reshape(x, {1, S_out, cfg.lm.d_lm}, g);
}

}  // namespace ovlm
