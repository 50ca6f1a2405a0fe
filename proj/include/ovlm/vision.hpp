#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovlm/model.hpp"
#include "ovlm/tensor.hpp"

namespace ovlm {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // RGB row-major, 3 bytes per pixel

    uint8_t& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Image -> [1, grid^2, patch_size^2 * 3], patches row-major over the grid,
// pixels scaled to [-1, 1] via x/127.5 - 1.
Tensor patchify(const Image& img, const VisionConfig& cfg);

// Full encoder: patchify, linear patch embed + learned positions, then
// n_layers of pre-norm bidirectional attention blocks, final layernorm.
// Output [1, grid^2, d_vision]. Never trained; weights are read-only here.
Tensor vision_encode(const Image& img, const VisionConfig& cfg, const Weights& w,
                     Graph* g = nullptr);

// Synthetic data: a colored shape on a dark background with a template
// caption, so the training stages have a learnable image->text signal.
struct SyntheticSample {
    Image image;
    std::string caption;  // e.g. "a red square"
    int color_id = 0;
    int shape_id = 0;
};

SyntheticSample make_synthetic_sample(int image_size, uint64_t seed);

// Writes <out_dir>/img_%04d.ppm plus captions.jsonl with
// {"image": path, "prompt": ..., "response": caption} records.
void write_synthetic_dataset(const std::string& out_dir, int count, int image_size, uint64_t seed);

}  // namespace ovlm
