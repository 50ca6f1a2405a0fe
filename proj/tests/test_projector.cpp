#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ovlm/model.hpp"
#include "ovlm/projector.hpp"
#include "test_util.hpp"

using namespace ovlm;
using ovlm_test::gradcheck_max_rel_err;

namespace {
Tensor randt(Shape s, uint64_t seed, real sigma = 1) {
    std::mt19937_64 rng(seed);
    return Tensor::randn(std::move(s), rng, sigma);
}

// grid 9 -> 81 tokens, enough sequence for every legal ratio
ModelConfig grid9_config(CompressionStrategy::Kind kind, int ratio) {
    ModelConfig cfg = ovlm_test::tiny_config();
    cfg.vision.image_size = 36;
    cfg.vision.patch_size = 4;
    cfg.lm.max_seq = 128;
    cfg.strategy.kind = kind;
    cfg.strategy.ratio = ratio;
    return cfg;
}
}  // namespace

TEST_CASE("project output shape across every strategy and ratio") {
    const CompressionStrategy::Kind kinds[] = {CompressionStrategy::Kind::Reshape,
                                               CompressionStrategy::Kind::Conv1D,
                                               CompressionStrategy::Kind::Conv2D};
    for (auto kind : kinds) {
        for (int ratio : {1, 3, 9, 81}) {
            ModelConfig cfg = grid9_config(kind, ratio);
            cfg.validate();
            Weights w = init_weights(cfg, 5);
            Tensor emb = randt({1, 81, cfg.vision.d_vision}, 17);
            Tensor out = project(emb, cfg, w);
            CHECK(out.shape() == Shape{1, 81 / ratio, cfg.lm.d_lm});
            CHECK(all_finite(out));
        }
    }
}

TEST_CASE("reshape compression is a lossless buffer reinterpretation") {
    Tensor emb = randt({1, 9, 8}, 2);
    Tensor c = compress_reshape(emb, 3);
    CHECK(c.shape() == Shape{1, 3, 24});
    CHECK(c.vec() == emb.vec());
    CHECK(compress_reshape(emb, 1).vec() == emb.vec());
}

TEST_CASE("reshape compression rejects indivisible sequence lengths") {
    Tensor emb = randt({1, 10, 8}, 3);
    CHECK_THROWS_AS(compress_reshape(emb, 3), ConfigError);
    CHECK_THROWS_AS(compress_reshape(randt({9, 8}, 4), 3), DimensionError);
}

TEST_CASE("conv1d compression with an averaging kernel yields block means") {
    // single channel: w[0,0,:] = 1/r picks the mean of each block of r tokens
    const int r = 3;
    Tensor emb = Tensor::from({1, 9, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w = Tensor::full({1, 1, r}, real(1.0 / r));
    Tensor c = compress_conv1d(emb, w, r);
    CHECK(c.shape() == Shape{1, 3, 1});
    CHECK(c.vec()[0] == doctest::Approx(2));
    CHECK(c.vec()[1] == doctest::Approx(5));
    CHECK(c.vec()[2] == doctest::Approx(8));
}

TEST_CASE("conv2d compression matches conv1d with the same kernel") {
    const int r = 3, d = 4;
    Tensor emb = randt({1, 9, d}, 8);
    Tensor w1 = randt({d, d, r}, 9);
    Tensor w2 = reshape(w1, {d, d, r, 1});
    Tensor a = compress_conv1d(emb, w1, r);
    Tensor b = compress_conv2d(emb, w2, r);
    CHECK(a.shape() == b.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a.vec()[static_cast<size_t>(i)] ==
              doctest::Approx(b.vec()[static_cast<size_t>(i)]).epsilon(1e-5));
    }
}

TEST_CASE("ratio 1 conv keeps sequence length") {
    const int d = 4;
    Tensor emb = randt({1, 9, d}, 10);
    Tensor w = randt({d, d, 1}, 11);
    CHECK(compress_conv1d(emb, w, 1).shape() == Shape{1, 9, d});
}

TEST_CASE("projector gradients vs finite differences") {
    for (auto kind : {CompressionStrategy::Kind::Reshape, CompressionStrategy::Kind::Conv1D,
                      CompressionStrategy::Kind::Conv2D}) {
        ModelConfig cfg = ovlm_test::tiny_config();
        cfg.strategy.kind = kind;
        cfg.strategy.ratio = 3;
        Weights w = init_weights(cfg, 21);
        Tensor emb = randt({1, 9, cfg.vision.d_vision}, 22, real(0.5));
        Tensor probe = randt({1, 3, cfg.lm.d_lm}, 23);
        std::vector<Tensor> params = {w.at("proj.fc1.w"), w.at("proj.fc2.w"), w.at("proj.fc1.b")};
        if (kind != CompressionStrategy::Kind::Reshape) params.push_back(w.at("proj.conv.w"));
        auto f = [&](Graph* g) { return sum(mul(project(emb, cfg, w, g), probe, g), g); };
        CHECK(gradcheck_max_rel_err(params, f) < 1e-2);
    }
}

TEST_CASE("project validates the fc1 input width against the checkpoint") {
    ModelConfig cfg = ovlm_test::tiny_config();  // reshape, ratio 9
    Weights w = init_weights(cfg, 33);
    // weights built for ratio 9; feeding a ratio-3 compression width must throw
    ModelConfig wrong = cfg;
    wrong.strategy.ratio = 3;
    Tensor emb = randt({1, 9, cfg.vision.d_vision}, 34);
    CHECK_THROWS_AS(project(emb, wrong, w), CheckpointError);
}
