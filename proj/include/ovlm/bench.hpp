#pragma once

#include <string>
#include <vector>

#include "ovlm/lm.hpp"
#include "ovlm/model.hpp"
#include "ovlm/vision.hpp"

namespace ovlm {

struct MetricStats {
    double median = 0;
    double p10 = 0;
    double p90 = 0;
};

MetricStats compute_stats(std::vector<double> samples);

struct BenchmarkReport {
    std::string config_id;
    int ratio = 0;
    int image_tokens = 0;
    int runs = 0;
    int warmup = 0;
    int invalid_runs = 0;
    MetricStats ttft_ms;
    MetricStats decode_tps;
    std::vector<double> raw_ttft_ms;
    std::vector<double> raw_decode_tps;
    std::string host;
};

struct BenchOptions {
    int runs = 5;
    int warmup = 2;
    int decode_tokens = 128;
    std::string prompt = "describe the image";
    std::string host;  // free-text host descriptor; defaulted when empty
};

// One timed generation; TTFT from the generation's own monotonic timestamps
// (model load and image synthesis happen before the clock matters).
double measure_ttft_seconds(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                            const Weights& w);
double measure_decode_tps(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                          const Weights& w, int n_tokens);

// Benchmarks each ratio with otherwise identical weights: vision and LM
// tensors are shared, the projector is re-initialized per ratio from the
// given seed. A per-config failure isolates that config.
std::vector<BenchmarkReport> run_matrix(const ModelConfig& base_cfg, const Weights& base_weights,
                                        const std::vector<int>& ratios, const BenchOptions& opts,
                                        uint64_t seed);

std::string reports_to_json(const std::vector<BenchmarkReport>& reports);
std::string reports_to_csv(const std::vector<BenchmarkReport>& reports);
std::string reports_to_table(const std::vector<BenchmarkReport>& reports);

}  // namespace ovlm
