#include "ovlm/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ovlm {

MetricStats compute_stats(std::vector<double> samples) {
    MetricStats s;
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(samples.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, samples.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return samples[lo] * (1.0 - frac) + samples[hi] * frac;
    };
    s.median = quantile(0.5);
    s.p10 = quantile(0.1);
    s.p90 = quantile(0.9);
    return s;
}

double measure_ttft_seconds(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                            const Weights& w) {
    GenerateParams params;
    params.max_new = 4;
    params.greedy = true;
    params.ignore_eos = true;
    GenerationResult res = generate(img, prompt, cfg, w, params);
    return res.ttft_seconds();
}

double measure_decode_tps(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                          const Weights& w, int n_tokens) {
    if (n_tokens < 2) throw ContractError("decode-speed measurement needs n_tokens >= 2");
    GenerateParams params;
    params.max_new = n_tokens;
    params.greedy = true;
    params.ignore_eos = true;
    GenerationResult res = generate(img, prompt, cfg, w, params);
    if (res.per_token_timestamps.size() < 2) {
        throw ContractError("generation produced fewer than 2 tokens");
    }
    return res.decode_tokens_per_second();
}

namespace {

// Same non-projector tensors as the base weights, fresh projector for the
// ratio so strategy comparisons differ only in the compression step.
Weights weights_for_ratio(const ModelConfig& cfg, const Weights& base, uint64_t seed) {
    Weights fresh = init_weights(cfg, seed);
    Weights out;
    for (const auto& [name, shape] : expected_tensors(cfg)) {
        if (component_of(name) != "proj" && base.contains(name) &&
            base.at(name).shape() == shape) {
            out.put(name, base.at(name));
        } else {
            out.put(name, fresh.at(name));
        }
    }
    return out;
}

std::string default_host() {
    std::string h = "cpu";
#if defined(__x86_64__)
    h += "/x86_64";
#elif defined(__aarch64__)
    h += "/aarch64";
#endif
    return h;
}

}  // namespace

std::vector<BenchmarkReport> run_matrix(const ModelConfig& base_cfg, const Weights& base_weights,
                                        const std::vector<int>& ratios, const BenchOptions& opts,
                                        uint64_t seed) {
    if (opts.runs < 3) throw ConfigError("benchmark needs at least 3 measured runs");
    const std::string host = opts.host.empty() ? default_host() : opts.host;
    std::vector<BenchmarkReport> reports;
    for (int r : ratios) {
        BenchmarkReport rep;
        rep.ratio = r;
        rep.runs = opts.runs;
        rep.warmup = opts.warmup;
        rep.host = host;
        try {
            ModelConfig cfg = base_cfg;
            cfg.strategy.ratio = r;
            cfg.validate();
            rep.config_id = strategy_kind_name(cfg.strategy.kind) + "-r" + std::to_string(r);
            rep.image_tokens = cfg.vision.seq_len() / r;
            Weights w = weights_for_ratio(cfg, base_weights, seed);
            SyntheticSample sample = make_synthetic_sample(cfg.vision.image_size, seed);
            for (int i = 0; i < opts.warmup; ++i) {
                measure_ttft_seconds(sample.image, opts.prompt, cfg, w);
            }
            for (int i = 0; i < opts.runs; ++i) {
                try {
                    rep.raw_ttft_ms.push_back(
                        measure_ttft_seconds(sample.image, opts.prompt, cfg, w) * 1e3);
                    rep.raw_decode_tps.push_back(
                        measure_decode_tps(sample.image, opts.prompt, cfg, w, opts.decode_tokens));
                } catch (const std::exception&) {
                    ++rep.invalid_runs;
                }
            }
            rep.ttft_ms = compute_stats(rep.raw_ttft_ms);
            rep.decode_tps = compute_stats(rep.raw_decode_tps);
            reports.push_back(std::move(rep));
        } catch (const std::exception& e) {
            rep.config_id = "ratio-" + std::to_string(r) + " (failed: " + e.what() + ")";
            rep.invalid_runs = opts.runs;
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

std::string reports_to_json(const std::vector<BenchmarkReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const BenchmarkReport& r : reports) {
        j.push_back({{"config_id", r.config_id},
                     {"ratio", r.ratio},
                     {"image_tokens", r.image_tokens},
                     {"runs", r.runs},
                     {"warmup", r.warmup},
                     {"invalid_runs", r.invalid_runs},
                     {"ttft_ms",
                      {{"median", r.ttft_ms.median}, {"p10", r.ttft_ms.p10}, {"p90", r.ttft_ms.p90}}},
                     {"decode_tps",
                      {{"median", r.decode_tps.median},
                       {"p10", r.decode_tps.p10},
                       {"p90", r.decode_tps.p90}}},
                     {"raw_ttft_ms", r.raw_ttft_ms},
                     {"raw_decode_tps", r.raw_decode_tps},
                     {"host", r.host}});
    }
    return j.dump(2);
}

std::string reports_to_csv(const std::vector<BenchmarkReport>& reports) {
    std::string out = "config,metric,median,p10,p90,runs\n";
    char line[256];
    for (const BenchmarkReport& r : reports) {
        std::snprintf(line, sizeof(line), "%s,ttft_ms,%.6g,%.6g,%.6g,%d\n", r.config_id.c_str(),
                      r.ttft_ms.median, r.ttft_ms.p10, r.ttft_ms.p90, r.runs);
        out += line;
        std::snprintf(line, sizeof(line), "%s,decode_tps,%.6g,%.6g,%.6g,%d\n", r.config_id.c_str(),
                      r.decode_tps.median, r.decode_tps.p10, r.decode_tps.p90, r.runs);
        out += line;
    }
    return out;
}

std::string reports_to_table(const std::vector<BenchmarkReport>& reports) {
    std::string out = "metric";
    for (const BenchmarkReport& r : reports) out += "\t" + r.config_id;
    out += "\n";
    char cell[64];
    out += "ttft_ms";
    for (const BenchmarkReport& r : reports) {
        std::snprintf(cell, sizeof(cell), "\t%.2f", r.ttft_ms.median);
        out += cell;
    }
    out += "\ndecode_tps";
    for (const BenchmarkReport& r : reports) {
        std::snprintf(cell, sizeof(cell), "\t%.2f", r.decode_tps.median);
        out += cell;
    }
    out += "\n";
    return out;
}

}  // namespace ovlm
