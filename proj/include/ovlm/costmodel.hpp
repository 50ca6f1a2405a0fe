#pragma once

#include <cstdint>
#include <string>

#include "ovlm/model.hpp"

namespace ovlm {

struct CostReport {
    int image_tokens = 0;
    int tile_count = 0;
    double energy_joules = 0;
    double prefill_flops = 0;
    double decode_flops_per_token = 0;
    double battery_fraction = 0;

    std::string to_json() const;
};

// Tile-based token accounting for a hosted vision API:
// tiles = ceil(w/512)*ceil(h/512), tokens = 170*tiles + 85.
struct TokenCost {
    int tiles;
    int tokens;
};
TokenCost openai_token_cost(int width, int height);

struct EnergyCost {
    double joules;
    double battery_fraction;
};
EnergyCost energy_estimate(int tokens, double joules_per_token = 0.7,
                           double battery_joules = 50000.0);

// Analytic FLOP estimates: parameter matmuls plus the attention score/value
// terms. P_lm is the total LM parameter count derived from the config.
int64_t lm_param_count(const LMConfig& cfg);
double prefill_flops(const LMConfig& cfg, int n_tokens);
double decode_flops(const LMConfig& cfg, int context_len);

CostReport make_cost_report(int width, int height, double joules_per_token, double battery_joules,
                            const LMConfig& cfg);

}  // namespace ovlm
