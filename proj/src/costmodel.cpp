#include "ovlm/costmodel.hpp"

#include <json.hpp>

namespace ovlm {

TokenCost openai_token_cost(int width, int height) {
    if (width < 1 || height < 1) throw InputError("image dimensions must be positive");
    const int tiles = ((width + 511) / 512) * ((height + 511) / 512);
    return {tiles, 170 * tiles + 85};
}

EnergyCost energy_estimate(int tokens, double joules_per_token, double battery_joules) {
    if (tokens < 0) throw InputError("token count must be nonnegative");
    if (joules_per_token < 0 || battery_joules <= 0) {
        throw InputError("energy parameters must be positive");
    }
    const double joules = tokens * joules_per_token;
    return {joules, joules / battery_joules};
}

int64_t lm_param_count(const LMConfig& cfg) {
    const int64_t d = cfg.d_lm, ff = cfg.d_ff, v = cfg.vocab_size;
    int64_t per_layer = 4 * d * d + 3 * d * ff + 4 * d;  // attn + gated mlp + layernorms
    return cfg.n_layers * per_layer + 2 * v * d + 2 * d;  // embed + head + final ln
}

double prefill_flops(const LMConfig& cfg, int n_tokens) {
    const double P = static_cast<double>(lm_param_count(cfg));
    const double n = n_tokens;
    return 2.0 * P * n + 2.0 * cfg.n_layers * n * n * cfg.d_lm;
}

double decode_flops(const LMConfig& cfg, int context_len) {
    const double P = static_cast<double>(lm_param_count(cfg));
    return 2.0 * P + 2.0 * cfg.n_layers * static_cast<double>(context_len) * cfg.d_lm;
}

std::string CostReport::to_json() const {
    nlohmann::json j = {{"image_tokens", image_tokens},
                        {"tile_count", tile_count},
                        {"energy_joules", energy_joules},
                        {"prefill_flops", prefill_flops},
                        {"decode_flops_per_token", decode_flops_per_token},
                        {"battery_fraction", battery_fraction}};
    return j.dump(2);
}

CostReport make_cost_report(int width, int height, double joules_per_token, double battery_joules,
                            const LMConfig& cfg) {
    const TokenCost tc = openai_token_cost(width, height);
    const EnergyCost ec = energy_estimate(tc.tokens, joules_per_token, battery_joules);
    CostReport r;
    r.image_tokens = tc.tokens;
    r.tile_count = tc.tiles;
    r.energy_joules = ec.joules;
    r.battery_fraction = ec.battery_fraction;
    r.prefill_flops = prefill_flops(cfg, tc.tokens);
    r.decode_flops_per_token = decode_flops(cfg, tc.tokens);
    return r;
}

}  // namespace ovlm
