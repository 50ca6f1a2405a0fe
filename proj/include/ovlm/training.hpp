#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ovlm/checkpoint.hpp"
#include "ovlm/lm.hpp"
#include "ovlm/model.hpp"
#include "ovlm/vision.hpp"

namespace ovlm {

enum class Stage { Pretrain, SFT, DPO };

Stage stage_from_name(const std::string& s);
std::string stage_name(Stage s);

// Trainable parameter names for a stage. Pretrain: projector only; SFT/DPO:
// projector + LM. The vision encoder is never trainable.
std::vector<std::string> stage_mask(Stage stage, const Weights& w);

struct PreferencePair {
    std::string prompt;
    std::string image;
    std::string chosen;
    std::string rejected;
    int edit_distance = 0;
    float normalized_distance = 0;
};

struct TrainConfig {
    Stage stage = Stage::Pretrain;
    real learning_rate = real(0.1);
    real momentum = real(0.9);
    int steps = 500;
    int batch_size = 8;
    real beta = real(0.1);  // DPO temperature
    real tau = real(0.3);   // max normalized edit distance for pair admission
    uint64_t seed = 0;
    int eval_interval = 50;
};

// In-memory training samples (images already decoded).
struct TrainSample {
    Image image;
    std::string prompt;
    std::string response;
};
struct DpoSample {
    Image image;
    std::string prompt;
    std::string chosen;
    std::string rejected;
};

// Mean teacher-forced cross-entropy over caption tokens (plus the closing
// EOS); image and prompt positions are excluded from the loss.
Tensor caption_loss(const std::vector<const TrainSample*>& batch, const ModelConfig& cfg,
                    const Weights& w, Graph* g = nullptr);

// -log sigmoid(beta * [(logpi(chosen) - logref(chosen)) - (logpi(rejected) -
// logref(rejected))]). Differentiable w.r.t. policy only; the reference pass
// runs graph-free.
Tensor dpo_loss(const DpoSample& pair, const ModelConfig& cfg, const Weights& policy,
                const Weights& reference, real beta, Graph* g = nullptr);

// Implied preference margin beta * (dchosen - drejected), forward-only.
double dpo_margin(const DpoSample& pair, const ModelConfig& cfg, const Weights& policy,
                  const Weights& reference, real beta);

// Token-level edit distance, unit costs, O(|a||b|) dynamic program.
int levenshtein(const std::vector<int>& a, const std::vector<int>& b);

struct PairBuildResult {
    std::vector<PreferencePair> admitted;
    std::vector<std::string> rejected_report;  // one line per dropped record
};
PairBuildResult build_pairs(const std::vector<DpoRecord>& records, real tau);

real perplexity(real mean_nll);

struct MetricsRow {
    int step = 0;
    double loss = 0;
    bool has_val = false;
    double val_loss = 0;
    double val_ppl = 0;
};

struct TrainOutput {
    std::vector<MetricsRow> log;
    double initial_loss = 0;
    double final_loss = 0;
};

// Minibatch SGD (+momentum) over the stage's trainable set. Deterministic
// given seed/config/data. Updates w in place. Exactly one of caption_data /
// dpo_data must match the stage.
TrainOutput train_stage(const TrainConfig& tc, const ModelConfig& cfg, Weights& w,
                        const std::vector<TrainSample>& caption_data,
                        const std::vector<DpoSample>& dpo_data,
                        const std::vector<TrainSample>& val_data = {});

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log);

struct SweepCurve {
    int ratio = 0;
    int token_count = 0;
    std::vector<int> steps;
    std::vector<double> val_loss;
};

struct SweepResult {
    std::vector<SweepCurve> curves;
    std::string to_json() const;
    std::string to_csv() const;  // one column per ratio's token count
};

// Trains one identical toy model per ratio on the same data with the same
// seed (shared tensors are bit-identical across ratios by construction) and
// records validation loss per eval interval.
SweepResult ratio_sweep(const ModelConfig& base_cfg, const std::vector<int>& ratios,
                        const TrainConfig& tc, const std::vector<TrainSample>& train_data,
                        const std::vector<TrainSample>& val_data);

}  // namespace ovlm
