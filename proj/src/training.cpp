#include "ovlm/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "ovlm/kernels.hpp"
#include "ovlm/projector.hpp"

namespace ovlm {

Stage stage_from_name(const std::string& s) {
    if (s == "pretrain") return Stage::Pretrain;
    if (s == "sft") return Stage::SFT;
    if (s == "dpo") return Stage::DPO;
    throw ConfigError("unknown stage '" + s + "' (expected pretrain|sft|dpo)");
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Pretrain: return "pretrain";
        case Stage::SFT: return "sft";
        case Stage::DPO: return "dpo";
    }
    return "pretrain";
}

std::vector<std::string> stage_mask(Stage stage, const Weights& w) {
    std::vector<std::string> out;
    for (const auto& name : w.names()) {
        const std::string comp = component_of(name);  // throws on unlabeled params
        if (comp == "vision") continue;
        if (comp == "proj" || (stage != Stage::Pretrain && comp == "lm")) out.push_back(name);
    }
    return out;
}

namespace {

// Per-sample token NLL: returns (sum of -logprob, token count). Targets are
// the response tokens followed by EOS.
std::pair<Tensor, int> sample_nll(const TrainSample& s, const ModelConfig& cfg, const Weights& w,
                                  Graph* g) {
    if (s.response.empty()) throw ContractError("training caption must be nonempty");
    // Vision encoder is frozen in every stage; run it tape-free.
    Tensor emb = vision_encode(s.image, cfg.vision, w);
    Tensor img_tokens = project(emb, cfg, w, g);
    MultimodalSequence seq = assemble_sequence(img_tokens, tokenize(s.prompt), cfg.lm, w, g);
    std::vector<int> resp_ids = tokenize(s.response);
    Tensor resp_emb = embedding_lookup(w.at("lm.tok_embed"), resp_ids, g);
    Tensor full = concat_rows({seq.embeddings, resp_emb}, g);
    const int64_t P = seq.embeddings.dim(0);
    if (full.dim(0) > cfg.lm.max_seq) throw ContractError("training sequence exceeds max_seq");
    Tensor logits = lm_forward(full, cfg.lm, w, g);
    std::vector<int> targets = resp_ids;
    targets.push_back(tok::EOS);
    Tensor rows = slice_rows(logits, P - 1, static_cast<int64_t>(targets.size()), g);
    Tensor lps = select_logprobs(rows, targets, g);
    return {scale(sum(lps, g), real(-1), g), static_cast<int>(targets.size())};
}

// -log sigmoid(m), numerically stable, with d/dm = sigmoid(m) - 1.
Tensor neg_log_sigmoid(const Tensor& m, Graph* g) {
    const double mv = static_cast<double>(m.item());
    const double loss = mv >= 0 ? std::log1p(std::exp(-mv)) : -mv + std::log1p(std::exp(mv));
    Tensor out = Tensor::scalar(static_cast<real>(loss));
    if (g && m.requires_grad()) {
        out.set_requires_grad(true);
        out.ensure_grad();
        Tensor mc = m, oc = out;
        g->record([mc, oc, mv]() mutable {
            mc.ensure_grad();
            const double sig = 1.0 / (1.0 + std::exp(-mv));
            mc.grad()[0] += oc.grad()[0] * static_cast<real>(sig - 1.0);
        });
    }
    return out;
}

}  // namespace

Tensor caption_loss(const std::vector<const TrainSample*>& batch, const ModelConfig& cfg,
                    const Weights& w, Graph* g) {
    if (batch.empty()) throw ContractError("caption_loss requires a nonempty batch");
    Tensor total;
    int tokens = 0;
    for (const TrainSample* s : batch) {
        auto [nll, count] = sample_nll(*s, cfg, w, g);
        tokens += count;
        total = total.defined() ? add(total, nll, g) : nll;
    }
    return scale(total, real(1) / real(tokens), g);
}

Tensor dpo_loss(const DpoSample& pair, const ModelConfig& cfg, const Weights& policy,
                const Weights& reference, real beta, Graph* g) {
    if (beta <= 0) throw ConfigError("DPO beta must be positive");
    Tensor emb = vision_encode(pair.image, cfg.vision, policy);
    Tensor img_tokens = project(emb, cfg, policy, g);
    Tensor lp_chosen = sequence_logprob(img_tokens, pair.prompt, pair.chosen, cfg, policy, g);
    Tensor lp_rejected = sequence_logprob(img_tokens, pair.prompt, pair.rejected, cfg, policy, g);

    Tensor ref_emb = vision_encode(pair.image, cfg.vision, reference);
    Tensor ref_tokens = project(ref_emb, cfg, reference);
    const real ref_chosen =
        sequence_logprob(ref_tokens, pair.prompt, pair.chosen, cfg, reference).item();
    const real ref_rejected =
        sequence_logprob(ref_tokens, pair.prompt, pair.rejected, cfg, reference).item();

    // margin = beta * ((lp_c - ref_c) - (lp_r - ref_r))
    Tensor diff = add(lp_chosen, scale(lp_rejected, real(-1), g), g);
    Tensor shifted = add(diff, Tensor::scalar(ref_rejected - ref_chosen), g);
    Tensor margin = scale(shifted, beta, g);
    return neg_log_sigmoid(margin, g);
}

double dpo_margin(const DpoSample& pair, const ModelConfig& cfg, const Weights& policy,
                  const Weights& reference, real beta) {
    Tensor emb = vision_encode(pair.image, cfg.vision, policy);
    Tensor img_tokens = project(emb, cfg, policy);
    const double lp_c = sequence_logprob(img_tokens, pair.prompt, pair.chosen, cfg, policy).item();
    const double lp_r =
        sequence_logprob(img_tokens, pair.prompt, pair.rejected, cfg, policy).item();
    Tensor ref_emb = vision_encode(pair.image, cfg.vision, reference);
    Tensor ref_tokens = project(ref_emb, cfg, reference);
    const double rc = sequence_logprob(ref_tokens, pair.prompt, pair.chosen, cfg, reference).item();
    const double rr =
        sequence_logprob(ref_tokens, pair.prompt, pair.rejected, cfg, reference).item();
    return static_cast<double>(beta) * ((lp_c - rc) - (lp_r - rr));
}

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

PairBuildResult build_pairs(const std::vector<DpoRecord>& records, real tau) {
    if (tau <= 0 || tau > 1) throw ConfigError("tau must be in (0,1]");
    PairBuildResult out;
    int idx = 0;
    for (const DpoRecord& r : records) {
        ++idx;
        if (r.original == r.edited) {
            out.rejected_report.push_back("record " + std::to_string(idx) +
                                          ": original and edited are identical");
            continue;
        }
        if (r.original.empty() || r.edited.empty()) {
            out.rejected_report.push_back("record " + std::to_string(idx) + ": empty text");
            continue;
        }
        const std::vector<int> ta = tokenize(r.edited);
        const std::vector<int> tb = tokenize(r.original);
        const int dist = levenshtein(ta, tb);
        const float nd =
            static_cast<float>(dist) / static_cast<float>(std::max(ta.size(), tb.size()));
        if (nd > static_cast<float>(tau)) {
            out.rejected_report.push_back("record " + std::to_string(idx) +
                                          ": normalized distance " + std::to_string(nd) +
                                          " exceeds tau");
            continue;
        }
        PreferencePair p;
        p.prompt = r.prompt;
        p.image = r.image;
        p.chosen = r.edited;
        p.rejected = r.original;
        p.edit_distance = dist;
        p.normalized_distance = nd;
        out.admitted.push_back(std::move(p));
    }
    return out;
}

real perplexity(real mean_nll) {
    if (!std::isfinite(static_cast<double>(mean_nll))) {
        throw ContractError("perplexity requires a finite mean NLL");
    }
    return std::exp(mean_nll);
}

namespace {

double eval_caption_loss(const std::vector<TrainSample>& data, const ModelConfig& cfg,
                         const Weights& w) {
    std::vector<const TrainSample*> batch;
    for (const TrainSample& s : data) batch.push_back(&s);
    return static_cast<double>(caption_loss(batch, cfg, w).item());
}

}  // namespace

TrainOutput train_stage(const TrainConfig& tc, const ModelConfig& cfg, Weights& w,
                        const std::vector<TrainSample>& caption_data,
                        const std::vector<DpoSample>& dpo_data,
                        const std::vector<TrainSample>& val_data) {
    if (tc.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (tc.steps < 1 || tc.batch_size < 1) throw ConfigError("steps and batch_size must be >= 1");
    const bool is_dpo = tc.stage == Stage::DPO;
    if (is_dpo && dpo_data.empty()) throw InputError("DPO stage requires preference pairs");
    if (!is_dpo && caption_data.empty()) {
        throw InputError(stage_name(tc.stage) + " stage requires caption/QA samples");
    }

    const std::vector<std::string> mask = stage_mask(tc.stage, w);
    w.set_requires_grad_all(false);
    for (const auto& name : mask) w.at(name).set_requires_grad(true);

    Weights reference;
    if (is_dpo) {
        reference = w.deep_copy();
        reference.set_requires_grad_all(false);
    }

    std::unordered_map<std::string, std::vector<real>> velocity;
    for (const auto& name : mask) {
        velocity[name].assign(static_cast<size_t>(w.at(name).numel()), real(0));
    }

    const size_t n_data = is_dpo ? dpo_data.size() : caption_data.size();
    std::mt19937_64 rng(tc.seed);
    std::vector<size_t> order(n_data);
    for (size_t i = 0; i < n_data; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    size_t cursor = 0;
    auto next_index = [&]() {
        if (cursor >= order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        return order[cursor++];
    };

    TrainOutput out;
    for (int step = 0; step < tc.steps; ++step) {
        Graph g;
        Tensor loss;
        if (is_dpo) {
            Tensor total;
            for (int b = 0; b < tc.batch_size; ++b) {
                Tensor l = dpo_loss(dpo_data[next_index()], cfg, w, reference, tc.beta, &g);
                total = total.defined() ? add(total, l, &g) : l;
            }
            loss = scale(total, real(1) / real(tc.batch_size), &g);
        } else {
            std::vector<const TrainSample*> batch;
            for (int b = 0; b < tc.batch_size; ++b) batch.push_back(&caption_data[next_index()]);
            loss = caption_loss(batch, cfg, w, &g);
        }
        const double loss_v = static_cast<double>(loss.item());
        if (!std::isfinite(loss_v)) {
            throw std::runtime_error("non-finite " + stage_name(tc.stage) + " loss at step " +
                                     std::to_string(step));
        }
        if (step == 0) out.initial_loss = loss_v;
        out.final_loss = loss_v;

        g.backward(loss);
        for (const auto& name : mask) {
            Tensor& p = w.at(name);
            if (!p.has_grad()) continue;
            std::vector<real>& v = velocity[name];
            const real* gp = p.grad();
            real* pp = p.data();
            for (int64_t i = 0; i < p.numel(); ++i) {
                v[static_cast<size_t>(i)] = tc.momentum * v[static_cast<size_t>(i)] + gp[i];
                pp[i] -= tc.learning_rate * v[static_cast<size_t>(i)];
            }
        }
        w.zero_grads();

        MetricsRow row;
        row.step = step;
        row.loss = loss_v;
        if (!val_data.empty() && (step % tc.eval_interval == 0 || step + 1 == tc.steps)) {
            row.has_val = true;
            row.val_loss = eval_caption_loss(val_data, cfg, w);
            row.val_ppl = static_cast<double>(perplexity(static_cast<real>(row.val_loss)));
        }
        out.log.push_back(row);
    }
    w.set_requires_grad_all(false);
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write metrics CSV '" + path + "'");
    f << "step,loss,val_loss,val_ppl\n";
    for (const MetricsRow& r : log) {
        f << r.step << "," << r.loss << ",";
        if (r.has_val) {
            f << r.val_loss << "," << r.val_ppl;
        } else {
            f << ",";
        }
        f << "\n";
    }
}

std::string SweepResult::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const SweepCurve& c : curves) {
        j.push_back({{"ratio", c.ratio},
                     {"token_count", c.token_count},
                     {"steps", c.steps},
                     {"val_loss", c.val_loss}});
    }
    return j.dump(2);
}

std::string SweepResult::to_csv() const {
    std::string out = "step";
    for (const SweepCurve& c : curves) out += ",tokens_" + std::to_string(c.token_count);
    out += "\n";
    if (curves.empty()) return out;
    for (size_t i = 0; i < curves[0].steps.size(); ++i) {
        out += std::to_string(curves[0].steps[i]);
        for (const SweepCurve& c : curves) {
            out += "," + (i < c.val_loss.size() ? std::to_string(c.val_loss[i]) : std::string());
        }
        out += "\n";
    }
    return out;
}

SweepResult ratio_sweep(const ModelConfig& base_cfg, const std::vector<int>& ratios,
                        const TrainConfig& tc, const std::vector<TrainSample>& train_data,
                        const std::vector<TrainSample>& val_data) {
    SweepResult result;
    for (int r : ratios) {
        ModelConfig cfg = base_cfg;
        cfg.strategy.ratio = r;
        cfg.validate();  // config error when r does not divide the grid
        Weights w = init_weights(cfg, tc.seed);
        TrainConfig stage_tc = tc;
        stage_tc.stage = Stage::Pretrain;
        TrainOutput to = train_stage(stage_tc, cfg, w, train_data, {}, val_data);
        SweepCurve curve;
        curve.ratio = r;
        curve.token_count = cfg.vision.seq_len() / r;
        for (const MetricsRow& row : to.log) {
            if (row.has_val) {
                curve.steps.push_back(row.step);
                curve.val_loss.push_back(row.val_loss);
            }
        }
        result.curves.push_back(std::move(curve));
    }
    return result;
}

}  // namespace ovlm
