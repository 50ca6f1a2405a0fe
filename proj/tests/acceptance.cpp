// End-to-end acceptance suite. Each numbered criterion prints exactly one
// PASS/FAIL line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovlm/bench.hpp"
#include "ovlm/checkpoint.hpp"
#include "ovlm/costmodel.hpp"
#include "ovlm/lm.hpp"
#include "ovlm/projector.hpp"
#include "ovlm/training.hpp"
#include "ovlm/vision.hpp"

#include "acceptance_grad.hpp"
#include "test_util.hpp"

using namespace ovlm;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Outcome {
    bool ok;
    std::string detail;
};

void run_criterion(int idx, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("unexpected exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d [%s] %s — %s (%.2f s)\n", idx, name.c_str(),
                o.ok ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
Outcome shape_contract() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig base;  // default vision: 27x27 grid, 729 patch tokens
    if (base.vision.seq_len() != 729) return {false, "default grid is not 729 tokens"};
    std::mt19937_64 rng(1);
    Tensor emb = Tensor::randn({1, 729, base.vision.d_vision}, rng, real(0.5));
    int combos = 0;
    bool saw_r9 = false;
    for (auto kind : {CompressionStrategy::Kind::Reshape, CompressionStrategy::Kind::Conv1D,
                      CompressionStrategy::Kind::Conv2D}) {
        for (int ratio : {1, 3, 9, 81}) {
            ModelConfig cfg = base;
            cfg.strategy.kind = kind;
            cfg.strategy.ratio = ratio;
            Weights w = init_weights(cfg, 2);
            Tensor out = project(emb, cfg, w);
            const Shape want = {1, 729 / ratio, cfg.lm.d_lm};
            if (out.shape() != want) {
                return {false, fmt("%s r=%d produced %s, expected [1,%d,%d]",
                                   strategy_kind_name(kind).c_str(), ratio,
                                   shape_str(out.shape()).c_str(), 729 / ratio, cfg.lm.d_lm)};
            }
            if (ratio == 9) {
                if (emb.dim(1) != 729 || out.dim(1) != 81) return {false, "r=9 is not 729->81"};
                saw_r9 = true;
            }
            ++combos;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 1.0) return {false, fmt("took %.2f s, bound is 1 s", secs)};
    return {combos == 12 && saw_r9,
            fmt("12 strategy/ratio combos emit [1,729/r,d_lm]; r=9 maps 729->81 tokens")};
}

// ---------------------------------------------------------------- criterion 2
Outcome cost_arithmetic() {
    const auto t0 = std::chrono::steady_clock::now();
    const TokenCost tc = openai_token_cost(1024, 1024);
    if (tc.tokens != 765 || tc.tiles != 4) {
        return {false, fmt("1024x1024 -> %d tokens / %d tiles, expected 765 / 4", tc.tokens,
                           tc.tiles)};
    }
    const EnergyCost ec = energy_estimate(765);
    if (std::abs(ec.joules - 535.5) > 1e-9) {
        return {false, fmt("energy_estimate(765) = %.6f J, expected 535.5", ec.joules)};
    }
    if (!(ec.battery_fraction > 0.01)) {
        return {false, fmt("battery fraction %.4f is not > 1%%", ec.battery_fraction)};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 1e-3) return {false, fmt("took %.5f s, bound is 1 ms", secs)};
    return {true, fmt("765 tokens, 535.5 J, battery fraction %.3f%%", 100 * ec.battery_fraction)};
}

// ---------------------------------------------------------------- criterion 3
Outcome gradient_correctness() {
    const double tol = 1e-2;  // f32 compute path; the f64 binary asserts 1e-5
    ovlm_acc::GradReport rep =
        ovlm_acc::run_gradient_criterion(tol, 1e-3, /*composite_per_tensor=*/false);
    if (rep.composite_params > 5000) {
        return {false, fmt("composite has %lld params, budget is 5000",
                           static_cast<long long>(rep.composite_params))};
    }
    return {rep.ok, fmt("%d checks incl. %lld-param composite, worst rel err %.2e (%s), tol %.0e",
                        rep.checks_run, static_cast<long long>(rep.composite_params),
                        rep.worst_err, rep.worst_name.c_str(), tol)};
}

// ---------------------------------------------------------------- criterion 4
Outcome kv_cache_equivalence() {
    ModelConfig cfg = ovlm_test::tiny_config();
    double worst = 0;
    for (int inst = 0; inst < 100; ++inst) {
        Weights w = init_weights(cfg, static_cast<uint64_t>(inst));
        std::mt19937_64 rng(1000 + inst);
        const int T = 2 + static_cast<int>(rng() % 63);  // sequence length <= 64
        Tensor emb = Tensor::randn({T, cfg.lm.d_lm}, rng, real(0.5));
        Tensor full = lm_forward(emb, cfg.lm, w);  // cache-free recompute

        const int T0 = 1 + static_cast<int>(rng() % static_cast<uint64_t>(T));
        Tensor head = Tensor::from({T0, cfg.lm.d_lm},
                                   {emb.vec().begin(), emb.vec().begin() + T0 * cfg.lm.d_lm});
        KVCache cache = KVCache::make(cfg.lm);
        Tensor prefill_logits = lm_forward(head, cfg.lm, w, nullptr, &cache);
        for (int64_t i = 0; i < prefill_logits.numel(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(prefill_logits.data()[i]) -
                                             static_cast<double>(full.data()[i])));
        }
        for (int t = T0; t < T; ++t) {
            std::vector<real> row(emb.data() + static_cast<int64_t>(t) * cfg.lm.d_lm,
                                  emb.data() + static_cast<int64_t>(t + 1) * cfg.lm.d_lm);
            std::vector<real> logits = decode_step(cache, row, cfg.lm, w);
            const real* ref = full.data() + static_cast<int64_t>(t) * cfg.lm.vocab_size;
            for (int v = 0; v < cfg.lm.vocab_size; ++v) {
                worst = std::max(worst, std::abs(static_cast<double>(logits[v]) -
                                                 static_cast<double>(ref[v])));
            }
        }
    }
    return {worst <= 1e-4, fmt("100 instances, max |cached - recomputed| = %.2e (bound 1e-4)",
                               worst)};
}

// ---------------------------------------------------------------- criterion 5
Outcome stage_masks() {
    ModelConfig cfg = ovlm_test::tiny_config();
    std::vector<TrainSample> caps;
    std::vector<DpoSample> pairs;
    for (int i = 0; i < 4; ++i) {
        SyntheticSample s = make_synthetic_sample(cfg.vision.image_size, 100 + i);
        caps.push_back({s.image, "p", s.caption});
        std::string bad = s.caption;
        bad[2] = 'x';
        pairs.push_back({s.image, "p", s.caption, bad});
    }
    for (Stage stage : {Stage::Pretrain, Stage::SFT, Stage::DPO}) {
        Weights w = init_weights(cfg, 9);
        Weights before = w.deep_copy();
        const std::vector<std::string> mask = stage_mask(stage, w);
        const std::set<std::string> trainable(mask.begin(), mask.end());
        if (stage == Stage::Pretrain) {
            for (const auto& n : mask) {
                if (component_of(n) != "proj") {
                    return {false, "pretrain mask includes non-projector tensor " + n};
                }
            }
        }
        TrainConfig tc;
        tc.stage = stage;
        tc.learning_rate = real(0.05);
        tc.steps = 3;
        tc.batch_size = 2;
        train_stage(tc, cfg, w, caps, pairs, {});
        bool any_trainable_moved = false;
        for (const auto& n : w.names()) {
            const bool identical = w.at(n).vec() == before.at(n).vec();
            if (trainable.count(n)) {
                any_trainable_moved = any_trainable_moved || !identical;
            } else if (!identical) {
                return {false, stage_name(stage) + " modified frozen tensor " + n};
            }
        }
        if (!any_trainable_moved) {
            return {false, stage_name(stage) + " left every trainable tensor untouched"};
        }
    }
    return {true, "frozen tensors bit-identical after each stage; pretrain touches proj only"};
}

// ---------------------------------------------------------------- criterion 6
Outcome dpo_properties() {
    ModelConfig cfg = ovlm_test::tiny_config();
    // (a) loss at policy == reference is exactly -log sigmoid(0) = ln 2
    double worst_ln2 = 0;
    for (int i = 0; i < 50; ++i) {
        Weights w = init_weights(cfg, static_cast<uint64_t>(200 + i / 10));
        SyntheticSample a = make_synthetic_sample(cfg.vision.image_size, 300 + i);
        SyntheticSample b = make_synthetic_sample(cfg.vision.image_size, 400 + i);
        DpoSample pair{a.image, "p", a.caption, b.caption};
        const double loss =
            static_cast<double>(dpo_loss(pair, cfg, w, w, real(0.1) + real(0.01) * (i % 5)).item());
        worst_ln2 = std::max(worst_ln2, std::abs(loss - std::log(2.0)));
    }
    if (worst_ln2 > 1e-6) {
        return {false, fmt("policy==reference loss deviates from ln2 by %.2e", worst_ln2)};
    }
    // (b) 200 DPO steps on 32 minimal-edit pairs raise the mean held-out margin
    std::vector<DpoSample> train_pairs, held_out;
    for (int i = 0; i < 40; ++i) {
        SyntheticSample s = make_synthetic_sample(cfg.vision.image_size, 1000 + i);
        std::string rejected = s.caption;
        rejected[2] = 'x';  // single-substitution minimal edit
        DpoSample p{s.image, "p", s.caption, rejected};
        (i < 32 ? train_pairs : held_out).push_back(std::move(p));
    }
    Weights policy = init_weights(cfg, 0);
    Weights reference = policy.deep_copy();
    const real beta = real(0.1);
    auto mean_margin = [&]() {
        double m = 0;
        for (const auto& p : held_out) m += dpo_margin(p, cfg, policy, reference, beta);
        return m / static_cast<double>(held_out.size());
    };
    const double margin0 = mean_margin();  // exactly 0: policy starts at the reference
    TrainConfig tc;
    tc.stage = Stage::DPO;
    tc.learning_rate = real(0.2);
    tc.steps = 200;
    tc.batch_size = 8;
    tc.beta = beta;
    train_stage(tc, cfg, policy, {}, train_pairs, {});
    const double margin1 = mean_margin();
    if (!(margin1 > margin0)) {
        return {false, fmt("held-out margin %.4f did not increase from %.4f", margin1, margin0)};
    }
    return {true, fmt("ln2 dev %.1e over 50 pairs; held-out margin %.3f -> %.3f after 200 steps",
                      worst_ln2, margin0, margin1)};
}

// ---------------------------------------------------------------- criterion 7
Outcome minimal_edit_tooling() {
    // Independent oracle: BFS over the exact edit graph of all strings of
    // length <= 6 over {a,b,c}. Shortest path length equals edit distance
    // (optimal alignments never need intermediate strings longer than the
    // longer endpoint).
    std::vector<std::string> strings;
    {
        std::vector<std::string> frontier = {""};
        strings.push_back("");
        for (int len = 1; len <= 6; ++len) {
            std::vector<std::string> next;
            for (const auto& s : frontier) {
                for (char c : {'a', 'b', 'c'}) {
                    next.push_back(s + c);
                    strings.push_back(s + c);
                }
            }
            frontier = std::move(next);
        }
    }
    std::unordered_map<std::string, int> index;
    for (size_t i = 0; i < strings.size(); ++i) index[strings[i]] = static_cast<int>(i);
    const int N = static_cast<int>(strings.size());  // 1093

    std::vector<std::vector<int>> adj(N);
    for (int i = 0; i < N; ++i) {
        const std::string& s = strings[i];
        std::set<std::string> nbrs;
        for (size_t p = 0; p < s.size(); ++p) {
            for (char c : {'a', 'b', 'c'}) {
                if (c != s[p]) {
                    std::string t = s;
                    t[p] = c;
                    nbrs.insert(t);  // substitution
                }
            }
            nbrs.insert(s.substr(0, p) + s.substr(p + 1));  // deletion
        }
        if (s.size() < 6) {
            for (size_t p = 0; p <= s.size(); ++p) {
                for (char c : {'a', 'b', 'c'}) nbrs.insert(s.substr(0, p) + c + s.substr(p));
            }
        }
        for (const auto& t : nbrs) adj[i].push_back(index.at(t));
    }

    std::vector<std::vector<int>> toks(N);
    for (int i = 0; i < N; ++i) toks[i] = tokenize(strings[i]);
    long long checked = 0;
    for (int src = 0; src < N; ++src) {
        std::vector<int> dist(N, -1);
        std::queue<int> q;
        dist[src] = 0;
        q.push(src);
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push(v);
                }
            }
        }
        for (int dst = 0; dst < N; ++dst) {
            if (levenshtein(toks[src], toks[dst]) != dist[dst]) {
                return {false, fmt("levenshtein(\"%s\",\"%s\") != BFS oracle %d",
                                   strings[src].c_str(), strings[dst].c_str(), dist[dst])};
            }
            ++checked;
        }
    }

    // build_pairs admits exactly the records whose normalized distance <= tau.
    std::vector<DpoRecord> recs = {
        {"i", "p", "abcd", "abcx"},  // distance 1, normalized 0.25
        {"i", "p", "abcd", "axyd"},  // distance 2, normalized 0.50
        {"i", "p", "abcd", "abcd"},  // identical -> rejected
        {"i", "p", "", "abcd"},      // empty -> rejected
    };
    PairBuildResult at_25 = build_pairs(recs, real(0.25));
    PairBuildResult at_50 = build_pairs(recs, real(0.5));
    PairBuildResult at_10 = build_pairs(recs, real(0.1));
    if (at_25.admitted.size() != 1 || at_25.rejected_report.size() != 3 ||
        at_50.admitted.size() != 2 || at_10.admitted.size() != 0) {
        return {false, fmt("build_pairs tau boundary wrong: %zu/%zu/%zu admitted at 0.25/0.5/0.1",
                           at_25.admitted.size(), at_50.admitted.size(), at_10.admitted.size())};
    }
    if (at_25.admitted[0].edit_distance != 1 ||
        std::abs(at_25.admitted[0].normalized_distance - 0.25f) > 1e-7f) {
        return {false, "admitted pair carries wrong distance metadata"};
    }
    return {true, fmt("%lld ordered pairs match the BFS oracle; tau admission exact at 0.25/0.5",
                      checked)};
}

// ---------------------------------------------------------------- criterion 8
Outcome ratio_sweep_protocol() {
    ModelConfig cfg;
    cfg.vision.image_size = 54;  // 27x27 grid of 2px patches -> 729 tokens
    cfg.vision.patch_size = 2;
    cfg.vision.d_vision = 8;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 2;
    cfg.vision.d_ff = 16;
    cfg.lm.d_lm = 16;
    cfg.lm.n_layers = 1;
    cfg.lm.n_heads = 2;
    cfg.lm.d_ff = 32;
    cfg.lm.max_seq = 800;
    cfg.d_proj = 16;
    std::vector<TrainSample> train_data, val_data;
    for (int i = 0; i < 4; ++i) {
        SyntheticSample s = make_synthetic_sample(cfg.vision.image_size, 500 + i);
        train_data.push_back({s.image, "p", s.caption});
    }
    for (int i = 0; i < 2; ++i) {
        SyntheticSample s = make_synthetic_sample(cfg.vision.image_size, 600 + i);
        val_data.push_back({s.image, "p", s.caption});
    }
    TrainConfig tc;
    tc.stage = Stage::Pretrain;
    tc.learning_rate = real(0.05);
    tc.steps = 2;
    tc.batch_size = 2;
    tc.eval_interval = 1;
    tc.seed = 7;
    SweepResult res = ratio_sweep(cfg, {1, 3, 9, 81}, tc, train_data, val_data);
    if (res.curves.size() != 4) return {false, fmt("%zu curves, expected 4", res.curves.size())};
    const int want_tokens[4] = {729, 243, 81, 9};
    for (int i = 0; i < 4; ++i) {
        const SweepCurve& c = res.curves[i];
        if (c.token_count != want_tokens[i]) {
            return {false, fmt("curve %d has %d tokens, expected %d", i, c.token_count,
                               want_tokens[i])};
        }
        if (c.steps != res.curves[0].steps || c.val_loss.empty()) {
            return {false, fmt("curve %d has mismatched eval grid or no val points", i)};
        }
        for (double v : c.val_loss) {
            if (!std::isfinite(v)) return {false, fmt("curve %d has non-finite val loss", i)};
        }
    }
    std::istringstream csv(res.to_csv());
    std::string header;
    std::getline(csv, header);
    if (header != "step,tokens_729,tokens_243,tokens_81,tokens_9") {
        return {false, "csv header is '" + header + "'"};
    }
    return {true, fmt("4 curves {729,243,81,9} tokens on identical seeds, %zu val points each",
                      res.curves[0].val_loss.size())};
}

// ---------------------------------------------------------------- criterion 9
Outcome ttft_speedup() {
    ModelConfig cfg;  // cheap vision, LM large enough that prefill dominates
    cfg.vision.d_vision = 8;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 2;
    cfg.vision.d_ff = 16;
    cfg.lm.d_lm = 64;
    cfg.lm.n_layers = 2;
    cfg.lm.n_heads = 4;
    cfg.lm.d_ff = 128;
    cfg.d_proj = 64;
    Weights w = init_weights(cfg, 0);
    BenchOptions opts;
    opts.runs = 5;
    opts.warmup = 1;
    opts.decode_tokens = 8;
    opts.prompt = "p";
    std::vector<BenchmarkReport> reports = run_matrix(cfg, w, {1, 3, 9, 81}, opts, 0);
    if (reports.size() != 4) return {false, "expected 4 ratio reports"};
    for (const auto& r : reports) {
        if (r.invalid_runs != 0 || r.ttft_ms.median <= 0) {
            return {false, fmt("ratio %d produced invalid runs", r.ratio)};
        }
    }
    for (int i = 1; i < 4; ++i) {
        if (reports[i].ttft_ms.median > reports[i - 1].ttft_ms.median) {
            return {false, fmt("TTFT not nonincreasing: r=%d %.2f ms > r=%d %.2f ms",
                               reports[i].ratio, reports[i].ttft_ms.median, reports[i - 1].ratio,
                               reports[i - 1].ttft_ms.median)};
        }
    }
    const double speedup = reports[0].ttft_ms.median / reports[2].ttft_ms.median;
    return {speedup >= 3.0,
            fmt("median-of-5 TTFT r1/r9 = %.2fx (%.1f ms vs %.1f ms), nonincreasing over "
                "{1,3,9,81}",
                speedup, reports[0].ttft_ms.median, reports[2].ttft_ms.median)};
}

// --------------------------------------------------------------- criterion 10
Outcome training_convergence() {
    ModelConfig cfg;
    cfg.vision.image_size = 24;
    cfg.vision.patch_size = 4;
    cfg.vision.d_vision = 16;
    cfg.vision.n_layers = 1;
    cfg.vision.n_heads = 4;
    cfg.vision.d_ff = 32;
    cfg.lm.d_lm = 128;
    cfg.lm.n_layers = 2;
    cfg.lm.n_heads = 4;
    cfg.lm.d_ff = 256;
    cfg.lm.max_seq = 200;
    cfg.lm.rope_theta = 100.0f;
    cfg.strategy.kind = CompressionStrategy::Kind::Reshape;
    cfg.strategy.ratio = 1;
    cfg.d_proj = 128;
    Weights w = init_weights(cfg, 0);  // default seed
    std::vector<TrainSample> data;
    for (int i = 0; i < 64; ++i) {
        SyntheticSample s = make_synthetic_sample(cfg.vision.image_size, static_cast<uint64_t>(i));
        data.push_back({s.image, "c", s.caption});
    }
    TrainConfig tc;
    tc.stage = Stage::Pretrain;
    tc.learning_rate = real(0.3);
    tc.steps = 500;
    tc.batch_size = 8;
    tc.seed = 0;
    TrainOutput out = train_stage(tc, cfg, w, data, {}, {});
    const double ln_vocab = std::log(static_cast<double>(cfg.lm.vocab_size));
    if (std::abs(out.initial_loss - ln_vocab) > 0.5) {
        return {false, fmt("initial loss %.3f not within 0.5 of ln(vocab)=%.3f", out.initial_loss,
                           ln_vocab)};
    }
    const bool halved = out.final_loss <= 0.5 * out.initial_loss;
    return {halved, fmt("projector-only pretrain on 64 pairs: loss %.3f -> %.3f (%.1f%% drop, "
                        "initial within %.2f of ln vocab)",
                        out.initial_loss, out.final_loss,
                        100.0 * (1.0 - out.final_loss / out.initial_loss),
                        std::abs(out.initial_loss - ln_vocab))};
}

// --------------------------------------------------------------- criterion 11
Outcome persistence() {
    fs::path dir = fs::temp_directory_path() / "ovlm_acceptance_ckpt";
    fs::create_directories(dir);
    std::mt19937_64 rng(77);
    fs::path last;
    for (int i = 0; i < 50; ++i) {
        ModelConfig cfg;
        const int grid = std::vector<int>{3, 6, 9}[rng() % 3];
        cfg.vision.patch_size = 2;
        cfg.vision.image_size = 2 * grid;
        cfg.vision.d_vision = (rng() % 2) ? 4 : 8;
        cfg.vision.n_layers = 1 + static_cast<int>(rng() % 2);
        cfg.vision.n_heads = 2;
        cfg.vision.d_ff = 2 * cfg.vision.d_vision;
        cfg.lm.d_lm = (rng() % 2) ? 4 : 8;
        cfg.lm.n_layers = 1 + static_cast<int>(rng() % 2);
        cfg.lm.n_heads = 2;
        cfg.lm.d_ff = 2 * cfg.lm.d_lm;
        cfg.lm.vocab_size = 261 + static_cast<int>(rng() % 3);
        cfg.lm.max_seq = grid * grid + 16;
        const int kinds = 3;
        cfg.strategy.kind = static_cast<CompressionStrategy::Kind>(rng() % kinds);
        std::vector<int> ratios = {1, 3, 9};
        if (grid == 9) ratios.push_back(81);
        cfg.strategy.ratio = ratios[rng() % ratios.size()];
        cfg.d_proj = (rng() % 2) ? 4 : 8;
        cfg.validate();
        Weights w = init_weights(cfg, rng());
        last = dir / fmt("cfg_%02d.bin", i);
        save_checkpoint(last.string(), cfg, w);
        LoadedCheckpoint lc = load_checkpoint(last.string());
        if (lc.config.to_json() != cfg.to_json()) {
            return {false, fmt("config %d round-trip changed the config", i)};
        }
        if (lc.weights.size() != w.size()) return {false, fmt("config %d tensor count changed", i)};
        for (const auto& name : w.names()) {
            if (lc.weights.at(name).vec() != w.at(name).vec()) {
                return {false, fmt("config %d tensor %s not bit-exact", i, name.c_str())};
            }
        }
    }
    // structural corruption must surface as typed errors, never crashes
    std::ifstream in(last, std::ios::binary);
    std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    int typed = 0, total = 0;
    auto expect_checkpoint_error = [&](const std::vector<char>& mutated) {
        fs::path q = dir / "corrupt.bin";
        std::ofstream out(q, std::ios::binary | std::ios::trunc);
        out.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
        out.close();
        ++total;
        try {
            load_checkpoint(q.string());
        } catch (const CheckpointError&) {
            ++typed;
        } catch (...) {
        }
    };
    for (size_t keep : {size_t(0), size_t(3), size_t(12), size_t(64), bytes.size() / 2,
                        bytes.size() - 1}) {
        expect_checkpoint_error({bytes.begin(), bytes.begin() + static_cast<int64_t>(keep)});
    }
    auto mutated = bytes;
    mutated[0] = 'Z';  // magic
    expect_checkpoint_error(mutated);
    mutated = bytes;
    mutated[4] = 77;  // version
    expect_checkpoint_error(mutated);
    fs::remove_all(dir);
    if (typed != total) {
        return {false, fmt("%d/%d corruptions raised a typed checkpoint error", typed, total)};
    }
    return {true, fmt("50 random configs round-trip bit-exact; %d/%d corruptions raised typed "
                      "errors",
                      typed, total)};
}

}  // namespace

int main() {
    run_criterion(1, "shape contract", shape_contract);
    run_criterion(2, "cost arithmetic", cost_arithmetic);
    run_criterion(3, "gradient correctness f32", gradient_correctness);
    run_criterion(4, "kv-cache equivalence", kv_cache_equivalence);
    run_criterion(5, "stage masks", stage_masks);
    run_criterion(6, "dpo properties", dpo_properties);
    run_criterion(7, "minimal-edit tooling", minimal_edit_tooling);
    run_criterion(8, "ratio-sweep protocol", ratio_sweep_protocol);
    run_criterion(9, "ttft speedup", ttft_speedup);
    run_criterion(10, "training convergence", training_convergence);
    run_criterion(11, "persistence", persistence);
    if (g_failures != 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 11 criteria passed\n");
    return 0;
}
