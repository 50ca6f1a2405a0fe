#include "ovlm/lm.hpp"

#include <cmath>
#include <cstring>

#include "ovlm/blocks.hpp"
#include "ovlm/kernels.hpp"
#include "ovlm/projector.hpp"

namespace ovlm {

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= tok::VOCAB) {
            throw ContractError("token id " + std::to_string(id) + " outside vocab");
        }
        if (id >= 256) {
            throw ContractError("cannot detokenize special token id " + std::to_string(id));
        }
        out.push_back(static_cast<char>(id));
    }
    return out;
}

Tensor multihead_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                           const Tensor& wo, int n_heads, bool causal, real rope_theta,
                           int pos_offset, Graph* g, AttentionKV* kv_out) {
    const int64_t T = x.dim(0), d = x.dim(1);
    if (d % n_heads != 0) throw ConfigError("attention dim not divisible by head count");
    const int64_t hd = d / n_heads;

    auto heads = [&](const Tensor& m) {
        return transpose_01(reshape(m, {T, n_heads, hd}, g), g);  // [H, T, hd]
    };
    Tensor q = heads(matmul(x, wq, g));
    Tensor k = heads(matmul(x, wk, g));
    Tensor v = heads(matmul(x, wv, g));
    if (rope_theta > 0) {
        q = rope(q, pos_offset, rope_theta, g);
        k = rope(k, pos_offset, rope_theta, g);
    }
    if (kv_out) {
        kv_out->k = k;
        kv_out->v = v;
    }
    Tensor scores = scale(matmul(q, transpose_12(k, g), g), real(1) / std::sqrt(real(hd)), g);
    if (causal) {
        Tensor mask({T, T});
        real* mp = mask.data();
        for (int64_t i = 0; i < T; ++i) {
            for (int64_t j = i + 1; j < T; ++j) mp[i * T + j] = real(-1e9);
        }
        scores = add_broadcast(scores, mask, g);
    }
    Tensor attn = softmax(scores, g);
    Tensor out = matmul(attn, v, g);                       // [H, T, hd]
    out = reshape(transpose_01(out, g), {T, d}, g);        // [T, d]
    return matmul(out, wo, g);
}

KVCache KVCache::make(const LMConfig& cfg) {
    KVCache c;
    c.n_layers = cfg.n_layers;
    c.n_heads = cfg.n_heads;
    c.head_dim = cfg.head_dim();
    c.max_seq = cfg.max_seq;
    const size_t per_layer = static_cast<size_t>(cfg.n_heads) * cfg.max_seq * cfg.head_dim();
    c.k.assign(static_cast<size_t>(cfg.n_layers), std::vector<real>(per_layer, real(0)));
    c.v.assign(static_cast<size_t>(cfg.n_layers), std::vector<real>(per_layer, real(0)));
    return c;
}

real* KVCache::k_at(int layer, int head, int t) {
    return k[static_cast<size_t>(layer)].data() +
           (static_cast<size_t>(head) * max_seq + t) * head_dim;
}
real* KVCache::v_at(int layer, int head, int t) {
    return v[static_cast<size_t>(layer)].data() +
           (static_cast<size_t>(head) * max_seq + t) * head_dim;
}

MultimodalSequence assemble_sequence(const Tensor& img_tokens, const std::vector<int>& prompt_ids,
                                     const LMConfig& cfg, const Weights& w, Graph* g) {
    if (img_tokens.ndim() != 3 || img_tokens.dim(0) != 1 || img_tokens.dim(2) != cfg.d_lm) {
        throw DimensionError("image tokens must be [1, S, d_lm], got " +
                             shape_str(img_tokens.shape()));
    }
    const Tensor& table = w.at("lm.tok_embed");
    const int64_t S = img_tokens.dim(1);
    std::vector<Tensor> parts;
    parts.push_back(embedding_lookup(table, {tok::BOS, tok::IMG_START}, g));
    parts.push_back(reshape(img_tokens, {S, cfg.d_lm}, g));
    std::vector<int> tail = {tok::IMG_END};
    tail.insert(tail.end(), prompt_ids.begin(), prompt_ids.end());
    parts.push_back(embedding_lookup(table, tail, g));
    MultimodalSequence seq;
    seq.embeddings = concat_rows(parts, g);
    seq.image_span_start = 2;
    seq.image_span_len = static_cast<int>(S);
    seq.prompt_ids = prompt_ids;
    return seq;
}

Tensor lm_forward(const Tensor& embeddings, const LMConfig& cfg, const Weights& w, Graph* g,
                  KVCache* cache) {
    const int64_t T = embeddings.dim(0);
    const int pos_offset = cache ? cache->filled_len : 0;
    if (pos_offset + T > cfg.max_seq) {
        throw ContractError("context overflow: " + std::to_string(pos_offset + T) + " > " +
                            std::to_string(cfg.max_seq));
    }
    const real eps = real(1e-5);
    Tensor x = embeddings;
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "lm.blocks." + std::to_string(i) + ".";
        Tensor h = layernorm(x, w.at(p + "ln1.g"), w.at(p + "ln1.b"), eps, g);
        AttentionKV kv;
        Tensor attn =
            multihead_attention(h, w.at(p + "wq"), w.at(p + "wk"), w.at(p + "wv"), w.at(p + "wo"),
                                cfg.n_heads, /*causal=*/true, real(cfg.rope_theta), pos_offset, g,
                                cache ? &kv : nullptr);
        if (cache) {
            const int hd = cfg.head_dim();
            for (int hh = 0; hh < cfg.n_heads; ++hh) {
                for (int64_t t = 0; t < T; ++t) {
                    std::memcpy(cache->k_at(i, hh, pos_offset + static_cast<int>(t)),
                                kv.k.data() + (static_cast<int64_t>(hh) * T + t) * hd,
                                sizeof(real) * static_cast<size_t>(hd));
                    std::memcpy(cache->v_at(i, hh, pos_offset + static_cast<int>(t)),
                                kv.v.data() + (static_cast<int64_t>(hh) * T + t) * hd,
                                sizeof(real) * static_cast<size_t>(hd));
                }
            }
        }
        x = add(x, attn, g);
        Tensor m = layernorm(x, w.at(p + "ln2.g"), w.at(p + "ln2.b"), eps, g);
        Tensor gate = silu(matmul(m, w.at(p + "gate.w"), g), g);
        Tensor up = matmul(m, w.at(p + "up.w"), g);
        Tensor mlp = matmul(mul(gate, up, g), w.at(p + "down.w"), g);
        x = add(x, mlp, g);
    }
    x = layernorm(x, w.at("lm.ln_f.g"), w.at("lm.ln_f.b"), eps, g);
    Tensor logits = matmul(x, w.at("lm.head.w"), g);
    if (cache) cache->filled_len += static_cast<int>(T);
    return logits;
}

Tensor prefill(const MultimodalSequence& seq, const LMConfig& cfg, const Weights& w,
               KVCache& cache) {
    const int64_t T = seq.embeddings.dim(0);
    Tensor logits = lm_forward(seq.embeddings, cfg, w, nullptr, &cache);
    return reshape(slice_rows(logits, T - 1, 1), {cfg.vocab_size});
}

std::vector<real> decode_step(KVCache& cache, const std::vector<real>& last_token_embedding,
                              const LMConfig& cfg, const Weights& w) {
    if (cache.filled_len >= cache.max_seq) {
        throw ContractError("context overflow: cache already holds max_seq tokens");
    }
    const int d = cfg.d_lm;
    if (static_cast<int>(last_token_embedding.size()) != d) {
        throw DimensionError("decode_step embedding size mismatch");
    }
    const int hd = cfg.head_dim();
    const int H = cfg.n_heads;
    const int pos = cache.filled_len;
    const real eps = real(1e-5);
    const real inv_sqrt_hd = real(1) / std::sqrt(real(hd));

    auto ln = [&](const std::vector<real>& x, const real* gp, const real* bp) {
        std::vector<real> y(x.size());
        const size_t n = x.size();
        real mu = kernels::reduce_sum(x.data(), n) / real(n);
        real var = 0;
        for (size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= real(n);
        const real is = real(1) / std::sqrt(var + eps);
        for (size_t i = 0; i < n; ++i) y[i] = (x[i] - mu) * is * gp[i] + bp[i];
        return y;
    };
    // row-vector times [in, out] matrix
    auto vecmat = [](const std::vector<real>& x, const Tensor& m) {
        const int64_t in = m.dim(0), out = m.dim(1);
        std::vector<real> y(static_cast<size_t>(out), real(0));
        for (int64_t i = 0; i < in; ++i) {
            kernels::axpy(y.data(), x[static_cast<size_t>(i)], m.data() + i * out,
                          static_cast<size_t>(out));
        }
        return y;
    };
    auto rot = [&](real* head_vec) {
        for (int i = 0; i < hd / 2; ++i) {
            const double freq = std::pow(static_cast<double>(cfg.rope_theta),
                                         -2.0 * static_cast<double>(i) / static_cast<double>(hd));
            const double ang = static_cast<double>(pos) * freq;
            const real c = static_cast<real>(std::cos(ang));
            const real s = static_cast<real>(std::sin(ang));
            const real x0 = head_vec[2 * i], x1 = head_vec[2 * i + 1];
            head_vec[2 * i] = x0 * c - x1 * s;
            head_vec[2 * i + 1] = x0 * s + x1 * c;
        }
    };

    std::vector<real> x = last_token_embedding;
    std::vector<real> scores(static_cast<size_t>(pos) + 1);
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const std::string p = "lm.blocks." + std::to_string(layer) + ".";
        std::vector<real> h = ln(x, w.at(p + "ln1.g").data(), w.at(p + "ln1.b").data());
        std::vector<real> q = vecmat(h, w.at(p + "wq"));
        std::vector<real> k = vecmat(h, w.at(p + "wk"));
        std::vector<real> v = vecmat(h, w.at(p + "wv"));
        std::vector<real> attn_out(static_cast<size_t>(d), real(0));
        for (int hh = 0; hh < H; ++hh) {
            real* qh = q.data() + hh * hd;
            real* kh = k.data() + hh * hd;
            rot(qh);
            rot(kh);
            std::memcpy(cache.k_at(layer, hh, pos), kh, sizeof(real) * static_cast<size_t>(hd));
            std::memcpy(cache.v_at(layer, hh, pos), v.data() + hh * hd,
                        sizeof(real) * static_cast<size_t>(hd));
            for (int t = 0; t <= pos; ++t) {
                scores[static_cast<size_t>(t)] =
                    kernels::dot(qh, cache.k_at(layer, hh, t), static_cast<size_t>(hd)) *
                    inv_sqrt_hd;
            }
            const real mx = kernels::reduce_max(scores.data(), static_cast<size_t>(pos) + 1);
            real sum = 0;
            for (int t = 0; t <= pos; ++t) {
                scores[static_cast<size_t>(t)] = std::exp(scores[static_cast<size_t>(t)] - mx);
                sum += scores[static_cast<size_t>(t)];
            }
            const real inv = real(1) / sum;
            real* oh = attn_out.data() + hh * hd;
            for (int t = 0; t <= pos; ++t) {
                kernels::axpy(oh, scores[static_cast<size_t>(t)] * inv, cache.v_at(layer, hh, t),
                              static_cast<size_t>(hd));
            }
        }
        std::vector<real> proj = vecmat(attn_out, w.at(p + "wo"));
        kernels::axpy(x.data(), real(1), proj.data(), static_cast<size_t>(d));

        std::vector<real> m = ln(x, w.at(p + "ln2.g").data(), w.at(p + "ln2.b").data());
        std::vector<real> gate = vecmat(m, w.at(p + "gate.w"));
        std::vector<real> up = vecmat(m, w.at(p + "up.w"));
        for (size_t i = 0; i < gate.size(); ++i) {
            const real s = real(1) / (real(1) + std::exp(-gate[i]));
            gate[i] = gate[i] * s * up[i];
        }
        std::vector<real> down = vecmat(gate, w.at(p + "down.w"));
        kernels::axpy(x.data(), real(1), down.data(), static_cast<size_t>(d));
    }
    std::vector<real> fin = ln(x, w.at("lm.ln_f.g").data(), w.at("lm.ln_f.b").data());
    std::vector<real> logits = vecmat(fin, w.at("lm.head.w"));
    cache.filled_len += 1;
    return logits;
}

double GenerationResult::ttft_seconds() const {
    if (per_token_timestamps.empty()) return 0.0;
    return std::chrono::duration<double>(per_token_timestamps.front() - t_start).count();
}

double GenerationResult::decode_tokens_per_second() const {
    const size_t n = per_token_timestamps.size();
    if (n < 2) return 0.0;
    const double dt =
        std::chrono::duration<double>(per_token_timestamps.back() - per_token_timestamps.front())
            .count();
    return dt > 0 ? static_cast<double>(n - 1) / dt : 0.0;
}

namespace {

int sample_token(const std::vector<real>& logits, const GenerateParams& params,
                 std::mt19937_64& rng) {
    const size_t n = logits.size();
    if (params.greedy || params.temperature <= 1e-6f) {
        size_t best = 0;
        for (size_t i = 1; i < n; ++i) {
            if (logits[i] > logits[best]) best = i;
        }
        return static_cast<int>(best);
    }
    std::vector<double> p(n);
    double mx = logits[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
    double sum = 0;
    for (size_t i = 0; i < n; ++i) {
        p[i] = std::exp((static_cast<double>(logits[i]) - mx) / params.temperature);
        sum += p[i];
    }
    // fixed-width inverse CDF draw so sampling is reproducible across stdlibs
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * sum;
    double acc = 0;
    for (size_t i = 0; i < n; ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);
}

}  // namespace

GenerationResult generate(const Image& img, const std::string& prompt, const ModelConfig& cfg,
                          const Weights& w, const GenerateParams& params) {
    GenerationResult res;
    res.t_start = std::chrono::steady_clock::now();

    Tensor emb = vision_encode(img, cfg.vision, w);
    Tensor img_tokens = project(emb, cfg, w);
    res.image_tokens = static_cast<int>(img_tokens.dim(1));
    MultimodalSequence seq = assemble_sequence(img_tokens, tokenize(prompt), cfg.lm, w);
    res.prefill_tokens = static_cast<int>(seq.embeddings.dim(0));

    KVCache cache = KVCache::make(cfg.lm);
    Tensor first_logits = prefill(seq, cfg.lm, w, cache);

    std::mt19937_64 rng(params.seed);
    const Tensor& table = w.at("lm.tok_embed");
    std::vector<real> logits(first_logits.vec());
    for (int step = 0; step < params.max_new; ++step) {
        const int id = sample_token(logits, params, rng);
        res.token_ids.push_back(id);
        res.per_token_timestamps.push_back(std::chrono::steady_clock::now());
        if (id == tok::EOS && !params.ignore_eos) break;
        if (step + 1 == params.max_new) break;
        std::vector<real> e(table.data() + static_cast<int64_t>(id) * cfg.lm.d_lm,
                            table.data() + static_cast<int64_t>(id + 1) * cfg.lm.d_lm);
        logits = decode_step(cache, e, cfg.lm, w);
    }
    for (int id : res.token_ids) {
        if (id < 256) res.text.push_back(static_cast<char>(id));
    }
    return res;
}

Tensor sequence_logprob(const Tensor& img_tokens, const std::string& prompt,
                        const std::string& response, const ModelConfig& cfg, const Weights& w,
                        Graph* g) {
    if (response.empty()) throw ContractError("sequence_logprob requires a nonempty response");
    MultimodalSequence seq = assemble_sequence(img_tokens, tokenize(prompt), cfg.lm, w, g);
    const int64_t P = seq.embeddings.dim(0);
    std::vector<int> resp_ids = tokenize(response);
    const int64_t R = static_cast<int64_t>(resp_ids.size());
    Tensor resp_emb = embedding_lookup(w.at("lm.tok_embed"), resp_ids, g);
    Tensor full = concat_rows({seq.embeddings, resp_emb}, g);
    if (full.dim(0) > cfg.lm.max_seq) {
        throw ContractError("context overflow in sequence_logprob");
    }
    Tensor logits = lm_forward(full, cfg.lm, w, g);
    // position P-1 predicts response token 0, etc.
    Tensor rows = slice_rows(logits, P - 1, R, g);
    Tensor lps = select_logprobs(rows, resp_ids, g);
    return sum(lps, g);
}

}  // namespace ovlm
