#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ovlm/errors.hpp"

namespace ovlm {

#ifdef OVLM_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// n-dimensional row-major value with an optional gradient slot. Cheap to copy
// (shared buffer); data is treated as immutable after construction except for
// gradient accumulation during backward.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);

    static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real value);
    static Tensor randn(Shape shape, std::mt19937_64& rng, real sigma);
    static Tensor scalar(real value);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int64_t numel() const { return static_cast<int64_t>(p_->data.size()); }
    int64_t ndim() const { return static_cast<int64_t>(p_->shape.size()); }
    int64_t dim(int i) const;  // negative indices from the back

    real* data() { return p_->data.data(); }
    const real* data() const { return p_->data.data(); }
    std::vector<real>& vec() { return p_->data; }
    const std::vector<real>& vec() const { return p_->data; }

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool v) { p_->requires_grad = v; }
    bool has_grad() const { return !p_->grad.empty(); }
    void ensure_grad();
    void zero_grad();
    real* grad() { return p_->grad.data(); }
    const real* grad() const { return p_->grad.data(); }
    std::vector<real>& grad_vec() { return p_->grad; }

    real item() const;  // scalar tensors only
    Tensor clone() const;
    bool shares_buffer_with(const Tensor& o) const { return p_ == o.p_; }

private:
    struct Impl {
        Shape shape;
        std::vector<real> data;
        std::vector<real> grad;  // empty until ensure_grad
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> p_;
};

// Tape recorded during a forward pass: node closures in topological order,
// replayed in reverse by backward(). One tape per session, not thread-shared.
class Graph {
public:
    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }
    size_t size() const { return nodes_.size(); }
    // Seeds d(loss)/d(loss)=1 and runs every node's backward exactly once,
    // in reverse topological order. Clears the tape afterwards.
    void backward(Tensor loss);

private:
    std::vector<std::function<void()>> nodes_;
};

// Ops. Passing a Graph* records the backward closure when any input requires
// grad; nullptr runs forward-only (inference path).

// a: [.., m, k], b: [k, n] or [.., k, n] with matching leading dims.
Tensor matmul(const Tensor& a, const Tensor& b, Graph* g = nullptr);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps,
                 Graph* g = nullptr);
Tensor softmax(const Tensor& x, Graph* g = nullptr);       // last axis
Tensor log_softmax(const Tensor& x, Graph* g = nullptr);   // last axis
// x: [b, c_in, L], w: [c_out, c_in, k], valid cross-correlation.
Tensor conv1d(const Tensor& x, const Tensor& w, int stride, Graph* g = nullptr);
// x: [b, c_in, H, W], w: [c_out, c_in, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& w, int stride_h, int stride_w, Graph* g = nullptr);
Tensor reshape(const Tensor& x, Shape new_shape, Graph* g = nullptr);
Tensor gelu(const Tensor& x, Graph* g = nullptr);
Tensor silu(const Tensor& x, Graph* g = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Graph* g = nullptr);  // same shape
// b's shape must be a trailing suffix of a's shape (bias / mask broadcast).
Tensor add_broadcast(const Tensor& a, const Tensor& b, Graph* g = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Graph* g = nullptr);  // elementwise
Tensor scale(const Tensor& x, real c, Graph* g = nullptr);
Tensor sum(const Tensor& x, Graph* g = nullptr);  // -> scalar
// 3-d axis permutations used by attention head splitting.
Tensor transpose_01(const Tensor& x, Graph* g = nullptr);  // [a,b,c] -> [b,a,c]
Tensor transpose_12(const Tensor& x, Graph* g = nullptr);  // [a,b,c] -> [a,c,b]
Tensor transpose2d(const Tensor& x, Graph* g = nullptr);   // [m,n] -> [n,m]
// table: [vocab, d]; out: [len(ids), d]. Gradient scatters into table rows.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, Graph* g = nullptr);
Tensor concat_rows(const std::vector<Tensor>& parts, Graph* g = nullptr);  // [n_i,d] -> [N,d]
Tensor slice_rows(const Tensor& x, int64_t start, int64_t len, Graph* g = nullptr);
// Rotary embedding over x: [n_heads, seq, head_dim]; position of row t is
// pos_offset + t. Orthogonal per-pair rotation; backward rotates by -angle.
Tensor rope(const Tensor& x, int pos_offset, real theta, Graph* g = nullptr);
// logits: [n, vocab]; out: [n] of log softmax picked at targets[i].
Tensor select_logprobs(const Tensor& logits, const std::vector<int>& targets, Graph* g = nullptr);
// Mean negative log-likelihood over all target positions; logits [n, vocab].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, Graph* g = nullptr);

bool all_finite(const Tensor& t);

}  // namespace ovlm
