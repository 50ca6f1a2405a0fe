#include "ovlm/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "ovlm/kernels.hpp"

namespace ovlm {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad) : p_(std::make_shared<Impl>()) {
    for (int64_t d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got shape " + shape_str(shape));
    }
    p_->shape = std::move(shape);
    p_->data.assign(static_cast<size_t>(shape_numel(p_->shape)), real(0));
    p_->requires_grad = requires_grad;
}

Tensor Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    if (static_cast<int64_t>(data.size()) != t.numel()) {
        throw DimensionError("data size " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(t.shape()));
    }
    t.p_->data = std::move(data);
    return t;
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, real value) {
    Tensor t(std::move(shape));
    std::fill(t.p_->data.begin(), t.p_->data.end(), value);
    return t;
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, real sigma) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(sigma));
    for (real& v : t.p_->data) v = static_cast<real>(dist(rng));
    return t;
}

Tensor Tensor::scalar(real value) { return full({1}, value); }

int64_t Tensor::dim(int i) const {
    int n = static_cast<int>(p_->shape.size());
    if (i < 0) i += n;
    return p_->shape[static_cast<size_t>(i)];
}

void Tensor::ensure_grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), real(0));
}

void Tensor::zero_grad() {
    if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), real(0));
}

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    return p_->data[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.p_ = std::make_shared<Impl>(*p_);
    return t;
}

void Graph::backward(Tensor loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    loss.ensure_grad();
    loss.grad()[0] = real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
}

bool all_finite(const Tensor& t) {
    for (real v : t.vec()) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

namespace {

bool track(Graph* g, std::initializer_list<const Tensor*> ins) {
    if (!g) return false;
    for (const Tensor* t : ins) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void mark_out(Tensor& out) {
    out.set_requires_grad(true);
    out.ensure_grad();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Graph* g) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw DimensionError("matmul requires >=2-d operands, got " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.dim(-2), k = a.dim(-1);
    const int64_t kb = b.dim(-2), n = b.dim(-1);
    if (k != kb) {
        throw DimensionError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    int64_t batch = a.numel() / (m * k);
    const bool b_batched = b.ndim() > 2;
    if (b_batched && b.numel() / (kb * n) != batch) {
        throw DimensionError("matmul batch dims disagree: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    Tensor out(out_shape);

    const real* ap = a.data();
    const real* bp = b.data();
    real* cp = out.data();
    for (int64_t bi = 0; bi < batch; ++bi) {
        const real* A = ap + bi * m * k;
        const real* B = bp + (b_batched ? bi * k * n : 0);
        real* C = cp + bi * m * n;
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t kk = 0; kk < k; ++kk) {
                kernels::axpy(C + i * n, A[i * k + kk], B + kk * n, static_cast<size_t>(n));
            }
        }
    }

    if (track(g, {&a, &b})) {
        mark_out(out);
        Tensor ac = a, bc = b, oc = out;
        g->record([ac, bc, oc, m, k, n, batch, b_batched]() mutable {
            const real* dC = oc.grad();
            if (ac.requires_grad()) {
                ac.ensure_grad();
                real* dA = ac.grad();
                const real* B = bc.data();
                for (int64_t bi = 0; bi < batch; ++bi) {
                    const real* Bb = B + (b_batched ? bi * k * n : 0);
                    const real* dCb = dC + bi * m * n;
                    real* dAb = dA + bi * m * k;
                    for (int64_t i = 0; i < m; ++i) {
                        for (int64_t kk = 0; kk < k; ++kk) {
                            dAb[i * k + kk] +=
                                kernels::dot(dCb + i * n, Bb + kk * n, static_cast<size_t>(n));
                        }
                    }
                }
            }
            if (bc.requires_grad()) {
                bc.ensure_grad();
                real* dB = bc.grad();
                const real* A = ac.data();
                for (int64_t bi = 0; bi < batch; ++bi) {
                    const real* Ab = A + bi * m * k;
                    const real* dCb = dC + bi * m * n;
                    real* dBb = dB + (b_batched ? bi * k * n : 0);
                    for (int64_t i = 0; i < m; ++i) {
                        for (int64_t kk = 0; kk < k; ++kk) {
                            kernels::axpy(dBb + kk * n, Ab[i * k + kk], dCb + i * n,
                                          static_cast<size_t>(n));
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps, Graph* g) {
    if (eps <= real(0)) throw ConfigError("layernorm eps must be positive");
    const int64_t d = x.dim(-1);
    if (gamma.numel() != d || beta.numel() != d) {
        throw DimensionError("layernorm gamma/beta must have size " + std::to_string(d));
    }
    const int64_t rows = x.numel() / d;
    Tensor out(x.shape());
    std::vector<real> inv_std(static_cast<size_t>(rows));
    std::vector<real> means(static_cast<size_t>(rows));
    const real* xp = x.data();
    const real* gp = gamma.data();
    const real* bp = beta.data();
    real* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const real* row = xp + r * d;
        real mu = kernels::reduce_sum(row, static_cast<size_t>(d)) / real(d);
        real var = 0;
        for (int64_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= real(d);
        real is = real(1) / std::sqrt(var + eps);
        means[static_cast<size_t>(r)] = mu;
        inv_std[static_cast<size_t>(r)] = is;
        real* orow = op + r * d;
        for (int64_t i = 0; i < d; ++i) orow[i] = (row[i] - mu) * is * gp[i] + bp[i];
    }
    if (track(g, {&x, &gamma, &beta})) {
        mark_out(out);
        Tensor xc = x, gc = gamma, bc = beta, oc = out;
        auto mu = std::move(means);
        auto is = std::move(inv_std);
        g->record([xc, gc, bc, oc, mu, is, rows, d]() mutable {
            const real* dy = oc.grad();
            const real* xp = xc.data();
            const real* gp = gc.data();
            std::vector<real> xhat(static_cast<size_t>(d));
            std::vector<real> gdy(static_cast<size_t>(d));
            for (int64_t r = 0; r < rows; ++r) {
                const real* row = xp + r * d;
                const real* dyr = dy + r * d;
                const real m = mu[static_cast<size_t>(r)];
                const real s = is[static_cast<size_t>(r)];
                real sum_gdy = 0, sum_gdy_xhat = 0;
                for (int64_t i = 0; i < d; ++i) {
                    xhat[static_cast<size_t>(i)] = (row[i] - m) * s;
                    gdy[static_cast<size_t>(i)] = gp[i] * dyr[i];
                    sum_gdy += gdy[static_cast<size_t>(i)];
                    sum_gdy_xhat += gdy[static_cast<size_t>(i)] * xhat[static_cast<size_t>(i)];
                }
                if (xc.requires_grad()) {
                    xc.ensure_grad();
                    real* dx = xc.grad() + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        dx[i] += s * (gdy[static_cast<size_t>(i)] - sum_gdy / real(d) -
                                      xhat[static_cast<size_t>(i)] * sum_gdy_xhat / real(d));
                    }
                }
                if (gc.requires_grad()) {
                    gc.ensure_grad();
                    real* dg = gc.grad();
                    for (int64_t i = 0; i < d; ++i) dg[i] += dyr[i] * xhat[static_cast<size_t>(i)];
                }
                if (bc.requires_grad()) {
                    bc.ensure_grad();
                    real* db = bc.grad();
                    for (int64_t i = 0; i < d; ++i) db[i] += dyr[i];
                }
            }
        });
    }
    return out;
}

namespace {

void softmax_rows(const real* xp, real* op, int64_t rows, int64_t n) {
    for (int64_t r = 0; r < rows; ++r) {
        const real* row = xp + r * n;
        real* orow = op + r * n;
        const real mx = kernels::reduce_max(row, static_cast<size_t>(n));
        real s = 0;
        for (int64_t i = 0; i < n; ++i) {
            orow[i] = std::exp(row[i] - mx);
            s += orow[i];
        }
        kernels::vscale(orow, real(1) / s, static_cast<size_t>(n));
    }
}

}  // namespace

Tensor softmax(const Tensor& x, Graph* g) {
    const int64_t n = x.dim(-1);
    const int64_t rows = x.numel() / n;
    Tensor out(x.shape());
    softmax_rows(x.data(), out.data(), rows, n);
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, rows, n]() mutable {
            xc.ensure_grad();
            const real* y = oc.data();
            const real* dy = oc.grad();
            real* dx = xc.grad();
            for (int64_t r = 0; r < rows; ++r) {
                const real* yr = y + r * n;
                const real* dyr = dy + r * n;
                real dot = kernels::dot(dyr, yr, static_cast<size_t>(n));
                for (int64_t i = 0; i < n; ++i) dx[r * n + i] += yr[i] * (dyr[i] - dot);
            }
        });
    }
    return out;
}

Tensor log_softmax(const Tensor& x, Graph* g) {
    const int64_t n = x.dim(-1);
    const int64_t rows = x.numel() / n;
    Tensor out(x.shape());
    const real* xp = x.data();
    real* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const real* row = xp + r * n;
        real* orow = op + r * n;
        const real mx = kernels::reduce_max(row, static_cast<size_t>(n));
        real s = 0;
        for (int64_t i = 0; i < n; ++i) s += std::exp(row[i] - mx);
        const real lse = mx + std::log(s);
        for (int64_t i = 0; i < n; ++i) orow[i] = row[i] - lse;
    }
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, rows, n]() mutable {
            xc.ensure_grad();
            const real* y = oc.data();
            const real* dy = oc.grad();
            real* dx = xc.grad();
            for (int64_t r = 0; r < rows; ++r) {
                const real* yr = y + r * n;
                const real* dyr = dy + r * n;
                const real sum_dy = kernels::reduce_sum(dyr, static_cast<size_t>(n));
                for (int64_t i = 0; i < n; ++i) dx[r * n + i] += dyr[i] - std::exp(yr[i]) * sum_dy;
            }
        });
    }
    return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, int stride, Graph* g) {
    if (x.ndim() != 3 || w.ndim() != 3) {
        throw DimensionError("conv1d expects x [b,c_in,L], w [c_out,c_in,k], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride < 1) throw ConfigError("conv1d stride must be >= 1");
    const int64_t b = x.dim(0), cin = x.dim(1), L = x.dim(2);
    const int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) {
        throw DimensionError("conv1d channel mismatch: x " + shape_str(x.shape()) + " w " +
                             shape_str(w.shape()));
    }
    if (L < k) {
        throw DimensionError("conv1d input length " + std::to_string(L) + " shorter than kernel " +
                             std::to_string(k));
    }
    const int64_t Lout = (L - k) / stride + 1;
    Tensor out({b, cout, Lout});
    const real* xp = x.data();
    const real* wp = w.data();
    real* op = out.data();
    // Direct loops: O(b * c_out * L_out * c_in * k).
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t co = 0; co < cout; ++co) {
            for (int64_t ol = 0; ol < Lout; ++ol) {
                real s = 0;
                const int64_t x0 = ol * stride;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    s += kernels::dot(xp + (bi * cin + ci) * L + x0, wp + (co * cin + ci) * k,
                                      static_cast<size_t>(k));
                }
                op[(bi * cout + co) * Lout + ol] = s;
            }
        }
    }
    if (track(g, {&x, &w})) {
        mark_out(out);
        Tensor xc = x, wc = w, oc = out;
        g->record([xc, wc, oc, b, cin, cout, L, k, Lout, stride]() mutable {
            const real* dO = oc.grad();
            const real* xp = xc.data();
            const real* wp = wc.data();
            if (xc.requires_grad()) xc.ensure_grad();
            if (wc.requires_grad()) wc.ensure_grad();
            for (int64_t bi = 0; bi < b; ++bi) {
                for (int64_t co = 0; co < cout; ++co) {
                    for (int64_t ol = 0; ol < Lout; ++ol) {
                        const real go = dO[(bi * cout + co) * Lout + ol];
                        const int64_t x0 = ol * stride;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            if (xc.requires_grad()) {
                                kernels::axpy(xc.grad() + (bi * cin + ci) * L + x0, go,
                                              wp + (co * cin + ci) * k, static_cast<size_t>(k));
                            }
                            if (wc.requires_grad()) {
                                kernels::axpy(wc.grad() + (co * cin + ci) * k, go,
                                              xp + (bi * cin + ci) * L + x0, static_cast<size_t>(k));
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride_h, int stride_w, Graph* g) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw DimensionError("conv2d expects x [b,c_in,H,W], w [c_out,c_in,kh,kw], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride_h < 1 || stride_w < 1) throw ConfigError("conv2d strides must be >= 1");
    const int64_t b = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) {
        throw DimensionError("conv2d channel mismatch: x " + shape_str(x.shape()) + " w " +
                             shape_str(w.shape()));
    }
    if (H < kh || W < kw) {
        throw DimensionError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " exceeds input " + std::to_string(H) + "x" + std::to_string(W));
    }
    const int64_t Hout = (H - kh) / stride_h + 1;
    const int64_t Wout = (W - kw) / stride_w + 1;
    Tensor out({b, cout, Hout, Wout});
    const real* xp = x.data();
    const real* wp = w.data();
    real* op = out.data();
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t co = 0; co < cout; ++co) {
            for (int64_t oh = 0; oh < Hout; ++oh) {
                for (int64_t ow = 0; ow < Wout; ++ow) {
                    real s = 0;
                    for (int64_t ci = 0; ci < cin; ++ci) {
                        for (int64_t ih = 0; ih < kh; ++ih) {
                            s += kernels::dot(
                                xp + ((bi * cin + ci) * H + oh * stride_h + ih) * W + ow * stride_w,
                                wp + ((co * cin + ci) * kh + ih) * kw, static_cast<size_t>(kw));
                        }
                    }
                    op[((bi * cout + co) * Hout + oh) * Wout + ow] = s;
                }
            }
        }
    }
    if (track(g, {&x, &w})) {
        mark_out(out);
        Tensor xc = x, wc = w, oc = out;
        const int sh = stride_h, sw = stride_w;
        g->record([xc, wc, oc, b, cin, cout, H, W, kh, kw, Hout, Wout, sh, sw]() mutable {
            const real* dO = oc.grad();
            const real* xp = xc.data();
            const real* wp = wc.data();
            if (xc.requires_grad()) xc.ensure_grad();
            if (wc.requires_grad()) wc.ensure_grad();
            for (int64_t bi = 0; bi < b; ++bi) {
                for (int64_t co = 0; co < cout; ++co) {
                    for (int64_t oh = 0; oh < Hout; ++oh) {
                        for (int64_t ow = 0; ow < Wout; ++ow) {
                            const real go = dO[((bi * cout + co) * Hout + oh) * Wout + ow];
                            for (int64_t ci = 0; ci < cin; ++ci) {
                                for (int64_t ih = 0; ih < kh; ++ih) {
                                    const int64_t xoff =
                                        ((bi * cin + ci) * H + oh * sh + ih) * W + ow * sw;
                                    const int64_t woff = ((co * cin + ci) * kh + ih) * kw;
                                    if (xc.requires_grad()) {
                                        kernels::axpy(xc.grad() + xoff, go, wp + woff,
                                                      static_cast<size_t>(kw));
                                    }
                                    if (wc.requires_grad()) {
                                        kernels::axpy(wc.grad() + woff, go, xp + xoff,
                                                      static_cast<size_t>(kw));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape, Graph* g) {
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape element count mismatch: " + shape_str(x.shape()) + " -> " +
                             shape_str(new_shape));
    }
    Tensor out = Tensor::from(std::move(new_shape), x.vec());
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc]() mutable {
            xc.ensure_grad();
            kernels::axpy(xc.grad(), real(1), oc.grad(), static_cast<size_t>(xc.numel()));
        });
    }
    return out;
}

namespace {

real gelu_fwd(real v) {
    return real(0.5) * v * (real(1) + std::erf(v / real(std::sqrt(2.0))));
}
real gelu_bwd(real v) {
    const real cdf = real(0.5) * (real(1) + std::erf(v / real(std::sqrt(2.0))));
    const real pdf = std::exp(real(-0.5) * v * v) / real(std::sqrt(2.0 * 3.14159265358979323846));
    return cdf + v * pdf;
}

}  // namespace

Tensor gelu(const Tensor& x, Graph* g) {
    Tensor out(x.shape());
    const real* xp = x.data();
    real* op = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) op[i] = gelu_fwd(xp[i]);
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc]() mutable {
            xc.ensure_grad();
            const real* xp = xc.data();
            const real* dy = oc.grad();
            real* dx = xc.grad();
            for (int64_t i = 0; i < xc.numel(); ++i) dx[i] += dy[i] * gelu_bwd(xp[i]);
        });
    }
    return out;
}

Tensor silu(const Tensor& x, Graph* g) {
    Tensor out(x.shape());
    const real* xp = x.data();
    real* op = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const real s = real(1) / (real(1) + std::exp(-xp[i]));
        op[i] = xp[i] * s;
    }
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc]() mutable {
            xc.ensure_grad();
            const real* xp = xc.data();
            const real* dy = oc.grad();
            real* dx = xc.grad();
            for (int64_t i = 0; i < xc.numel(); ++i) {
                const real s = real(1) / (real(1) + std::exp(-xp[i]));
                dx[i] += dy[i] * s * (real(1) + xp[i] * (real(1) - s));
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Graph* g) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    Tensor out(a.shape());
    kernels::vadd(out.data(), a.data(), b.data(), static_cast<size_t>(a.numel()));
    if (track(g, {&a, &b})) {
        mark_out(out);
        Tensor ac = a, bc = b, oc = out;
        g->record([ac, bc, oc]() mutable {
            const size_t n = static_cast<size_t>(oc.numel());
            if (ac.requires_grad()) {
                ac.ensure_grad();
                kernels::axpy(ac.grad(), real(1), oc.grad(), n);
            }
            if (bc.requires_grad()) {
                bc.ensure_grad();
                kernels::axpy(bc.grad(), real(1), oc.grad(), n);
            }
        });
    }
    return out;
}

Tensor add_broadcast(const Tensor& a, const Tensor& b, Graph* g) {
    const int64_t bn = b.numel();
    if (a.numel() % bn != 0 ||
        !std::equal(b.shape().begin(), b.shape().end(),
                    a.shape().end() - static_cast<long>(b.shape().size()))) {
        throw DimensionError("add_broadcast: " + shape_str(b.shape()) +
                             " is not a trailing suffix of " + shape_str(a.shape()));
    }
    const int64_t reps = a.numel() / bn;
    Tensor out(a.shape());
    const real* ap = a.data();
    const real* bp = b.data();
    real* op = out.data();
    for (int64_t r = 0; r < reps; ++r) {
        kernels::vadd(op + r * bn, ap + r * bn, bp, static_cast<size_t>(bn));
    }
    if (track(g, {&a, &b})) {
        mark_out(out);
        Tensor ac = a, bc = b, oc = out;
        g->record([ac, bc, oc, reps, bn]() mutable {
            if (ac.requires_grad()) {
                ac.ensure_grad();
                kernels::axpy(ac.grad(), real(1), oc.grad(), static_cast<size_t>(ac.numel()));
            }
            if (bc.requires_grad()) {
                bc.ensure_grad();
                for (int64_t r = 0; r < reps; ++r) {
                    kernels::axpy(bc.grad(), real(1), oc.grad() + r * bn, static_cast<size_t>(bn));
                }
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Graph* g) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    Tensor out(a.shape());
    kernels::vmul(out.data(), a.data(), b.data(), static_cast<size_t>(a.numel()));
    if (track(g, {&a, &b})) {
        mark_out(out);
        Tensor ac = a, bc = b, oc = out;
        g->record([ac, bc, oc]() mutable {
            const int64_t n = oc.numel();
            const real* dy = oc.grad();
            if (ac.requires_grad()) {
                ac.ensure_grad();
                const real* bp = bc.data();
                real* da = ac.grad();
                for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bp[i];
            }
            if (bc.requires_grad()) {
                bc.ensure_grad();
                const real* ap = ac.data();
                real* db = bc.grad();
                for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * ap[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, real c, Graph* g) {
    Tensor out = Tensor::from(x.shape(), x.vec());
    kernels::vscale(out.data(), c, static_cast<size_t>(out.numel()));
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, c]() mutable {
            xc.ensure_grad();
            kernels::axpy(xc.grad(), c, oc.grad(), static_cast<size_t>(xc.numel()));
        });
    }
    return out;
}

Tensor sum(const Tensor& x, Graph* g) {
    Tensor out = Tensor::scalar(kernels::reduce_sum(x.data(), static_cast<size_t>(x.numel())));
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc]() mutable {
            xc.ensure_grad();
            const real go = oc.grad()[0];
            real* dx = xc.grad();
            for (int64_t i = 0; i < xc.numel(); ++i) dx[i] += go;
        });
    }
    return out;
}

namespace {

// Generic 3-d permutation of axes 0/1 or 1/2.
Tensor permute3(const Tensor& x, bool swap01, Graph* g) {
    if (x.ndim() != 3) throw DimensionError("transpose expects a 3-d tensor, got " + shape_str(x.shape()));
    const int64_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
    Shape os = swap01 ? Shape{b, a, c} : Shape{a, c, b};
    Tensor out(os);
    const real* xp = x.data();
    real* op = out.data();
    if (swap01) {
        for (int64_t i = 0; i < a; ++i)
            for (int64_t j = 0; j < b; ++j)
                std::memcpy(op + (j * a + i) * c, xp + (i * b + j) * c, sizeof(real) * static_cast<size_t>(c));
    } else {
        for (int64_t i = 0; i < a; ++i)
            for (int64_t j = 0; j < b; ++j)
                for (int64_t k = 0; k < c; ++k) op[(i * c + k) * b + j] = xp[(i * b + j) * c + k];
    }
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, a, b, c, swap01]() mutable {
            xc.ensure_grad();
            const real* dy = oc.grad();
            real* dx = xc.grad();
            if (swap01) {
                for (int64_t i = 0; i < a; ++i)
                    for (int64_t j = 0; j < b; ++j)
                        kernels::axpy(dx + (i * b + j) * c, real(1), dy + (j * a + i) * c,
                                      static_cast<size_t>(c));
            } else {
                for (int64_t i = 0; i < a; ++i)
                    for (int64_t j = 0; j < b; ++j)
                        for (int64_t k = 0; k < c; ++k) dx[(i * b + j) * c + k] += dy[(i * c + k) * b + j];
            }
        });
    }
    return out;
}

}  // namespace

Tensor transpose_01(const Tensor& x, Graph* g) { return permute3(x, true, g); }
Tensor transpose_12(const Tensor& x, Graph* g) { return permute3(x, false, g); }

Tensor transpose2d(const Tensor& x, Graph* g) {
    if (x.ndim() != 2) throw DimensionError("transpose2d expects a 2-d tensor, got " + shape_str(x.shape()));
    Tensor x3 = reshape(x, {1, x.dim(0), x.dim(1)}, g);
    Tensor t = transpose_12(x3, g);
    return reshape(t, {x.dim(1), x.dim(0)}, g);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, Graph* g) {
    if (table.ndim() != 2) throw DimensionError("embedding table must be 2-d");
    const int64_t vocab = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw ContractError("embedding id " + std::to_string(id) + " out of range [0," +
                                std::to_string(vocab) + ")");
        }
    }
    Tensor out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(out.data() + static_cast<int64_t>(i) * d, table.data() + ids[i] * d,
                    sizeof(real) * static_cast<size_t>(d));
    }
    if (track(g, {&table})) {
        mark_out(out);
        Tensor tc = table, oc = out;
        auto idc = ids;
        g->record([tc, oc, idc, d]() mutable {
            tc.ensure_grad();
            for (size_t i = 0; i < idc.size(); ++i) {
                kernels::axpy(tc.grad() + idc[i] * d, real(1),
                              oc.grad() + static_cast<int64_t>(i) * d, static_cast<size_t>(d));
            }
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts, Graph* g) {
    if (parts.empty()) throw ContractError("concat_rows needs at least one part");
    const int64_t d = parts[0].dim(-1);
    int64_t total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != 2 || p.dim(1) != d) {
            throw DimensionError("concat_rows parts must be [n_i," + std::to_string(d) + "]");
        }
        total += p.dim(0);
    }
    Tensor out({total, d});
    int64_t off = 0;
    for (const Tensor& p : parts) {
        std::memcpy(out.data() + off * d, p.data(), sizeof(real) * static_cast<size_t>(p.numel()));
        off += p.dim(0);
    }
    bool any = false;
    if (g) {
        for (const Tensor& p : parts) any = any || p.requires_grad();
    }
    if (any) {
        mark_out(out);
        Tensor oc = out;
        auto pc = parts;
        g->record([oc, pc, d]() mutable {
            int64_t off = 0;
            for (Tensor& p : pc) {
                if (p.requires_grad()) {
                    p.ensure_grad();
                    kernels::axpy(p.grad(), real(1), oc.grad() + off * d,
                                  static_cast<size_t>(p.numel()));
                }
                off += p.dim(0);
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t len, Graph* g) {
    if (x.ndim() != 2) throw DimensionError("slice_rows expects a 2-d tensor");
    if (start < 0 || len < 1 || start + len > x.dim(0)) {
        throw DimensionError("slice_rows range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") out of bounds for " +
                             shape_str(x.shape()));
    }
    const int64_t d = x.dim(1);
    Tensor out({len, d});
    std::memcpy(out.data(), x.data() + start * d, sizeof(real) * static_cast<size_t>(len * d));
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, start, len, d]() mutable {
            xc.ensure_grad();
            kernels::axpy(xc.grad() + start * d, real(1), oc.grad(),
                          static_cast<size_t>(len * d));
        });
    }
    return out;
}

namespace {

// In-place rotation of [H, T, hd] by sign * angle(pos, pair).
void apply_rope(real* p, int64_t H, int64_t T, int64_t hd, int pos_offset, real theta, real sign) {
    for (int64_t h = 0; h < H; ++h) {
        for (int64_t t = 0; t < T; ++t) {
            real* row = p + (h * T + t) * hd;
            const double pos = static_cast<double>(pos_offset + t);
            for (int64_t i = 0; i < hd / 2; ++i) {
                const double freq =
                    std::pow(static_cast<double>(theta), -2.0 * static_cast<double>(i) /
                                                             static_cast<double>(hd));
                const double ang = static_cast<double>(sign) * pos * freq;
                const real c = static_cast<real>(std::cos(ang));
                const real s = static_cast<real>(std::sin(ang));
                const real x0 = row[2 * i], x1 = row[2 * i + 1];
                row[2 * i] = x0 * c - x1 * s;
                row[2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }
}

}  // namespace

Tensor rope(const Tensor& x, int pos_offset, real theta, Graph* g) {
    if (x.ndim() != 3) throw DimensionError("rope expects [n_heads, seq, head_dim]");
    const int64_t H = x.dim(0), T = x.dim(1), hd = x.dim(2);
    if (hd % 2 != 0) throw ConfigError("rope head_dim must be even, got " + std::to_string(hd));
    Tensor out = Tensor::from(x.shape(), x.vec());
    apply_rope(out.data(), H, T, hd, pos_offset, theta, real(1));
    if (track(g, {&x})) {
        mark_out(out);
        Tensor xc = x, oc = out;
        g->record([xc, oc, H, T, hd, pos_offset, theta]() mutable {
            xc.ensure_grad();
            // Rotation is orthogonal: transpose == rotation by -angle.
            std::vector<real> dg = oc.grad_vec();
            apply_rope(dg.data(), H, T, hd, pos_offset, theta, real(-1));
            kernels::axpy(xc.grad(), real(1), dg.data(), dg.size());
        });
    }
    return out;
}

Tensor select_logprobs(const Tensor& logits, const std::vector<int>& targets, Graph* g) {
    if (logits.ndim() != 2) throw DimensionError("select_logprobs expects [n, vocab] logits");
    const int64_t n = logits.dim(0), V = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != n) {
        throw ContractError("select_logprobs: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(n) + " rows");
    }
    for (int t : targets) {
        if (t < 0 || t >= V) {
            throw ContractError("target id " + std::to_string(t) + " out of range [0," +
                                std::to_string(V) + ")");
        }
    }
    Tensor out({n});
    std::vector<real> lses(static_cast<size_t>(n));
    const real* lp = logits.data();
    for (int64_t r = 0; r < n; ++r) {
        const real* row = lp + r * V;
        const real mx = kernels::reduce_max(row, static_cast<size_t>(V));
        real s = 0;
        for (int64_t i = 0; i < V; ++i) s += std::exp(row[i] - mx);
        lses[static_cast<size_t>(r)] = mx + std::log(s);
        out.data()[r] = row[targets[static_cast<size_t>(r)]] - lses[static_cast<size_t>(r)];
    }
    if (track(g, {&logits})) {
        mark_out(out);
        Tensor lc = logits, oc = out;
        auto tg = targets;
        auto lse = std::move(lses);
        g->record([lc, oc, tg, lse, n, V]() mutable {
            lc.ensure_grad();
            const real* lp = lc.data();
            const real* dy = oc.grad();
            real* dx = lc.grad();
            for (int64_t r = 0; r < n; ++r) {
                const real* row = lp + r * V;
                real* drow = dx + r * V;
                const real go = dy[r];
                const real l = lse[static_cast<size_t>(r)];
                for (int64_t i = 0; i < V; ++i) drow[i] -= go * std::exp(row[i] - l);
                drow[tg[static_cast<size_t>(r)]] += go;
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, Graph* g) {
    if (targets.empty()) throw ContractError("cross_entropy needs at least one target");
    Tensor lps = select_logprobs(logits, targets, g);
    Tensor total = sum(lps, g);
    return scale(total, real(-1) / real(targets.size()), g);
}

}  // namespace ovlm
