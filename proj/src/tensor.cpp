#include "tridiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace tridiff {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

// rows/cols view of the trailing axis: an [d0,...,dk] tensor is treated as
// (numel/last) rows of width last
int64_t last_dim(const Tensor& a) { return a.shape().back(); }
int64_t row_count(const Tensor& a) { return a.numel() / a.shape().back(); }

// C[M,N] += A[M,K] * B[K,N]
void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
              int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_bt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                 int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_at_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                 int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor make_op(std::vector<int64_t> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn) {
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    for (const auto& p : parents) {
        if (p.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto t = make_op(std::move(shape), std::vector<double>(n, 0.0), {}, nullptr);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto t = make_op(std::move(shape), std::vector<double>(n, v), {}, nullptr);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> vals,
                         bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(vals.size()))
        throw ShapeError("from_data: value count does not match shape");
    auto t = make_op(std::move(shape), std::move(vals), {}, nullptr);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
    int64_t n = shape_numel(shape);
    std::vector<double> vals(n);
    for (auto& v : vals) v = rng.normal() * stddev;
    return from_data(std::move(shape), std::move(vals), requires_grad);
}

Tensor Tensor::randu(std::vector<int64_t> shape, Rng& rng, double lo, double hi,
                     bool requires_grad) {
    int64_t n = shape_numel(shape);
    std::vector<double> vals(n);
    for (auto& v : vals) v = rng.uniform(lo, hi);
    return from_data(std::move(shape), std::move(vals), requires_grad);
}

Tensor Tensor::detach() const {
    return from_data(node_->shape, node_->value, false);
}

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward(): output must be scalar");
    // iterative topological order over the requires_grad subgraph
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            detail::TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// ---- ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto an = a.node();
    auto bn = b.node();
    return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::TensorNode& self) {
        if (an->requires_grad)
            gemm_bt_acc(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k);
        if (bn->requires_grad)
            gemm_at_acc(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n);
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: expects rank-2 tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    auto an = a.node();
    return make_op({n, m}, std::move(out), {a}, [an, m, n](detail::TensorNode& self) {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->value[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[i] * c;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {a}, [an, c](detail::TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
    if (bias.rank() != 1 || bias.dim(0) != last_dim(a))
        throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) +
                         " does not match last axis of " + shape_str(a.shape()));
    const int64_t rows = row_count(a), n = last_dim(a);
    std::vector<double> out(a.numel());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j)
            out[r * n + j] = a.data()[r * n + j] + bias.data()[j];
    auto an = a.node();
    auto bn = bias.node();
    return make_op(a.shape(), std::move(out), {a, bias},
                   [an, bn, rows, n](detail::TensorNode& self) {
                       if (an->requires_grad)
                           for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                       if (bn->requires_grad)
                           for (int64_t r = 0; r < rows; ++r)
                               for (int64_t j = 0; j < n; ++j)
                                   bn->grad[j] += self.grad[r * n + j];
                   });
}

Tensor gelu(const Tensor& a) {
    // exact gelu: 0.5 x (1 + erf(x / sqrt(2)))
    const double inv_sqrt2 = 0.7071067811865475244;
    const double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> out(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {a},
                   [an, inv_sqrt2, inv_sqrt2pi](detail::TensorNode& self) {
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                           double x = an->value[i];
                           double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                           double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                           an->grad[i] += self.grad[i] * (cdf + x * pdf);
                       }
                   });
}

Tensor softmax(const Tensor& a) {
    const int64_t rows = row_count(a), n = last_dim(a);
    std::vector<double> out(a.numel());
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * n;
        double mx = x[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            out[r * n + j] = std::exp(x[j] - mx);
            z += out[r * n + j];
        }
        for (int64_t j = 0; j < n; ++j) out[r * n + j] /= z;
    }
    auto an = a.node();
    auto saved = std::make_shared<std::vector<double>>(out);
    return make_op(a.shape(), std::move(out), {a},
                   [an, saved, rows, n](detail::TensorNode& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* p = saved->data() + r * n;
                           const double* g = self.grad.data() + r * n;
                           double dot = 0.0;
                           for (int64_t j = 0; j < n; ++j) dot += p[j] * g[j];
                           for (int64_t j = 0; j < n; ++j)
                               an->grad[r * n + j] += p[j] * (g[j] - dot);
                       }
                   });
}

Tensor masked_softmax(const Tensor& a, const std::vector<uint8_t>& keep) {
    if (static_cast<int64_t>(keep.size()) != a.numel())
        throw ShapeError("masked_softmax: mask size mismatch");
    const int64_t rows = row_count(a), n = last_dim(a);
    std::vector<double> out(a.numel(), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * n;
        const uint8_t* km = keep.data() + r * n;
        double mx = -HUGE_VAL;
        for (int64_t j = 0; j < n; ++j)
            if (km[j]) mx = std::max(mx, x[j]);
        if (mx == -HUGE_VAL) continue;  // fully masked row stays zero
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            if (!km[j]) continue;
            out[r * n + j] = std::exp(x[j] - mx);
            z += out[r * n + j];
        }
        for (int64_t j = 0; j < n; ++j)
            if (km[j]) out[r * n + j] /= z;
    }
    auto an = a.node();
    auto saved = std::make_shared<std::vector<double>>(out);
    auto kcopy = std::make_shared<std::vector<uint8_t>>(keep);
    return make_op(a.shape(), std::move(out), {a},
                   [an, saved, kcopy, rows, n](detail::TensorNode& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* p = saved->data() + r * n;
                           const double* g = self.grad.data() + r * n;
                           const uint8_t* km = kcopy->data() + r * n;
                           double dot = 0.0;
                           for (int64_t j = 0; j < n; ++j)
                               if (km[j]) dot += p[j] * g[j];
                           for (int64_t j = 0; j < n; ++j)
                               if (km[j]) an->grad[r * n + j] += p[j] * (g[j] - dot);
                       }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int64_t n = last_dim(x);
    if (gamma.numel() != n || beta.numel() != n)
        throw ShapeError("layer_norm: gamma/beta must match last axis");
    const int64_t rows = row_count(x);
    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xv = x.data().data() + r * n;
        double mean = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += xv[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double d = xv[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int64_t j = 0; j < n; ++j) {
            double h = (xv[j] - mean) * is;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = h * gamma.data()[j] + beta.data()[j];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [xn, gn, bn, xhat, inv_std, rows, n](detail::TensorNode& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* g = self.grad.data() + r * n;
                           const double* h = xhat->data() + r * n;
                           if (gn->requires_grad)
                               for (int64_t j = 0; j < n; ++j) gn->grad[j] += g[j] * h[j];
                           if (bn->requires_grad)
                               for (int64_t j = 0; j < n; ++j) bn->grad[j] += g[j];
                           if (!xn->requires_grad) continue;
                           // dL/dx = inv_std/n * (n*gh - sum(gh) - h*sum(gh*h))
                           double sum_gh = 0.0, sum_ghh = 0.0;
                           for (int64_t j = 0; j < n; ++j) {
                               double gh = g[j] * gn->value[j];
                               sum_gh += gh;
                               sum_ghh += gh * h[j];
                           }
                           double is = (*inv_std)[r];
                           for (int64_t j = 0; j < n; ++j) {
                               double gh = g[j] * gn->value[j];
                               xn->grad[r * n + j] +=
                                   is * (gh - (sum_gh + h[j] * sum_ghh) /
                                                  static_cast<double>(n));
                           }
                       }
                   });
}

Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& mask,
                            const std::vector<double>& weights) {
    if (logits.rank() != 2) throw ShapeError("masked_cross_entropy: logits must be [L,V]");
    const int64_t rows = logits.dim(0), v = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != rows ||
        static_cast<int64_t>(mask.size()) != rows ||
        static_cast<int64_t>(weights.size()) != rows)
        throw ShapeError("masked_cross_entropy: targets/mask/weights must have one entry per row");
    int64_t n_masked = 0;
    double loss = 0.0;
    auto probs = std::make_shared<std::vector<double>>();
    auto rows_used = std::make_shared<std::vector<int64_t>>();
    for (int64_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        if (targets[r] < 0 || targets[r] >= v)
            throw IndexError("masked_cross_entropy: target " + std::to_string(targets[r]) +
                             " outside vocabulary of size " + std::to_string(v));
        const double* x = logits.data().data() + r * v;
        double mx = x[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        size_t base = probs->size();
        probs->resize(base + v);
        for (int64_t j = 0; j < v; ++j) {
            double e = std::exp(x[j] - mx);
            (*probs)[base + j] = e;
            z += e;
        }
        for (int64_t j = 0; j < v; ++j) (*probs)[base + j] /= z;
        double logp = x[targets[r]] - mx - std::log(z);
        loss += weights[r] * (-logp);
        rows_used->push_back(r);
        ++n_masked;
    }
    if (n_masked > 0) loss /= static_cast<double>(n_masked);
    auto ln = logits.node();
    auto tcopy = std::make_shared<std::vector<int>>(targets);
    auto wcopy = std::make_shared<std::vector<double>>(weights);
    return make_op({1}, {loss}, {logits},
                   [ln, probs, rows_used, tcopy, wcopy, v, n_masked](detail::TensorNode& self) {
                       if (n_masked == 0) return;
                       const double g = self.grad[0] / static_cast<double>(n_masked);
                       for (size_t i = 0; i < rows_used->size(); ++i) {
                           int64_t r = (*rows_used)[i];
                           const double* p = probs->data() + i * v;
                           double w = (*wcopy)[r] * g;
                           double* gr = ln->grad.data() + r * v;
                           for (int64_t j = 0; j < v; ++j) gr[j] += w * p[j];
                           gr[(*tcopy)[r]] -= w;
                       }
                   });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be [V,E]");
    const int64_t v = table.dim(0), e = table.dim(1);
    const int64_t l = static_cast<int64_t>(ids.size());
    std::vector<double> out(l * e);
    for (int64_t i = 0; i < l; ++i) {
        if (ids[i] < 0 || ids[i] >= v)
            throw IndexError("embedding: id " + std::to_string(ids[i]) +
                             " outside table of " + std::to_string(v) + " rows");
        std::copy_n(table.data().data() + ids[i] * e, e, out.data() + i * e);
    }
    auto tn = table.node();
    auto icopy = std::make_shared<std::vector<int>>(ids);
    return make_op({l, e}, std::move(out), {table},
                   [tn, icopy, e, l](detail::TensorNode& self) {
                       for (int64_t i = 0; i < l; ++i) {
                           double* dst = tn->grad.data() + (*icopy)[i] * e;
                           const double* src = self.grad.data() + i * e;
                           for (int64_t j = 0; j < e; ++j) dst[j] += src[j];
                       }
                   });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    if (x.rank() != 3 || w.rank() != 3)
        throw ShapeError("conv1d: x must be [B,Cin,L], w must be [Cout,Cin,k]");
    if (stride < 1) throw ShapeError("conv1d: stride must be positive");
    const int64_t b = x.dim(0), cin = x.dim(1), l = x.dim(2);
    const int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw ShapeError("conv1d: channel mismatch");
    if (bias.numel() != cout) throw ShapeError("conv1d: bias must have Cout entries");
    if (k > l) throw ShapeError("conv1d: kernel longer than signal");
    const int64_t lout = (l - k) / stride + 1;
    std::vector<double> out(b * cout * lout);
    for (int64_t ib = 0; ib < b; ++ib)
        for (int64_t oc = 0; oc < cout; ++oc)
            for (int64_t o = 0; o < lout; ++o) {
                double acc = bias.data()[oc];
                for (int64_t ic = 0; ic < cin; ++ic) {
                    const double* xp = x.data().data() + (ib * cin + ic) * l + o * stride;
                    const double* wp = w.data().data() + (oc * cin + ic) * k;
                    for (int64_t j = 0; j < k; ++j) acc += xp[j] * wp[j];
                }
                out[(ib * cout + oc) * lout + o] = acc;
            }
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    return make_op({b, cout, lout}, std::move(out), {x, w, bias},
                   [xn, wn, bn, b, cin, l, cout, k, lout, stride](detail::TensorNode& self) {
                       for (int64_t ib = 0; ib < b; ++ib)
                           for (int64_t oc = 0; oc < cout; ++oc)
                               for (int64_t o = 0; o < lout; ++o) {
                                   const double g =
                                       self.grad[(ib * cout + oc) * lout + o];
                                   if (bn->requires_grad) bn->grad[oc] += g;
                                   for (int64_t ic = 0; ic < cin; ++ic) {
                                       const int64_t xbase = (ib * cin + ic) * l + o * stride;
                                       const int64_t wbase = (oc * cin + ic) * k;
                                       if (xn->requires_grad)
                                           for (int64_t j = 0; j < k; ++j)
                                               xn->grad[xbase + j] += g * wn->value[wbase + j];
                                       if (wn->requires_grad)
                                           for (int64_t j = 0; j < k; ++j)
                                               wn->grad[wbase + j] += g * xn->value[xbase + j];
                                   }
                               }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int64_t n = last_dim(parts[0]);
    int64_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(1) != n)
            throw ShapeError("concat_rows: all parts must be [*, " + std::to_string(n) + "]");
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_op({rows, n}, std::move(out), parts, [nodes, n](detail::TensorNode& self) {
        int64_t off = 0;
        for (auto& pn : nodes) {
            int64_t cnt = static_cast<int64_t>(pn->value.size());
            if (pn->requires_grad)
                for (int64_t i = 0; i < cnt; ++i) pn->grad[i] += self.grad[off + i];
            off += cnt;
        }
        (void)n;
    });
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
    if (a.rank() != 2) throw ShapeError("slice_rows: expects rank-2 tensor");
    if (begin < 0 || end > a.dim(0) || begin >= end)
        throw ShapeError("slice_rows: bad range");
    const int64_t n = a.dim(1), rows = end - begin;
    std::vector<double> out(a.data().begin() + begin * n, a.data().begin() + end * n);
    auto an = a.node();
    return make_op({rows, n}, std::move(out), {a},
                   [an, begin, n, rows](detail::TensorNode& self) {
                       for (int64_t i = 0; i < rows * n; ++i)
                           an->grad[begin * n + i] += self.grad[i];
                   });
}

Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end) {
    if (a.rank() != 2) throw ShapeError("slice_cols: expects rank-2 tensor");
    if (begin < 0 || end > a.dim(1) || begin >= end)
        throw ShapeError("slice_cols: bad range");
    const int64_t m = a.dim(0), n = a.dim(1), w = end - begin;
    std::vector<double> out(m * w);
    for (int64_t i = 0; i < m; ++i)
        std::copy_n(a.data().data() + i * n + begin, w, out.data() + i * w);
    auto an = a.node();
    return make_op({m, w}, std::move(out), {a},
                   [an, begin, m, n, w](detail::TensorNode& self) {
                       for (int64_t i = 0; i < m; ++i)
                           for (int64_t j = 0; j < w; ++j)
                               an->grad[i * n + begin + j] += self.grad[i * w + j];
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const int64_t m = parts[0].dim(0);
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != m)
            throw ShapeError("concat_cols: all parts must have " + std::to_string(m) + " rows");
        total += p.dim(1);
    }
    std::vector<double> out(m * total);
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p.dim(1);
        for (int64_t i = 0; i < m; ++i)
            std::copy_n(p.data().data() + i * w, w, out.data() + i * total + off);
        off += w;
    }
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.dim(1));
    }
    return make_op({m, total}, std::move(out), parts,
                   [nodes, widths, m, total](detail::TensorNode& self) {
                       int64_t off = 0;
                       for (size_t pi = 0; pi < nodes.size(); ++pi) {
                           const int64_t w = widths[pi];
                           if (nodes[pi]->requires_grad)
                               for (int64_t i = 0; i < m; ++i)
                                   for (int64_t j = 0; j < w; ++j)
                                       nodes[pi]->grad[i * w + j] +=
                                           self.grad[i * total + off + j];
                           off += w;
                       }
                   });
}

Tensor reshape(const Tensor& a, std::vector<int64_t> new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: new shape " + shape_str(new_shape) +
                         " does not match element count of " + shape_str(a.shape()));
    auto an = a.node();
    return make_op(std::move(new_shape), a.data(), {a}, [an](detail::TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto an = a.node();
    return make_op({1}, {s}, {a}, [an](detail::TensorNode& self) {
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.numel());
    auto an = a.node();
    return make_op({1}, {s * inv}, {a}, [an, inv](detail::TensorNode& self) {
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0] * inv;
    });
}

Tensor rowwise_sqdist_mean(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "rowwise_sqdist_mean");
    const int64_t rows = row_count(a), n = last_dim(a);
    double total = 0.0;
    for (int64_t i = 0; i < rows * n; ++i) {
        double d = a.data()[i] - b.data()[i];
        total += d * d;
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    auto an = a.node();
    auto bn = b.node();
    return make_op({1}, {total * inv_rows}, {a, b},
                   [an, bn, rows, n, inv_rows](detail::TensorNode& self) {
                       const double g = 2.0 * self.grad[0] * inv_rows;
                       for (int64_t i = 0; i < rows * n; ++i) {
                           double d = an->value[i] - bn->value[i];
                           if (an->requires_grad) an->grad[i] += g * d;
                           if (bn->requires_grad) bn->grad[i] -= g * d;
                       }
                   });
}

Tensor l2_normalize_rows(const Tensor& a) {
    const int64_t rows = row_count(a), n = last_dim(a);
    std::vector<double> out(a.numel());
    auto norms = std::make_shared<std::vector<double>>(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * n;
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += x[j] * x[j];
        double norm = std::sqrt(s) + 1e-12;
        (*norms)[r] = norm;
        for (int64_t j = 0; j < n; ++j) out[r * n + j] = x[j] / norm;
    }
    auto an = a.node();
    auto saved = std::make_shared<std::vector<double>>(out);
    return make_op(a.shape(), std::move(out), {a},
                   [an, saved, norms, rows, n](detail::TensorNode& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* y = saved->data() + r * n;
                           const double* g = self.grad.data() + r * n;
                           double dot = 0.0;
                           for (int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
                           const double inv = 1.0 / (*norms)[r];
                           for (int64_t j = 0; j < n; ++j)
                               an->grad[r * n + j] += (g[j] - y[j] * dot) * inv;
                       }
                   });
}

Tensor straight_through(const Tensor& latents, const std::vector<double>& quantized) {
    if (static_cast<int64_t>(quantized.size()) != latents.numel())
        throw ShapeError("straight_through: quantized size mismatch");
    auto ln = latents.node();
    return make_op(latents.shape(), quantized, {latents}, [ln](detail::TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) ln->grad[i] += self.grad[i];
    });
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<uint8_t>& keep, double att_scale) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError("masked_attention: q,k,v must be rank 2");
    const int64_t lq = q.dim(0), d = q.dim(1), lk = k.dim(0), dv = v.dim(1);
    if (k.dim(1) != d || v.dim(0) != lk)
        throw ShapeError("masked_attention: k/v shapes inconsistent with q");
    if (static_cast<int64_t>(keep.size()) != lq * lk)
        throw ShapeError("masked_attention: keep mask must be [Lq*Lk]");
    auto probs = std::make_shared<std::vector<double>>(lq * lk, 0.0);
    std::vector<double> out(lq * dv, 0.0);
    for (int64_t i = 0; i < lq; ++i) {
        const double* qi = q.data().data() + i * d;
        const uint8_t* km = keep.data() + i * lk;
        double mx = -HUGE_VAL;
        for (int64_t j = 0; j < lk; ++j) {
            if (!km[j]) continue;
            const double* kj = k.data().data() + j * d;
            double s = 0.0;
            for (int64_t p = 0; p < d; ++p) s += qi[p] * kj[p];
            s *= att_scale;
            (*probs)[i * lk + j] = s;  // raw score for now
            mx = std::max(mx, s);
        }
        if (mx == -HUGE_VAL) continue;  // no allowed keys: zero context row
        double z = 0.0;
        for (int64_t j = 0; j < lk; ++j) {
            if (!km[j]) continue;
            double e = std::exp((*probs)[i * lk + j] - mx);
            (*probs)[i * lk + j] = e;
            z += e;
        }
        double* oi = out.data() + i * dv;
        for (int64_t j = 0; j < lk; ++j) {
            if (!km[j]) continue;
            double p = (*probs)[i * lk + j] / z;
            (*probs)[i * lk + j] = p;
            const double* vj = v.data().data() + j * dv;
            for (int64_t c = 0; c < dv; ++c) oi[c] += p * vj[c];
        }
    }
    auto qn = q.node();
    auto kn = k.node();
    auto vn = v.node();
    auto kcopy = std::make_shared<std::vector<uint8_t>>(keep);
    return make_op(
        {lq, dv}, std::move(out), {q, k, v},
        [qn, kn, vn, probs, kcopy, lq, lk, d, dv, att_scale](detail::TensorNode& self) {
            for (int64_t i = 0; i < lq; ++i) {
                const uint8_t* km = kcopy->data() + i * lk;
                const double* gi = self.grad.data() + i * dv;
                // dp_ij = dC_i . V_j ; accumulate dV too
                double dot = 0.0;  // sum_j p_ij * dp_ij
                std::vector<double> dp(lk, 0.0);
                for (int64_t j = 0; j < lk; ++j) {
                    if (!km[j]) continue;
                    const double p = (*probs)[i * lk + j];
                    const double* vj = vn->value.data() + j * dv;
                    double a = 0.0;
                    for (int64_t c = 0; c < dv; ++c) a += gi[c] * vj[c];
                    dp[j] = a;
                    dot += p * a;
                    if (vn->requires_grad) {
                        double* gv = vn->grad.data() + j * dv;
                        for (int64_t c = 0; c < dv; ++c) gv[c] += p * gi[c];
                    }
                }
                const double* qi = qn->value.data() + i * d;
                for (int64_t j = 0; j < lk; ++j) {
                    if (!km[j]) continue;
                    const double p = (*probs)[i * lk + j];
                    const double ds = p * (dp[j] - dot) * att_scale;
                    if (ds == 0.0) continue;
                    const double* kj = kn->value.data() + j * d;
                    if (qn->requires_grad) {
                        double* gq = qn->grad.data() + i * d;
                        for (int64_t c = 0; c < d; ++c) gq[c] += ds * kj[c];
                    }
                    if (kn->requires_grad) {
                        double* gk = kn->grad.data() + j * d;
                        for (int64_t c = 0; c < d; ++c) gk[c] += ds * qi[c];
                    }
                }
            }
        });
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double eps, Rng& rng, int64_t max_checks_per_param) {
    if (eps < 1e-7 || eps > 1e-3)
        throw std::domain_error("grad_check: eps must lie in [1e-7, 1e-3]");
    Tensor out = f();
    if (!std::isfinite(out.item()))
        throw NumericError("grad_check: function value is not finite");
    for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
    out.backward();
    double max_rel = 0.0;
    for (const auto& p : params) {
        Tensor& param = const_cast<Tensor&>(p);
        std::vector<int64_t> idxs;
        const int64_t n = param.numel();
        if (max_checks_per_param > 0 && n > max_checks_per_param) {
            for (int64_t c = 0; c < max_checks_per_param; ++c)
                idxs.push_back(static_cast<int64_t>(rng.below(n)));
        } else {
            idxs.resize(n);
            for (int64_t i = 0; i < n; ++i) idxs[i] = i;
        }
        for (int64_t i : idxs) {
            const double g_ad = param.grad()[i];
            const double old = param.data()[i];
            param.data()[i] = old + eps;
            double f1 = f().item();
            param.data()[i] = old - eps;
            double f2 = f().item();
            param.data()[i] = old;
            if (!std::isfinite(f1) || !std::isfinite(f2))
                throw NumericError("grad_check: perturbed evaluation is not finite");
            const double g_fd = (f1 - f2) / (2.0 * eps);
            const double rel =
                std::fabs(g_ad - g_fd) / (std::fabs(g_ad) + std::fabs(g_fd) + 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace tridiff
