#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tridiff/rng.hpp"

namespace tridiff {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value once touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // pulls from this->grad and accumulates into parents' grads
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};
}  // namespace detail

// Dense row-major f64 tensor with a reverse-mode tape. The tape is rebuilt
// every forward pass; Tensor is a cheap shared handle onto one node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<double> vals,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0,
                        bool requires_grad = false);
    static Tensor randu(std::vector<int64_t> shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    double item() const {
        if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
        return node_->value[0];
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    // reverse pass from a scalar output
    void backward() const;

    // value copy detached from the tape
    Tensor detach() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op(std::vector<int64_t> shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(detail::TensorNode&)> backward_fn);
};

Tensor make_op(std::vector<int64_t> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn);

// ---- core ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]
Tensor transpose(const Tensor& a);                // [M,N] -> [N,M]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowwise(const Tensor& a, const Tensor& bias);  // [M,N] + [N]
Tensor gelu(const Tensor& a);
Tensor softmax(const Tensor& a);  // over last axis
// last-axis softmax with a keep-mask; rows with no kept entry come out all
// zero. masked entries are never read.
Tensor masked_softmax(const Tensor& a, const std::vector<uint8_t>& keep);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);  // normalizes each row over the last axis
Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& mask,
                            const std::vector<double>& weights);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);  // [V,E],[L] -> [L,E]
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride);  // [B,Cin,L],[Cout,Cin,k],[Cout] -> [B,Cout,Lout]
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);
Tensor slice_cols(const Tensor& a, int64_t begin, int64_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, std::vector<int64_t> new_shape);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// mean over rows of the squared L2 distance between matching rows
Tensor rowwise_sqdist_mean(const Tensor& a, const Tensor& b);
Tensor l2_normalize_rows(const Tensor& a);
// forward takes the provided quantized values, backward passes gradient to
// latents unchanged (straight-through)
Tensor straight_through(const Tensor& latents, const std::vector<double>& quantized);
// fused masked attention: softmax(scale * Q K^T + mask) V where keep is an
// [Lq x Lk] keep-mask; masked keys are never read, fully-masked queries yield
// a zero context row.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<uint8_t>& keep, double att_scale);

// ---- gradient checking ----------------------------------------------------

// central differences vs reverse mode; returns max relative error
// |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12). When max_checks_per_param > 0,
// only that many randomly chosen elements of each parameter are probed.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double eps, Rng& rng, int64_t max_checks_per_param = 0);

}  // namespace tridiff
