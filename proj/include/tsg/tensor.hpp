#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsg/common.hpp"

namespace tsg {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until backward touches this tensor
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0f);
    }
};

// Value-semantic handle onto a shared buffer. Values are immutable once an op
// has produced them; only grad buffers mutate during backward.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);

    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float v);
    static Tensor zeros_like(const Tensor& t);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(impl_->value.size()); }

    float* data() { return impl_->value.data(); }
    const float* data() const { return impl_->value.data(); }
    std::span<const float> values() const { return impl_->value; }

    float item() const;
    float at(std::initializer_list<int> idx) const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    std::span<const float> grad() const { return impl_->grad; }
    float* grad_data() {
        impl_->ensure_grad();
        return impl_->grad.data();
    }
    void zero_grad() { impl_->grad.clear(); }

    // Shares the value buffer but drops it out of any gradient graph.
    Tensor detach() const;
    // Deep copy of the values, no grad.
    Tensor clone() const;

    const std::shared_ptr<TensorData>& impl() const { return impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorData> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorData> impl_;
};

// Define-by-run gradient tape. Ops executed while a tape is active (and grad
// mode enabled) append a backward closure; Tape::backward replays them in
// reverse creation order, which is a valid topological order by construction.
// Tapes are rebuilt every step and never shared across threads.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor& root);
    size_t node_count() const { return nodes_.size(); }

    static Tape* active();
    static bool recording();
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  private:
    std::vector<std::function<void()>> nodes_;
    Tape* prev_ = nullptr;
};

// RAII suppression of gradient recording (frozen codec paths, D-phase
// generation, evaluation).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();

  private:
    bool prev_;
};

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]
Tensor transpose(const Tensor& a);                // [M,N] -> [N,M]
Tensor softmax(const Tensor& x, int axis);        // rank 1 or 2, stable

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor neg(const Tensor& a);

// Row/column broadcasts over a [R,C] matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // v: [C]
Tensor add_colvec(const Tensor& m, const Tensor& v);  // v: [R]
Tensor mul_colvec(const Tensor& m, const Tensor& v);  // v: [R]

Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // clamped at 1e-12
Tensor sqrt(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum_all(const Tensor& x);   // -> scalar
Tensor mean_all(const Tensor& x);  // -> scalar
Tensor row_mean(const Tensor& m);  // [R,C] -> [R]

// Per-pixel channel map: x [C,H,W], w [C2,C] -> [C2,H,W].
Tensor conv1x1(const Tensor& x, const Tensor& w);
// 4x4 conv, stride 2, pad 1: x [C,H,W] (H,W even), w [C2,C,4,4], b [C2].
Tensor conv_down4x4(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor upsample_nearest(const Tensor& x, int factor);  // [C,H,W] -> [C,fH,fW]

// Block reshuffles used by the invertible codec. s divides H and W.
Tensor space_to_depth(const Tensor& x, int s);  // [C,H,W] -> [C*s*s, H/s, W/s]
Tensor depth_to_space(const Tensor& x, int s);  // inverse

// Row lookup with scatter-add backward: table [V,D], id in [0,V).
Tensor embedding_row(const Tensor& table, int id);

// ---- composites --------------------------------------------------------

// x [I] -> [O] or x [B,I] -> [B,O]; W [I,O], b [O].
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor row_variance(const Tensor& m);  // population variance per row
Tensor pearson(const Tensor& a, const Tensor& b);  // rank-1, epsilon-guarded

}  // namespace tsg
