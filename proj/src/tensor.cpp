#include "tsg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace tsg {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;
bool g_finite_checks = true;

using DataPtr = std::shared_ptr<TensorData>;

void check_finite(const Tensor& t, const char* op) {
    if (!g_finite_checks) return;
    for (float v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
}

bool grads_wanted(std::initializer_list<const Tensor*> inputs) {
    if (!(g_active_tape != nullptr && g_grad_enabled)) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void mark_and_record(Tensor& out, std::function<void()> fn) {
    out.set_requires_grad(true);
    g_active_tape->record(std::move(fn));
}

// out[M,N] = a[M,K] * b[K,N]
void mm_nn(float* out, const float* a, const float* b, int m, int k, int n) {
    std::memset(out, 0, sizeof(float) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* orow = out + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float s = arow[kk];
            const float* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
}

// out[M,K] += a[M,N] * b[K,N]^T
void mm_acc_nt(float* out, const float* a, const float* b, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * n;
        float* orow = out + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float* brow = b + static_cast<size_t>(kk) * n;
            float s = 0.0f;
            for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
            orow[kk] += s;
        }
    }
}

// out[K,N] += a[M,K]^T * b[M,N]
void mm_acc_tn(float* out, const float* a, const float* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        const float* brow = b + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float s = arow[kk];
            float* orow = out + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got shape " +
                             shape_str(t.shape()));
    }
}

// Unary elementwise op with f(x) and df(x, y) -> dy/dx.
template <typename F, typename DF>
Tensor unary_op(const Tensor& x, const char* name, F f, DF df) {
    Tensor out(x.shape());
    const float* xd = x.data();
    float* od = out.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) od[i] = f(xd[i]);
    check_finite(out, name);
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi, df] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            const int64_t count = static_cast<int64_t>(oi->value.size());
            for (int64_t i = 0; i < count; ++i) {
                xi->grad[i] += oi->grad[i] * df(xi->value[i], oi->value[i]);
            }
        });
    }
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

// Decompose shape around an axis: extents (outer, axis, inner).
struct AxisSplit {
    int64_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
        if (i < axis)
            s.outer *= shape[static_cast<size_t>(i)];
        else if (i == axis)
            s.axis = shape[static_cast<size_t>(i)];
        else
            s.inner *= shape[static_cast<size_t>(i)];
    }
    return s;
}

}  // namespace

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor: non-positive extent in shape " + shape_str(shape));
    }
    impl_ = std::make_shared<TensorData>();
    impl_->shape = std::move(shape);
    impl_->value.assign(static_cast<size_t>(numel(impl_->shape)), fill);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(values.size())) {
        throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorData>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(float v) { return from({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape()); }

float Tensor::item() const {
    if (size() != 1) throw UsageError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return impl_->value[0];
}

float Tensor::at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw UsageError("at: index rank mismatch");
    int64_t flat = 0;
    int i = 0;
    for (int v : idx) {
        flat = flat * impl_->shape[static_cast<size_t>(i)] + v;
        ++i;
    }
    return impl_->value[static_cast<size_t>(flat)];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorData>();
    t.impl_->shape = impl_->shape;
    t.impl_->value = impl_->value;  // copy keeps graphs fully independent
    t.impl_->requires_grad = false;
    return t;
}

Tensor Tensor::clone() const { return detach(); }

// ---- tape ---------------------------------------------------------------

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }
bool Tape::recording() { return g_active_tape != nullptr && g_grad_enabled; }

void Tape::backward(const Tensor& root) {
    if (root.size() != 1) {
        throw UsageError("backward: root must be scalar, got shape " + shape_str(root.shape()));
    }
    root.impl()->ensure_grad();
    root.impl()->grad[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out(Shape{m, n});
    mm_nn(out.data(), a.data(), b.data(), m, k, n);
    check_finite(out, "matmul");
    if (grads_wanted({&a, &b})) {
        DataPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
        mark_and_record(out, [ai, bi, oi, m, k, n] {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                mm_acc_nt(ai->grad.data(), oi->grad.data(), bi->value.data(), m, n, k);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                mm_acc_tn(bi->grad.data(), ai->value.data(), oi->grad.data(), m, k, n);
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    Tensor out(Shape{n, m});
    const float* ad = a.data();
    float* od = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) od[static_cast<size_t>(j) * m + i] = ad[static_cast<size_t>(i) * n + j];
    if (grads_wanted({&a})) {
        DataPtr ai = a.impl(), oi = out.impl();
        mark_and_record(out, [ai, oi, m, n] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ai->grad[static_cast<size_t>(i) * n + j] += oi->grad[static_cast<size_t>(j) * m + i];
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (x.rank() != 1 && x.rank() != 2) {
        throw DimensionError("softmax: rank 1 or 2 expected, got " + shape_str(x.shape()));
    }
    if (axis < 0 || axis >= x.rank()) throw DimensionError("softmax: axis out of range");
    for (float v : x.values()) {
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
    }
    const AxisSplit sp = split_axis(x.shape(), axis);
    Tensor out(x.shape());
    const float* xd = x.data();
    float* od = out.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.axis * sp.inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t a = 0; a < sp.axis; ++a) mx = std::max(mx, xd[base + a * sp.inner]);
            float denom = 0.0f;
            for (int64_t a = 0; a < sp.axis; ++a) {
                const float e = std::exp(xd[base + a * sp.inner] - mx);
                od[base + a * sp.inner] = e;
                denom += e;
            }
            for (int64_t a = 0; a < sp.axis; ++a) od[base + a * sp.inner] /= denom;
        }
    }
    check_finite(out, "softmax");
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi, sp] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
                for (int64_t in = 0; in < sp.inner; ++in) {
                    const int64_t base = o * sp.axis * sp.inner + in;
                    float dot = 0.0f;
                    for (int64_t a = 0; a < sp.axis; ++a) {
                        const int64_t i = base + a * sp.inner;
                        dot += oi->grad[i] * oi->value[i];
                    }
                    for (int64_t a = 0; a < sp.axis; ++a) {
                        const int64_t i = base + a * sp.inner;
                        xi->grad[i] += oi->value[i] * (oi->grad[i] - dot);
                    }
                }
            }
        });
    }
    return out;
}

namespace {

template <typename F, typename DFA, typename DFB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa, DFB dfb) {
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* od = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) od[i] = f(ad[i], bd[i]);
    check_finite(out, name);
    if (grads_wanted({&a, &b})) {
        DataPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
        mark_and_record(out, [ai, bi, oi, dfa, dfb] {
            if (oi->grad.empty()) return;
            const int64_t count = static_cast<int64_t>(oi->value.size());
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (int64_t i = 0; i < count; ++i) ai->grad[i] += oi->grad[i] * dfa(ai->value[i], bi->value[i]);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t i = 0; i < count; ++i) bi->grad[i] += oi->grad[i] * dfb(ai->value[i], bi->value[i]);
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
        [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
        [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](float x, float y) { return x * y; }, [](float, float y) { return y; },
        [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](float x, float y) { return x / y; }, [](float, float y) { return 1.0f / y; },
        [](float x, float y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, float s) {
    return unary_op(
        a, "add_scalar", [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float s) {
    return unary_op(
        a, "mul_scalar", [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0f); }

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    require_rank(m, 2, "add_rowvec");
    require_rank(v, 1, "add_rowvec");
    const int rows = m.dim(0), cols = m.dim(1);
    if (v.dim(0) != cols) {
        throw DimensionError("add_rowvec: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
    }
    Tensor out(m.shape());
    const float* md = m.data();
    const float* vd = v.data();
    float* od = out.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) od[static_cast<size_t>(r) * cols + c] = md[static_cast<size_t>(r) * cols + c] + vd[c];
    check_finite(out, "add_rowvec");
    if (grads_wanted({&m, &v})) {
        DataPtr mi = m.impl(), vi = v.impl(), oi = out.impl();
        mark_and_record(out, [mi, vi, oi, rows, cols] {
            if (oi->grad.empty()) return;
            if (mi->requires_grad) {
                mi->ensure_grad();
                for (size_t i = 0; i < oi->grad.size(); ++i) mi->grad[i] += oi->grad[i];
            }
            if (vi->requires_grad) {
                vi->ensure_grad();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) vi->grad[static_cast<size_t>(c)] += oi->grad[static_cast<size_t>(r) * cols + c];
            }
        });
    }
    return out;
}

namespace {

template <typename F, typename DM, typename DV>
Tensor colvec_op(const Tensor& m, const Tensor& v, const char* name, F f, DM dm, DV dv) {
    require_rank(m, 2, name);
    require_rank(v, 1, name);
    const int rows = m.dim(0), cols = m.dim(1);
    if (v.dim(0) != rows) {
        throw DimensionError(std::string(name) + ": " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
    }
    Tensor out(m.shape());
    const float* md = m.data();
    const float* vd = v.data();
    float* od = out.data();
    for (int r = 0; r < rows; ++r) {
        const float s = vd[r];
        for (int c = 0; c < cols; ++c) od[static_cast<size_t>(r) * cols + c] = f(md[static_cast<size_t>(r) * cols + c], s);
    }
    check_finite(out, name);
    if (grads_wanted({&m, &v})) {
        DataPtr mi = m.impl(), vi = v.impl(), oi = out.impl();
        mark_and_record(out, [mi, vi, oi, rows, cols, dm, dv] {
            if (oi->grad.empty()) return;
            if (mi->requires_grad) {
                mi->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                    const float s = vi->value[static_cast<size_t>(r)];
                    for (int c = 0; c < cols; ++c) {
                        const size_t i = static_cast<size_t>(r) * cols + c;
                        mi->grad[i] += oi->grad[i] * dm(mi->value[i], s);
                    }
                }
            }
            if (vi->requires_grad) {
                vi->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                    const float s = vi->value[static_cast<size_t>(r)];
                    float acc = 0.0f;
                    for (int c = 0; c < cols; ++c) {
                        const size_t i = static_cast<size_t>(r) * cols + c;
                        acc += oi->grad[i] * dv(mi->value[i], s);
                    }
                    vi->grad[static_cast<size_t>(r)] += acc;
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor add_colvec(const Tensor& m, const Tensor& v) {
    return colvec_op(
        m, v, "add_colvec", [](float x, float s) { return x + s; }, [](float, float) { return 1.0f; },
        [](float, float) { return 1.0f; });
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
    return colvec_op(
        m, v, "mul_colvec", [](float x, float s) { return x * s; }, [](float, float s) { return s; },
        [](float x, float) { return x; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
    return unary_op(
        x, "leaky_relu", [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid",
        [](float v) { return v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v)); },
        [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, "tanh", [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, "exp", [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

constexpr float kLogClamp = 1e-12f;

Tensor log(const Tensor& x) {
    return unary_op(
        x, "log", [](float v) { return std::log(v < kLogClamp ? kLogClamp : v); },
        [](float v, float) { return v < kLogClamp ? 0.0f : 1.0f / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        x, "sqrt", [](float v) { return std::sqrt(v); }, [](float, float y) { return 0.5f / y; });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        x, "softplus", [](float v) { return v > 15.0f ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](float v, float) { return v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v)); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    const int rank = parts[0].rank();
    if (axis < 0 || axis >= rank) throw DimensionError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    int64_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != rank) throw DimensionError("concat: rank mismatch");
        for (int d = 0; d < rank; ++d) {
            if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)]) {
                throw DimensionError("concat: shape mismatch " + shape_str(out_shape) + " vs " + shape_str(p.shape()));
            }
        }
        axis_total += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = static_cast<int>(axis_total);
    Tensor out(out_shape);
    const AxisSplit osp = split_axis(out_shape, axis);
    float* od = out.data();
    int64_t axis_off = 0;
    bool any_grad = false;
    for (const Tensor& p : parts) {
        const AxisSplit psp = split_axis(p.shape(), axis);
        const float* pd = p.data();
        for (int64_t o = 0; o < psp.outer; ++o) {
            std::memcpy(od + (o * osp.axis + axis_off) * osp.inner, pd + o * psp.axis * psp.inner,
                        sizeof(float) * static_cast<size_t>(psp.axis * psp.inner));
        }
        axis_off += psp.axis;
        any_grad = any_grad || p.requires_grad();
    }
    if (Tape::recording() && any_grad) {
        std::vector<DataPtr> impls;
        impls.reserve(parts.size());
        std::vector<int64_t> axis_sizes;
        for (const Tensor& p : parts) {
            impls.push_back(p.impl());
            axis_sizes.push_back(split_axis(p.shape(), axis).axis);
        }
        DataPtr oi = out.impl();
        mark_and_record(out, [impls, axis_sizes, oi, osp, axis] {
            if (oi->grad.empty()) return;
            int64_t off = 0;
            for (size_t pi = 0; pi < impls.size(); ++pi) {
                const DataPtr& p = impls[pi];
                const int64_t pa = axis_sizes[pi];
                if (p->requires_grad) {
                    p->ensure_grad();
                    const AxisSplit psp = split_axis(p->shape, axis);
                    for (int64_t o = 0; o < psp.outer; ++o) {
                        const float* src = oi->grad.data() + (o * osp.axis + off) * osp.inner;
                        float* dst = p->grad.data() + o * pa * psp.inner;
                        for (int64_t i = 0; i < pa * psp.inner; ++i) dst[i] += src[i];
                    }
                }
                off += pa;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    if (axis < 0 || axis >= x.rank()) throw DimensionError("slice: axis out of range");
    if (start < 0 || len <= 0 || start + len > x.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") out of bounds for " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor out(out_shape);
    const AxisSplit xsp = split_axis(x.shape(), axis);
    float* od = out.data();
    const float* xd = x.data();
    for (int64_t o = 0; o < xsp.outer; ++o) {
        std::memcpy(od + o * len * xsp.inner, xd + (o * xsp.axis + start) * xsp.inner,
                    sizeof(float) * static_cast<size_t>(len * xsp.inner));
    }
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi, xsp, start, len] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (int64_t o = 0; o < xsp.outer; ++o) {
                const float* src = oi->grad.data() + o * len * xsp.inner;
                float* dst = xi->grad.data() + (o * xsp.axis + start) * xsp.inner;
                for (int64_t i = 0; i < len * xsp.inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    }
    Tensor out = Tensor::from(std::move(shape), {x.data(), x.data() + x.size()});
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    float acc = 0.0f;
    for (float v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "sum_all");
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            const float g = oi->grad[0];
            for (float& gv : xi->grad) gv += g;
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x) { return mul_scalar(sum_all(x), 1.0f / static_cast<float>(x.size())); }

Tensor row_mean(const Tensor& m) {
    require_rank(m, 2, "row_mean");
    const int rows = m.dim(0), cols = m.dim(1);
    Tensor out(Shape{rows});
    const float* md = m.data();
    float* od = out.data();
    for (int r = 0; r < rows; ++r) {
        float acc = 0.0f;
        const float* row = md + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += row[c];
        od[r] = acc / static_cast<float>(cols);
    }
    check_finite(out, "row_mean");
    if (grads_wanted({&m})) {
        DataPtr mi = m.impl(), oi = out.impl();
        mark_and_record(out, [mi, oi, rows, cols] {
            if (oi->grad.empty()) return;
            mi->ensure_grad();
            const float inv = 1.0f / static_cast<float>(cols);
            for (int r = 0; r < rows; ++r) {
                const float g = oi->grad[static_cast<size_t>(r)] * inv;
                float* row = mi->grad.data() + static_cast<size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) row[c] += g;
            }
        });
    }
    return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& w) {
    require_rank(x, 3, "conv1x1");
    require_rank(w, 2, "conv1x1");
    const int c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int c_out = w.dim(0);
    if (w.dim(1) != c_in) {
        throw DimensionError("conv1x1: channels " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    }
    const int64_t pixels = static_cast<int64_t>(h) * wd;
    Tensor out(Shape{c_out, h, wd});
    const float* xd = x.data();
    const float* wdt = w.data();
    float* od = out.data();
    // direct per-pixel channel map; the matmul-over-flattened-spatial route is
    // kept as an independent test oracle
    for (int co = 0; co < c_out; ++co) {
        float* orow = od + static_cast<size_t>(co) * pixels;
        std::memset(orow, 0, sizeof(float) * static_cast<size_t>(pixels));
        for (int ci = 0; ci < c_in; ++ci) {
            const float s = wdt[static_cast<size_t>(co) * c_in + ci];
            const float* xrow = xd + static_cast<size_t>(ci) * pixels;
            for (int64_t p = 0; p < pixels; ++p) orow[p] += s * xrow[p];
        }
    }
    check_finite(out, "conv1x1");
    if (grads_wanted({&x, &w})) {
        DataPtr xi = x.impl(), wi = w.impl(), oi = out.impl();
        mark_and_record(out, [xi, wi, oi, c_in, c_out, pixels] {
            if (oi->grad.empty()) return;
            if (wi->requires_grad) {
                wi->ensure_grad();
                for (int co = 0; co < c_out; ++co) {
                    const float* grow = oi->grad.data() + static_cast<size_t>(co) * pixels;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const float* xrow = xi->value.data() + static_cast<size_t>(ci) * pixels;
                        float acc = 0.0f;
                        for (int64_t p = 0; p < pixels; ++p) acc += grow[p] * xrow[p];
                        wi->grad[static_cast<size_t>(co) * c_in + ci] += acc;
                    }
                }
            }
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (int ci = 0; ci < c_in; ++ci) {
                    float* xrow = xi->grad.data() + static_cast<size_t>(ci) * pixels;
                    for (int co = 0; co < c_out; ++co) {
                        const float s = wi->value[static_cast<size_t>(co) * c_in + ci];
                        const float* grow = oi->grad.data() + static_cast<size_t>(co) * pixels;
                        for (int64_t p = 0; p < pixels; ++p) xrow[p] += s * grow[p];
                    }
                }
            }
        });
    }
    return out;
}

namespace {

constexpr int kK = 4, kStride = 2, kPad = 1;

// im2col for the fixed 4x4/stride-2/pad-1 geometry; col is [C*16, OH*OW].
void im2col_4x4(const float* x, int c_in, int h, int w, float* col) {
    const int oh = h / 2, ow = w / 2;
    const int64_t opix = static_cast<int64_t>(oh) * ow;
    for (int ci = 0; ci < c_in; ++ci) {
        for (int ky = 0; ky < kK; ++ky) {
            for (int kx = 0; kx < kK; ++kx) {
                float* crow = col + (static_cast<size_t>(ci) * kK * kK + ky * kK + kx) * opix;
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * kStride - kPad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * kStride - kPad + kx;
                        const bool in = y >= 0 && y < h && xx >= 0 && xx < w;
                        crow[static_cast<size_t>(oy) * ow + ox] =
                            in ? x[(static_cast<size_t>(ci) * h + y) * w + xx] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_acc_4x4(const float* col, int c_in, int h, int w, float* x_grad) {
    const int oh = h / 2, ow = w / 2;
    const int64_t opix = static_cast<int64_t>(oh) * ow;
    for (int ci = 0; ci < c_in; ++ci) {
        for (int ky = 0; ky < kK; ++ky) {
            for (int kx = 0; kx < kK; ++kx) {
                const float* crow = col + (static_cast<size_t>(ci) * kK * kK + ky * kK + kx) * opix;
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * kStride - kPad + ky;
                    if (y < 0 || y >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * kStride - kPad + kx;
                        if (xx < 0 || xx >= w) continue;
                        x_grad[(static_cast<size_t>(ci) * h + y) * w + xx] += crow[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv_down4x4(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 3, "conv_down4x4");
    require_rank(w, 4, "conv_down4x4");
    require_rank(b, 1, "conv_down4x4");
    const int c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
    if (h % 2 != 0 || wd % 2 != 0) {
        throw DimensionError("conv_down4x4: spatial extents must be even, got " + shape_str(x.shape()));
    }
    const int c_out = w.dim(0);
    if (w.dim(1) != c_in || w.dim(2) != kK || w.dim(3) != kK) {
        throw DimensionError("conv_down4x4: weight " + shape_str(w.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    if (b.dim(0) != c_out) throw DimensionError("conv_down4x4: bias " + shape_str(b.shape()));
    const int oh = h / 2, ow = wd / 2;
    const int64_t opix = static_cast<int64_t>(oh) * ow;
    const int ck = c_in * kK * kK;

    std::vector<float> col(static_cast<size_t>(ck) * opix);
    im2col_4x4(x.data(), c_in, h, wd, col.data());

    Tensor out(Shape{c_out, oh, ow});
    mm_nn(out.data(), w.data(), col.data(), c_out, ck, static_cast<int>(opix));
    float* od = out.data();
    const float* bd = b.data();
    for (int co = 0; co < c_out; ++co) {
        float* orow = od + static_cast<size_t>(co) * opix;
        for (int64_t p = 0; p < opix; ++p) orow[p] += bd[co];
    }
    check_finite(out, "conv_down4x4");

    if (grads_wanted({&x, &w, &b})) {
        DataPtr xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
        mark_and_record(out, [xi, wi, bi, oi, c_in, c_out, h, wd, ck, opix] {
            if (oi->grad.empty()) return;
            // col recomputed here rather than kept alive on the tape
            std::vector<float> col2(static_cast<size_t>(ck) * opix);
            im2col_4x4(xi->value.data(), c_in, h, wd, col2.data());
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (int co = 0; co < c_out; ++co) {
                    const float* grow = oi->grad.data() + static_cast<size_t>(co) * opix;
                    float acc = 0.0f;
                    for (int64_t p = 0; p < opix; ++p) acc += grow[p];
                    bi->grad[static_cast<size_t>(co)] += acc;
                }
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                mm_acc_nt(wi->grad.data(), oi->grad.data(), col2.data(), c_out, static_cast<int>(opix), ck);
            }
            if (xi->requires_grad) {
                xi->ensure_grad();
                std::vector<float> dcol(static_cast<size_t>(ck) * opix, 0.0f);
                mm_acc_tn(dcol.data(), wi->value.data(), oi->grad.data(), c_out, ck, static_cast<int>(opix));
                col2im_acc_4x4(dcol.data(), c_in, h, wd, xi->grad.data());
            }
        });
    }
    return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    require_rank(x, 3, "upsample_nearest");
    if (factor < 1) throw DimensionError("upsample_nearest: factor must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = h * factor, ow = w * factor;
    Tensor out(Shape{c, oh, ow});
    const float* xd = x.data();
    float* od = out.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < oh; ++y) {
            const float* xrow = xd + (static_cast<size_t>(ci) * h + y / factor) * w;
            float* orow = od + (static_cast<size_t>(ci) * oh + y) * ow;
            for (int xx = 0; xx < ow; ++xx) orow[xx] = xrow[xx / factor];
        }
    }
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi, c, h, w, oh, ow, factor] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < oh; ++y) {
                    const float* grow = oi->grad.data() + (static_cast<size_t>(ci) * oh + y) * ow;
                    float* xrow = xi->grad.data() + (static_cast<size_t>(ci) * h + y / factor) * w;
                    for (int xx = 0; xx < ow; ++xx) xrow[xx / factor] += grow[xx];
                }
            }
        });
    }
    return out;
}

namespace {

Tensor block_shuffle(const Tensor& x, int s, bool to_depth, const char* name) {
    require_rank(x, 3, name);
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int oc, oh, ow;
    if (to_depth) {
        if (h % s != 0 || w % s != 0) {
            throw ConfigError(std::string(name) + ": spatial " + shape_str(x.shape()) + " not divisible by " +
                              std::to_string(s));
        }
        oc = c * s * s;
        oh = h / s;
        ow = w / s;
    } else {
        if (c % (s * s) != 0) {
            throw DimensionError(std::string(name) + ": channels " + shape_str(x.shape()) + " not divisible by " +
                                 std::to_string(s * s));
        }
        oc = c / (s * s);
        oh = h * s;
        ow = w * s;
    }
    Tensor out(Shape{oc, oh, ow});
    const float* xd = x.data();
    float* od = out.data();
    // forward mapping expressed once in space_to_depth terms
    const int bc = to_depth ? c : oc;       // base channels
    const int bh = to_depth ? h : oh;       // full-resolution side
    const int bw = to_depth ? w : ow;
    for (int ci = 0; ci < bc; ++ci) {
        for (int dy = 0; dy < s; ++dy) {
            for (int dx = 0; dx < s; ++dx) {
                const int dch = (ci * s + dy) * s + dx;
                for (int y = 0; y < bh / s; ++y) {
                    for (int xx = 0; xx < bw / s; ++xx) {
                        const size_t full = (static_cast<size_t>(ci) * bh + (y * s + dy)) * bw + (xx * s + dx);
                        const size_t deep = (static_cast<size_t>(dch) * (bh / s) + y) * (bw / s) + xx;
                        if (to_depth)
                            od[deep] = xd[full];
                        else
                            od[full] = xd[deep];
                    }
                }
            }
        }
    }
    if (grads_wanted({&x})) {
        DataPtr xi = x.impl(), oi = out.impl();
        mark_and_record(out, [xi, oi, s, to_depth, bc, bh, bw] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (int ci = 0; ci < bc; ++ci) {
                for (int dy = 0; dy < s; ++dy) {
                    for (int dx = 0; dx < s; ++dx) {
                        const int dch = (ci * s + dy) * s + dx;
                        for (int y = 0; y < bh / s; ++y) {
                            for (int xx = 0; xx < bw / s; ++xx) {
                                const size_t full =
                                    (static_cast<size_t>(ci) * bh + (y * s + dy)) * bw + (xx * s + dx);
                                const size_t deep = (static_cast<size_t>(dch) * (bh / s) + y) * (bw / s) + xx;
                                if (to_depth)
                                    xi->grad[full] += oi->grad[deep];
                                else
                                    xi->grad[deep] += oi->grad[full];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor space_to_depth(const Tensor& x, int s) { return block_shuffle(x, s, true, "space_to_depth"); }
Tensor depth_to_space(const Tensor& x, int s) { return block_shuffle(x, s, false, "depth_to_space"); }

Tensor embedding_row(const Tensor& table, int id) {
    require_rank(table, 2, "embedding_row");
    const int v = table.dim(0), d = table.dim(1);
    if (id < 0 || id >= v) {
        throw DataError("embedding_row: id " + std::to_string(id) + " out of range for vocab " + std::to_string(v));
    }
    Tensor out(Shape{d});
    std::memcpy(out.data(), table.data() + static_cast<size_t>(id) * d, sizeof(float) * static_cast<size_t>(d));
    if (grads_wanted({&table})) {
        DataPtr ti = table.impl(), oi = out.impl();
        mark_and_record(out, [ti, oi, id, d] {
            if (oi->grad.empty()) return;
            ti->ensure_grad();
            float* row = ti->grad.data() + static_cast<size_t>(id) * d;
            for (int i = 0; i < d; ++i) row[i] += oi->grad[static_cast<size_t>(i)];
        });
    }
    return out;
}

// ---- composites -------------------------------------------------------

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "fully_connected");
    require_rank(b, 1, "fully_connected");
    if (b.dim(0) != w.dim(1)) {
        throw DimensionError("fully_connected: bias " + shape_str(b.shape()) + " vs weight " + shape_str(w.shape()));
    }
    if (x.rank() == 1) {
        if (x.dim(0) != w.dim(0)) {
            throw DimensionError("fully_connected: input " + shape_str(x.shape()) + " vs weight " +
                                 shape_str(w.shape()));
        }
        Tensor row = reshape(x, {1, x.dim(0)});
        return reshape(add_rowvec(matmul(row, w), b), {w.dim(1)});
    }
    require_rank(x, 2, "fully_connected");
    if (x.dim(1) != w.dim(0)) {
        throw DimensionError("fully_connected: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    }
    return add_rowvec(matmul(x, w), b);
}

Tensor row_variance(const Tensor& m) {
    Tensor centered = add_colvec(m, neg(row_mean(m)));
    return row_mean(mul(centered, centered));
}

Tensor pearson(const Tensor& a, const Tensor& b) {
    require_rank(a, 1, "pearson");
    require_same_shape(a, b, "pearson");
    const int n = a.dim(0);
    Tensor am = reshape(a, {1, n});
    Tensor bm = reshape(b, {1, n});
    Tensor ac = add_colvec(am, neg(row_mean(am)));
    Tensor bc = add_colvec(bm, neg(row_mean(bm)));
    Tensor sxy = sum_all(mul(ac, bc));
    Tensor sxx = sum_all(mul(ac, ac));
    Tensor syy = sum_all(mul(bc, bc));
    // epsilon guard keeps zero-variance inputs defined (correlation -> 0)
    Tensor denom = sqrt(add_scalar(mul(sxx, syy), 1e-8f));
    return div(sxy, denom);
}

}  // namespace tsg
