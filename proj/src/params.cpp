#include "tsg/params.hpp"

#include <cmath>

namespace tsg {

Parameter& ParamStore::add(const std::string& name, Tensor value) {
    if (by_name_.count(name)) throw UsageError("param store: duplicate name " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(value);
    p->value.set_requires_grad(true);
    p->adam_m.assign(static_cast<size_t>(p->value.size()), 0.0f);
    p->adam_v.assign(static_cast<size_t>(p->value.size()), 0.0f);
    Parameter& ref = *p;
    by_name_[name] = p.get();
    params_.push_back(std::move(p));
    return ref;
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (const auto& p : params_) p->value.zero_grad();
}

void adam_step(ParamStore& params, float lr, float beta1, float beta2, float eps) {
    for (const auto& p : params.all()) {
        p->step_count += 1;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(p->step_count));
        const std::span<const float> g = p->value.grad();
        float* v = p->value.data();
        const size_t n = static_cast<size_t>(p->value.size());
        for (size_t i = 0; i < n; ++i) {
            const float gi = g.empty() ? 0.0f : g[i];
            p->adam_m[i] = beta1 * p->adam_m[i] + (1.0f - beta1) * gi;
            p->adam_v[i] = beta2 * p->adam_v[i] + (1.0f - beta2) * gi * gi;
            const float m_hat = p->adam_m[i] / static_cast<float>(bc1);
            const float v_hat = p->adam_v[i] / static_cast<float>(bc2);
            v[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
        p->value.zero_grad();
    }
}

Tensor init_fc(Rng& rng, int fan_in, int fan_out) {
    const double std = std::sqrt(2.0 / ((1.0 + 0.2 * 0.2) * fan_in));
    Tensor w(Shape{fan_in, fan_out});
    float* d = w.data();
    for (int64_t i = 0; i < w.size(); ++i) d[i] = static_cast<float>(rng.normal() * std);
    return w;
}

Tensor init_conv4x4(Rng& rng, int c_in, int c_out) {
    const double std = std::sqrt(2.0 / ((1.0 + 0.2 * 0.2) * c_in * 16));
    Tensor w(Shape{c_out, c_in, 4, 4});
    float* d = w.data();
    for (int64_t i = 0; i < w.size(); ++i) d[i] = static_cast<float>(rng.normal() * std);
    return w;
}

Tensor init_gate(Rng& rng, int fan_in, int fan_out) {
    const double std = std::sqrt(1.0 / fan_in);
    Tensor w(Shape{fan_in, fan_out});
    float* d = w.data();
    for (int64_t i = 0; i < w.size(); ++i) d[i] = static_cast<float>(rng.normal() * std);
    return w;
}

Tensor init_conv1x1(Rng& rng, int c_in, int c_out) {
    const double std = std::sqrt(1.0 / c_in);
    Tensor w(Shape{c_out, c_in});
    float* d = w.data();
    for (int64_t i = 0; i < w.size(); ++i) d[i] = static_cast<float>(rng.normal() * std);
    return w;
}

Tensor init_embedding(Rng& rng, int vocab, int dim) {
    Tensor w(Shape{vocab, dim});
    float* d = w.data();
    for (int64_t i = 0; i < w.size(); ++i) d[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
    return w;
}

}  // namespace tsg
