#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsg/rng.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

struct Parameter {
    std::string name;
    Tensor value;  // requires_grad = true
    std::vector<float> adam_m, adam_v;
    int64_t step_count = 0;
};

// One named collection per optimizer group (theta_T, theta_G, theta_D per
// stage). Iteration order is insertion order, which is fixed by construction
// order and therefore deterministic.
class ParamStore {
  public:
    Parameter& add(const std::string& name, Tensor value);
    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    int64_t total_size() const;
    void zero_grads();

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

// Bias-corrected Adam over every parameter in the store. Missing grads are
// treated as zero; grads are cleared after the update.
void adam_step(ParamStore& params, float lr, float beta1, float beta2, float eps = 1e-8f);

// ---- initializers -------------------------------------------------------

// Kaiming-style normal for layers followed by leaky-ReLU(0.2).
Tensor init_fc(Rng& rng, int fan_in, int fan_out);
Tensor init_conv4x4(Rng& rng, int c_in, int c_out);
// Xavier-ish scale for gate matrices (sigmoid/tanh nonlinearity).
Tensor init_gate(Rng& rng, int fan_in, int fan_out);
// Out-first [c_out, c_in] weight for 1x1 convolutions.
Tensor init_conv1x1(Rng& rng, int c_in, int c_out);
Tensor init_embedding(Rng& rng, int vocab, int dim);

}  // namespace tsg
