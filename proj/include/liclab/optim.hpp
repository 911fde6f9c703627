#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "liclab/autograd.hpp"

namespace liclab {

// Named model parameter. `trainable == false` means the optimizer never
// touches it; freezing is flipping this flag plus `node->requires_grad`.
struct Param {
    std::string name;
    NodePtr node;
    bool trainable = true;
};

void set_trainable(std::vector<Param>& params, const std::function<bool(const Param&)>& pred);

struct AdamConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Adam with bias correction over float32 states.
class Adam {
   public:
    Adam(std::vector<Param> params, float lr, AdamConfig cfg = {});

    void zero_grad();
    // One update; throws TrainingError if a trainable param has no gradient.
    void step();
    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    long step_count() const { return t_; }
    const std::vector<Param>& params() const { return params_; }

   private:
    std::vector<Param> params_;
    std::vector<Tensor> m_, v_;
    float lr_;
    AdamConfig cfg_;
    long t_ = 0;
};

struct GradCheckOptions {
    double h = 1e-3;
    int max_coords_per_param = 8;
    std::uint64_t seed = 0x9dc5;
};

// Central-difference check of analytic gradients.
//  - loss64: deterministic high-precision evaluation of the loss at the
//    current parameter values (evaluated twice up front; any difference is a
//    HarnessError).
//  - compute_grads: zeroes and refills `grad` on every checked param.
// Returns max over sampled coordinates of
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
double grad_check(const std::function<double()>& loss64, const std::function<void()>& compute_grads,
                  const std::vector<Param>& params, const GradCheckOptions& opt = {});

}  // namespace liclab
