#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "liclab/tensor.hpp"

namespace liclab {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the (static) computation graph. Tensors are immutable once
// produced by an op; params are leaves whose `value` the optimizer mutates
// between graph builds.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same dims as value
    // 64-bit mirror for scalar ([1]) nodes produced by reductions, so loss
    // readout keeps full accumulation precision.
    double scalar64 = 0.0;
    bool has_scalar64 = false;
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward_fn;

    void ensure_grad();
    void accumulate_grad(const Tensor& g);
    double scalar() const;  // value of a [1] node, preferring the 64-bit mirror
};

NodePtr make_leaf(Tensor value, bool requires_grad);
NodePtr make_const(Tensor value);

// Reverse-mode sweep from a scalar root (seeds d(root)/d(root) = 1).
void backward(const NodePtr& root);

namespace ops {

// weight [c_out, c_in, k, k]; zero padding; cross-correlation.
NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride, int pad);
// weight [c_in, c_out, k, k]; adjoint of conv2d (output (H-1)*stride - 2*pad + k).
NodePtr tconv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride, int pad);
// weight [c, 1, k, k]; per-channel spatial conv, stride 1.
NodePtr depthwise_conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int pad);
// beta [c] (> 0), gamma [c, c] (>= 0); inverse=true is IGDN.
NodePtr gdn(const NodePtr& x, const NodePtr& beta, const NodePtr& gamma, bool inverse);
// Nonnegative reparameterization: eff = max(v, bound)^2 - pedestal with
// bound = sqrt(minimum + pedestal). Exactly representable identity points:
// v = 1 -> 1, v = 2^-18 -> 0 (minimum = 0).
NodePtr nonneg(const NodePtr& v, float minimum);
NodePtr relu(const NodePtr& x);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, double s);
NodePtr add_const(const NodePtr& x, const Tensor& c);
// Elementwise round half away from zero; no gradient flows through.
NodePtr round_quantize(const NodePtr& x);
NodePtr slice_channels(const NodePtr& x, int c0, int c1);
NodePtr crop2d(const NodePtr& x, int h, int w);
// clamp(exp(x), lo, hi); clamped cells pass gradient only when it points
// back inside the feasible band.
NodePtr exp_clamp(const NodePtr& x, float lo, float hi);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr reshape(const NodePtr& x, std::vector<int> dims);
NodePtr sum(const NodePtr& x);
NodePtr mse(const NodePtr& a, const NodePtr& b);
// Total coded bits of y_hat under N(mu, sigma) with unit bins, probability
// floored at 1e-9. Scalar output with 64-bit mirror.
NodePtr gaussian_bits_total(const NodePtr& y_hat, const NodePtr& mu, const NodePtr& sigma);
// Total bits of z_hat under a per-channel logistic prior; loc/scale are [c].
NodePtr logistic_bits_total(const NodePtr& z_hat, const NodePtr& loc, const NodePtr& scale);

}  // namespace ops

// Scalar bin-integrated likelihood, shared by the rate ops, the coder tables
// and the analysis tools.
double gaussian_bin_probability(double y_hat, double mu, double sigma);
double gaussian_bin_bits(double y_hat, double mu, double sigma);
double logistic_bin_probability(double z_hat, double loc, double scale);
double logistic_bin_bits(double z_hat, double loc, double scale);

inline constexpr double kProbabilityFloor = 1e-9;
inline constexpr float kSigmaMin = 0.04f;
inline constexpr float kSigmaMax = 64.0f;

}  // namespace liclab
