#include "liclab/optim.hpp"

#include <algorithm>
#include <cmath>

#include "liclab/rng.hpp"

namespace liclab {

void set_trainable(std::vector<Param>& params, const std::function<bool(const Param&)>& pred) {
    for (auto& p : params) {
        p.trainable = pred(p);
        p.node->requires_grad = p.trainable;
    }
}

Adam::Adam(std::vector<Param> params, float lr, AdamConfig cfg)
    : params_(std::move(params)), lr_(lr), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.node->value.dims);
        v_.emplace_back(p.node->value.dims);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        if (!p.trainable) continue;
        p.node->ensure_grad();
        p.node->grad.fill(0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        if (!p.trainable) continue;
        if (!p.node->grad.same_shape(p.node->value))
            throw TrainingError("missing gradient on trainable param " + p.name);
        auto& w = p.node->value.data;
        const auto& g = p.node->grad.data;
        auto& m = m_[pi].data;
        auto& v = v_[pi].data;
        const long n = static_cast<long>(w.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const double gi = static_cast<double>(g[k]);
            const double mi = cfg_.beta1 * static_cast<double>(m[k]) + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * static_cast<double>(v[k]) + (1.0 - cfg_.beta2) * gi * gi;
            m[k] = static_cast<float>(mi);
            v[k] = static_cast<float>(vi);
            const double update = lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
            w[k] = static_cast<float>(static_cast<double>(w[k]) - update);
        }
    }
}

double grad_check(const std::function<double()>& loss64, const std::function<void()>& compute_grads,
                  const std::vector<Param>& params, const GradCheckOptions& opt) {
    const double l0 = loss64();
    const double l1 = loss64();
    if (l0 != l1)
        throw HarnessError("loss function is not deterministic: " + std::to_string(l0) + " vs " +
                           std::to_string(l1));

    compute_grads();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (!p.node->grad.same_shape(p.node->value))
            throw TrainingError("missing gradient on checked param " + p.name);
        analytic.push_back(p.node->grad);
    }

    Rng rng(opt.seed);
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = params[pi].node->value.data;
        const long n = static_cast<long>(w.size());
        std::vector<long> coords;
        if (n <= opt.max_coords_per_param) {
            for (long i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int s = 0; s < opt.max_coords_per_param; ++s)
                coords.push_back(static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(n)));
        }
        for (long i : coords) {
            const std::size_t k = static_cast<std::size_t>(i);
            const float orig = w[k];
            const float wp = static_cast<float>(static_cast<double>(orig) + opt.h);
            const float wm = static_cast<float>(static_cast<double>(orig) - opt.h);
            w[k] = wp;
            const double lp = loss64();
            w[k] = wm;
            const double lm = loss64();
            w[k] = orig;
            // Divide by the realized float perturbation, not the nominal 2h.
            const double cd = (lp - lm) / (static_cast<double>(wp) - static_cast<double>(wm));
            const double a = static_cast<double>(analytic[pi].data[k]);
            const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace liclab
