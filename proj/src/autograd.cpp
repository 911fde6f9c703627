#include "liclab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "liclab/kernels.hpp"

namespace liclab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLn2 = 0.69314718055994530942;

void axpy_into(Tensor& dst, const Tensor& src) {
    const long n = static_cast<long>(dst.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) dst.data[static_cast<std::size_t>(i)] += src.data[static_cast<std::size_t>(i)];
}

// Deterministic parallel reduction: fixed chunking, serial combine.
template <class F>
double chunked_sum(long n, F&& f) {
    constexpr long kChunk = 4096;
    const long nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(static_cast<std::size_t>(std::max<long>(nchunks, 1)), 0.0);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < nchunks; ++c) {
        const long end = std::min(n, (c + 1) * kChunk);
        double acc = 0.0;
        for (long i = c * kChunk; i < end; ++i) acc += f(i);
        partial[static_cast<std::size_t>(c)] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

NodePtr make_node(Tensor v, std::vector<NodePtr> inputs, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs) {
        if (in->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) n->backward_fn = std::move(bw);
    return n;
}

void check_4d(const Tensor& t, const char* what) {
    if (t.ndim() != 4) throw DimensionError(std::string(what) + " must be 4-d, got " + t.shape_str());
}

void channel_sum(const float* x, float* out, int batch, int ch, int spatial) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int b = 0; b < batch; ++b) {
            const float* p = x + (static_cast<std::size_t>(b) * ch + c) * spatial;
            for (int i = 0; i < spatial; ++i) acc += static_cast<double>(p[i]);
        }
        out[c] = static_cast<float>(acc);
    }
}

}  // namespace

void Node::ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.dims);
}

void Node::accumulate_grad(const Tensor& g) {
    ensure_grad();
    axpy_into(grad, g);
}

double Node::scalar() const {
    if (has_scalar64) return scalar64;
    return static_cast<double>(value.data.at(0));
}

NodePtr make_leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr make_const(Tensor value) { return make_leaf(std::move(value), false); }

void backward(const NodePtr& root) {
    if (!root) throw Error("backward on null node");
    if (root->value.numel() != 1) throw DimensionError("backward root must be scalar, got " + root->value.shape_str());
    if (!root->requires_grad) return;

    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].get();
            ++idx;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.data[0] = 1.0f;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Scalar likelihoods

double gaussian_bin_probability(double y_hat, double mu, double sigma) {
    const double hi = (y_hat - mu + 0.5) / sigma;
    const double lo = (y_hat - mu - 0.5) / sigma;
    // Evaluate on the tail side to avoid cancellation; the two forms are
    // algebraically equal and keep bits(+k) == bits(-k) exact.
    if (hi + lo > 0.0) return 0.5 * (std::erfc(lo * kInvSqrt2) - std::erfc(hi * kInvSqrt2));
    return 0.5 * (std::erfc(-hi * kInvSqrt2) - std::erfc(-lo * kInvSqrt2));
}

double gaussian_bin_bits(double y_hat, double mu, double sigma) {
    return -std::log2(std::max(gaussian_bin_probability(y_hat, mu, sigma), kProbabilityFloor));
}

namespace {
double logistic_cdf(double u) { return 1.0 / (1.0 + std::exp(-u)); }
}  // namespace

double logistic_bin_probability(double z_hat, double loc, double scale) {
    const double uhi = (z_hat - loc + 0.5) / scale;
    const double ulo = (z_hat - loc - 0.5) / scale;
    if (uhi + ulo > 0.0) return logistic_cdf(-ulo) - logistic_cdf(-uhi);
    return logistic_cdf(uhi) - logistic_cdf(ulo);
}

double logistic_bin_bits(double z_hat, double loc, double scale) {
    return -std::log2(std::max(logistic_bin_probability(z_hat, loc, scale), kProbabilityFloor));
}

namespace {

struct BinGrad {
    double d_v = 0.0, d_mu = 0.0, d_sigma = 0.0;
};

BinGrad gaussian_bits_grad(double v, double mu, double sigma) {
    const double p = gaussian_bin_probability(v, mu, sigma);
    if (p <= kProbabilityFloor) return {};
    const double hi = (v - mu + 0.5) / sigma;
    const double lo = (v - mu - 0.5) / sigma;
    const double phi_hi = kInvSqrt2Pi * std::exp(-0.5 * hi * hi);
    const double phi_lo = kInvSqrt2Pi * std::exp(-0.5 * lo * lo);
    const double dbits_dp = -1.0 / (p * kLn2);
    BinGrad g;
    g.d_v = dbits_dp * (phi_hi - phi_lo) / sigma;
    g.d_mu = -g.d_v;
    g.d_sigma = dbits_dp * (phi_lo * lo - phi_hi * hi) / sigma;
    return g;
}

BinGrad logistic_bits_grad(double v, double loc, double scale) {
    const double p = logistic_bin_probability(v, loc, scale);
    if (p <= kProbabilityFloor) return {};
    const double uhi = (v - loc + 0.5) / scale;
    const double ulo = (v - loc - 0.5) / scale;
    const double fhi = logistic_cdf(uhi), flo = logistic_cdf(ulo);
    const double ghi = fhi * (1.0 - fhi), glo = flo * (1.0 - flo);
    const double dbits_dp = -1.0 / (p * kLn2);
    BinGrad g;
    g.d_v = dbits_dp * (ghi - glo) / scale;
    g.d_mu = -g.d_v;                                            // d/d loc
    g.d_sigma = dbits_dp * (glo * ulo - ghi * uhi) / scale;     // d/d scale
    return g;
}

}  // namespace

namespace ops {

NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride, int pad) {
    check_4d(x->value, "conv2d input");
    check_4d(w->value, "conv2d weight");
    const auto& xd = x->value.dims;
    const auto& wd = w->value.dims;
    if (xd[1] != wd[1])
        throw DimensionError("conv2d channel axis: input has " + std::to_string(xd[1]) +
                             " channels, weight expects " + std::to_string(wd[1]));
    if (wd[2] != wd[3]) throw DimensionError("conv2d weight must be square, got " + w->value.shape_str());
    if (b && b->value.ndim() != 1) throw DimensionError("conv2d bias must be 1-d");
    if (b && b->value.dims[0] != wd[0])
        throw DimensionError("conv2d bias axis: got " + std::to_string(b->value.dims[0]) +
                             ", weight outputs " + std::to_string(wd[0]));
    const auto s = kernels::make_conv_shape(xd[0], xd[1], xd[2], xd[3], wd[0], wd[2], stride, pad);

    Tensor out({s.batch, s.c_out, s.h_out, s.w_out});
    kernels::conv2d_forward(x->value.data.data(), w->value.data.data(),
                            b ? b->value.data.data() : nullptr, out.data.data(), s);

    std::vector<NodePtr> inputs = b ? std::vector<NodePtr>{x, w, b} : std::vector<NodePtr>{x, w};
    return make_node(std::move(out), std::move(inputs), [s](Node& n) {
        Node& xi = *n.inputs[0];
        Node& wi = *n.inputs[1];
        if (xi.requires_grad) {
            Tensor gx(xi.value.dims);
            kernels::conv2d_backward_input(n.grad.data.data(), wi.value.data.data(), gx.data.data(), s);
            xi.accumulate_grad(gx);
        }
        if (wi.requires_grad) {
            Tensor gw(wi.value.dims);
            kernels::conv2d_backward_weight(n.grad.data.data(), xi.value.data.data(), gw.data.data(), s);
            wi.accumulate_grad(gw);
        }
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Node& bi = *n.inputs[2];
            Tensor gb(bi.value.dims);
            kernels::conv2d_backward_bias(n.grad.data.data(), gb.data.data(), s);
            bi.accumulate_grad(gb);
        }
    });
}

NodePtr tconv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int stride, int pad) {
    check_4d(x->value, "tconv2d input");
    check_4d(w->value, "tconv2d weight");
    const auto& xd = x->value.dims;
    const auto& wd = w->value.dims;  // [c_in, c_out, k, k]
    if (xd[1] != wd[0])
        throw DimensionError("tconv2d channel axis: input has " + std::to_string(xd[1]) +
                             " channels, weight expects " + std::to_string(wd[0]));
    if (stride < 1) throw DimensionError("tconv2d stride must be >= 1");
    const int k = wd[2];
    const int h_out = (xd[2] - 1) * stride - 2 * pad + k;
    const int w_out = (xd[3] - 1) * stride - 2 * pad + k;
    if (h_out < 1 || w_out < 1) throw DimensionError("tconv2d produces empty output");
    if (b && (b->value.ndim() != 1 || b->value.dims[0] != wd[1]))
        throw DimensionError("tconv2d bias axis: expected length " + std::to_string(wd[1]));
    // The underlying conv maps the tconv output back to its input.
    const auto s = kernels::make_conv_shape(xd[0], wd[1], h_out, w_out, wd[0], k, stride, pad);
    if (s.h_out != xd[2] || s.w_out != xd[3]) throw DimensionError("tconv2d geometry mismatch");

    Tensor out({xd[0], wd[1], h_out, w_out});
    kernels::conv2d_backward_input(x->value.data.data(), w->value.data.data(), out.data.data(), s);
    if (b) kernels::bias_add(out.data.data(), b->value.data.data(), xd[0], wd[1], h_out * w_out);

    std::vector<NodePtr> inputs = b ? std::vector<NodePtr>{x, w, b} : std::vector<NodePtr>{x, w};
    return make_node(std::move(out), std::move(inputs), [s](Node& n) {
        Node& xi = *n.inputs[0];
        Node& wi = *n.inputs[1];
        if (xi.requires_grad) {
            Tensor gx(xi.value.dims);
            kernels::conv2d_forward(n.grad.data.data(), wi.value.data.data(), nullptr, gx.data.data(), s);
            xi.accumulate_grad(gx);
        }
        if (wi.requires_grad) {
            Tensor gw(wi.value.dims);
            kernels::conv2d_backward_weight(xi.value.data.data(), n.grad.data.data(), gw.data.data(), s);
            wi.accumulate_grad(gw);
        }
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Node& bi = *n.inputs[2];
            Tensor gb(bi.value.dims);
            channel_sum(n.grad.data.data(), gb.data.data(), s.batch, s.c_in, s.h_in * s.w_in);
            bi.accumulate_grad(gb);
        }
    });
}

NodePtr depthwise_conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b, int pad) {
    check_4d(x->value, "depthwise_conv2d input");
    check_4d(w->value, "depthwise_conv2d weight");
    const auto& xd = x->value.dims;
    const auto& wd = w->value.dims;  // [c, 1, k, k]
    if (wd[0] != xd[1] || wd[1] != 1)
        throw DimensionError("depthwise_conv2d channel axis: weight " + w->value.shape_str() +
                             " vs input " + x->value.shape_str());
    const int k = wd[2];
    const int batch = xd[0], ch = xd[1], h = xd[2], wdt = xd[3];
    const int h_out = h + 2 * pad - k + 1;
    const int w_out = wdt + 2 * pad - k + 1;
    if (h_out < 1 || w_out < 1) throw DimensionError("depthwise_conv2d kernel larger than padded input");
    if (b && (b->value.ndim() != 1 || b->value.dims[0] != ch))
        throw DimensionError("depthwise_conv2d bias axis: expected length " + std::to_string(ch));

    Tensor out({batch, ch, h_out, w_out});
#pragma omp parallel for collapse(2) schedule(static)
    for (int bi = 0; bi < batch; ++bi)
        for (int c = 0; c < ch; ++c) {
            const float* xc = &x->value.data[(static_cast<std::size_t>(bi) * ch + c) * h * wdt];
            const float* wk = &w->value.data[static_cast<std::size_t>(c) * k * k];
            float* yc = &out.data[(static_cast<std::size_t>(bi) * ch + c) * h_out * w_out];
            for (int oh = 0; oh < h_out; ++oh)
                for (int ow = 0; ow < w_out; ++ow) {
                    double acc = b ? static_cast<double>(b->value.data[static_cast<std::size_t>(c)]) : 0.0;
                    for (int kh = 0; kh < k; ++kh) {
                        const int ih = oh - pad + kh;
                        if (ih < 0 || ih >= h) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int iw = ow - pad + kw;
                            if (iw < 0 || iw >= wdt) continue;
                            acc += static_cast<double>(xc[ih * wdt + iw]) *
                                   static_cast<double>(wk[kh * k + kw]);
                        }
                    }
                    yc[oh * w_out + ow] = static_cast<float>(acc);
                }
        }

    std::vector<NodePtr> inputs = b ? std::vector<NodePtr>{x, w, b} : std::vector<NodePtr>{x, w};
    return make_node(std::move(out), std::move(inputs), [pad, k, h_out, w_out](Node& n2) {
        Node& xi = *n2.inputs[0];
        Node& wi = *n2.inputs[1];
        const auto& xd = xi.value.dims;
        const int batch = xd[0], ch = xd[1], h = xd[2], wdt = xd[3];
        if (xi.requires_grad) {
            Tensor gx(xi.value.dims);
#pragma omp parallel for collapse(2) schedule(static)
            for (int bi = 0; bi < batch; ++bi)
                for (int c = 0; c < ch; ++c) {
                    const float* gyc = &n2.grad.data[(static_cast<std::size_t>(bi) * ch + c) * h_out * w_out];
                    const float* wk = &wi.value.data[static_cast<std::size_t>(c) * k * k];
                    float* gxc = &gx.data[(static_cast<std::size_t>(bi) * ch + c) * h * wdt];
                    for (int ih = 0; ih < h; ++ih)
                        for (int iw = 0; iw < wdt; ++iw) {
                            double acc = 0.0;
                            for (int kh = 0; kh < k; ++kh) {
                                const int oh = ih + pad - kh;
                                if (oh < 0 || oh >= h_out) continue;
                                for (int kw = 0; kw < k; ++kw) {
                                    const int ow = iw + pad - kw;
                                    if (ow < 0 || ow >= w_out) continue;
                                    acc += static_cast<double>(gyc[oh * w_out + ow]) *
                                           static_cast<double>(wk[kh * k + kw]);
                                }
                            }
                            gxc[ih * wdt + iw] = static_cast<float>(acc);
                        }
                }
            xi.accumulate_grad(gx);
        }
        if (wi.requires_grad) {
            Tensor gw(wi.value.dims);
#pragma omp parallel for schedule(static)
            for (int c = 0; c < ch; ++c) {
                float* gwk = &gw.data[static_cast<std::size_t>(c) * k * k];
                for (int kh = 0; kh < k; ++kh)
                    for (int kw = 0; kw < k; ++kw) {
                        double acc = 0.0;
                        for (int bi = 0; bi < batch; ++bi) {
                            const float* gyc =
                                &n2.grad.data[(static_cast<std::size_t>(bi) * ch + c) * h_out * w_out];
                            const float* xc =
                                &xi.value.data[(static_cast<std::size_t>(bi) * ch + c) * h * wdt];
                            for (int oh = 0; oh < h_out; ++oh) {
                                const int ih = oh - pad + kh;
                                if (ih < 0 || ih >= h) continue;
                                for (int ow = 0; ow < w_out; ++ow) {
                                    const int iw = ow - pad + kw;
                                    if (iw < 0 || iw >= wdt) continue;
                                    acc += static_cast<double>(gyc[oh * w_out + ow]) *
                                           static_cast<double>(xc[ih * wdt + iw]);
                                }
                            }
                        }
                        gwk[kh * k + kw] = static_cast<float>(acc);
                    }
            }
            wi.accumulate_grad(gw);
        }
        if (n2.inputs.size() > 2 && n2.inputs[2]->requires_grad) {
            Node& bi2 = *n2.inputs[2];
            Tensor gb(bi2.value.dims);
            channel_sum(n2.grad.data.data(), gb.data.data(), batch, ch, h_out * w_out);
            bi2.accumulate_grad(gb);
        }
    });
}

NodePtr gdn(const NodePtr& x, const NodePtr& beta, const NodePtr& gamma, bool inverse) {
    check_4d(x->value, "gdn input");
    const int ch = x->value.dims[1];
    if (beta->value.ndim() != 1 || beta->value.dims[0] != ch)
        throw DimensionError("gdn beta axis: expected length " + std::to_string(ch));
    if (gamma->value.ndim() != 2 || gamma->value.dims[0] != ch || gamma->value.dims[1] != ch)
        throw DimensionError("gdn gamma axes: expected " + std::to_string(ch) + "x" + std::to_string(ch));
    for (float bv : beta->value.data)
        if (!(bv > 0.0f)) throw ParameterDomainError("gdn beta must be positive, got " + std::to_string(bv));
    for (float gv : gamma->value.data)
        if (gv < 0.0f) throw ParameterDomainError("gdn gamma must be nonnegative, got " + std::to_string(gv));

    const int batch = x->value.dims[0];
    const int spatial = x->value.dims[2] * x->value.dims[3];
    Tensor out(x->value.dims);
    kernels::gdn_forward(x->value.data.data(), beta->value.data.data(), gamma->value.data.data(),
                         out.data.data(), inverse, batch, ch, spatial);

    return make_node(std::move(out), {x, beta, gamma}, [inverse, batch, ch, spatial](Node& n) {
        Node& xi = *n.inputs[0];
        Node& bi = *n.inputs[1];
        Node& gi = *n.inputs[2];
        Tensor gx(xi.value.dims);
        Tensor gb(bi.value.dims);
        Tensor gg(gi.value.dims);
        kernels::gdn_backward(xi.value.data.data(), bi.value.data.data(), gi.value.data.data(),
                              n.grad.data.data(), gx.data.data(), gb.data.data(), gg.data.data(),
                              inverse, batch, ch, spatial);
        if (xi.requires_grad) xi.accumulate_grad(gx);
        if (bi.requires_grad) bi.accumulate_grad(gb);
        if (gi.requires_grad) gi.accumulate_grad(gg);
    });
}

NodePtr nonneg(const NodePtr& v, float minimum) {
    constexpr float kPedestal = 0x1p-36f;
    const float bound = std::sqrt(minimum + kPedestal);
    Tensor out(v->value.dims);
    const long n = static_cast<long>(out.data.size());
    for (long i = 0; i < n; ++i) {
        const float vc = std::max(v->value.data[static_cast<std::size_t>(i)], bound);
        out.data[static_cast<std::size_t>(i)] = vc * vc - kPedestal;
    }
    return make_node(std::move(out), {v}, [bound](Node& n2) {
        Node& vi = *n2.inputs[0];
        if (!vi.requires_grad) return;
        Tensor gv(vi.value.dims);
        const long m = static_cast<long>(gv.data.size());
        for (long i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const float val = vi.value.data[k];
            const float g = n2.grad.data[k];
            const float vc = std::max(val, bound);
            // Clamped cells still accept gradients that push v back upward.
            gv.data[k] = (val >= bound || g < 0.0f) ? static_cast<float>(2.0 * static_cast<double>(vc) * g) : 0.0f;
        }
        vi.accumulate_grad(gv);
    });
}

NodePtr relu(const NodePtr& x) {
    Tensor out(x->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const float v = x->value.data[static_cast<std::size_t>(i)];
        out.data[static_cast<std::size_t>(i)] = v > 0.0f ? v : 0.0f;
    }
    return make_node(std::move(out), {x}, [](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        Tensor gx(xi.value.dims);
        const long m = static_cast<long>(gx.data.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            gx.data[k] = xi.value.data[k] > 0.0f ? n2.grad.data[k] : 0.0f;
        }
        xi.accumulate_grad(gx);
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "add operands");
    Tensor out(a->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        out.data[static_cast<std::size_t>(i)] =
            a->value.data[static_cast<std::size_t>(i)] + b->value.data[static_cast<std::size_t>(i)];
    auto node = make_node(std::move(out), {a, b}, [](Node& n2) {
        for (int k = 0; k < 2; ++k) {
            Node& in = *n2.inputs[static_cast<std::size_t>(k)];
            if (in.requires_grad) in.accumulate_grad(n2.grad);
        }
    });
    if (a->has_scalar64 && b->has_scalar64) {
        node->has_scalar64 = true;
        node->scalar64 = a->scalar64 + b->scalar64;
        node->value.data[0] = static_cast<float>(node->scalar64);
    }
    return node;
}

NodePtr scale(const NodePtr& x, double s) {
    Tensor out(x->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        out.data[static_cast<std::size_t>(i)] =
            static_cast<float>(s * static_cast<double>(x->value.data[static_cast<std::size_t>(i)]));
    auto node = make_node(std::move(out), {x}, [s](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        Tensor gx(xi.value.dims);
        const long m = static_cast<long>(gx.data.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < m; ++i)
            gx.data[static_cast<std::size_t>(i)] =
                static_cast<float>(s * static_cast<double>(n2.grad.data[static_cast<std::size_t>(i)]));
        xi.accumulate_grad(gx);
    });
    if (x->has_scalar64) {
        node->has_scalar64 = true;
        node->scalar64 = s * x->scalar64;
        node->value.data[0] = static_cast<float>(node->scalar64);
    }
    return node;
}

NodePtr add_const(const NodePtr& x, const Tensor& c) {
    check_same_shape(x->value, c, "add_const operands");
    Tensor out(x->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        out.data[static_cast<std::size_t>(i)] =
            x->value.data[static_cast<std::size_t>(i)] + c.data[static_cast<std::size_t>(i)];
    return make_node(std::move(out), {x}, [](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (xi.requires_grad) xi.accumulate_grad(n2.grad);
    });
}

NodePtr round_quantize(const NodePtr& x) {
    Tensor out(x->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        out.data[static_cast<std::size_t>(i)] = std::round(x->value.data[static_cast<std::size_t>(i)]);
    // Hard quantization: constant w.r.t. upstream values, no gradient path.
    return make_const(std::move(out));
}

NodePtr slice_channels(const NodePtr& x, int c0, int c1) {
    check_4d(x->value, "slice_channels input");
    const auto& d = x->value.dims;
    if (c0 < 0 || c1 > d[1] || c0 >= c1)
        throw DimensionError("slice_channels range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") out of " + std::to_string(d[1]));
    const int spatial = d[2] * d[3];
    Tensor out({d[0], c1 - c0, d[2], d[3]});
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < d[0]; ++b)
        for (int c = c0; c < c1; ++c)
            std::copy_n(&x->value.data[(static_cast<std::size_t>(b) * d[1] + c) * spatial], spatial,
                        &out.data[(static_cast<std::size_t>(b) * (c1 - c0) + (c - c0)) * spatial]);
    return make_node(std::move(out), {x}, [c0, c1, spatial](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        xi.ensure_grad();
        const auto& d = xi.value.dims;
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < d[0]; ++b)
            for (int c = c0; c < c1; ++c) {
                const float* src = &n2.grad.data[(static_cast<std::size_t>(b) * (c1 - c0) + (c - c0)) * spatial];
                float* dst = &xi.grad.data[(static_cast<std::size_t>(b) * d[1] + c) * spatial];
                for (int i = 0; i < spatial; ++i) dst[i] += src[i];
            }
    });
}

NodePtr crop2d(const NodePtr& x, int h, int w) {
    check_4d(x->value, "crop2d input");
    const auto& d = x->value.dims;
    if (h > d[2] || w > d[3] || h < 1 || w < 1)
        throw DimensionError("crop2d target " + std::to_string(h) + "x" + std::to_string(w) +
                             " outside input " + x->value.shape_str());
    if (h == d[2] && w == d[3]) return x;  // no-op
    Tensor out({d[0], d[1], h, w});
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < d[0]; ++b)
        for (int c = 0; c < d[1]; ++c)
            for (int i = 0; i < h; ++i)
                std::copy_n(&x->value.data[((static_cast<std::size_t>(b) * d[1] + c) * d[2] + i) * d[3]], w,
                            &out.data[((static_cast<std::size_t>(b) * d[1] + c) * h + i) * w]);
    return make_node(std::move(out), {x}, [h, w](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        xi.ensure_grad();
        const auto& d = xi.value.dims;
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < d[0]; ++b)
            for (int c = 0; c < d[1]; ++c)
                for (int i = 0; i < h; ++i) {
                    const float* src = &n2.grad.data[((static_cast<std::size_t>(b) * d[1] + c) * h + i) * w];
                    float* dst = &xi.grad.data[((static_cast<std::size_t>(b) * d[1] + c) * d[2] + i) * d[3]];
                    for (int j = 0; j < w; ++j) dst[j] += src[j];
                }
    });
}

NodePtr exp_clamp(const NodePtr& x, float lo, float hi) {
    Tensor out(x->value.dims);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const double e = std::exp(static_cast<double>(x->value.data[static_cast<std::size_t>(i)]));
        out.data[static_cast<std::size_t>(i)] = static_cast<float>(std::clamp(e, static_cast<double>(lo), static_cast<double>(hi)));
    }
    return make_node(std::move(out), {x}, [lo, hi](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        Tensor gx(xi.value.dims);
        const long m = static_cast<long>(gx.data.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const float ec = n2.value.data[k];
            const float g = n2.grad.data[k];
            const bool inside = ec > lo && ec < hi;
            const bool escape = (ec <= lo && g < 0.0f) || (ec >= hi && g > 0.0f);
            // Slope taken at the clamped value so saturated cells can recover.
            gx.data[k] = (inside || escape) ? g * ec : 0.0f;
        }
        xi.accumulate_grad(gx);
    });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2)
        throw DimensionError("matmul operands must be 2-d");
    const int m = a->value.dims[0], k = a->value.dims[1];
    const int k2 = b->value.dims[0], n = b->value.dims[1];
    if (k != k2)
        throw DimensionError("matmul inner axis: " + std::to_string(k) + " vs " + std::to_string(k2));
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < k; ++l)
                acc += static_cast<double>(a->value.data[static_cast<std::size_t>(i) * k + l]) *
                       static_cast<double>(b->value.data[static_cast<std::size_t>(l) * n + j]);
            out.data[static_cast<std::size_t>(i) * n + j] = static_cast<float>(acc);
        }
    return make_node(std::move(out), {a, b}, [m, k, n](Node& n2) {
        Node& ai = *n2.inputs[0];
        Node& bi = *n2.inputs[1];
        if (ai.requires_grad) {
            Tensor ga({m, k});
            for (int i = 0; i < m; ++i)
                for (int l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += static_cast<double>(n2.grad.data[static_cast<std::size_t>(i) * n + j]) *
                               static_cast<double>(bi.value.data[static_cast<std::size_t>(l) * n + j]);
                    ga.data[static_cast<std::size_t>(i) * k + l] = static_cast<float>(acc);
                }
            ai.accumulate_grad(ga);
        }
        if (bi.requires_grad) {
            Tensor gb({k, n});
            for (int l = 0; l < k; ++l)
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i)
                        acc += static_cast<double>(ai.value.data[static_cast<std::size_t>(i) * k + l]) *
                               static_cast<double>(n2.grad.data[static_cast<std::size_t>(i) * n + j]);
                    gb.data[static_cast<std::size_t>(l) * n + j] = static_cast<float>(acc);
                }
            bi.accumulate_grad(gb);
        }
    });
}

NodePtr reshape(const NodePtr& x, std::vector<int> dims) {
    if (shape_numel(dims) != x->value.numel())
        throw DimensionError("reshape element count mismatch for " + x->value.shape_str());
    Tensor out(dims);
    out.data = x->value.data;
    return make_node(std::move(out), {x}, [](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        Tensor g(xi.value.dims);
        g.data = n2.grad.data;
        xi.accumulate_grad(g);
    });
}

NodePtr sum(const NodePtr& x) {
    const long n = static_cast<long>(x->value.numel());
    const float* p = x->value.data.data();
    const double total = chunked_sum(n, [p](long i) { return static_cast<double>(p[i]); });
    Tensor out({1});
    out.data[0] = static_cast<float>(total);
    auto node = make_node(std::move(out), {x}, [](Node& n2) {
        Node& xi = *n2.inputs[0];
        if (!xi.requires_grad) return;
        const float g = n2.grad.data[0];
        xi.ensure_grad();
        const long m = static_cast<long>(xi.grad.data.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < m; ++i) xi.grad.data[static_cast<std::size_t>(i)] += g;
    });
    node->has_scalar64 = true;
    node->scalar64 = total;
    return node;
}

NodePtr mse(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "mse operands");
    const long n = static_cast<long>(a->value.numel());
    const float* pa = a->value.data.data();
    const float* pb = b->value.data.data();
    const double total = chunked_sum(n, [pa, pb](long i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        return d * d;
    });
    Tensor out({1});
    const double mean = total / static_cast<double>(n);
    out.data[0] = static_cast<float>(mean);
    auto node = make_node(std::move(out), {a, b}, [n](Node& n2) {
        Node& ai = *n2.inputs[0];
        Node& bi = *n2.inputs[1];
        const double g = static_cast<double>(n2.grad.data[0]) * 2.0 / static_cast<double>(n);
        if (ai.requires_grad) {
            Tensor ga(ai.value.dims);
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i) {
                const std::size_t k = static_cast<std::size_t>(i);
                ga.data[k] = static_cast<float>(g * (static_cast<double>(ai.value.data[k]) -
                                                     static_cast<double>(bi.value.data[k])));
            }
            ai.accumulate_grad(ga);
        }
        if (bi.requires_grad) {
            Tensor gb(bi.value.dims);
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i) {
                const std::size_t k = static_cast<std::size_t>(i);
                gb.data[k] = static_cast<float>(-g * (static_cast<double>(ai.value.data[k]) -
                                                      static_cast<double>(bi.value.data[k])));
            }
            bi.accumulate_grad(gb);
        }
    });
    node->has_scalar64 = true;
    node->scalar64 = mean;
    return node;
}

NodePtr gaussian_bits_total(const NodePtr& y_hat, const NodePtr& mu, const NodePtr& sigma) {
    check_same_shape(y_hat->value, mu->value, "gaussian_bits y_hat/mu");
    check_same_shape(y_hat->value, sigma->value, "gaussian_bits y_hat/sigma");
    const long n = static_cast<long>(y_hat->value.numel());
    const float* pv = y_hat->value.data.data();
    const float* pm = mu->value.data.data();
    const float* ps = sigma->value.data.data();
    const double total = chunked_sum(n, [pv, pm, ps](long i) {
        return gaussian_bin_bits(static_cast<double>(pv[i]), static_cast<double>(pm[i]),
                                 static_cast<double>(ps[i]));
    });
    Tensor out({1});
    out.data[0] = static_cast<float>(total);
    auto node = make_node(std::move(out), {y_hat, mu, sigma}, [n](Node& n2) {
        Node& vi = *n2.inputs[0];
        Node& mi = *n2.inputs[1];
        Node& si = *n2.inputs[2];
        const double g0 = static_cast<double>(n2.grad.data[0]);
        const bool need_v = vi.requires_grad, need_m = mi.requires_grad, need_s = si.requires_grad;
        Tensor gv = need_v ? Tensor(vi.value.dims) : Tensor();
        Tensor gm = need_m ? Tensor(mi.value.dims) : Tensor();
        Tensor gs = need_s ? Tensor(si.value.dims) : Tensor();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const auto g = gaussian_bits_grad(static_cast<double>(vi.value.data[k]),
                                              static_cast<double>(mi.value.data[k]),
                                              static_cast<double>(si.value.data[k]));
            if (need_v) gv.data[k] = static_cast<float>(g0 * g.d_v);
            if (need_m) gm.data[k] = static_cast<float>(g0 * g.d_mu);
            if (need_s) gs.data[k] = static_cast<float>(g0 * g.d_sigma);
        }
        if (need_v) vi.accumulate_grad(gv);
        if (need_m) mi.accumulate_grad(gm);
        if (need_s) si.accumulate_grad(gs);
    });
    node->has_scalar64 = true;
    node->scalar64 = total;
    return node;
}

NodePtr logistic_bits_total(const NodePtr& z_hat, const NodePtr& loc, const NodePtr& scale) {
    check_4d(z_hat->value, "logistic_bits input");
    const auto& d = z_hat->value.dims;
    const int ch = d[1];
    if (loc->value.ndim() != 1 || loc->value.dims[0] != ch || scale->value.ndim() != 1 ||
        scale->value.dims[0] != ch)
        throw DimensionError("logistic_bits prior axes: expected [" + std::to_string(ch) + "]");
    const int spatial = d[2] * d[3];
    const long n = static_cast<long>(z_hat->value.numel());
    const float* pz = z_hat->value.data.data();
    const float* pl = loc->value.data.data();
    const float* psc = scale->value.data.data();
    const double total = chunked_sum(n, [pz, pl, psc, ch, spatial](long i) {
        const int c = static_cast<int>((i / spatial) % ch);
        return logistic_bin_bits(static_cast<double>(pz[i]), static_cast<double>(pl[c]),
                                 static_cast<double>(psc[c]));
    });
    Tensor out({1});
    out.data[0] = static_cast<float>(total);
    auto node = make_node(std::move(out), {z_hat, loc, scale}, [ch, spatial](Node& n2) {
        Node& zi = *n2.inputs[0];
        Node& li = *n2.inputs[1];
        Node& si = *n2.inputs[2];
        const auto& d = zi.value.dims;
        const int batch = d[0];
        const double g0 = static_cast<double>(n2.grad.data[0]);
        if (zi.requires_grad) {
            Tensor gz(zi.value.dims);
            const long n = static_cast<long>(gz.data.size());
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i) {
                const int c = static_cast<int>((i / spatial) % ch);
                const auto g = logistic_bits_grad(static_cast<double>(zi.value.data[static_cast<std::size_t>(i)]),
                                                  static_cast<double>(li.value.data[static_cast<std::size_t>(c)]),
                                                  static_cast<double>(si.value.data[static_cast<std::size_t>(c)]));
                gz.data[static_cast<std::size_t>(i)] = static_cast<float>(g0 * g.d_v);
            }
            zi.accumulate_grad(gz);
        }
        if (li.requires_grad || si.requires_grad) {
            Tensor gl(li.value.dims);
            Tensor gsc(si.value.dims);
#pragma omp parallel for schedule(static)
            for (int c = 0; c < ch; ++c) {
                double accl = 0.0, accs = 0.0;
                for (int b = 0; b < batch; ++b) {
                    const float* zp = zi.value.data.data() + (static_cast<std::size_t>(b) * ch + c) * spatial;
                    for (int i = 0; i < spatial; ++i) {
                        const auto g = logistic_bits_grad(static_cast<double>(zp[i]),
                                                          static_cast<double>(li.value.data[static_cast<std::size_t>(c)]),
                                                          static_cast<double>(si.value.data[static_cast<std::size_t>(c)]));
                        accl += g.d_mu;
                        accs += g.d_sigma;
                    }
                }
                gl.data[static_cast<std::size_t>(c)] = static_cast<float>(g0 * accl);
                gsc.data[static_cast<std::size_t>(c)] = static_cast<float>(g0 * accs);
            }
            if (li.requires_grad) li.accumulate_grad(gl);
            if (si.requires_grad) si.accumulate_grad(gsc);
        }
    });
    node->has_scalar64 = true;
    node->scalar64 = total;
    return node;
}

}  // namespace ops

}  // namespace liclab
