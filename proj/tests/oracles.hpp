#pragma once

// Test-only oracles, written independently of the library kernels: direct
// nested-loop convolutions in double precision, scalar GDN, CDF references.

#include <cmath>
#include <vector>

#include "liclab/tensor.hpp"

namespace oracles {

using liclab::Tensor;

// Direct cross-correlation, zero padding, double accumulation.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int B = x.dims[0], CI = x.dims[1], H = x.dims[2], W = x.dims[3];
    const int CO = w.dims[0], K = w.dims[2];
    const int HO = (H + 2 * pad - K) / stride + 1;
    const int WO = (W + 2 * pad - K) / stride + 1;
    Tensor y({B, CO, HO, WO});
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < CO; ++co)
            for (int oh = 0; oh < HO; ++oh)
                for (int ow = 0; ow < WO; ++ow) {
                    double acc = bias.numel() ? bias.data[(std::size_t)co] : 0.0;
                    for (int ci = 0; ci < CI; ++ci)
                        for (int kh = 0; kh < K; ++kh)
                            for (int kw = 0; kw < K; ++kw) {
                                const int ih = oh * stride - pad + kh;
                                const int iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += (double)x.at(b, ci, ih, iw) * (double)w.at(co, ci, kh, kw);
                            }
                    y.at(b, co, oh, ow) = (float)acc;
                }
    return y;
}

// Transposed conv by its textbook definition: insert (stride-1) zeros between
// input samples, pad by (k-1-pad), then convolve with the spatially flipped
// kernel. Weight layout [c_in, c_out, k, k].
inline Tensor tconv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int B = x.dims[0], CI = x.dims[1], H = x.dims[2], W = x.dims[3];
    const int CO = w.dims[1], K = w.dims[2];
    const int HU = (H - 1) * stride + 1, WU = (W - 1) * stride + 1;
    Tensor up({B, CI, HU, WU});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < CI; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) up.at(b, c, i * stride, j * stride) = x.at(b, c, i, j);
    // flipped kernel, swapped in/out channel axes -> plain conv weight
    Tensor wf({CO, CI, K, K});
    for (int ci = 0; ci < CI; ++ci)
        for (int co = 0; co < CO; ++co)
            for (int kh = 0; kh < K; ++kh)
                for (int kw = 0; kw < K; ++kw)
                    wf.at(co, ci, kh, kw) = w.at(ci, co, K - 1 - kh, K - 1 - kw);
    return conv2d(up, wf, bias, 1, K - 1 - pad);
}

// Scalar per-position GDN.
inline Tensor gdn(const Tensor& x, const std::vector<double>& beta, const std::vector<double>& gamma,
                  bool inverse) {
    const int B = x.dims[0], C = x.dims[1], H = x.dims[2], W = x.dims[3];
    Tensor y(x.dims);
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                for (int c = 0; c < C; ++c) {
                    double d = beta[(std::size_t)c];
                    for (int k = 0; k < C; ++k) {
                        const double xv = x.at(b, k, i, j);
                        d += gamma[(std::size_t)c * C + k] * xv * xv;
                    }
                    y.at(b, c, i, j) = (float)(inverse ? x.at(b, c, i, j) * std::sqrt(d)
                                                       : x.at(b, c, i, j) / std::sqrt(d));
                }
    return y;
}

// Max elementwise error relative to local magnitude with an infinity-norm
// floor, so float-precision agreement near cancellations still reads as
// "1e-5 relative".
inline double max_rel_err(const Tensor& a, const Tensor& b) {
    double scale = 1e-6;
    for (float v : b.data) scale = std::max(scale, (double)std::abs(v) * 1e-2);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double da = a.data[i], db = b.data[i];
        m = std::max(m, std::abs(da - db) / std::max({std::abs(da), std::abs(db), scale}));
    }
    return m;
}

// Pure-double loss oracles (no float casts anywhere): suitable for central
// differences.
inline double conv2d_sum64(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int B = x.dims[0], CI = x.dims[1], H = x.dims[2], W = x.dims[3];
    const int CO = w.dims[0], K = w.dims[2];
    const int HO = (H + 2 * pad - K) / stride + 1;
    const int WO = (W + 2 * pad - K) / stride + 1;
    double total = 0.0;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < CO; ++co)
            for (int oh = 0; oh < HO; ++oh)
                for (int ow = 0; ow < WO; ++ow) {
                    double acc = bias.numel() ? bias.data[(std::size_t)co] : 0.0;
                    for (int ci = 0; ci < CI; ++ci)
                        for (int kh = 0; kh < K; ++kh)
                            for (int kw = 0; kw < K; ++kw) {
                                const int ih = oh * stride - pad + kh;
                                const int iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += (double)x.at(b, ci, ih, iw) * (double)w.at(co, ci, kh, kw);
                            }
                    total += acc;
                }
    return total;
}

inline double tconv2d_sum64(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int B = x.dims[0], CI = x.dims[1], H = x.dims[2], W = x.dims[3];
    const int CO = w.dims[1], K = w.dims[2];
    const int HO = (H - 1) * stride - 2 * pad + K;
    const int WO = (W - 1) * stride - 2 * pad + K;
    double total = 0.0;
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < CO; ++co)
            for (int oh = 0; oh < HO; ++oh)
                for (int ow = 0; ow < WO; ++ow) {
                    double acc = bias.numel() ? bias.data[(std::size_t)co] : 0.0;
                    for (int ci = 0; ci < CI; ++ci)
                        for (int kh = 0; kh < K; ++kh) {
                            const int th = oh + pad - kh;
                            if (th < 0 || th % stride != 0 || th / stride >= H) continue;
                            for (int kw = 0; kw < K; ++kw) {
                                const int tw = ow + pad - kw;
                                if (tw < 0 || tw % stride != 0 || tw / stride >= W) continue;
                                acc += (double)x.at(b, ci, th / stride, tw / stride) *
                                       (double)w.at(ci, co, kh, kw);
                            }
                        }
                    total += acc;
                }
    return total;
}

inline double gdn_sum64(const Tensor& x, const std::vector<double>& beta, const std::vector<double>& gamma,
                        bool inverse) {
    const int B = x.dims[0], C = x.dims[1], H = x.dims[2], W = x.dims[3];
    double total = 0.0;
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                for (int c = 0; c < C; ++c) {
                    double d = beta[(std::size_t)c];
                    for (int k = 0; k < C; ++k) {
                        const double xv = x.at(b, k, i, j);
                        d += gamma[(std::size_t)c * C + k] * xv * xv;
                    }
                    total += inverse ? (double)x.at(b, c, i, j) * std::sqrt(d)
                                     : (double)x.at(b, c, i, j) / std::sqrt(d);
                }
    return total;
}

// Standard normal CDF through erf, used as the independent probability oracle.
inline double normal_cdf(double t) { return 0.5 * (1.0 + std::erf(t / std::sqrt(2.0))); }

inline double gaussian_bin_bits(double v, double mu, double sigma) {
    const double p = normal_cdf((v - mu + 0.5) / sigma) - normal_cdf((v - mu - 0.5) / sigma);
    return -std::log2(std::max(p, 1e-9));
}

inline double logistic_cdf(double t, double loc, double s) { return 1.0 / (1.0 + std::exp(-(t - loc) / s)); }

}  // namespace oracles
