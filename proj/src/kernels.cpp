#include "liclab/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace liclab::kernels {

ConvShape make_conv_shape(int batch, int c_in, int h_in, int w_in, int c_out, int k, int stride,
                          int pad) {
    if (stride < 1) throw DimensionError("conv stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw DimensionError("conv pad must be >= 0, got " + std::to_string(pad));
    if (k < 1) throw DimensionError("conv kernel must be >= 1, got " + std::to_string(k));
    ConvShape s;
    s.batch = batch;
    s.c_in = c_in;
    s.h_in = h_in;
    s.w_in = w_in;
    s.c_out = c_out;
    s.k = k;
    s.stride = stride;
    s.pad = pad;
    s.h_out = (h_in + 2 * pad - k) / stride + 1;
    s.w_out = (w_in + 2 * pad - k) / stride + 1;
    if (h_in + 2 * pad < k || w_in + 2 * pad < k) {
        throw DimensionError("conv kernel " + std::to_string(k) + " larger than padded input " +
                             std::to_string(h_in) + "x" + std::to_string(w_in));
    }
    return s;
}

namespace {

inline void conv_fwd_cell(const float* x, const float* w, const float* bias, float* y,
                          const ConvShape& s, int b, int co) {
    const int hw_in = s.h_in * s.w_in;
    const float* xb = x + static_cast<std::size_t>(b) * s.c_in * hw_in;
    const float* wc = w + static_cast<std::size_t>(co) * s.c_in * s.k * s.k;
    float* yc = y + (static_cast<std::size_t>(b) * s.c_out + co) * s.h_out * s.w_out;
    for (int oh = 0; oh < s.h_out; ++oh) {
        for (int ow = 0; ow < s.w_out; ++ow) {
            double acc = bias ? static_cast<double>(bias[co]) : 0.0;
            const int ih0 = oh * s.stride - s.pad;
            const int iw0 = ow * s.stride - s.pad;
            for (int ci = 0; ci < s.c_in; ++ci) {
                const float* xc = xb + static_cast<std::size_t>(ci) * hw_in;
                const float* wk = wc + static_cast<std::size_t>(ci) * s.k * s.k;
                for (int kh = 0; kh < s.k; ++kh) {
                    const int ih = ih0 + kh;
                    if (ih < 0 || ih >= s.h_in) continue;
                    for (int kw = 0; kw < s.k; ++kw) {
                        const int iw = iw0 + kw;
                        if (iw < 0 || iw >= s.w_in) continue;
                        acc += static_cast<double>(xc[ih * s.w_in + iw]) *
                               static_cast<double>(wk[kh * s.k + kw]);
                    }
                }
            }
            yc[oh * s.w_out + ow] = static_cast<float>(acc);
        }
    }
}

inline void conv_bwd_input_cell(const float* gy, const float* w, float* gx, const ConvShape& s,
                                int b, int ci) {
    const int hw_out = s.h_out * s.w_out;
    const float* gyb = gy + static_cast<std::size_t>(b) * s.c_out * hw_out;
    float* gxc = gx + (static_cast<std::size_t>(b) * s.c_in + ci) * s.h_in * s.w_in;
    for (int ih = 0; ih < s.h_in; ++ih) {
        for (int iw = 0; iw < s.w_in; ++iw) {
            double acc = 0.0;
            for (int co = 0; co < s.c_out; ++co) {
                const float* gyc = gyb + static_cast<std::size_t>(co) * hw_out;
                const float* wk =
                    w + (static_cast<std::size_t>(co) * s.c_in + ci) * s.k * s.k;
                for (int kh = 0; kh < s.k; ++kh) {
                    const int th = ih + s.pad - kh;
                    if (th < 0 || th % s.stride != 0) continue;
                    const int oh = th / s.stride;
                    if (oh >= s.h_out) continue;
                    for (int kw = 0; kw < s.k; ++kw) {
                        const int tw = iw + s.pad - kw;
                        if (tw < 0 || tw % s.stride != 0) continue;
                        const int ow = tw / s.stride;
                        if (ow >= s.w_out) continue;
                        acc += static_cast<double>(gyc[oh * s.w_out + ow]) *
                               static_cast<double>(wk[kh * s.k + kw]);
                    }
                }
            }
            gxc[ih * s.w_in + iw] = static_cast<float>(acc);
        }
    }
}

inline void conv_bwd_weight_cell(const float* gy, const float* x, float* gw, const ConvShape& s,
                                 int co, int ci) {
    const int hw_in = s.h_in * s.w_in;
    const int hw_out = s.h_out * s.w_out;
    float* gwk = gw + (static_cast<std::size_t>(co) * s.c_in + ci) * s.k * s.k;
    for (int kh = 0; kh < s.k; ++kh) {
        for (int kw = 0; kw < s.k; ++kw) {
            double acc = 0.0;
            for (int b = 0; b < s.batch; ++b) {
                const float* gyc = gy + (static_cast<std::size_t>(b) * s.c_out + co) * hw_out;
                const float* xc = x + (static_cast<std::size_t>(b) * s.c_in + ci) * hw_in;
                for (int oh = 0; oh < s.h_out; ++oh) {
                    const int ih = oh * s.stride - s.pad + kh;
                    if (ih < 0 || ih >= s.h_in) continue;
                    for (int ow = 0; ow < s.w_out; ++ow) {
                        const int iw = ow * s.stride - s.pad + kw;
                        if (iw < 0 || iw >= s.w_in) continue;
                        acc += static_cast<double>(gyc[oh * s.w_out + ow]) *
                               static_cast<double>(xc[ih * s.w_in + iw]);
                    }
                }
            }
            gwk[kh * s.k + kw] = static_cast<float>(acc);
        }
    }
}

inline double conv_bwd_bias_cell(const float* gy, const ConvShape& s, int co) {
    const int hw_out = s.h_out * s.w_out;
    double acc = 0.0;
    for (int b = 0; b < s.batch; ++b) {
        const float* gyc = gy + (static_cast<std::size_t>(b) * s.c_out + co) * hw_out;
        for (int i = 0; i < hw_out; ++i) acc += static_cast<double>(gyc[i]);
    }
    return acc;
}

// One spatial position of GDN. xv/yv are strided channel views.
inline void gdn_fwd_pos(const float* x, const float* beta, const float* gamma, float* y,
                        bool inverse, int ch, int stride_c) {
    for (int i = 0; i < ch; ++i) {
        const float* gi = gamma + static_cast<std::size_t>(i) * ch;
        double d = static_cast<double>(beta[i]);
        for (int j = 0; j < ch; ++j) {
            const double xj = static_cast<double>(x[j * stride_c]);
            d += static_cast<double>(gi[j]) * (xj * xj);
        }
        const double r = std::sqrt(d);
        const double xi = static_cast<double>(x[i * stride_c]);
        y[i * stride_c] = static_cast<float>(inverse ? xi * r : xi / r);
    }
}

}  // namespace

void conv2d_forward(const float* x, const float* w, const float* bias, float* y,
                    const ConvShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < s.batch; ++b)
        for (int co = 0; co < s.c_out; ++co) conv_fwd_cell(x, w, bias, y, s, b, co);
}

void conv2d_backward_input(const float* gy, const float* w, float* gx, const ConvShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < s.batch; ++b)
        for (int ci = 0; ci < s.c_in; ++ci) conv_bwd_input_cell(gy, w, gx, s, b, ci);
}

void conv2d_backward_weight(const float* gy, const float* x, float* gw, const ConvShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < s.c_out; ++co)
        for (int ci = 0; ci < s.c_in; ++ci) conv_bwd_weight_cell(gy, x, gw, s, co, ci);
}

void conv2d_backward_bias(const float* gy, float* gb, const ConvShape& s) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.c_out; ++co) gb[co] = static_cast<float>(conv_bwd_bias_cell(gy, s, co));
}

void gdn_forward(const float* x, const float* beta, const float* gamma, float* y, bool inverse,
                 int batch, int ch, int spatial) {
    const long npos = static_cast<long>(batch) * spatial;
#pragma omp parallel for schedule(static)
    for (long p = 0; p < npos; ++p) {
        const long b = p / spatial, sp = p % spatial;
        const std::size_t base = (static_cast<std::size_t>(b) * ch) * spatial + sp;
        gdn_fwd_pos(x + base, beta, gamma, y + base, inverse, ch, spatial);
    }
}

void gdn_backward(const float* x, const float* beta, const float* gamma, const float* gy,
                  float* gx, float* gbeta, float* ggamma, bool inverse, int batch, int ch,
                  int spatial) {
    const long npos = static_cast<long>(batch) * spatial;
    const double sigma = inverse ? 0.5 : -0.5;
    // t[i][p] = gy_i * x_i * sigma * d_i^(sigma-1); x2[j][p] = x_j^2.
    // Kept in double, position-major per channel, so the gbeta/ggamma
    // reductions below run serially over positions in a fixed order and
    // match the serial reference bit for bit.
    std::vector<double> t(static_cast<std::size_t>(ch) * npos);
    std::vector<double> x2(static_cast<std::size_t>(ch) * npos);

#pragma omp parallel
    {
        std::vector<double> d(static_cast<std::size_t>(ch));
#pragma omp for schedule(static)
        for (long p = 0; p < npos; ++p) {
            const long b = p / spatial, sp = p % spatial;
            const std::size_t base = (static_cast<std::size_t>(b) * ch) * spatial + sp;
            for (int j = 0; j < ch; ++j) {
                const double xj = static_cast<double>(x[base + static_cast<std::size_t>(j) * spatial]);
                x2[static_cast<std::size_t>(j) * npos + p] = xj * xj;
            }
            for (int i = 0; i < ch; ++i) {
                const float* gi = gamma + static_cast<std::size_t>(i) * ch;
                double di = static_cast<double>(beta[i]);
                for (int j = 0; j < ch; ++j)
                    di += static_cast<double>(gi[j]) * x2[static_cast<std::size_t>(j) * npos + p];
                d[static_cast<std::size_t>(i)] = di;
                const double xi = static_cast<double>(x[base + static_cast<std::size_t>(i) * spatial]);
                const double gyi = static_cast<double>(gy[base + static_cast<std::size_t>(i) * spatial]);
                t[static_cast<std::size_t>(i) * npos + p] = gyi * xi * sigma * std::pow(di, sigma - 1.0);
            }
            // gx_k = gy_k * d_k^sigma + 2 x_k * sum_i t_i gamma_ik
            for (int kk = 0; kk < ch; ++kk) {
                double acc = 0.0;
                for (int i = 0; i < ch; ++i)
                    acc += t[static_cast<std::size_t>(i) * npos + p] *
                           static_cast<double>(gamma[static_cast<std::size_t>(i) * ch + kk]);
                const double xk = static_cast<double>(x[base + static_cast<std::size_t>(kk) * spatial]);
                const double gyk = static_cast<double>(gy[base + static_cast<std::size_t>(kk) * spatial]);
                gx[base + static_cast<std::size_t>(kk) * spatial] = static_cast<float>(
                    gyk * std::pow(d[static_cast<std::size_t>(kk)], sigma) + 2.0 * xk * acc);
            }
        }
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < ch; ++i) {
        double acc = 0.0;
        const double* ti = t.data() + static_cast<std::size_t>(i) * npos;
        for (long p = 0; p < npos; ++p) acc += ti[p];
        gbeta[i] += static_cast<float>(acc);
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < ch; ++i) {
        for (int j = 0; j < ch; ++j) {
            const double* ti = t.data() + static_cast<std::size_t>(i) * npos;
            const double* xj = x2.data() + static_cast<std::size_t>(j) * npos;
            double acc = 0.0;
            for (long p = 0; p < npos; ++p) acc += ti[p] * xj[p];
            ggamma[static_cast<std::size_t>(i) * ch + j] += static_cast<float>(acc);
        }
    }
}

void bias_add(float* y, const float* bias, int batch, int ch, int spatial) {
    const long n = static_cast<long>(batch) * ch * spatial;
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < n; ++idx) {
        const int c = static_cast<int>((idx / spatial) % ch);
        y[idx] += bias[c];
    }
}

namespace serial {

void conv2d_forward(const float* x, const float* w, const float* bias, float* y,
                    const ConvShape& s) {
    for (int b = 0; b < s.batch; ++b)
        for (int co = 0; co < s.c_out; ++co) conv_fwd_cell(x, w, bias, y, s, b, co);
}

void conv2d_backward_input(const float* gy, const float* w, float* gx, const ConvShape& s) {
    for (int b = 0; b < s.batch; ++b)
        for (int ci = 0; ci < s.c_in; ++ci) conv_bwd_input_cell(gy, w, gx, s, b, ci);
}

void conv2d_backward_weight(const float* gy, const float* x, float* gw, const ConvShape& s) {
    for (int co = 0; co < s.c_out; ++co)
        for (int ci = 0; ci < s.c_in; ++ci) conv_bwd_weight_cell(gy, x, gw, s, co, ci);
}

void conv2d_backward_bias(const float* gy, float* gb, const ConvShape& s) {
    for (int co = 0; co < s.c_out; ++co)
        gb[co] = static_cast<float>(conv_bwd_bias_cell(gy, s, co));
}

void gdn_forward(const float* x, const float* beta, const float* gamma, float* y, bool inverse,
                 int batch, int ch, int spatial) {
    const long npos = static_cast<long>(batch) * spatial;
    for (long p = 0; p < npos; ++p) {
        const long b = p / spatial, sp = p % spatial;
        const std::size_t base = (static_cast<std::size_t>(b) * ch) * spatial + sp;
        gdn_fwd_pos(x + base, beta, gamma, y + base, inverse, ch, spatial);
    }
}

void gdn_backward(const float* x, const float* beta, const float* gamma, const float* gy,
                  float* gx, float* gbeta, float* ggamma, bool inverse, int batch, int ch,
                  int spatial) {
    const long npos = static_cast<long>(batch) * spatial;
    const double sigma = inverse ? 0.5 : -0.5;
    std::vector<double> t(static_cast<std::size_t>(ch));
    std::vector<double> d(static_cast<std::size_t>(ch));
    std::vector<double> gb(static_cast<std::size_t>(ch), 0.0);
    std::vector<double> gg(static_cast<std::size_t>(ch) * ch, 0.0);
    for (long p = 0; p < npos; ++p) {
        const long b = p / spatial, sp = p % spatial;
        const std::size_t base = (static_cast<std::size_t>(b) * ch) * spatial + sp;
        for (int i = 0; i < ch; ++i) {
            const float* gi = gamma + static_cast<std::size_t>(i) * ch;
            double di = static_cast<double>(beta[i]);
            for (int j = 0; j < ch; ++j) {
                const double xj = static_cast<double>(x[base + static_cast<std::size_t>(j) * spatial]);
                di += static_cast<double>(gi[j]) * (xj * xj);
            }
            d[static_cast<std::size_t>(i)] = di;
            const double xi = static_cast<double>(x[base + static_cast<std::size_t>(i) * spatial]);
            const double gyi = static_cast<double>(gy[base + static_cast<std::size_t>(i) * spatial]);
            t[static_cast<std::size_t>(i)] = gyi * xi * sigma * std::pow(di, sigma - 1.0);
        }
        for (int i = 0; i < ch; ++i) {
            gb[static_cast<std::size_t>(i)] += t[static_cast<std::size_t>(i)];
            for (int j = 0; j < ch; ++j) {
                const double xj = static_cast<double>(x[base + static_cast<std::size_t>(j) * spatial]);
                gg[static_cast<std::size_t>(i) * ch + j] += t[static_cast<std::size_t>(i)] * (xj * xj);
            }
        }
        for (int kk = 0; kk < ch; ++kk) {
            double acc = 0.0;
            for (int i = 0; i < ch; ++i)
                acc += t[static_cast<std::size_t>(i)] *
                       static_cast<double>(gamma[static_cast<std::size_t>(i) * ch + kk]);
            const double xk = static_cast<double>(x[base + static_cast<std::size_t>(kk) * spatial]);
            const double gyk = static_cast<double>(gy[base + static_cast<std::size_t>(kk) * spatial]);
            gx[base + static_cast<std::size_t>(kk) * spatial] =
                static_cast<float>(gyk * std::pow(d[static_cast<std::size_t>(kk)], sigma) + 2.0 * xk * acc);
        }
    }
    for (int i = 0; i < ch; ++i) {
        gbeta[i] += static_cast<float>(gb[static_cast<std::size_t>(i)]);
        for (int j = 0; j < ch; ++j)
            ggamma[static_cast<std::size_t>(i) * ch + j] +=
                static_cast<float>(gg[static_cast<std::size_t>(i) * ch + j]);
    }
}

}  // namespace serial

void apply_thread_cap_env() {
#ifdef _OPENMP
    if (const char* cap = std::getenv("LIC_LAB_THREADS")) {
        const int n = std::atoi(cap);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

}  // namespace liclab::kernels
