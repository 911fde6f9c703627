#pragma once

#include "liclab/common.hpp"

namespace liclab::kernels {

// Geometry of a strided cross-correlation with zero padding.
// Weights are [c_out, c_in, k, k]; activations [batch, c, h, w].
struct ConvShape {
    int batch = 0;
    int c_in = 0, h_in = 0, w_in = 0;
    int c_out = 0, k = 0, stride = 1, pad = 0;
    int h_out = 0, w_out = 0;
};

ConvShape make_conv_shape(int batch, int c_in, int h_in, int w_in, int c_out, int k, int stride,
                          int pad);

// OpenMP-parallel kernels. Parallelism is always over output cells with a
// serial inner reduction (64-bit accumulators), so results are bit-identical
// to the serial reference for any thread count.
void conv2d_forward(const float* x, const float* w, const float* bias, float* y,
                    const ConvShape& s);
void conv2d_backward_input(const float* gy, const float* w, float* gx, const ConvShape& s);
void conv2d_backward_weight(const float* gy, const float* x, float* gw, const ConvShape& s);
void conv2d_backward_bias(const float* gy, float* gb, const ConvShape& s);

// GDN: y_i = x_i * d_i^(-1/2) with d_i = beta_i + sum_j gamma_ij x_j^2 per
// spatial position; inverse=true multiplies by d_i^(1/2) instead (IGDN).
// gamma is [ch, ch]; spatial = h*w.
void gdn_forward(const float* x, const float* beta, const float* gamma, float* y, bool inverse,
                 int batch, int ch, int spatial);
// gbeta/ggamma are accumulated into (callers zero them first).
void gdn_backward(const float* x, const float* beta, const float* gamma, const float* gy,
                  float* gx, float* gbeta, float* ggamma, bool inverse, int batch, int ch,
                  int spatial);

// Per-channel bias add over [batch, ch, spatial].
void bias_add(float* y, const float* bias, int batch, int ch, int spatial);

// Straightforward single-thread reference implementations, kept for the
// equivalence tests and the kernel benchmark.
namespace serial {
void conv2d_forward(const float* x, const float* w, const float* bias, float* y,
                    const ConvShape& s);
void conv2d_backward_input(const float* gy, const float* w, float* gx, const ConvShape& s);
void conv2d_backward_weight(const float* gy, const float* x, float* gw, const ConvShape& s);
void conv2d_backward_bias(const float* gy, float* gb, const ConvShape& s);
void gdn_forward(const float* x, const float* beta, const float* gamma, float* y, bool inverse,
                 int batch, int ch, int spatial);
void gdn_backward(const float* x, const float* beta, const float* gamma, const float* gy,
                  float* gx, float* gbeta, float* ggamma, bool inverse, int batch, int ch,
                  int spatial);
}  // namespace serial

// Applies LIC_LAB_THREADS (if set) to the OpenMP runtime. Called once by
// tools and test mains.
void apply_thread_cap_env();

}  // namespace liclab::kernels
