#include "liclab/reference.hpp"

#include <cmath>

namespace liclab::ref {

namespace {

// Minimal double-precision NCHW buffer.
struct Arr {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;
    Arr() = default;
    Arr(int b_, int c_, int h_, int w_) : b(b_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(b_) * c_ * h_ * w_, 0.0) {}
    double& at(int bi, int ci, int hi, int wi) {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + hi) * w + wi];
    }
    double at(int bi, int ci, int hi, int wi) const {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + hi) * w + wi];
    }
};

Arr from_tensor(const Tensor& t) {
    Arr a(t.dims[0], t.dims[1], t.dims[2], t.dims[3]);
    for (std::size_t i = 0; i < t.data.size(); ++i) a.data[i] = static_cast<double>(t.data[i]);
    return a;
}

std::vector<double> vec64(const Tensor& t) {
    std::vector<double> v(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) v[i] = static_cast<double>(t.data[i]);
    return v;
}

Arr conv(const Arr& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int co = w.dims[0], ci = w.dims[1], k = w.dims[2];
    const int ho = (x.h + 2 * pad - k) / stride + 1;
    const int wo = (x.w + 2 * pad - k) / stride + 1;
    Arr y(x.b, co, ho, wo);
    for (int b = 0; b < x.b; ++b)
        for (int o = 0; o < co; ++o)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = static_cast<double>(bias.data[static_cast<std::size_t>(o)]);
                    for (int c = 0; c < ci; ++c)
                        for (int kh = 0; kh < k; ++kh) {
                            const int ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < k; ++kw) {
                                const int iw = ow * stride - pad + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                acc += x.at(b, c, ih, iw) *
                                       static_cast<double>(
                                           w.data[((static_cast<std::size_t>(o) * ci + c) * k + kh) * k + kw]);
                            }
                        }
                    y.at(b, o, oh, ow) = acc;
                }
    return y;
}

// weight [c_in, c_out, k, k]
Arr tconv(const Arr& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int ci = w.dims[0], co = w.dims[1], k = w.dims[2];
    const int ho = (x.h - 1) * stride - 2 * pad + k;
    const int wo = (x.w - 1) * stride - 2 * pad + k;
    Arr y(x.b, co, ho, wo);
    for (int b = 0; b < x.b; ++b)
        for (int o = 0; o < co; ++o)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = static_cast<double>(bias.data[static_cast<std::size_t>(o)]);
                    for (int c = 0; c < ci; ++c)
                        for (int kh = 0; kh < k; ++kh) {
                            const int th = oh + pad - kh;
                            if (th < 0 || th % stride != 0) continue;
                            const int ih = th / stride;
                            if (ih >= x.h) continue;
                            for (int kw = 0; kw < k; ++kw) {
                                const int tw = ow + pad - kw;
                                if (tw < 0 || tw % stride != 0) continue;
                                const int iw = tw / stride;
                                if (iw >= x.w) continue;
                                acc += x.at(b, c, ih, iw) *
                                       static_cast<double>(
                                           w.data[((static_cast<std::size_t>(c) * co + o) * k + kh) * k + kw]);
                            }
                        }
                    y.at(b, o, oh, ow) = acc;
                }
    return y;
}

std::vector<double> nonneg_eff(const Tensor& v, float minimum) {
    const double ped = 0x1p-36;
    const double bound = std::sqrt(static_cast<double>(minimum) + ped);
    std::vector<double> out(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double vc = std::max(static_cast<double>(v.data[i]), bound);
        out[i] = vc * vc - ped;
    }
    return out;
}

Arr gdn(const Arr& x, const std::vector<double>& beta, const std::vector<double>& gamma, bool inverse) {
    Arr y(x.b, x.c, x.h, x.w);
    const int ch = x.c;
    for (int b = 0; b < x.b; ++b)
        for (int hh = 0; hh < x.h; ++hh)
            for (int ww = 0; ww < x.w; ++ww)
                for (int i = 0; i < ch; ++i) {
                    double d = beta[static_cast<std::size_t>(i)];
                    for (int j = 0; j < ch; ++j) {
                        const double xj = x.at(b, j, hh, ww);
                        d += gamma[static_cast<std::size_t>(i) * ch + j] * (xj * xj);
                    }
                    const double r = std::sqrt(d);
                    y.at(b, i, hh, ww) = inverse ? x.at(b, i, hh, ww) * r : x.at(b, i, hh, ww) / r;
                }
    return y;
}

Arr relu(Arr x) {
    for (auto& v : x.data) v = v > 0.0 ? v : 0.0;
    return x;
}

Arr depthwise(const Arr& x, const Tensor& w, const Tensor& bias, int pad) {
    const int k = w.dims[2];
    const int ho = x.h + 2 * pad - k + 1;
    const int wo = x.w + 2 * pad - k + 1;
    Arr y(x.b, x.c, ho, wo);
    for (int b = 0; b < x.b; ++b)
        for (int c = 0; c < x.c; ++c)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = static_cast<double>(bias.data[static_cast<std::size_t>(c)]);
                    for (int kh = 0; kh < k; ++kh) {
                        const int ih = oh - pad + kh;
                        if (ih < 0 || ih >= x.h) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int iw = ow - pad + kw;
                            if (iw < 0 || iw >= x.w) continue;
                            acc += x.at(b, c, ih, iw) *
                                   static_cast<double>(w.data[(static_cast<std::size_t>(c) * k + kh) * k + kw]);
                        }
                    }
                    y.at(b, c, oh, ow) = acc;
                }
    return y;
}

Arr apply_conv_adapter(const ConvAdapter& ad, const Arr& x) {
    switch (ad.structure) {
        case AdapterStructure::Conv1x1:
            return conv(x, ad.w->value, ad.b->value, 1, 0);
        case AdapterStructure::Conv3x3:
            return conv(x, ad.w->value, ad.b->value, 1, 1);
        case AdapterStructure::DepthwiseConv3x3:
            return depthwise(x, ad.w->value, ad.b->value, 1);
        case AdapterStructure::DepthwiseConv3x3PlusConv1x1:
            return conv(depthwise(x, ad.w->value, ad.b->value, 1), ad.w2->value, ad.b2->value, 1, 0);
        case AdapterStructure::Gdn:
            return gdn(x, nonneg_eff(ad.beta_v->value, 1e-6f), nonneg_eff(ad.gamma_v->value, 0.0f), false);
    }
    throw ConfigError("unknown adapter structure");
}

Arr add_noise(const Arr& x, const Tensor& noise) {
    Arr y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += static_cast<double>(noise.data[i]);
    return y;
}

// LoRA parallel path: base(x) + B(A(x)).
Arr lora_parallel(const LoraAdapter& la, const ConvLayer& base, const Arr& x) {
    Arr main = conv(x, base.weight->value, base.bias->value, 1, 0);
    const auto a = vec64(la.a->value);  // [r, c_in]
    const auto bm = vec64(la.b->value);  // [c_out, r]
    const int r = la.rank, ci = la.c_in, co = la.c_out;
    for (int b = 0; b < x.b; ++b)
        for (int hh = 0; hh < x.h; ++hh)
            for (int ww = 0; ww < x.w; ++ww) {
                std::vector<double> down(static_cast<std::size_t>(r), 0.0);
                for (int ri = 0; ri < r; ++ri) {
                    double acc = 0.0;
                    for (int c = 0; c < ci; ++c)
                        acc += a[static_cast<std::size_t>(ri) * ci + c] * x.at(b, c, hh, ww);
                    down[static_cast<std::size_t>(ri)] = acc;
                }
                for (int o = 0; o < co; ++o) {
                    double acc = 0.0;
                    for (int ri = 0; ri < r; ++ri)
                        acc += bm[static_cast<std::size_t>(o) * r + ri] * down[static_cast<std::size_t>(ri)];
                    main.at(b, o, hh, ww) += acc;
                }
            }
    return main;
}

}  // namespace

double rd_loss(const CodecModel& model, const AdapterSet* adapters, const Tensor& x,
               const Tensor& noise_y, const Tensor& noise_z, float lambda) {
    Arr cur = from_tensor(x);
    for (int i = 0; i < CodecModel::kStacks; ++i) {
        const auto& st = model.g_a[static_cast<std::size_t>(i)];
        cur = conv(cur, st.conv.weight->value, st.conv.bias->value, st.conv.stride, st.conv.pad);
        cur = gdn(cur, nonneg_eff(st.gdn.beta_v->value, 1e-6f), nonneg_eff(st.gdn.gamma_v->value, 0.0f), false);
        if (adapters) cur = apply_conv_adapter(adapters->analysis_adapter(i), cur);
    }
    const Arr y = cur;
    const Arr y_hat = add_noise(y, noise_y);

    Arr hz = relu(conv(y, model.h_a1.weight->value, model.h_a1.bias->value, model.h_a1.stride, model.h_a1.pad));
    hz = relu(conv(hz, model.h_a2.weight->value, model.h_a2.bias->value, model.h_a2.stride, model.h_a2.pad));
    const Arr z_hat = add_noise(hz, noise_z);

    Arr hs = relu(tconv(z_hat, model.h_s1.weight->value, model.h_s1.bias->value, model.h_s1.stride, model.h_s1.pad));
    hs = relu(tconv(hs, model.h_s2.weight->value, model.h_s2.bias->value, model.h_s2.stride, model.h_s2.pad));
    // Crop the hyper path to the latent grid, as the float pipeline does.
    Arr ep_in(hs.b, hs.c, y.h, y.w);
    for (int b = 0; b < hs.b; ++b)
        for (int c = 0; c < hs.c; ++c)
            for (int hh = 0; hh < y.h; ++hh)
                for (int ww = 0; ww < y.w; ++ww) ep_in.at(b, c, hh, ww) = hs.at(b, c, hh, ww);

    Arr ep;
    if (adapters) {
        ep = relu(lora_parallel(adapters->lora_adapters[0], model.ep1, ep_in));
        ep = lora_parallel(adapters->lora_adapters[1], model.ep2, ep);
    } else {
        ep = relu(conv(ep_in, model.ep1.weight->value, model.ep1.bias->value, 1, 0));
        ep = conv(ep, model.ep2.weight->value, model.ep2.bias->value, 1, 0);
    }

    const int lat = CodecModel::kLatentChannels;
    double bits_y = 0.0;
    for (int b = 0; b < y.b; ++b)
        for (int c = 0; c < lat; ++c)
            for (int hh = 0; hh < y.h; ++hh)
                for (int ww = 0; ww < y.w; ++ww) {
                    const double mu = ep.at(b, c, hh, ww);
                    const double sigma =
                        std::clamp(std::exp(ep.at(b, c + lat, hh, ww)), static_cast<double>(kSigmaMin),
                                   static_cast<double>(kSigmaMax));
                    bits_y += gaussian_bin_bits(y_hat.at(b, c, hh, ww), mu, sigma);
                }

    const auto loc = vec64(model.prior_loc->value);
    const auto log_scale = vec64(model.prior_log_scale->value);
    double bits_z = 0.0;
    for (int b = 0; b < z_hat.b; ++b)
        for (int c = 0; c < z_hat.c; ++c) {
            const double scale = std::clamp(std::exp(log_scale[static_cast<std::size_t>(c)]),
                                            static_cast<double>(kSigmaMin), static_cast<double>(kSigmaMax));
            for (int hh = 0; hh < z_hat.h; ++hh)
                for (int ww = 0; ww < z_hat.w; ++ww)
                    bits_z += logistic_bin_bits(z_hat.at(b, c, hh, ww), loc[static_cast<std::size_t>(c)], scale);
        }

    Arr xs = y_hat;
    for (int i = 0; i < CodecModel::kStacks; ++i) {
        const auto& st = model.g_s[static_cast<std::size_t>(i)];
        xs = gdn(xs, nonneg_eff(st.igdn.beta_v->value, 1e-6f), nonneg_eff(st.igdn.gamma_v->value, 0.0f), true);
        xs = tconv(xs, st.tconv.weight->value, st.tconv.bias->value, st.tconv.stride, st.tconv.pad);
        if (adapters) xs = apply_conv_adapter(adapters->synthesis_adapter(i), xs);
    }

    double sq = 0.0;
    for (std::size_t i = 0; i < xs.data.size(); ++i) {
        const double d = xs.data[i] - static_cast<double>(x.data[i]);
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(xs.data.size());
    const double npix = static_cast<double>(x.dims[0]) * x.dims[2] * x.dims[3];
    return bits_y / npix + bits_z / npix + static_cast<double>(lambda) * 255.0 * 255.0 * mse;
}

}  // namespace liclab::ref
