#include "liclab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "liclab/bitstream.hpp"
#include "liclab/image_io.hpp"

namespace liclab {

ChannelStats channel_stats(const CodecModel& model, const AdapterSet* adapters,
                           const std::vector<Tensor>& images) {
    if (images.empty()) throw AnalysisError("channel_stats needs at least one image");
    const int ch = CodecModel::kLatentChannels;
    std::vector<double> energy(static_cast<std::size_t>(ch), 0.0);
    std::vector<double> bits(static_cast<std::size_t>(ch), 0.0);
    std::vector<double> count(static_cast<std::size_t>(ch), 0.0);

    for (const auto& img : images) {
        const Tensor x = pad_to_grid(img);
        auto fwd = codec_forward(model, adapters, x, QuantMode::Round, nullptr);
        const auto& yh = fwd.y_hat->value;
        const auto& mu = fwd.mu->value;
        const auto& sg = fwd.sigma->value;
        const int spatial = yh.dims[2] * yh.dims[3];
        for (int c = 0; c < ch; ++c) {
            const std::size_t base = static_cast<std::size_t>(c) * spatial;
            for (int i = 0; i < spatial; ++i) {
                const double v = static_cast<double>(yh.data[base + i]);
                energy[static_cast<std::size_t>(c)] += v * v;
                bits[static_cast<std::size_t>(c)] +=
                    gaussian_bin_bits(v, static_cast<double>(mu.data[base + i]),
                                      static_cast<double>(sg.data[base + i]));
                count[static_cast<std::size_t>(c)] += 1.0;
            }
        }
    }

    ChannelStats s;
    s.log_energy.resize(static_cast<std::size_t>(ch));
    s.mean_bits.resize(static_cast<std::size_t>(ch));
    std::vector<double> mean_energy(static_cast<std::size_t>(ch));
    for (int c = 0; c < ch; ++c) {
        mean_energy[static_cast<std::size_t>(c)] = energy[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)];
        s.log_energy[static_cast<std::size_t>(c)] = std::log10(mean_energy[static_cast<std::size_t>(c)] + 1e-12);
        s.mean_bits[static_cast<std::size_t>(c)] = bits[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)];
    }
    s.order = descending_order(mean_energy);
    return s;
}

std::vector<int> descending_order(const std::vector<double>& values) {
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    return order;
}

std::string channel_stats_to_csv(const ChannelStats& s) {
    std::ostringstream os;
    os << "channel,log_energy,bits\n";
    char line[96];
    for (std::size_t c = 0; c < s.log_energy.size(); ++c) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", c, s.log_energy[c], s.mean_bits[c]);
        os << line;
    }
    return os.str();
}

Tensor reconstruct_from_channels(const CodecModel& model, const AdapterSet* adapters, const Tensor& img,
                                 const std::vector<int>& keep) {
    const int ch = CodecModel::kLatentChannels;
    for (int c : keep)
        if (c < 0 || c >= ch)
            throw DimensionError("channel index " + std::to_string(c) + " out of range [0, " +
                                 std::to_string(ch) + ")");
    const Tensor x = pad_to_grid(img);
    auto fwd = codec_forward(model, adapters, x, QuantMode::Round, nullptr);

    Tensor masked = Tensor::zeros_like(fwd.y_hat->value);
    const int spatial = masked.dims[2] * masked.dims[3];
    for (int c : keep)
        std::copy_n(&fwd.y_hat->value.data[static_cast<std::size_t>(c) * spatial], spatial,
                    &masked.data[static_cast<std::size_t>(c) * spatial]);

    NodePtr rec_keep = run_synthesis(model, adapters, make_const(masked));
    NodePtr rec_zero = run_synthesis(model, adapters, make_const(Tensor::zeros_like(masked)));

    Tensor diff(rec_keep->value.dims);
    for (std::size_t i = 0; i < diff.data.size(); ++i)
        diff.data[i] = rec_keep->value.data[i] - rec_zero->value.data[i];
    Tensor out({3, img.dims[1], img.dims[2]});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < img.dims[1]; ++i)
            for (int j = 0; j < img.dims[2]; ++j)
                out.data[(static_cast<std::size_t>(c) * img.dims[1] + i) * img.dims[2] + j] =
                    diff.at(0, c, i, j);
    return out;
}

Tensor luma601(const Tensor& img) {
    if (img.ndim() != 3 || img.dims[0] != 3) throw DimensionError("luma expects 3xHxW, got " + img.shape_str());
    const int h = img.dims[1], w = img.dims[2];
    Tensor out({h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i)
        out.data[i] = 0.299f * img.data[i] + 0.587f * img.data[plane + i] + 0.114f * img.data[2 * plane + i];
    return out;
}

Tensor fft_magnitude(const Tensor& gray) {
    if (gray.ndim() != 2) throw DimensionError("fft expects HxW, got " + gray.shape_str());
    const int h = gray.dims[0], w = gray.dims[1];
    const double two_pi = 2.0 * 3.14159265358979323846;

    // Row DFTs, then column DFTs (direct evaluation; desk-scale images).
    std::vector<double> re1(static_cast<std::size_t>(h) * w), im1(static_cast<std::size_t>(h) * w);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i)
        for (int fx = 0; fx < w; ++fx) {
            double re = 0.0, im = 0.0;
            for (int j = 0; j < w; ++j) {
                const double ang = -two_pi * fx * j / w;
                const double v = static_cast<double>(gray.data[static_cast<std::size_t>(i) * w + j]);
                re += v * std::cos(ang);
                im += v * std::sin(ang);
            }
            re1[static_cast<std::size_t>(i) * w + fx] = re;
            im1[static_cast<std::size_t>(i) * w + fx] = im;
        }

    Tensor mag({h, w});
#pragma omp parallel for schedule(static)
    for (int fy = 0; fy < h; ++fy)
        for (int fx = 0; fx < w; ++fx) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < h; ++i) {
                const double ang = -two_pi * fy * i / h;
                const double c = std::cos(ang), s = std::sin(ang);
                const double a = re1[static_cast<std::size_t>(i) * w + fx];
                const double b = im1[static_cast<std::size_t>(i) * w + fx];
                re += a * c - b * s;
                im += a * s + b * c;
            }
            // fftshift: DC lands at (h/2, w/2).
            const int oy = (fy + h / 2) % h;
            const int ox = (fx + w / 2) % w;
            mag.data[static_cast<std::size_t>(oy) * w + ox] = static_cast<float>(std::sqrt(re * re + im * im));
        }
    return mag;
}

double low_frequency_energy_share(const Tensor& gray, double cutoff_frac) {
    const Tensor mag = fft_magnitude(gray);
    const int h = mag.dims[0], w = mag.dims[1];
    double total = 0.0, low = 0.0;
    for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < w; ++ox) {
            const double e = static_cast<double>(mag.data[static_cast<std::size_t>(oy) * w + ox]);
            const double e2 = e * e;
            total += e2;
            const double fy = std::abs(oy - h / 2) / (h / 2.0);
            const double fx = std::abs(ox - w / 2) / (w / 2.0);
            if (std::max(fx, fy) <= cutoff_frac) low += e2;
        }
    return total > 0.0 ? low / total : 1.0;
}

Tensor spectrum_for_export(const Tensor& magnitude) {
    Tensor out(magnitude.dims);
    float maxv = 0.0f;
    for (std::size_t i = 0; i < magnitude.data.size(); ++i) {
        out.data[i] = std::log1p(magnitude.data[i]);
        maxv = std::max(maxv, out.data[i]);
    }
    if (maxv > 0.0f)
        for (auto& v : out.data) v /= maxv;
    return out;
}

Tensor signed_for_export(const Tensor& img) {
    float maxabs = 0.0f;
    for (float v : img.data) maxabs = std::max(maxabs, std::abs(v));
    Tensor out(img.dims);
    const float scale = maxabs > 0.0f ? 0.5f / maxabs : 0.0f;
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = 0.5f + img.data[i] * scale;
    return out;
}

void RdCurve::sort_and_validate() {
    std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    for (std::size_t i = 1; i < points.size(); ++i)
        if (!(points[i].bpp > points[i - 1].bpp))
            throw AnalysisError("rd curve '" + label + "' bpp not strictly increasing");
}

std::string rd_curve_to_csv(const RdCurve& c) {
    std::ostringstream os;
    os << "lambda,bpp,psnr\n";
    char line[96];
    for (const auto& p : c.points) {
        std::snprintf(line, sizeof line, "%.6f,%.8f,%.6f\n", p.lambda, p.bpp, p.psnr);
        os << line;
    }
    return os.str();
}

RdCurve rd_curve_from_csv(const std::string& text, const std::string& label) {
    RdCurve c;
    c.label = label;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("lambda", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        RdPoint p;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.lambda, &p.bpp, &p.psnr) != 3)
            throw FormatError("bad rd-curve csv line: " + line);
        c.points.push_back(p);
    }
    c.sort_and_validate();
    return c;
}

std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) throw AnalysisError("pchip needs at least two points");
    std::vector<double> h(n - 1), d(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x[i + 1] - x[i];
        if (!(h[i] > 0.0)) throw AnalysisError("pchip abscissae must be strictly increasing");
        d[i] = (y[i + 1] - y[i]) / h[i];
    }
    if (n == 2) {
        m[0] = m[1] = d[0];
        return m;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (d[k - 1] * d[k] <= 0.0) {
            m[k] = 0.0;
        } else {
            const double w1 = 2.0 * h[k] + h[k - 1];
            const double w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    auto endpoint = [](double h0, double h1, double d0, double d1) {
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0)
            s = 0.0;
        else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0))
            s = 3.0 * d0;
        return s;
    };
    m[0] = endpoint(h[0], h[1], d[0], d[1]);
    m[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    return m;
}

namespace {

// Integral of the cubic Hermite basis over t in [0, u].
double ih00(double u) { return 0.5 * u * u * u * u - u * u * u + u; }
double ih10(double u) { return 0.25 * u * u * u * u - (2.0 / 3.0) * u * u * u + 0.5 * u * u; }
double ih01(double u) { return -0.5 * u * u * u * u + u * u * u; }
double ih11(double u) { return 0.25 * u * u * u * u - (1.0 / 3.0) * u * u * u; }

}  // namespace

double pchip_eval(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& m, double at) {
    std::size_t k = 0;
    while (k + 2 < x.size() && at > x[k + 1]) ++k;
    const double h = x[k + 1] - x[k];
    const double t = (at - x[k]) / h;
    const double h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    const double h10 = t * (1.0 - t) * (1.0 - t);
    const double h01 = t * t * (3.0 - 2.0 * t);
    const double h11 = t * t * (t - 1.0);
    return h00 * y[k] + h10 * h * m[k] + h01 * y[k + 1] + h11 * h * m[k + 1];
}

double pchip_integral(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& m, double a, double b) {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double lo = std::max(a, x[k]);
        const double hi = std::min(b, x[k + 1]);
        if (hi <= lo) continue;
        const double h = x[k + 1] - x[k];
        const double t0 = (lo - x[k]) / h;
        const double t1 = (hi - x[k]) / h;
        total += h * (y[k] * (ih00(t1) - ih00(t0)) + h * m[k] * (ih10(t1) - ih10(t0)) +
                      y[k + 1] * (ih01(t1) - ih01(t0)) + h * m[k + 1] * (ih11(t1) - ih11(t0)));
    }
    return total;
}

double bd_rate(const RdCurve& anchor_in, const RdCurve& test_in) {
    RdCurve anchor = anchor_in, test = test_in;
    anchor.sort_and_validate();
    test.sort_and_validate();
    if (anchor.points.size() < 4 || test.points.size() < 4)
        throw AnalysisError("bd_rate needs at least 4 points per curve");

    auto build = [](const RdCurve& c, std::vector<double>& xs, std::vector<double>& ys) {
        for (const auto& p : c.points) {
            xs.push_back(p.psnr);
            ys.push_back(std::log(p.bpp));
        }
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (!(xs[i] > xs[i - 1]))
                throw AnalysisError("rd curve '" + c.label + "' PSNR not strictly increasing");
    };
    std::vector<double> xa, ya, xt, yt;
    build(anchor, xa, ya);
    build(test, xt, yt);

    const double lo = std::max(xa.front(), xt.front());
    const double hi = std::min(xa.back(), xt.back());
    if (!(hi > lo)) throw AnalysisError("rd curves have no overlapping PSNR range");

    const auto ma = pchip_slopes(xa, ya);
    const auto mt = pchip_slopes(xt, yt);
    const double ia = pchip_integral(xa, ya, ma, lo, hi);
    const double it = pchip_integral(xt, yt, mt, lo, hi);
    const double mean_diff = (it - ia) / (hi - lo);
    return 100.0 * (std::exp(mean_diff) - 1.0);
}

RdCurve rd_curve(const std::vector<RdCurveModel>& per_lambda, const std::vector<Tensor>& images,
                 const std::string& label) {
    if (per_lambda.empty() || images.empty()) throw AnalysisError("rd_curve needs models and images");
    RdCurve c;
    c.label = label;
    for (const auto& entry : per_lambda) {
        double bpp = 0.0, psnr = 0.0;
        for (const auto& img : images) {
            auto enc = encode_image(*entry.model, entry.adapters, img);
            bpp += enc.bpp;
            psnr += enc.psnr;
        }
        RdPoint p;
        p.lambda = entry.model->lambda();
        p.bpp = bpp / static_cast<double>(images.size());
        p.psnr = psnr / static_cast<double>(images.size());
        c.points.push_back(p);
    }
    c.sort_and_validate();
    return c;
}

}  // namespace liclab
