#pragma once

#include <string>
#include <vector>

#include "liclab/adapters.hpp"
#include "liclab/codec.hpp"

namespace liclab {

// Per-channel energy/bits over an image set, Round-mode latents.
struct ChannelStats {
    std::vector<double> log_energy;  // log10 of mean y_hat^2 per channel
    std::vector<double> mean_bits;   // mean coded bits per element per channel
    std::vector<int> order;          // channels by descending energy
};

ChannelStats channel_stats(const CodecModel& model, const AdapterSet* adapters,
                           const std::vector<Tensor>& images);
std::string channel_stats_to_csv(const ChannelStats& s);

// Stable argsort by descending value (the channel ordering rule).
std::vector<int> descending_order(const std::vector<double>& values);

// g_s(mask(y_hat, keep)) - g_s(0): what the kept channels alone contribute to
// the reconstruction. Output is [3, h, w] (may be negative).
Tensor reconstruct_from_channels(const CodecModel& model, const AdapterSet* adapters, const Tensor& img,
                                 const std::vector<int>& keep);

// BT.601 luma of a [3, H, W] image.
Tensor luma601(const Tensor& img);
// DC-centered 2-D DFT magnitude of an [H, W] image (no log scaling).
Tensor fft_magnitude(const Tensor& gray);
// Share of spectral energy with both centered frequency axes at or below
// `cutoff_frac` of Nyquist (DC included).
double low_frequency_energy_share(const Tensor& gray, double cutoff_frac);
// log(1 + |X|) normalized to [0, 1] for PGM export.
Tensor spectrum_for_export(const Tensor& magnitude);
// Signed image mapped to [0, 1] around 0.5 for PPM export.
Tensor signed_for_export(const Tensor& img);

struct RdPoint {
    double lambda = 0.0;
    double bpp = 0.0;
    double psnr = 0.0;
};

struct RdCurve {
    std::string label;
    std::vector<RdPoint> points;  // kept sorted by ascending bpp
    void sort_and_validate();     // >= 1 point, bpp strictly increasing
};

std::string rd_curve_to_csv(const RdCurve& c);
RdCurve rd_curve_from_csv(const std::string& text, const std::string& label);

// Average rate difference (percent) of `test` against `anchor` over their
// common PSNR range, integrating monotone piecewise-cubic interpolants of
// ln(bpp) as a function of PSNR. Negative favors `test`.
double bd_rate(const RdCurve& anchor, const RdCurve& test);

// Monotone (Fritsch-Carlson) cubic Hermite machinery, exposed for the
// quadrature cross-checks.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y);
double pchip_eval(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& m, double at);
double pchip_integral(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& m, double a, double b);

struct RdCurveModel {
    const CodecModel* model = nullptr;
    const AdapterSet* adapters = nullptr;
};

// One (adapted or frozen) model per lambda preset; every image is really
// encoded with the range coder and bpp/PSNR averaged per preset.
RdCurve rd_curve(const std::vector<RdCurveModel>& per_lambda, const std::vector<Tensor>& images,
                 const std::string& label);

}  // namespace liclab
