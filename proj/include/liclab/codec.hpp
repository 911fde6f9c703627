#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "liclab/optim.hpp"
#include "liclab/rng.hpp"

namespace liclab {

struct AdapterSet;  // adapters.hpp

enum class QuantMode : std::uint8_t { AdditiveNoise = 0, Round = 1 };

struct ConvLayer {
    NodePtr weight;  // conv: [c_out, c_in, k, k]; tconv: [c_in, c_out, k, k]
    NodePtr bias;
    int stride = 1;
    int pad = 0;
};

// Raw storage behind the nonneg reparameterization (see ops::nonneg).
struct GdnParams {
    NodePtr beta_v;   // [c]
    NodePtr gamma_v;  // [c, c]
};

// The desk-scale mean-scale hyperprior codec: four conv+GDN analysis stacks,
// four mirrored IGDN+tconv synthesis stacks, a two-stack hyperprior with a
// per-channel logistic factorized prior, and a two-layer 1x1-conv entropy
// parameters network emitting per-element (mu, sigma).
struct CodecModel {
    static constexpr int kStacks = 4;
    static constexpr int kLatentChannels = 64;
    static constexpr int kHyperChannels = 32;
    static constexpr int kEpFeatures = 48;
    static constexpr int kEpHidden = 96;
    static constexpr int kDownsampleFactor = 16;  // 4 stride-2 stages

    struct AnalysisStack {
        ConvLayer conv;
        GdnParams gdn;
    };
    struct SynthesisStack {
        GdnParams igdn;
        ConvLayer tconv;
    };

    std::array<AnalysisStack, kStacks> g_a;
    std::array<SynthesisStack, kStacks> g_s;
    ConvLayer h_a1, h_a2;  // conv stride-2 + ReLU each
    ConvLayer h_s1, h_s2;  // tconv stride-2 + ReLU each
    ConvLayer ep1, ep2;    // 1x1 convs, ReLU between
    NodePtr prior_loc;        // [kHyperChannels]
    NodePtr prior_log_scale;  // [kHyperChannels]
    NodePtr meta_lambda;          // [1], the lambda this model was trained for
    NodePtr meta_lambda_presets;  // [6]

    std::uint64_t model_id = 0;  // trailing checkpoint hash; 0 until refreshed

    static CodecModel init(std::uint64_t seed);

    std::vector<Param> params() const;
    void set_trainable(bool trainable) const;
    int analysis_channels(int stack) const;   // conv-adapter width in g_a
    int synthesis_channels(int stack) const;  // conv-adapter width in g_s

    float lambda() const { return meta_lambda->value.data[0]; }
    void set_lambda(float l) { meta_lambda->value.data[0] = l; }
    std::vector<float> lambda_presets() const { return meta_lambda_presets->value.data; }

    std::vector<std::uint8_t> serialize() const;  // LICM checkpoint bytes
    static CodecModel deserialize(const std::vector<std::uint8_t>& bytes);
    void save(const std::string& path);
    static CodecModel load(const std::string& path);
    std::uint64_t refresh_id();  // recompute model_id from current params
};

// Values materialized from one forward pass.
struct LatentBundle {
    Tensor y, z, y_hat, z_hat, mu, sigma;
    double rate_y_bits = 0.0;
    double rate_z_bits = 0.0;
};

// Graph handles from one forward pass (values live in node->value).
struct ForwardResult {
    NodePtr x;  // input as a leaf
    NodePtr y, z, y_hat, z_hat, mu, sigma;
    NodePtr rate_y_bits, rate_z_bits;  // scalars with 64-bit mirrors
    NodePtr x_hat;
    LatentBundle bundle() const;
};

// Full pipeline. `rng` is consumed (y noise then z noise) only in
// AdditiveNoise mode. LoRA-adapters run as the parallel low-rank path in
// AdditiveNoise mode and merged in Round mode, so entropy decoding and
// Round-mode inference share bit-identical weights.
ForwardResult codec_forward(const CodecModel& model, const AdapterSet* adapters, const Tensor& x,
                            QuantMode qmode, Rng* rng);

// AdditiveNoise forward with caller-supplied noise tensors (shapes must match
// the latent/hyper-latent grids). Lets the gradient checker evaluate a frozen
// objective repeatedly.
ForwardResult codec_forward_with_noise(const CodecModel& model, const AdapterSet* adapters,
                                       const Tensor& x, const Tensor& noise_y,
                                       const Tensor& noise_z);

// Pipeline pieces, shared verbatim by the entropy coder so the encoder and
// decoder reach identical latents and (mu, sigma).
NodePtr run_analysis(const CodecModel& model, const AdapterSet* adapters, const NodePtr& x);
NodePtr run_hyper_analysis(const CodecModel& model, const NodePtr& y);
void run_entropy_parameters(const CodecModel& model, const AdapterSet* adapters,
                            const NodePtr& z_hat, int y_h, int y_w, bool merged_lora, NodePtr* mu,
                            NodePtr* sigma);
NodePtr run_synthesis(const CodecModel& model, const AdapterSet* adapters, const NodePtr& y_hat);
NodePtr prior_scale_node(const CodecModel& model);

// Latent/hyper-latent spatial extents for an (already padded) H x W input.
void latent_dims(int h, int w, int* y_h, int* y_w, int* z_h, int* z_w);

Tensor quantize(const Tensor& v, QuantMode qmode, Rng* rng);

// Eq-style scalar objective: bits/pixel + lambda * 255^2 * MSE (MSE taken on
// [0,1] pixels; the 255^2 factor keeps the lambda presets on their
// conventional scale).
struct RdLoss {
    NodePtr loss;
    double bpp_y = 0.0, bpp_z = 0.0, mse = 0.0, total = 0.0;
};
RdLoss rd_loss(const ForwardResult& f, const Tensor& x, float lambda);

double psnr_from_mse(double mse);  // 10*log10(1/mse), mse on [0,1] pixels

struct PretrainConfig {
    int steps = 2500;
    int batch = 4;
    int patch = 48;
    float lr = 1e-4f;
    float lambda = 0.0067f;
    std::uint64_t seed = 1;
    bool verbose = false;
};

// Trains all phi end to end with additive-noise quantization and the rd_loss
// objective; lr steps down to {0.3, 0.1, 0.01} of the base at 60/75/90% of
// the run. Returns a frozen model with model_id refreshed.
CodecModel pretrain_baseline(const std::vector<Tensor>& images, const PretrainConfig& cfg);

}  // namespace liclab
