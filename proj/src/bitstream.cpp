#include "liclab/bitstream.hpp"

#include <cmath>

#include "liclab/coder.hpp"
#include "liclab/image_io.hpp"
#include "liclab/io.hpp"

namespace liclab {

namespace {

constexpr std::uint16_t kBitstreamVersion = 1;

std::uint8_t lambda_index_of(const CodecModel& model) {
    const auto presets = model.lambda_presets();
    const float l = model.lambda();
    int best = 0;
    for (std::size_t i = 0; i < presets.size(); ++i)
        if (std::abs(presets[i] - l) < std::abs(presets[static_cast<std::size_t>(best)] - l))
            best = static_cast<int>(i);
    return static_cast<std::uint8_t>(best);
}

int sym_of(float v) { return static_cast<int>(std::lround(v)); }

// z is coded per channel under the factorized logistic prior.
std::vector<SymbolModel> prior_models(const CodecModel& model) {
    const auto scale_node = prior_scale_node(model);
    std::vector<SymbolModel> models;
    models.reserve(static_cast<std::size_t>(CodecModel::kHyperChannels));
    for (int c = 0; c < CodecModel::kHyperChannels; ++c)
        models.push_back(logistic_symbol_model(
            static_cast<double>(model.prior_loc->value.data[static_cast<std::size_t>(c)]),
            static_cast<double>(scale_node->value.data[static_cast<std::size_t>(c)])));
    return models;
}

}  // namespace

BitstreamHeader read_bitstream_header(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 39) throw FormatError("bitstream too small");
    ByteReader r(bytes.data(), bytes.size());
    char magic[4];
    r.raw(magic, 4);
    if (std::string(magic, 4) != "LICB") throw FormatError("not a bitstream (bad magic)");
    BitstreamHeader h;
    h.version = r.u16();
    if (h.version != kBitstreamVersion) throw FormatError("unsupported bitstream version");
    h.model_id = r.u64();
    h.adapter_id = r.u64();
    h.width = r.u32();
    h.height = r.u32();
    h.lambda_index = r.u8();
    return h;
}

EncodeResult encode_image(const CodecModel& model, const AdapterSet* adapters, const Tensor& img) {
    if (img.ndim() != 3 || img.dims[0] != 3)
        throw DimensionError("encode expects a 3xHxW image, got " + img.shape_str());
    if (model.model_id == 0) throw ConfigError("model id not set; save or refresh the model first");
    if (adapters && adapters->base_model_id != model.model_id)
        throw CompatibilityError("adapter set was built for a different model");

    const int h = img.dims[1], w = img.dims[2];
    const Tensor x = pad_to_grid(img);

    // Shared deterministic pipeline (merged LoRA weights, as at decode).
    NodePtr xn = make_const(x);
    NodePtr y = run_analysis(model, adapters, xn);
    NodePtr y_hat = ops::round_quantize(y);
    NodePtr z = run_hyper_analysis(model, y);
    NodePtr z_hat = ops::round_quantize(z);
    NodePtr mu, sigma;
    run_entropy_parameters(model, adapters, z_hat, y->value.dims[2], y->value.dims[3],
                           /*merged_lora=*/true, &mu, &sigma);
    NodePtr x_hat = run_synthesis(model, adapters, y_hat);

    double est_bits = 0.0;

    RangeEncoder z_enc;
    const auto zmodels = prior_models(model);
    const auto& zt = z_hat->value;
    const int z_spatial = zt.dims[2] * zt.dims[3];
    const auto prior_scales = prior_scale_node(model);
    for (int c = 0; c < zt.dims[1]; ++c) {
        const double loc = static_cast<double>(model.prior_loc->value.data[static_cast<std::size_t>(c)]);
        const double scale = static_cast<double>(prior_scales->value.data[static_cast<std::size_t>(c)]);
        for (int i = 0; i < z_spatial; ++i) {
            const float v = zt.data[static_cast<std::size_t>(c) * z_spatial + i];
            z_enc.encode_symbol(zmodels[static_cast<std::size_t>(c)], sym_of(v));
            est_bits += logistic_bin_bits(static_cast<double>(v), loc, scale);
        }
    }
    const auto z_payload = z_enc.finish();

    RangeEncoder y_enc;
    const auto& yt = y_hat->value;
    for (std::size_t i = 0; i < yt.data.size(); ++i) {
        const double m = static_cast<double>(mu->value.data[i]);
        const double s = static_cast<double>(sigma->value.data[i]);
        y_enc.encode_symbol(gaussian_symbol_model(m, s), sym_of(yt.data[i]));
        est_bits += gaussian_bin_bits(static_cast<double>(yt.data[i]), m, s);
    }
    const auto y_payload = y_enc.finish();

    ByteWriter out;
    out.raw("LICB", 4);
    out.u16(kBitstreamVersion);
    out.u64(model.model_id);
    out.u64(adapters ? adapters->transmit_id() : 0);
    out.u32(static_cast<std::uint32_t>(w));
    out.u32(static_cast<std::uint32_t>(h));
    out.u8(lambda_index_of(model));
    out.u32(static_cast<std::uint32_t>(z_payload.size()));
    out.raw(z_payload.data(), z_payload.size());
    out.u32(static_cast<std::uint32_t>(y_payload.size()));
    out.raw(y_payload.data(), y_payload.size());
    out.u64(fnv1a64(out.bytes().data(), out.size()));

    EncodeResult res;
    res.bytes = out.take();
    res.reconstruction = crop_image(x_hat->value, h, w);
    res.bpp = static_cast<double>(res.bytes.size()) * 8.0 / (static_cast<double>(w) * h);
    res.payload_bits = 8.0 * static_cast<double>(z_payload.size() + y_payload.size());
    res.estimated_bits = est_bits;
    double sq = 0.0;
    for (std::size_t i = 0; i < res.reconstruction.data.size(); ++i) {
        const double d = static_cast<double>(res.reconstruction.data[i]) - static_cast<double>(img.data[i]);
        sq += d * d;
    }
    res.psnr = psnr_from_mse(sq / static_cast<double>(res.reconstruction.data.size()));
    return res;
}

Tensor decode_image(const CodecModel& model, const AdapterSet* adapters,
                    const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 47) throw FormatError("bitstream too small");
    const std::uint64_t stored = fnv1a64(bytes.data(), bytes.size() - 8);
    ByteReader tail(bytes.data() + bytes.size() - 8, 8);
    if (tail.u64() != stored) throw FormatError("bitstream checksum mismatch (corrupted file)");

    const BitstreamHeader h = read_bitstream_header(bytes);
    if (h.model_id != model.model_id)
        throw CompatibilityError("bitstream was encoded with model " + std::to_string(h.model_id) +
                                 ", loaded model is " + std::to_string(model.model_id));
    const std::uint64_t aid = adapters ? adapters->transmit_id() : 0;
    if (h.adapter_id != aid)
        throw CompatibilityError("bitstream adapter binding " + std::to_string(h.adapter_id) +
                                 " does not match loaded adapters " + std::to_string(aid));

    ByteReader r(bytes.data(), bytes.size() - 8);
    // Skip the fixed header (4 + 2 + 8 + 8 + 4 + 4 + 1 bytes).
    char skip[31];
    r.raw(skip, 31);

    const std::uint32_t z_len = r.u32();
    std::vector<std::uint8_t> z_payload(z_len);
    r.raw(z_payload.data(), z_len);
    const std::uint32_t y_len = r.u32();
    std::vector<std::uint8_t> y_payload(y_len);
    r.raw(y_payload.data(), y_len);

    const int f = CodecModel::kDownsampleFactor;
    const int hp = ((static_cast<int>(h.height) + f - 1) / f) * f;
    const int wp = ((static_cast<int>(h.width) + f - 1) / f) * f;
    int y_h, y_w, z_h, z_w;
    latent_dims(hp, wp, &y_h, &y_w, &z_h, &z_w);

    Tensor z_hat_t({1, CodecModel::kHyperChannels, z_h, z_w});
    {
        RangeDecoder dec(z_payload.data(), z_payload.size());
        const auto zmodels = prior_models(model);
        const int spatial = z_h * z_w;
        for (int c = 0; c < CodecModel::kHyperChannels; ++c)
            for (int i = 0; i < spatial; ++i)
                z_hat_t.data[static_cast<std::size_t>(c) * spatial + i] =
                    static_cast<float>(dec.decode_symbol(zmodels[static_cast<std::size_t>(c)]));
    }

    NodePtr z_hat = make_const(z_hat_t);
    NodePtr mu, sigma;
    run_entropy_parameters(model, adapters, z_hat, y_h, y_w, /*merged_lora=*/true, &mu, &sigma);

    Tensor y_hat_t({1, CodecModel::kLatentChannels, y_h, y_w});
    {
        RangeDecoder dec(y_payload.data(), y_payload.size());
        for (std::size_t i = 0; i < y_hat_t.data.size(); ++i) {
            const double m = static_cast<double>(mu->value.data[i]);
            const double s = static_cast<double>(sigma->value.data[i]);
            y_hat_t.data[i] = static_cast<float>(dec.decode_symbol(gaussian_symbol_model(m, s)));
        }
    }

    NodePtr x_hat = run_synthesis(model, adapters, make_const(y_hat_t));
    return crop_image(x_hat->value, static_cast<int>(h.height), static_cast<int>(h.width));
}

}  // namespace liclab
