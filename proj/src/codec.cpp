#include "liclab/codec.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "liclab/adapters.hpp"
#include "liclab/io.hpp"

namespace liclab {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;
constexpr float kGdnBetaMin = 1e-6f;
constexpr float kGammaIdentityV = 0x1p-18f;  // nonneg storage for an exact zero

// Analysis convs and hyper convs: k5 s2 p2. Synthesis tconvs: k6 s2 p2,
// the even-kernel counterpart that doubles the extent exactly.
constexpr int kConvK = 5, kConvPad = 2;
constexpr int kTconvK = 6, kTconvPad = 2;

int down2(int n) { return (n + 2 * kConvPad - kConvK) / 2 + 1; }

NodePtr param_leaf(Tensor t) { return make_leaf(std::move(t), false); }

Tensor he_normal(std::vector<int> dims, int fan_in, Rng rng) {
    Tensor t(std::move(dims));
    const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (auto& v : t.data) v = rng.normal(0.0f, std);
    return t;
}

Tensor normal_init(std::vector<int> dims, float std, Rng rng) {
    Tensor t(std::move(dims));
    for (auto& v : t.data) v = rng.normal(0.0f, std);
    return t;
}

ConvLayer make_conv(int c_in, int c_out, int k, int stride, int pad, Rng rng, float wstd = -1.0f) {
    ConvLayer l;
    if (wstd > 0.0f)
        l.weight = param_leaf(normal_init({c_out, c_in, k, k}, wstd, rng.fork("w")));
    else
        l.weight = param_leaf(he_normal({c_out, c_in, k, k}, c_in * k * k, rng.fork("w")));
    l.bias = param_leaf(Tensor({c_out}));
    l.stride = stride;
    l.pad = pad;
    return l;
}

ConvLayer make_tconv(int c_in, int c_out, int k, int stride, int pad, Rng rng) {
    ConvLayer l;
    l.weight = param_leaf(he_normal({c_in, c_out, k, k}, c_in * k * k / (stride * stride), rng.fork("w")));
    l.bias = param_leaf(Tensor({c_out}));
    l.stride = stride;
    l.pad = pad;
    return l;
}

GdnParams make_gdn(int ch) {
    GdnParams g;
    g.beta_v = param_leaf(Tensor({ch}, 1.0f));
    Tensor gv({ch, ch}, kGammaIdentityV);
    const float diag_v = std::sqrt(0.1f + 0x1p-36f);
    for (int i = 0; i < ch; ++i) gv.data[static_cast<std::size_t>(i) * ch + i] = diag_v;
    g.gamma_v = param_leaf(std::move(gv));
    return g;
}

NodePtr gdn_apply(const NodePtr& x, const GdnParams& g, bool inverse) {
    return ops::gdn(x, ops::nonneg(g.beta_v, kGdnBetaMin), ops::nonneg(g.gamma_v, 0.0f), inverse);
}

void collect_conv(std::vector<Param>& out, const std::string& prefix, const ConvLayer& l) {
    out.push_back({prefix + ".weight", l.weight, l.weight->requires_grad});
    out.push_back({prefix + ".bias", l.bias, l.bias->requires_grad});
}

void collect_gdn(std::vector<Param>& out, const std::string& prefix, const GdnParams& g) {
    out.push_back({prefix + ".beta", g.beta_v, g.beta_v->requires_grad});
    out.push_back({prefix + ".gamma", g.gamma_v, g.gamma_v->requires_grad});
}

}  // namespace

CodecModel CodecModel::init(std::uint64_t seed) {
    Rng root(seed, /*stream=*/0x11C0DEC);
    CodecModel m;
    const int c = 32;
    const int lat = kLatentChannels;
    const int hyp = kHyperChannels;

    const int ga_in[kStacks] = {3, c, c, c};
    const int ga_out[kStacks] = {c, c, c, lat};
    for (int i = 0; i < kStacks; ++i) {
        const std::string tag = "g_a.stack" + std::to_string(i + 1);
        m.g_a[static_cast<std::size_t>(i)].conv =
            make_conv(ga_in[i], ga_out[i], kConvK, 2, kConvPad, root.fork(tag));
        m.g_a[static_cast<std::size_t>(i)].gdn = make_gdn(ga_out[i]);
    }
    const int gs_in[kStacks] = {lat, c, c, c};
    const int gs_out[kStacks] = {c, c, c, 3};
    for (int i = 0; i < kStacks; ++i) {
        const std::string tag = "g_s.stack" + std::to_string(i + 1);
        m.g_s[static_cast<std::size_t>(i)].igdn = make_gdn(gs_in[i]);
        m.g_s[static_cast<std::size_t>(i)].tconv =
            make_tconv(gs_in[i], gs_out[i], kTconvK, 2, kTconvPad, root.fork(tag));
    }
    m.h_a1 = make_conv(lat, hyp, kConvK, 2, kConvPad, root.fork("h_a.conv1"));
    m.h_a2 = make_conv(hyp, hyp, kConvK, 2, kConvPad, root.fork("h_a.conv2"));
    m.h_s1 = make_tconv(hyp, kEpFeatures, kTconvK, 2, kTconvPad, root.fork("h_s.tconv1"));
    m.h_s2 = make_tconv(kEpFeatures, kEpFeatures, kTconvK, 2, kTconvPad, root.fork("h_s.tconv2"));
    m.ep1 = make_conv(kEpFeatures, kEpHidden, 1, 1, 0, root.fork("g_ep.conv1"));
    // Small init keeps mu near 0 and sigma = exp(~0) near 1 at the start.
    m.ep2 = make_conv(kEpHidden, 2 * lat, 1, 1, 0, root.fork("g_ep.conv2"), 0.01f);
    m.prior_loc = param_leaf(Tensor({hyp}));
    m.prior_log_scale = param_leaf(Tensor({hyp}));
    m.meta_lambda = param_leaf(Tensor::scalar(0.0067f));
    Tensor presets({6});
    const float lp[6] = {0.0018f, 0.0035f, 0.0067f, 0.0130f, 0.0250f, 0.0483f};
    for (int i = 0; i < 6; ++i) presets.data[static_cast<std::size_t>(i)] = lp[i];
    m.meta_lambda_presets = param_leaf(std::move(presets));
    return m;
}

std::vector<Param> CodecModel::params() const {
    std::vector<Param> out;
    for (int i = 0; i < kStacks; ++i) {
        const std::string tag = "g_a.stack" + std::to_string(i + 1);
        collect_conv(out, tag + ".conv", g_a[static_cast<std::size_t>(i)].conv);
        collect_gdn(out, tag + ".gdn", g_a[static_cast<std::size_t>(i)].gdn);
    }
    for (int i = 0; i < kStacks; ++i) {
        const std::string tag = "g_s.stack" + std::to_string(i + 1);
        collect_gdn(out, tag + ".igdn", g_s[static_cast<std::size_t>(i)].igdn);
        collect_conv(out, tag + ".tconv", g_s[static_cast<std::size_t>(i)].tconv);
    }
    collect_conv(out, "h_a.conv1", h_a1);
    collect_conv(out, "h_a.conv2", h_a2);
    collect_conv(out, "h_s.tconv1", h_s1);
    collect_conv(out, "h_s.tconv2", h_s2);
    collect_conv(out, "g_ep.conv1", ep1);
    collect_conv(out, "g_ep.conv2", ep2);
    out.push_back({"prior.loc", prior_loc, prior_loc->requires_grad});
    out.push_back({"prior.log_scale", prior_log_scale, prior_log_scale->requires_grad});
    out.push_back({"meta.lambda", meta_lambda, false});
    out.push_back({"meta.lambda_presets", meta_lambda_presets, false});
    return out;
}

void CodecModel::set_trainable(bool trainable) const {
    for (auto& p : params()) {
        const bool t = trainable && p.name.rfind("meta.", 0) != 0;
        p.node->requires_grad = t;
    }
}

int CodecModel::analysis_channels(int stack) const {
    return g_a[static_cast<std::size_t>(stack)].conv.weight->value.dims[0];
}

int CodecModel::synthesis_channels(int stack) const {
    return g_s[static_cast<std::size_t>(stack)].tconv.weight->value.dims[1];
}

std::vector<std::uint8_t> CodecModel::serialize() const {
    ByteWriter w;
    w.raw("LICM", 4);
    w.u16(kCheckpointVersion);
    const auto ps = params();
    w.u32(static_cast<std::uint32_t>(ps.size()));
    for (const auto& p : ps) w.tensor(p.name, p.node->value);
    w.u64(fnv1a64(w.bytes().data(), w.size()));
    return w.take();
}

CodecModel CodecModel::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 14) throw FormatError("checkpoint too small");
    const std::uint64_t stored = fnv1a64(bytes.data(), bytes.size() - 8);
    ByteReader tail(bytes.data() + bytes.size() - 8, 8);
    if (tail.u64() != stored) throw FormatError("checkpoint hash mismatch (corrupted file)");

    ByteReader r(bytes.data(), bytes.size() - 8);
    char magic[4];
    r.raw(magic, 4);
    if (std::string(magic, 4) != "LICM") throw FormatError("not a model checkpoint (bad magic)");
    if (r.u16() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");

    CodecModel m = init(0);
    auto ps = m.params();
    std::map<std::string, NodePtr> by_name;
    for (auto& p : ps) by_name[p.name] = p.node;

    const std::uint32_t count = r.u32();
    if (count != ps.size())
        throw FormatError("checkpoint param count " + std::to_string(count) + ", expected " +
                          std::to_string(ps.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor t = r.tensor(&name);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("unknown param in checkpoint: " + name);
        if (!it->second->value.same_shape(t))
            throw FormatError("param " + name + " has shape " + t.shape_str() + ", expected " +
                              it->second->value.shape_str());
        it->second->value = std::move(t);
    }
    m.model_id = stored;
    return m;
}

void CodecModel::save(const std::string& path) {
    const auto bytes = serialize();
    model_id = fnv1a64(bytes.data(), bytes.size() - 8);
    write_file(path, bytes);
}

CodecModel CodecModel::load(const std::string& path) { return deserialize(read_file(path)); }

std::uint64_t CodecModel::refresh_id() {
    const auto bytes = serialize();
    model_id = fnv1a64(bytes.data(), bytes.size() - 8);
    return model_id;
}

void latent_dims(int h, int w, int* y_h, int* y_w, int* z_h, int* z_w) {
    if (y_h) *y_h = h / CodecModel::kDownsampleFactor;
    if (y_w) *y_w = w / CodecModel::kDownsampleFactor;
    if (z_h) *z_h = down2(down2(h / CodecModel::kDownsampleFactor));
    if (z_w) *z_w = down2(down2(w / CodecModel::kDownsampleFactor));
}

NodePtr run_analysis(const CodecModel& model, const AdapterSet* adapters, const NodePtr& x) {
    NodePtr cur = x;
    for (int i = 0; i < CodecModel::kStacks; ++i) {
        const auto& st = model.g_a[static_cast<std::size_t>(i)];
        cur = ops::conv2d(cur, st.conv.weight, st.conv.bias, st.conv.stride, st.conv.pad);
        cur = gdn_apply(cur, st.gdn, false);
        if (adapters) cur = adapters->analysis_adapter(i).apply(cur);
    }
    return cur;
}

NodePtr run_hyper_analysis(const CodecModel& model, const NodePtr& y) {
    NodePtr cur = ops::relu(ops::conv2d(y, model.h_a1.weight, model.h_a1.bias, 2, kConvPad));
    cur = ops::relu(ops::conv2d(cur, model.h_a2.weight, model.h_a2.bias, 2, kConvPad));
    return cur;
}

void run_entropy_parameters(const CodecModel& model, const AdapterSet* adapters,
                            const NodePtr& z_hat, int y_h, int y_w, bool merged_lora, NodePtr* mu,
                            NodePtr* sigma) {
    NodePtr cur = ops::relu(ops::tconv2d(z_hat, model.h_s1.weight, model.h_s1.bias, 2, kTconvPad));
    cur = ops::relu(ops::tconv2d(cur, model.h_s2.weight, model.h_s2.bias, 2, kTconvPad));
    // The hyper path rounds extents up; trim to the latent grid.
    cur = ops::crop2d(cur, y_h, y_w);
    if (adapters) {
        const auto& l1 = adapters->lora_adapters[0];
        const auto& l2 = adapters->lora_adapters[1];
        cur = merged_lora ? l1.apply_merged(model.ep1, cur) : l1.apply_parallel(model.ep1, cur);
        cur = ops::relu(cur);
        cur = merged_lora ? l2.apply_merged(model.ep2, cur) : l2.apply_parallel(model.ep2, cur);
    } else {
        cur = ops::relu(ops::conv2d(cur, model.ep1.weight, model.ep1.bias, 1, 0));
        cur = ops::conv2d(cur, model.ep2.weight, model.ep2.bias, 1, 0);
    }
    const int lat = CodecModel::kLatentChannels;
    *mu = ops::slice_channels(cur, 0, lat);
    *sigma = ops::exp_clamp(ops::slice_channels(cur, lat, 2 * lat), kSigmaMin, kSigmaMax);
}

NodePtr run_synthesis(const CodecModel& model, const AdapterSet* adapters, const NodePtr& y_hat) {
    NodePtr cur = y_hat;
    for (int i = 0; i < CodecModel::kStacks; ++i) {
        const auto& st = model.g_s[static_cast<std::size_t>(i)];
        cur = gdn_apply(cur, st.igdn, true);
        cur = ops::tconv2d(cur, st.tconv.weight, st.tconv.bias, st.tconv.stride, st.tconv.pad);
        if (adapters) cur = adapters->synthesis_adapter(i).apply(cur);
    }
    return cur;
}

NodePtr prior_scale_node(const CodecModel& model) {
    return ops::exp_clamp(model.prior_log_scale, kSigmaMin, kSigmaMax);
}

namespace {

Tensor uniform_noise(const std::vector<int>& dims, Rng& rng) {
    Tensor t(dims);
    for (auto& v : t.data) v = rng.uniform() - 0.5f;
    return t;
}

}  // namespace

Tensor quantize(const Tensor& v, QuantMode qmode, Rng* rng) {
    Tensor out(v.dims);
    if (qmode == QuantMode::AdditiveNoise) {
        if (!rng) throw ConfigError("additive-noise quantization needs an rng");
        for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i] + (rng->uniform() - 0.5f);
    } else {
        for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = std::round(v.data[i]);
    }
    return out;
}

namespace {

ForwardResult forward_impl(const CodecModel& model, const AdapterSet* adapters, const Tensor& x,
                           QuantMode qmode, Rng* rng, const Tensor* fixed_ny, const Tensor* fixed_nz) {
    if (x.ndim() != 4 || x.dims[1] != 3)
        throw DimensionError("codec input must be Bx3xHxW, got " + x.shape_str());
    if (x.dims[2] % CodecModel::kDownsampleFactor != 0 || x.dims[3] % CodecModel::kDownsampleFactor != 0)
        throw DimensionError("codec input extents must be divisible by " +
                             std::to_string(CodecModel::kDownsampleFactor) + ", got " + x.shape_str() +
                             "; pad the image first");
    if (qmode == QuantMode::AdditiveNoise && !rng && !fixed_ny)
        throw ConfigError("additive-noise forward needs an rng or fixed noise");

    ForwardResult f;
    f.x = make_const(x);
    f.y = run_analysis(model, adapters, f.x);
    const auto& yd = f.y->value.dims;

    if (qmode == QuantMode::AdditiveNoise)
        f.y_hat = ops::add_const(f.y, fixed_ny ? *fixed_ny : uniform_noise(yd, *rng));
    else
        f.y_hat = ops::round_quantize(f.y);

    f.z = run_hyper_analysis(model, f.y);
    if (qmode == QuantMode::AdditiveNoise)
        f.z_hat = ops::add_const(f.z, fixed_nz ? *fixed_nz : uniform_noise(f.z->value.dims, *rng));
    else
        f.z_hat = ops::round_quantize(f.z);

    run_entropy_parameters(model, adapters, f.z_hat, yd[2], yd[3],
                           /*merged_lora=*/qmode == QuantMode::Round, &f.mu, &f.sigma);
    f.rate_y_bits = ops::gaussian_bits_total(f.y_hat, f.mu, f.sigma);
    f.rate_z_bits = ops::logistic_bits_total(f.z_hat, model.prior_loc, prior_scale_node(model));
    f.x_hat = run_synthesis(model, adapters, f.y_hat);
    return f;
}

}  // namespace

ForwardResult codec_forward(const CodecModel& model, const AdapterSet* adapters, const Tensor& x,
                            QuantMode qmode, Rng* rng) {
    return forward_impl(model, adapters, x, qmode, rng, nullptr, nullptr);
}

ForwardResult codec_forward_with_noise(const CodecModel& model, const AdapterSet* adapters,
                                       const Tensor& x, const Tensor& noise_y,
                                       const Tensor& noise_z) {
    return forward_impl(model, adapters, x, QuantMode::AdditiveNoise, nullptr, &noise_y, &noise_z);
}

LatentBundle ForwardResult::bundle() const {
    LatentBundle b;
    b.y = y->value;
    b.z = z->value;
    b.y_hat = y_hat->value;
    b.z_hat = z_hat->value;
    b.mu = mu->value;
    b.sigma = sigma->value;
    b.rate_y_bits = rate_y_bits->scalar();
    b.rate_z_bits = rate_z_bits->scalar();
    return b;
}

RdLoss rd_loss(const ForwardResult& f, const Tensor& x, float lambda) {
    const auto& d = x.dims;
    const double npix = static_cast<double>(d[0]) * d[2] * d[3];
    NodePtr mse_node = ops::mse(f.x_hat, f.x);
    NodePtr loss = ops::add(ops::add(ops::scale(f.rate_y_bits, 1.0 / npix), ops::scale(f.rate_z_bits, 1.0 / npix)),
                            ops::scale(mse_node, static_cast<double>(lambda) * 255.0 * 255.0));
    RdLoss out;
    out.loss = loss;
    out.bpp_y = f.rate_y_bits->scalar() / npix;
    out.bpp_z = f.rate_z_bits->scalar() / npix;
    out.mse = mse_node->scalar();
    out.total = loss->scalar();
    return out;
}

double psnr_from_mse(double mse) { return 10.0 * std::log10(1.0 / std::max(mse, 1e-12)); }

CodecModel pretrain_baseline(const std::vector<Tensor>& images, const PretrainConfig& cfg) {
    if (images.empty()) throw ConfigError("pretrain needs at least one image");
    if (cfg.patch % CodecModel::kDownsampleFactor != 0)
        throw ConfigError("pretrain patch size must be divisible by 16");
    for (const auto& img : images)
        if (img.ndim() != 3 || img.dims[0] != 3 || img.dims[1] < cfg.patch || img.dims[2] < cfg.patch)
            throw ConfigError("pretrain images must be 3xHxW with H,W >= patch size");

    CodecModel model = CodecModel::init(cfg.seed);
    model.set_lambda(cfg.lambda);
    model.set_trainable(true);
    Adam opt(model.params(), cfg.lr);

    Rng run_rng(cfg.seed, /*stream=*/0x91E7EA1);
    Rng batch_rng = run_rng.fork("batches");

    for (int step = 0; step < cfg.steps; ++step) {
        const double frac = static_cast<double>(step) / std::max(cfg.steps, 1);
        if (frac < 0.60)
            opt.set_lr(cfg.lr);
        else if (frac < 0.75)
            opt.set_lr(0.3f * cfg.lr);
        else if (frac < 0.90)
            opt.set_lr(0.1f * cfg.lr);
        else
            opt.set_lr(0.01f * cfg.lr);

        Tensor batch({cfg.batch, 3, cfg.patch, cfg.patch});
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& img = images[static_cast<std::size_t>(
                batch_rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
            const int oy = batch_rng.uniform_int(0, img.dims[1] - cfg.patch);
            const int ox = batch_rng.uniform_int(0, img.dims[2] - cfg.patch);
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < cfg.patch; ++i)
                    for (int j = 0; j < cfg.patch; ++j)
                        batch.at(b, c, i, j) = img.data[(static_cast<std::size_t>(c) * img.dims[1] +
                                                         (oy + i)) * img.dims[2] + (ox + j)];
        }

        Rng noise_rng = run_rng.fork("noise").fork(static_cast<std::uint64_t>(step));
        auto fwd = codec_forward(model, nullptr, batch, QuantMode::AdditiveNoise, &noise_rng);
        auto loss = rd_loss(fwd, batch, cfg.lambda);
        if (!std::isfinite(loss.total))
            throw NumericalError("pretrain loss became non-finite at step " + std::to_string(step) +
                                 " (bpp_y=" + std::to_string(loss.bpp_y) +
                                 ", bpp_z=" + std::to_string(loss.bpp_z) +
                                 ", mse=" + std::to_string(loss.mse) + ")");
        opt.zero_grad();
        backward(loss.loss);
        opt.step();

        if (cfg.verbose && (step % 100 == 0 || step == cfg.steps - 1))
            std::printf("pretrain step %5d  lr %.2e  loss %8.4f  bpp %6.4f  mse %.6f\n", step,
                        static_cast<double>(opt.lr()), loss.total, loss.bpp_y + loss.bpp_z, loss.mse);
    }

    model.set_trainable(false);
    model.refresh_id();
    return model;
}

}  // namespace liclab
