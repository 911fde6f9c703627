#include "liclab/adapters.hpp"

#include <cmath>
#include <cstring>

#include "liclab/io.hpp"

namespace liclab {

namespace {

constexpr std::uint16_t kAdapterVersion = 1;
constexpr float kGdnBetaMin = 1e-6f;
constexpr float kGammaIdentityV = 0x1p-18f;
constexpr float kLoraInitStd = 0.01f;  // the paper says only "Gaussian"

NodePtr trainable_leaf(Tensor t) { return make_leaf(std::move(t), true); }

Tensor identity_1x1(int c) {
    Tensor w({c, c, 1, 1});
    for (int i = 0; i < c; ++i) w.data[static_cast<std::size_t>(i) * c + i] = 1.0f;
    return w;
}

Tensor identity_3x3(int c) {
    Tensor w({c, c, 3, 3});
    for (int i = 0; i < c; ++i) w.data[(static_cast<std::size_t>(i) * c + i) * 9 + 4] = 1.0f;
    return w;
}

Tensor identity_depthwise3x3(int c) {
    Tensor w({c, 1, 3, 3});
    for (int i = 0; i < c; ++i) w.data[static_cast<std::size_t>(i) * 9 + 4] = 1.0f;
    return w;
}

}  // namespace

const char* adapter_structure_name(AdapterStructure s) {
    switch (s) {
        case AdapterStructure::Conv1x1: return "conv1x1";
        case AdapterStructure::Gdn: return "gdn";
        case AdapterStructure::DepthwiseConv3x3: return "dwconv3x3";
        case AdapterStructure::DepthwiseConv3x3PlusConv1x1: return "dwconv3x3+conv1x1";
        case AdapterStructure::Conv3x3: return "conv3x3";
    }
    throw ConfigError("unknown adapter structure code");
}

AdapterStructure adapter_structure_from_name(const std::string& name) {
    for (auto s : {AdapterStructure::Conv1x1, AdapterStructure::Gdn, AdapterStructure::DepthwiseConv3x3,
                   AdapterStructure::DepthwiseConv3x3PlusConv1x1, AdapterStructure::Conv3x3})
        if (name == adapter_structure_name(s)) return s;
    throw ConfigError("unknown adapter structure: " + name);
}

NodePtr ConvAdapter::apply(const NodePtr& latent) const {
    if (latent->value.ndim() != 4 || latent->value.dims[1] != channels)
        throw DimensionError("adapter " + site + " channel axis: expected " + std::to_string(channels) +
                             ", got input " + latent->value.shape_str());
    switch (structure) {
        case AdapterStructure::Conv1x1:
            return ops::conv2d(latent, w, b, 1, 0);
        case AdapterStructure::Conv3x3:
            return ops::conv2d(latent, w, b, 1, 1);
        case AdapterStructure::DepthwiseConv3x3:
            return ops::depthwise_conv2d(latent, w, b, 1);
        case AdapterStructure::DepthwiseConv3x3PlusConv1x1:
            return ops::conv2d(ops::depthwise_conv2d(latent, w, b, 1), w2, b2, 1, 0);
        case AdapterStructure::Gdn:
            return ops::gdn(latent, ops::nonneg(beta_v, kGdnBetaMin), ops::nonneg(gamma_v, 0.0f), false);
    }
    throw ConfigError("unknown adapter structure code");
}

void ConvAdapter::collect_params(std::vector<Param>& out) const {
    switch (structure) {
        case AdapterStructure::Conv1x1:
        case AdapterStructure::Conv3x3:
        case AdapterStructure::DepthwiseConv3x3:
            out.push_back({site + ".w", w, w->requires_grad});
            out.push_back({site + ".b", b, b->requires_grad});
            break;
        case AdapterStructure::DepthwiseConv3x3PlusConv1x1:
            out.push_back({site + ".dw.w", w, w->requires_grad});
            out.push_back({site + ".dw.b", b, b->requires_grad});
            out.push_back({site + ".pw.w", w2, w2->requires_grad});
            out.push_back({site + ".pw.b", b2, b2->requires_grad});
            break;
        case AdapterStructure::Gdn:
            out.push_back({site + ".beta", beta_v, beta_v->requires_grad});
            out.push_back({site + ".gamma", gamma_v, gamma_v->requires_grad});
            break;
    }
}

std::size_t ConvAdapter::param_count() const {
    std::vector<Param> ps;
    collect_params(ps);
    std::size_t n = 0;
    for (const auto& p : ps) n += p.node->value.numel();
    return n;
}

NodePtr LoraAdapter::effective_weight(const NodePtr& w0) const {
    const auto& wd = w0->value.dims;
    if (wd.size() != 4 || wd[2] != 1 || wd[3] != 1)
        throw DimensionError("lora host weight must be a 1x1 conv, got " + w0->value.shape_str());
    if (wd[0] != c_out || wd[1] != c_in)
        throw DimensionError("lora " + site + " shape: host " + w0->value.shape_str() + ", adapter " +
                             std::to_string(c_out) + "x" + std::to_string(c_in));
    NodePtr dw = ops::matmul(b, a);  // [c_out, c_in]
    return ops::add(w0, ops::reshape(dw, {c_out, c_in, 1, 1}));
}

NodePtr LoraAdapter::apply_parallel(const ConvLayer& base, const NodePtr& x) const {
    NodePtr main = ops::conv2d(x, base.weight, base.bias, 1, 0);
    NodePtr down = ops::conv2d(x, ops::reshape(a, {rank, c_in, 1, 1}), nullptr, 1, 0);
    NodePtr up = ops::conv2d(down, ops::reshape(b, {c_out, rank, 1, 1}), nullptr, 1, 0);
    return ops::add(main, up);
}

NodePtr LoraAdapter::apply_merged(const ConvLayer& base, const NodePtr& x) const {
    return ops::conv2d(x, effective_weight(base.weight), base.bias, 1, 0);
}

void LoraAdapter::collect_params(std::vector<Param>& out) const {
    out.push_back({site + ".lora.A", a, a->requires_grad});
    out.push_back({site + ".lora.B", b, b->requires_grad});
}

std::size_t LoraAdapter::param_count() const { return a->value.numel() + b->value.numel(); }

namespace {

ConvAdapter build_conv_adapter(const std::string& site, int channels, AdapterStructure structure) {
    if (channels <= 0)
        throw ConfigError("adapter site " + site + " has unknown channel count; structure " +
                          std::string(adapter_structure_name(structure)) + " cannot be built");
    ConvAdapter ad;
    ad.site = site;
    ad.channels = channels;
    ad.structure = structure;
    switch (structure) {
        case AdapterStructure::Conv1x1:
            ad.w = trainable_leaf(identity_1x1(channels));
            ad.b = trainable_leaf(Tensor({channels}));
            break;
        case AdapterStructure::Conv3x3:
            ad.w = trainable_leaf(identity_3x3(channels));
            ad.b = trainable_leaf(Tensor({channels}));
            break;
        case AdapterStructure::DepthwiseConv3x3:
            ad.w = trainable_leaf(identity_depthwise3x3(channels));
            ad.b = trainable_leaf(Tensor({channels}));
            break;
        case AdapterStructure::DepthwiseConv3x3PlusConv1x1:
            ad.w = trainable_leaf(identity_depthwise3x3(channels));
            ad.b = trainable_leaf(Tensor({channels}));
            ad.w2 = trainable_leaf(identity_1x1(channels));
            ad.b2 = trainable_leaf(Tensor({channels}));
            break;
        case AdapterStructure::Gdn:
            ad.beta_v = trainable_leaf(Tensor({channels}, 1.0f));
            ad.gamma_v = trainable_leaf(Tensor({channels, channels}, kGammaIdentityV));
            break;
    }
    return ad;
}

LoraAdapter build_lora_adapter(const std::string& site, const ConvLayer& host, int rank, Rng rng) {
    const auto& wd = host.weight->value.dims;
    LoraAdapter la;
    la.site = site;
    la.c_out = wd[0];
    la.c_in = wd[1];
    la.rank = rank;
    if (rank < 1 || rank > std::min(la.c_in, la.c_out))
        throw ConfigError("lora rank " + std::to_string(rank) + " out of range for " + site + " (" +
                          std::to_string(la.c_in) + "->" + std::to_string(la.c_out) + ")");
    Tensor at({rank, la.c_in});
    for (auto& v : at.data) v = rng.normal(0.0f, kLoraInitStd);
    la.a = trainable_leaf(std::move(at));
    la.b = trainable_leaf(Tensor({la.c_out, rank}));  // zero: delta-W starts at exactly 0
    return la;
}

AdapterSet build_adapter_set(const CodecModel& model, AdapterStructure structure, int rank,
                             std::uint64_t seed) {
    AdapterSet set;
    set.structure = structure;
    set.rank = rank;
    set.base_model_id = model.model_id;
    Rng rng(seed, /*stream=*/0xADA97);
    for (int i = 0; i < CodecModel::kStacks; ++i)
        set.conv_adapters.push_back(build_conv_adapter("g_a.stack" + std::to_string(i + 1) + ".adapter",
                                                       model.analysis_channels(i), structure));
    for (int i = 0; i < CodecModel::kStacks; ++i)
        set.conv_adapters.push_back(build_conv_adapter("g_s.stack" + std::to_string(i + 1) + ".adapter",
                                                       model.synthesis_channels(i), structure));
    set.lora_adapters.push_back(build_lora_adapter("g_ep.conv1", model.ep1, rank, rng.fork("lora1")));
    set.lora_adapters.push_back(build_lora_adapter("g_ep.conv2", model.ep2, rank, rng.fork("lora2")));
    return set;
}

}  // namespace

std::vector<Param> AdapterSet::params() const {
    std::vector<Param> out;
    for (const auto& a : conv_adapters) a.collect_params(out);
    for (const auto& l : lora_adapters) l.collect_params(out);
    return out;
}

std::vector<Param> AdapterSet::encoder_side_params() const {
    std::vector<Param> out;
    for (const auto& a : conv_adapters)
        if (a.site.rfind("g_a.", 0) == 0) a.collect_params(out);
    return out;
}

std::vector<Param> AdapterSet::decoder_side_params() const {
    std::vector<Param> out;
    for (const auto& a : conv_adapters)
        if (a.site.rfind("g_a.", 0) != 0) a.collect_params(out);
    for (const auto& l : lora_adapters) l.collect_params(out);
    return out;
}

std::size_t AdapterSet::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.node->value.numel();
    return n;
}

void AdapterSet::set_trainable(bool trainable) {
    for (auto& p : params()) p.node->requires_grad = trainable;
}

std::vector<std::uint8_t> AdapterSet::serialize(bool include_local) const {
    ByteWriter w;
    w.raw("LICA", 4);
    w.u16(kAdapterVersion);
    w.u64(base_model_id);
    w.str16(domain_name);
    w.u8(static_cast<std::uint8_t>(structure));
    w.u8(static_cast<std::uint8_t>(rank));

    const auto transmit = decoder_side_params();
    w.u32(static_cast<std::uint32_t>(transmit.size()));
    for (const auto& p : transmit) w.tensor(p.name, p.node->value);

    const auto local = include_local ? encoder_side_params() : std::vector<Param>{};
    w.u32(static_cast<std::uint32_t>(local.size()));
    for (const auto& p : local) w.tensor(p.name, p.node->value);

    w.u64(fnv1a64(w.bytes().data(), w.size()));
    return w.take();
}

std::size_t AdapterSet::transmit_section_bytes() const {
    ByteWriter w;
    const auto transmit = decoder_side_params();
    w.u32(static_cast<std::uint32_t>(transmit.size()));
    for (const auto& p : transmit) w.tensor(p.name, p.node->value);
    return w.size();
}

std::uint64_t AdapterSet::transmit_id() const {
    ByteWriter w;
    const auto transmit = decoder_side_params();
    w.u32(static_cast<std::uint32_t>(transmit.size()));
    for (const auto& p : transmit) w.tensor(p.name, p.node->value);
    return fnv1a64(w.bytes().data(), w.size());
}

AdapterSet AdapterSet::deserialize(const std::vector<std::uint8_t>& bytes, const CodecModel& model) {
    if (bytes.size() < 22) throw FormatError("adapter file too small");
    const std::uint64_t stored = fnv1a64(bytes.data(), bytes.size() - 8);
    ByteReader tail(bytes.data() + bytes.size() - 8, 8);
    if (tail.u64() != stored) throw FormatError("adapter file hash mismatch (corrupted file)");

    ByteReader r(bytes.data(), bytes.size() - 8);
    char magic[4];
    r.raw(magic, 4);
    if (std::string(magic, 4) != "LICA") throw FormatError("not an adapter file (bad magic)");
    if (r.u16() != kAdapterVersion) throw FormatError("unsupported adapter file version");
    const std::uint64_t base_id = r.u64();
    if (base_id != model.model_id)
        throw CompatibilityError("adapter file was trained for model " + std::to_string(base_id) +
                                 ", loaded model is " + std::to_string(model.model_id));
    const std::string domain = r.str16();
    const auto structure = static_cast<AdapterStructure>(r.u8());
    const int rank = r.u8();

    AdapterSet set = build_adapter_set(model, structure, rank, /*seed=*/0);
    set.domain_name = domain;
    set.base_model_id = base_id;

    auto fill_section = [&r](const std::vector<Param>& expected, bool allow_empty) {
        const std::uint32_t count = r.u32();
        if (count == 0 && allow_empty) return;
        if (count != expected.size())
            throw FormatError("adapter section tensor count " + std::to_string(count) + ", expected " +
                              std::to_string(expected.size()));
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name;
            Tensor t = r.tensor(&name);
            if (name != expected[i].name)
                throw FormatError("adapter tensor " + name + " out of order, expected " + expected[i].name);
            if (!expected[i].node->value.same_shape(t))
                throw FormatError("adapter tensor " + name + " has shape " + t.shape_str() +
                                  ", expected " + expected[i].node->value.shape_str());
            expected[i].node->value = std::move(t);
        }
    };
    fill_section(set.decoder_side_params(), /*allow_empty=*/false);
    fill_section(set.encoder_side_params(), /*allow_empty=*/true);
    set.set_trainable(false);
    return set;
}

void AdapterSet::save(const std::string& path, bool include_local) const {
    write_file(path, serialize(include_local));
}

AdapterSet AdapterSet::load(const std::string& path, const CodecModel& model) {
    return deserialize(read_file(path), model);
}

AdapterSet init_adapter_set(CodecModel& model, AdapterStructure structure, int rank,
                            std::uint64_t seed) {
    if (model.model_id == 0) model.refresh_id();
    AdapterSet set = build_adapter_set(model, structure, rank, seed);
    model.set_trainable(false);
    set.set_trainable(true);
    return set;
}

AdapterParamReport adapter_param_report(const AdapterSet& set, const CodecModel& model) {
    AdapterParamReport rep;
    for (const auto& p : model.params()) rep.total_model_params += p.node->value.numel();
    rep.adapter_params = set.param_count();
    for (const auto& p : set.decoder_side_params()) rep.decoder_side_params += p.node->value.numel();
    rep.transmit_proportion =
        rep.total_model_params == 0
            ? 0.0
            : static_cast<double>(rep.decoder_side_params) / static_cast<double>(rep.total_model_params);
    return rep;
}

}  // namespace liclab
