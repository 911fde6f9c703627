#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "liclab/codec.hpp"

namespace liclab {

// Structure variants for the transform adapters. Every variant initializes
// to an exact identity so a fresh adapter set is a bit-exact no-op.
enum class AdapterStructure : std::uint8_t {
    Conv1x1 = 0,  // default
    Gdn = 1,
    DepthwiseConv3x3 = 2,
    DepthwiseConv3x3PlusConv1x1 = 3,
    Conv3x3 = 4,
};

const char* adapter_structure_name(AdapterStructure s);
AdapterStructure adapter_structure_from_name(const std::string& name);

// Channel re-allocation block inserted after a transform stack.
struct ConvAdapter {
    std::string site;
    int channels = 0;
    AdapterStructure structure = AdapterStructure::Conv1x1;

    NodePtr w, b;             // conv variants; depthwise stage of the combo
    NodePtr w2, b2;           // pointwise stage of the combo
    NodePtr beta_v, gamma_v;  // gdn variant (nonneg raw storage)

    NodePtr apply(const NodePtr& latent) const;
    void collect_params(std::vector<Param>& out) const;
    std::size_t param_count() const;
};

// Additive low-rank update to a frozen 1x1 conv weight: W0' = W0 + B*A.
struct LoraAdapter {
    std::string site;
    int rank = 0, c_in = 0, c_out = 0;
    NodePtr a;  // [rank, c_in], Gaussian init
    NodePtr b;  // [c_out, rank], zero init

    NodePtr effective_weight(const NodePtr& w0) const;
    // Training path: base(x) + B(A(x)); agrees with the merged path to fp error.
    NodePtr apply_parallel(const ConvLayer& base, const NodePtr& x) const;
    NodePtr apply_merged(const ConvLayer& base, const NodePtr& x) const;
    void collect_params(std::vector<Param>& out) const;
    std::size_t param_count() const;
};

struct AdapterSet {
    std::string domain_name = "default";
    std::uint64_t base_model_id = 0;
    AdapterStructure structure = AdapterStructure::Conv1x1;
    int rank = 10;
    // [0..3] follow the g_a stacks, [4..7] follow the g_s stacks.
    std::vector<ConvAdapter> conv_adapters;
    // [0] -> g_ep.conv1, [1] -> g_ep.conv2.
    std::vector<LoraAdapter> lora_adapters;

    const ConvAdapter& analysis_adapter(int stack) const { return conv_adapters[static_cast<std::size_t>(stack)]; }
    const ConvAdapter& synthesis_adapter(int stack) const { return conv_adapters[static_cast<std::size_t>(4 + stack)]; }

    std::vector<Param> params() const;
    std::vector<Param> encoder_side_params() const;  // g_a adapters, kept local
    std::vector<Param> decoder_side_params() const;  // g_s adapters + LoRA, transmitted
    std::size_t param_count() const;

    void set_trainable(bool trainable);

    // LICA container. The local (encoder-side) section is optional; the
    // transmit section is always present.
    std::vector<std::uint8_t> serialize(bool include_local = true) const;
    static AdapterSet deserialize(const std::vector<std::uint8_t>& bytes, const CodecModel& model);
    void save(const std::string& path, bool include_local = true) const;
    static AdapterSet load(const std::string& path, const CodecModel& model);

    // Identity bound into bitstreams: hash of the transmit-section bytes, so
    // it is stable whether or not the local section is shipped.
    std::uint64_t transmit_id() const;
    std::size_t transmit_section_bytes() const;
};

// Builds identity-initialized adapters at all eight transform stacks and both
// g_ep convs, freezes the host model's params and marks adapter params
// trainable.
AdapterSet init_adapter_set(CodecModel& model, AdapterStructure structure, int rank,
                            std::uint64_t seed);

struct AdapterParamReport {
    std::size_t total_model_params = 0;
    std::size_t adapter_params = 0;
    std::size_t decoder_side_params = 0;
    double transmit_proportion = 0.0;  // decoder-side params / total model params
};
AdapterParamReport adapter_param_report(const AdapterSet& set, const CodecModel& model);

}  // namespace liclab
