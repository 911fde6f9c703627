#include "liclab/selftest.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "liclab/analysis.hpp"
#include "liclab/bitstream.hpp"
#include "liclab/coder.hpp"
#include "liclab/image_io.hpp"
#include "liclab/trainer.hpp"

namespace liclab::selftest {

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

Result check(const std::string& name, bool pass, const std::string& detail = "") {
    return {name, pass, detail};
}

Result conv_examples() {
    auto x = make_const(Tensor({1, 1, 1, 1}, 2.0f));
    auto w = make_const(Tensor({1, 1, 1, 1}, 1.0f));
    auto b = make_const(Tensor({1}));
    const bool identity = ops::conv2d(x, w, b, 1, 0)->value.data[0] == 2.0f;

    auto x9 = make_const(Tensor({1, 1, 3, 3}, 1.0f));
    auto w9 = make_const(Tensor({1, 1, 3, 3}, 1.0f));
    auto y9 = ops::conv2d(x9, w9, b, 1, 1);
    const bool window = y9->value.at(0, 0, 1, 1) == 9.0f && y9->value.at(0, 0, 0, 0) == 4.0f;
    return check("conv2d window sums", identity && window);
}

Result tconv_examples() {
    auto x = make_const(Tensor({1, 1, 2, 2}, 1.0f));
    auto w = make_const(Tensor({1, 1, 2, 2}, 1.0f));
    auto b = make_const(Tensor({1}));
    auto y = ops::tconv2d(x, w, b, 2, 0);
    bool ok = y->value.dims == std::vector<int>{1, 1, 4, 4};
    for (float v : y->value.data) ok = ok && v == 1.0f;
    return check("tconv2d disjoint tiling", ok);
}

Result gdn_identity() {
    Rng rng(11);
    Tensor x({2, 4, 3, 3});
    for (auto& v : x.data) v = rng.normal(0.0f, 1.0f);
    auto beta = make_const(Tensor({4}, 1.0f));
    auto gamma = make_const(Tensor({4, 4}, 0.0f));
    auto y = ops::gdn(make_const(x), beta, gamma, false);
    return check("gdn unit denominator", bit_equal(y->value, x));
}

Result quantize_examples() {
    Tensor v({3});
    v.data = {1.5f, -1.5f, 0.4f};
    Tensor q = quantize(v, QuantMode::Round, nullptr);
    return check("round half away from zero",
                 q.data[0] == 2.0f && q.data[1] == -2.0f && q.data[2] == 0.0f);
}

Result rate_examples() {
    const double b0 = gaussian_bin_bits(0.0, 0.0, 1.0);
    const bool gauss = std::abs(b0 - 1.38497) < 1e-3;
    const bool sym = gaussian_bin_bits(3.0, 0.0, 0.7) == gaussian_bin_bits(-3.0, 0.0, 0.7);
    double total = 0.0;
    for (int k = -30; k <= 30; ++k) total += gaussian_bin_probability(k, 0.0, 1.0);
    const bool sums = std::abs(total - 1.0) < 1e-6;
    const bool logi = std::abs(logistic_bin_bits(0.0, 0.0, 1.0) - 2.0296) < 1e-3;
    return check("bin-integrated likelihoods", gauss && sym && sums && logi,
                 "gauss=" + std::to_string(b0));
}

Result adam_first_step() {
    auto wnode = make_leaf(Tensor::scalar(1.0f), true);
    std::vector<Param> ps{{"w", wnode, true}};
    Adam opt(ps, 0.1f);
    opt.zero_grad();
    wnode->grad.data[0] = 1.0f;
    opt.step();
    const bool moved = std::abs(wnode->value.data[0] - 0.9f) < 1e-6f;
    opt.zero_grad();
    const float before = wnode->value.data[0];
    Adam opt2(ps, 0.1f);
    opt2.zero_grad();
    opt2.step();
    return check("adam first step / zero grad", moved && wnode->value.data[0] == before);
}

Result adapters_identity(std::uint64_t seed) {
    CodecModel model = CodecModel::init(seed);
    model.refresh_id();
    Rng rng(seed, 5);
    Tensor img({1, 3, 32, 32});
    for (auto& v : img.data) v = rng.uniform();
    auto base = codec_forward(model, nullptr, img, QuantMode::Round, nullptr);
    bool all_ok = true;
    std::string bad;
    for (auto s : {AdapterStructure::Conv1x1, AdapterStructure::Gdn, AdapterStructure::DepthwiseConv3x3,
                   AdapterStructure::DepthwiseConv3x3PlusConv1x1, AdapterStructure::Conv3x3}) {
        AdapterSet set = init_adapter_set(model, s, 10, seed);
        auto with = codec_forward(model, &set, img, QuantMode::Round, nullptr);
        const bool ok = bit_equal(with.x_hat->value, base.x_hat->value) &&
                        bit_equal(with.y_hat->value, base.y_hat->value) &&
                        bit_equal(with.mu->value, base.mu->value) &&
                        bit_equal(with.sigma->value, base.sigma->value);
        if (!ok) {
            all_ok = false;
            bad += std::string(adapter_structure_name(s)) + " ";
        }
    }
    return check("identity-at-init, all structures", all_ok, bad);
}

Result lora_paths(std::uint64_t seed) {
    CodecModel model = CodecModel::init(seed);
    model.refresh_id();
    AdapterSet set = init_adapter_set(model, AdapterStructure::Conv1x1, 10, seed);
    Rng rng(seed, 9);
    for (auto& l : set.lora_adapters)
        for (auto& v : l.b->value.data) v = rng.normal(0.0f, 0.05f);
    Tensor x({1, CodecModel::kEpFeatures, 4, 4});
    for (auto& v : x.data) v = rng.normal(0.0f, 1.0f);
    auto xin = make_const(x);
    auto merged = set.lora_adapters[0].apply_merged(model.ep1, xin);
    auto parallel = set.lora_adapters[0].apply_parallel(model.ep1, xin);
    double scale = 1e-4, max_rel = 0.0;
    for (float v : merged->value.data) scale = std::max(scale, static_cast<double>(std::abs(v)));
    for (std::size_t i = 0; i < merged->value.data.size(); ++i)
        max_rel = std::max(max_rel,
                           std::abs(static_cast<double>(merged->value.data[i]) - parallel->value.data[i]) / scale);
    return check("lora merged == parallel", max_rel <= 1e-5, "max_rel=" + std::to_string(max_rel));
}

Result coder_roundtrip(std::uint64_t seed) {
    Rng rng(seed, 13);
    std::vector<SymbolModel> models;
    std::vector<int> symbols;
    for (int i = 0; i < 20000; ++i) {
        const double mu = rng.normal(0.0f, 3.0f);
        const double sigma = 0.04 + 5.0 * rng.uniform();
        models.push_back(gaussian_symbol_model(mu, sigma));
        int v = static_cast<int>(std::lround(rng.normal(static_cast<float>(mu), static_cast<float>(sigma))));
        if (i % 977 == 0) v = 100000 + i;  // exercise the escape path
        symbols.push_back(v);
    }
    auto bytes = range_encode(symbols, [&](std::size_t i) -> const SymbolModel& { return models[i]; });
    auto back = range_decode(bytes, symbols.size(), [&](std::size_t i) -> const SymbolModel& { return models[i]; });
    return check("range coder lossless", back == symbols, std::to_string(bytes.size()) + " bytes");
}

Result bd_rate_fixtures() {
    RdCurve a;
    a.label = "anchor";
    for (int i = 0; i < 5; ++i) a.points.push_back({0.0, 0.1 * (i + 1), 30.0 + 2.0 * i});
    RdCurve same = a;
    const double zero = bd_rate(a, same);
    RdCurve scaled = a;
    for (auto& p : scaled.points) p.bpp *= 0.9;
    const double minus10 = bd_rate(a, scaled);
    return check("bd-rate fixtures", zero == 0.0 && std::abs(minus10 + 10.0) < 1e-9,
                 "identical=" + std::to_string(zero) + " scaled=" + std::to_string(minus10));
}

Result ppm_roundtrip(std::uint64_t seed) {
    Rng rng(seed, 17);
    Tensor img({3, 5, 7});
    for (auto& v : img.data) v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    auto bytes = encode_ppm(img);
    const bool ok = encode_ppm(decode_ppm(bytes)) == bytes;
    return check("ppm byte round-trip", ok);
}

Result split_examples() {
    std::vector<Tensor> s25(25, Tensor({3, 16, 16}));
    auto d25 = split_dataset(s25, 77);
    std::vector<Tensor> s5(5, Tensor({3, 16, 16}));
    auto d5 = split_dataset(s5, 77);
    return check("4:1 dataset split", d25.train.size() == 20 && d25.val.size() == 5 &&
                                          d5.train.size() == 4 && d5.val.size() == 1);
}

}  // namespace

std::vector<Result> run_all(std::uint64_t seed) {
    std::vector<Result> out;
    out.push_back(conv_examples());
    out.push_back(tconv_examples());
    out.push_back(gdn_identity());
    out.push_back(quantize_examples());
    out.push_back(rate_examples());
    out.push_back(adam_first_step());
    out.push_back(adapters_identity(seed));
    out.push_back(lora_paths(seed));
    out.push_back(coder_roundtrip(seed));
    out.push_back(bd_rate_fixtures());
    out.push_back(ppm_roundtrip(seed));
    out.push_back(split_examples());
    return out;
}

bool all_passed(const std::vector<Result>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace liclab::selftest
