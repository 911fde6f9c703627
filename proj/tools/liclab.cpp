// liclab: desk-scale learned-image-compression lab.
// Subcommands: pretrain, adapt, encode, decode, analyze, bdrate, gen-data,
// selftest. Exit codes: 0 ok, 1 usage/config, 2 data/format, 3 numerical.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "liclab/analysis.hpp"
#include "liclab/bitstream.hpp"
#include "liclab/config.hpp"
#include "liclab/datagen.hpp"
#include "liclab/image_io.hpp"
#include "liclab/io.hpp"
#include "liclab/kernels.hpp"
#include "liclab/selftest.hpp"
#include "liclab/trainer.hpp"

namespace fs = std::filesystem;
using namespace liclab;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
};

Config resolve_config(const CommonArgs& c) {
    Config cfg = c.config_path.empty() ? Config{} : Config::from_file(c.config_path);
    for (const auto& o : c.overrides) cfg.apply_override(o);
    return cfg;
}

void guard_output(const std::string& path, bool force) {
    if (path.empty()) throw ConfigError("missing output path (--out)");
    if (!force && file_exists(path))
        throw ConfigError("refusing to overwrite " + path + " (use --force)");
}

void echo_sidecar(const std::string& out_path, const Config& cfg) {
    write_text_file(out_path + ".cfg", cfg.to_text());
}

std::vector<Tensor> images_from(const Config& cfg, const std::string& images_dir,
                                const std::string& domain, int count, std::uint64_t seed) {
    if (!images_dir.empty()) return load_image_dir(images_dir);
    if (domain.empty()) throw ConfigError("need --images <dir> or --domain <name>");
    DomainSpec spec;
    spec.kind = domain_kind_from_name(domain);
    spec.seed = seed;
    spec.width = cfg.get_int("image_width", 96);
    spec.height = cfg.get_int("image_height", 96);
    spec.cell = cfg.get_int("cell", 8);
    return generate(spec, count);
}

int cmd_pretrain(const CommonArgs& common, const std::string& out, const std::string& images_dir,
                 const std::string& domain) {
    Config cfg = resolve_config(common);
    guard_output(out, common.force);

    PretrainConfig pc;
    pc.steps = cfg.get_int("steps", 2500);
    pc.batch = cfg.get_int("batch", 4);
    pc.patch = cfg.get_int("patch", 48);
    pc.lr = static_cast<float>(cfg.get_double("lr", 1e-4));
    pc.lambda = static_cast<float>(cfg.get_double("lambda", 0.0067));
    pc.seed = cfg.get_u64("seed", 1);
    pc.verbose = cfg.get_int("verbose", 1) != 0;

    auto images = images_from(cfg, images_dir, domain.empty() ? "smooth" : domain,
                              cfg.get_int("source_count", 48), pc.seed + 1000);
    std::printf("pretrain: %zu source images, steps=%d patch=%d lambda=%.4f seed=%llu\n",
                images.size(), pc.steps, pc.patch, static_cast<double>(pc.lambda),
                static_cast<unsigned long long>(pc.seed));
    CodecModel model = pretrain_baseline(images, pc);
    model.save(out);
    echo_sidecar(out, cfg);
    std::printf("pretrain: wrote %s (model_id %016llx)\n", out.c_str(),
                static_cast<unsigned long long>(model.model_id));
    return 0;
}

int cmd_adapt(const CommonArgs& common, const std::string& model_path, const std::string& out,
              const std::string& images_dir, const std::string& domain, int n_samples, double lambda,
              const std::string& structure, int rank, std::uint64_t seed) {
    Config cfg = resolve_config(common);
    if (n_samples > 0) cfg.set("n", std::to_string(n_samples));
    if (lambda > 0) cfg.set("lambda", std::to_string(lambda));
    if (!structure.empty()) cfg.set("structure", structure);
    if (rank > 0) cfg.set("rank", std::to_string(rank));
    if (seed != 0) cfg.set("seed", std::to_string(seed));
    guard_output(out, common.force);

    CodecModel model = CodecModel::load(model_path);
    StagePlan plan;
    plan.lambda = static_cast<float>(cfg.get_double("lambda", model.lambda()));
    plan.seed = cfg.get_u64("seed", 1);
    plan.max_epochs = cfg.get_int("epochs", 60);
    plan.patience = cfg.get_int("patience", 0);
    plan.stage2_lr = static_cast<float>(cfg.get_double("stage2_lr", 5e-4));
    plan.verbose = cfg.get_int("verbose", 1) != 0;
    {
        const auto lrs = cfg.get_list("lr_stages", {50e-5, 10e-5, 7.5e-5, 5e-5, 2.5e-5, 1e-5});
        plan.lr_stages.assign(lrs.begin(), lrs.end());
    }
    const int n = cfg.get_int("n", 25);
    const int patch = cfg.get_int("patch", 64);
    const int batch = cfg.get_int("batch", 4);
    const auto structure_kind = adapter_structure_from_name(cfg.get_str("structure", "conv1x1"));
    const int rank_n = cfg.get_int("rank", 10);

    auto samples = images_from(cfg, images_dir, domain, n, plan.seed + 2000);
    std::printf("adapt: n=%d lambda=%.4f structure=%s rank=%d seed=%llu epochs=%d\n", n,
                static_cast<double>(plan.lambda), adapter_structure_name(structure_kind), rank_n,
                static_cast<unsigned long long>(plan.seed), plan.max_epochs);

    AdaptReport report;
    AdapterSet set = adapt(model, samples, n, plan, structure_kind, rank_n, patch, batch, &report);
    set.domain_name = domain.empty() ? "folder" : domain;
    set.save(out, /*include_local=*/true);
    echo_sidecar(out, cfg);
    write_text_file(out + ".stage1.csv", report.stage1.to_csv());
    write_text_file(out + ".stage2.csv", report.stage2.to_csv());

    auto rep = adapter_param_report(set, model);
    std::printf("adapt: wrote %s (adapter_id %016llx)\n", out.c_str(),
                static_cast<unsigned long long>(set.transmit_id()));
    std::printf("adapt: baseline val loss %.5f -> adapted %.5f (bpp %.4f, psnr %.2f dB)\n",
                report.baseline_val_loss, report.adapted_val_loss, report.adapted_val_bpp,
                report.adapted_val_psnr);
    std::printf("adapt: transmit %zu params / model %zu params = %.3f%%\n", rep.decoder_side_params,
                rep.total_model_params, 100.0 * rep.transmit_proportion);
    return 0;
}

int cmd_encode(const CommonArgs& common, const std::string& model_path, const std::string& adapters_path,
               const std::string& input, const std::string& out) {
    Config cfg = resolve_config(common);
    guard_output(out, common.force);
    CodecModel model = CodecModel::load(model_path);
    std::optional<AdapterSet> set;
    if (!adapters_path.empty()) set.emplace(AdapterSet::load(adapters_path, model));
    Tensor img = read_ppm(input);
    auto enc = encode_image(model, set ? &*set : nullptr, img);
    write_file(out, enc.bytes);
    echo_sidecar(out, cfg);
    std::printf("encode: %s -> %s  %zu bytes  bpp %.4f  psnr %.2f dB\n", input.c_str(), out.c_str(),
                enc.bytes.size(), enc.bpp, enc.psnr);
    return 0;
}

int cmd_decode(const CommonArgs& common, const std::string& model_path, const std::string& adapters_path,
               const std::string& input, const std::string& out) {
    guard_output(out, common.force);
    CodecModel model = CodecModel::load(model_path);
    std::optional<AdapterSet> set;
    if (!adapters_path.empty()) set.emplace(AdapterSet::load(adapters_path, model));
    Tensor img = decode_image(model, set ? &*set : nullptr, read_file(input));
    write_ppm(out, img);
    std::printf("decode: %s -> %s  (%dx%d)\n", input.c_str(), out.c_str(), img.dims[2], img.dims[1]);
    return 0;
}

int cmd_analyze(const CommonArgs& common, const std::string& model_path, const std::string& adapters_path,
                const std::string& images_dir, const std::string& domain, int count,
                const std::string& out_prefix) {
    Config cfg = resolve_config(common);
    if (out_prefix.empty()) throw ConfigError("missing output prefix (--out)");
    CodecModel model = CodecModel::load(model_path);
    std::optional<AdapterSet> set;
    if (!adapters_path.empty()) set.emplace(AdapterSet::load(adapters_path, model));
    const AdapterSet* ad = set ? &*set : nullptr;
    auto images = images_from(cfg, images_dir, domain, count, cfg.get_u64("seed", 1) + 3000);

    auto stats = channel_stats(model, ad, images);
    write_text_file(out_prefix + ".channels.csv", channel_stats_to_csv(stats));

    // spectrum + HE/LE channel reconstructions of the first image
    const Tensor& first = images.front();
    write_pgm(out_prefix + ".spectrum.pgm", spectrum_for_export(fft_magnitude(luma601(first))));

    const int ch = CodecModel::kLatentChannels;
    std::vector<int> high(stats.order.begin(), stats.order.begin() + ch / 4);
    std::vector<int> low(stats.order.end() - ch / 2, stats.order.end());
    Tensor he = reconstruct_from_channels(model, ad, first, high);
    Tensor le = reconstruct_from_channels(model, ad, first, low);
    write_ppm(out_prefix + ".recon_he.ppm", signed_for_export(he));
    write_ppm(out_prefix + ".recon_le.ppm", signed_for_export(le));

    double le_mag = 0.0;
    for (float v : le.data) le_mag += std::abs(v);
    le_mag /= static_cast<double>(le.data.size());
    std::printf(
        "analyze: %zu images;  mean |LE recon| %.6f;  wrote %s.{channels.csv,spectrum.pgm,recon_he.ppm,recon_le.ppm}\n",
        images.size(), le_mag, out_prefix.c_str());
    return 0;
}

int cmd_bdrate(const std::string& anchor_csv, const std::string& test_csv, const std::string& out,
               bool force) {
    std::ifstream fa(anchor_csv), ft(test_csv);
    if (!fa) throw DataError("cannot open " + anchor_csv);
    if (!ft) throw DataError("cannot open " + test_csv);
    std::stringstream sa, st;
    sa << fa.rdbuf();
    st << ft.rdbuf();
    RdCurve anchor = rd_curve_from_csv(sa.str(), fs::path(anchor_csv).stem().string());
    RdCurve test = rd_curve_from_csv(st.str(), fs::path(test_csv).stem().string());
    const double bd = bd_rate(anchor, test);
    std::printf("bd-rate(%s -> %s) = %+.4f%%\n", anchor.label.c_str(), test.label.c_str(), bd);
    if (!out.empty()) {
        guard_output(out, force);
        char buf[160];
        std::snprintf(buf, sizeof buf, "anchor,test,bd_rate_percent\n%s,%s,%.6f\n",
                      anchor.label.c_str(), test.label.c_str(), bd);
        write_text_file(out, buf);
    }
    return 0;
}

int cmd_gen_data(const CommonArgs& common, const std::string& domain, int count, int width, int height,
                 int cell, std::uint64_t seed, const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("missing output directory (--out)");
    DomainSpec spec;
    spec.kind = domain_kind_from_name(domain);
    spec.seed = seed;
    spec.width = width;
    spec.height = height;
    spec.cell = cell;
    fs::create_directories(out_dir);
    auto images = generate(spec, count);
    for (int i = 0; i < count; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%04d.ppm", domain_kind_name(spec.kind), i);
        const std::string path = (fs::path(out_dir) / name).string();
        if (!common.force && file_exists(path))
            throw ConfigError("refusing to overwrite " + path + " (use --force)");
        write_ppm(path, images[static_cast<std::size_t>(i)]);
    }
    std::printf("gen-data: wrote %d %s images (%dx%d) under %s\n", count, domain_kind_name(spec.kind),
                width, height, out_dir.c_str());
    return 0;
}

int cmd_selftest(std::uint64_t seed) {
    const auto results = selftest::run_all(seed);
    for (const auto& r : results)
        std::printf("[%s] %-36s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    if (!selftest::all_passed(results)) {
        std::printf("selftest: FAILURES\n");
        return 3;
    }
    std::printf("selftest: all %zu checks passed\n", results.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    kernels::apply_thread_cap_env();

    CLI::App app{"liclab: few-shot domain adaptation lab for learned image compression"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "key=value config file");
    app.add_option("--set", common.overrides, "config override key=value (repeatable)");
    app.add_flag("--force", common.force, "overwrite existing outputs");

    std::string model_path, adapters_path, input, out, images_dir, domain, structure, anchor_csv,
        test_csv;
    int n_samples = 0, count = 25, width = 96, height = 96, cell = 8, rank = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;

    auto* pre = app.add_subcommand("pretrain", "train the baseline micro-codec");
    pre->add_option("--out", out)->required();
    pre->add_option("--images", images_dir, "source-domain .ppm folder");
    pre->add_option("--domain", domain, "generated source domain (default smooth)");

    auto* ad = app.add_subcommand("adapt", "few-shot adaptation of a pretrained model");
    ad->add_option("--model", model_path)->required();
    ad->add_option("--out", out)->required();
    ad->add_option("--images", images_dir, "target-domain .ppm folder");
    ad->add_option("--domain", domain, "generated target domain");
    ad->add_option("--n-samples", n_samples, "number of target samples N");
    ad->add_option("--lambda", lambda);
    ad->add_option("--structure", structure, "conv1x1|gdn|dwconv3x3|dwconv3x3+conv1x1|conv3x3");
    ad->add_option("--rank", rank, "LoRA rank");
    ad->add_option("--seed", seed);

    auto* enc = app.add_subcommand("encode", "compress a PPM image to a bitstream");
    enc->add_option("--model", model_path)->required();
    enc->add_option("--adapters", adapters_path);
    enc->add_option("--input", input)->required();
    enc->add_option("--out", out)->required();

    auto* dec = app.add_subcommand("decode", "decompress a bitstream to a PPM image");
    dec->add_option("--model", model_path)->required();
    dec->add_option("--adapters", adapters_path);
    dec->add_option("--input", input)->required();
    dec->add_option("--out", out)->required();

    auto* ana = app.add_subcommand("analyze", "channel energy, spectra, HE/LE reconstructions");
    ana->add_option("--model", model_path)->required();
    ana->add_option("--adapters", adapters_path);
    ana->add_option("--images", images_dir);
    ana->add_option("--domain", domain);
    ana->add_option("--count", count);
    ana->add_option("--out", out, "output prefix")->required();

    auto* bd = app.add_subcommand("bdrate", "BD-rate between two rd-curve CSV files");
    bd->add_option("--anchor", anchor_csv)->required();
    bd->add_option("--test", test_csv)->required();
    bd->add_option("--out", out, "optional report csv");

    auto* gen = app.add_subcommand("gen-data", "write synthetic domain images");
    gen->add_option("--domain", domain)->required();
    gen->add_option("--count", count);
    gen->add_option("--width", width);
    gen->add_option("--height", height);
    gen->add_option("--cell", cell);
    gen->add_option("--seed", seed);
    gen->add_option("--out", out, "output directory")->required();

    auto* self = app.add_subcommand("selftest", "run the built-in invariant suite");
    self->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) return cmd_pretrain(common, out, images_dir, domain);
        if (ad->parsed())
            return cmd_adapt(common, model_path, out, images_dir, domain, n_samples, lambda, structure,
                             rank, seed);
        if (enc->parsed()) return cmd_encode(common, model_path, adapters_path, input, out);
        if (dec->parsed()) return cmd_decode(common, model_path, adapters_path, input, out);
        if (ana->parsed())
            return cmd_analyze(common, model_path, adapters_path, images_dir, domain, count, out);
        if (bd->parsed()) return cmd_bdrate(anchor_csv, test_csv, out, common.force);
        if (gen->parsed())
            return cmd_gen_data(common, domain, count, width, height, cell, seed == 0 ? 1 : seed, out);
        if (self->parsed()) return cmd_selftest(seed == 0 ? 7 : seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "liclab: %s\n", e.what());
        return 1;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "liclab: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        // data / format / compatibility / dimension problems
        std::fprintf(stderr, "liclab: %s\n", e.what());
        return 2;
    }
    return 1;
}
