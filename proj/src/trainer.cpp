#include "liclab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace liclab {

namespace {

Tensor center_crop16(const Tensor& img) {
    const int f = CodecModel::kDownsampleFactor;
    const int h = (img.dims[1] / f) * f;
    const int w = (img.dims[2] / f) * f;
    if (h < f || w < f) throw ConfigError("image smaller than " + std::to_string(f) + " pixels");
    const int oy = (img.dims[1] - h) / 2;
    const int ox = (img.dims[2] - w) / 2;
    Tensor out({1, 3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out.at(0, c, i, j) =
                    img.data[(static_cast<std::size_t>(c) * img.dims[1] + (oy + i)) * img.dims[2] + (ox + j)];
    return out;
}

struct ValStats {
    double rate_y_bpp = 0, rate_z_bpp = 0, mse = 0, loss = 0;
};

// Deterministic Round-mode evaluation, averaged per image.
ValStats evaluate(const CodecModel& model, const AdapterSet* adapters, const std::vector<Tensor>& images,
                  float lambda) {
    ValStats s;
    for (const auto& img : images) {
        const Tensor x = center_crop16(img);
        auto fwd = codec_forward(model, adapters, x, QuantMode::Round, nullptr);
        auto parts = rd_loss(fwd, x, lambda);
        s.rate_y_bpp += parts.bpp_y;
        s.rate_z_bpp += parts.bpp_z;
        s.mse += parts.mse;
        s.loss += parts.total;
    }
    const double n = static_cast<double>(images.size());
    s.rate_y_bpp /= n;
    s.rate_z_bpp /= n;
    s.mse /= n;
    s.loss /= n;
    return s;
}

std::vector<Tensor> snapshot_params(const std::vector<Param>& params) {
    std::vector<Tensor> vals;
    vals.reserve(params.size());
    for (const auto& p : params) vals.push_back(p.node->value);
    return vals;
}

void restore_params(const std::vector<Param>& params, const std::vector<Tensor>& vals) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].node->value = vals[i];
}

Tensor make_batch(const std::vector<Tensor>& images, const std::vector<int>& order, std::size_t first,
                  std::size_t count, int patch, Rng& rng) {
    Tensor batch({static_cast<int>(count), 3, patch, patch});
    for (std::size_t b = 0; b < count; ++b) {
        const auto& img = images[static_cast<std::size_t>(order[(first + b) % order.size()])];
        if (img.dims[1] < patch || img.dims[2] < patch)
            throw ConfigError("training image smaller than patch size " + std::to_string(patch));
        const int oy = rng.uniform_int(0, img.dims[1] - patch);
        const int ox = rng.uniform_int(0, img.dims[2] - patch);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < patch; ++i)
                for (int j = 0; j < patch; ++j)
                    batch.at(static_cast<int>(b), c, i, j) =
                        img.data[(static_cast<std::size_t>(c) * img.dims[1] + (oy + i)) * img.dims[2] +
                                 (ox + j)];
    }
    return batch;
}

enum class StageKind { JointRd, DistortionOnly };

TrainHistory run_stage(const CodecModel& model, AdapterSet& adapters, const FewShotDataset& data,
                       const StagePlan& plan, StageKind kind) {
    if (data.train.empty() || data.val.empty()) throw ConfigError("dataset has an empty split");

    const auto all_params = adapters.params();
    Adam opt(all_params, kind == StageKind::JointRd ? plan.lr_stages.at(0) : plan.stage2_lr);
    const int patience = plan.patience > 0 ? plan.patience : std::max(plan.max_epochs / 10, 1);

    // Stage metric: full RD loss for the joint stage, plain MSE afterwards.
    auto metric = [&](const ValStats& s) { return kind == StageKind::JointRd ? s.loss : s.mse; };

    TrainHistory hist;
    ValStats entry = evaluate(model, &adapters, data.val, plan.lambda);
    hist.initial_val_loss = metric(entry);
    hist.best_val_loss = hist.initial_val_loss;
    hist.best_epoch = 0;
    std::vector<Tensor> best = snapshot_params(all_params);

    Rng stage_rng(plan.seed, kind == StageKind::JointRd ? 0x57A6E1ull : 0x57A6E2ull);
    std::size_t lr_stage = 0;
    int since_improve = 0;

    for (int epoch = 1; epoch <= plan.max_epochs; ++epoch) {
        Rng epoch_rng = stage_rng.fork(static_cast<std::uint64_t>(epoch));
        std::vector<int> order(data.train.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(epoch_rng.uniform_int(0, static_cast<int>(i) - 1))]);

        double ep_rate_y = 0, ep_rate_z = 0, ep_mse = 0, ep_loss = 0;
        int nbatches = 0;
        bool bad = false;
        for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(data.batch)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(data.batch), order.size() - first);
            Tensor batch = make_batch(data.train, order, first, count, data.patch, epoch_rng);

            NodePtr loss_node;
            double bpp_y = 0, bpp_z = 0, msev = 0, total = 0;
            if (kind == StageKind::JointRd) {
                Rng noise = epoch_rng.fork("noise").fork(static_cast<std::uint64_t>(first));
                auto fwd = codec_forward(model, &adapters, batch, QuantMode::AdditiveNoise, &noise);
                auto parts = rd_loss(fwd, batch, plan.lambda);
                loss_node = parts.loss;
                bpp_y = parts.bpp_y;
                bpp_z = parts.bpp_z;
                msev = parts.mse;
                total = parts.total;
            } else {
                auto fwd = codec_forward(model, &adapters, batch, QuantMode::Round, nullptr);
                loss_node = ops::mse(fwd.x_hat, fwd.x);
                auto b = fwd.bundle();
                const double npix = static_cast<double>(batch.dims[0]) * batch.dims[2] * batch.dims[3];
                bpp_y = b.rate_y_bits / npix;
                bpp_z = b.rate_z_bits / npix;
                msev = loss_node->scalar();
                total = msev;
            }
            if (!std::isfinite(total)) {
                std::fprintf(stderr, "trainer: non-finite loss at epoch %d, keeping best checkpoint\n", epoch);
                hist.aborted_non_finite = true;
                bad = true;
                break;
            }
            opt.zero_grad();
            backward(loss_node);
            opt.step();
            ep_rate_y += bpp_y;
            ep_rate_z += bpp_z;
            ep_mse += msev;
            ep_loss += total;
            ++nbatches;
        }
        if (bad) break;

        ValStats val = evaluate(model, &adapters, data.val, plan.lambda);
        EpochStats es;
        es.epoch = epoch;
        es.train_rate_y = ep_rate_y / nbatches;
        es.train_rate_z = ep_rate_z / nbatches;
        es.train_mse = ep_mse / nbatches;
        es.train_loss = ep_loss / nbatches;
        es.val_rate_y = val.rate_y_bpp;
        es.val_rate_z = val.rate_z_bpp;
        es.val_mse = val.mse;
        es.val_loss = kind == StageKind::JointRd ? val.loss : val.mse;
        hist.epochs.push_back(es);

        if (metric(val) < hist.best_val_loss) {
            hist.best_val_loss = metric(val);
            hist.best_epoch = epoch;
            best = snapshot_params(all_params);
            since_improve = 0;
        } else {
            ++since_improve;
        }
        if (kind == StageKind::JointRd && since_improve >= patience && lr_stage + 1 < plan.lr_stages.size()) {
            ++lr_stage;
            opt.set_lr(plan.lr_stages[lr_stage]);
            since_improve = 0;
            if (plan.verbose) std::fprintf(stderr, "trainer: lr -> %.2e at epoch %d\n",
                                           static_cast<double>(plan.lr_stages[lr_stage]), epoch);
        }
        if (plan.verbose && (epoch % 10 == 0 || epoch == plan.max_epochs))
            std::fprintf(stderr, "trainer: %s epoch %3d train %.5f val %.5f best %.5f\n",
                         kind == StageKind::JointRd ? "stage1" : "stage2", epoch, es.train_loss,
                         es.val_loss, hist.best_val_loss);
    }

    restore_params(all_params, best);
    return hist;
}

}  // namespace

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os << "epoch,split,rate_y,rate_z,mse,loss\n";
    char line[160];
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof line, "%d,train,%.6f,%.6f,%.8f,%.6f\n", e.epoch, e.train_rate_y,
                      e.train_rate_z, e.train_mse, e.train_loss);
        os << line;
        std::snprintf(line, sizeof line, "%d,val,%.6f,%.6f,%.8f,%.6f\n", e.epoch, e.val_rate_y,
                      e.val_rate_z, e.val_mse, e.val_loss);
        os << line;
    }
    return os.str();
}

FewShotDataset split_dataset(const std::vector<Tensor>& samples, std::uint64_t seed, int patch,
                             int batch) {
    if (samples.size() < 5)
        throw ConfigError("few-shot adaptation needs at least 5 samples, got " +
                          std::to_string(samples.size()));
    const int n = static_cast<int>(samples.size());
    const int n_train = static_cast<int>(std::lround(0.8 * n));
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, /*stream=*/0x5911);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

    FewShotDataset ds;
    ds.patch = patch;
    ds.batch = batch;
    for (int i = 0; i < n; ++i) {
        const auto& img = samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (img.ndim() != 3 || img.dims[0] != 3) throw ConfigError("samples must be 3xHxW images");
        (i < n_train ? ds.train : ds.val).push_back(img);
    }
    return ds;
}

TrainHistory train_stage1(const CodecModel& model, AdapterSet& adapters, const FewShotDataset& data,
                          const StagePlan& plan) {
    model.set_trainable(false);
    adapters.set_trainable(true);
    return run_stage(model, adapters, data, plan, StageKind::JointRd);
}

TrainHistory train_stage2(const CodecModel& model, AdapterSet& adapters, const FewShotDataset& data,
                          const StagePlan& plan) {
    model.set_trainable(false);
    // Delta-theta: only the Stack-4 synthesis adapter stays trainable.
    for (auto& p : adapters.params()) {
        const bool t = p.name.rfind("g_s.stack4.adapter", 0) == 0;
        p.node->requires_grad = t;
    }
    return run_stage(model, adapters, data, plan, StageKind::DistortionOnly);
}

AdapterSet adapt(CodecModel& model, const std::vector<Tensor>& samples, int n, const StagePlan& plan,
                 AdapterStructure structure, int rank, int patch, int batch, AdaptReport* report) {
    if (n < 5) throw ConfigError("adapt needs n >= 5, got " + std::to_string(n));
    if (static_cast<int>(samples.size()) < n)
        throw ConfigError("adapt: " + std::to_string(samples.size()) + " samples provided, n = " +
                          std::to_string(n));
    std::vector<Tensor> subset(samples.begin(), samples.begin() + n);
    FewShotDataset data = split_dataset(subset, plan.seed, patch, batch);

    AdapterSet adapters = init_adapter_set(model, structure, rank, plan.seed);
    adapters.domain_name = "adapted-n" + std::to_string(n);

    AdaptReport rep;
    rep.n_samples = n;
    rep.lambda = plan.lambda;
    rep.baseline_val_loss = evaluate(model, nullptr, data.val, plan.lambda).loss;
    rep.stage1 = train_stage1(model, adapters, data, plan);
    rep.stage2 = train_stage2(model, adapters, data, plan);
    ValStats fin = evaluate(model, &adapters, data.val, plan.lambda);
    rep.adapted_val_loss = fin.loss;
    rep.adapted_val_bpp = fin.rate_y_bpp + fin.rate_z_bpp;
    rep.adapted_val_psnr = psnr_from_mse(fin.mse);
    if (report) *report = rep;
    return adapters;
}

}  // namespace liclab
