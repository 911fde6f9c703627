#pragma once

#include <string>
#include <vector>

#include "liclab/adapters.hpp"

namespace liclab {

// Few-shot target-domain samples, split 4:1 into train/validation.
struct FewShotDataset {
    std::vector<Tensor> train;  // [3, H, W]
    std::vector<Tensor> val;
    int patch = 64;
    int batch = 4;
};

// train = round(0.8 * N); deterministic shuffle per seed.
FewShotDataset split_dataset(const std::vector<Tensor>& samples, std::uint64_t seed, int patch = 64,
                             int batch = 4);

struct StagePlan {
    // Stage-1 schedule, stepped down on validation plateau.
    std::vector<float> lr_stages = {50e-5f, 10e-5f, 7.5e-5f, 5e-5f, 2.5e-5f, 1e-5f};
    int max_epochs = 60;  // per stage; the full-scale recipe uses {250, 500, 750}
    int patience = 0;     // 0 -> max_epochs / 10
    float lambda = 0.0067f;
    float stage2_lr = 5e-4f;
    std::uint64_t seed = 1;
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double train_rate_y = 0, train_rate_z = 0, train_mse = 0, train_loss = 0;
    double val_rate_y = 0, val_rate_z = 0, val_mse = 0, val_loss = 0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    double initial_val_loss = 0.0;
    double best_val_loss = 0.0;
    int best_epoch = 0;  // 0 = the entry state
    bool aborted_non_finite = false;
    // epoch, split, rate_y, rate_z, mse, loss
    std::string to_csv() const;
};

// Stage 1 (joint RD): optimizes every adapter param with additive-noise
// quantization and the rd_loss objective, phi frozen. Validation runs in
// Round mode; the best-validation adapter state (entry included) is restored
// on return.
TrainHistory train_stage1(const CodecModel& model, AdapterSet& adapters, const FewShotDataset& data,
                          const StagePlan& plan);

// Stage 2 (reconstruction): freezes everything except the Stack-4 synthesis
// adapter, switches quantization to rounding, and minimizes distortion only.
// Rates of any fixed input are untouched by construction. Best checkpoint by
// validation MSE.
TrainHistory train_stage2(const CodecModel& model, AdapterSet& adapters, const FewShotDataset& data,
                          const StagePlan& plan);

struct AdaptReport {
    int n_samples = 0;
    float lambda = 0.0f;
    double baseline_val_loss = 0.0;  // frozen model, Round mode
    double adapted_val_loss = 0.0;
    double adapted_val_bpp = 0.0;
    double adapted_val_psnr = 0.0;
    TrainHistory stage1, stage2;
};

// End-to-end few-shot adaptation: split -> identity-init adapters ->
// stage 1 -> stage 2. Uses the first `n` samples; lambda and seed come from
// the plan.
AdapterSet adapt(CodecModel& model, const std::vector<Tensor>& samples, int n, const StagePlan& plan,
                 AdapterStructure structure = AdapterStructure::Conv1x1, int rank = 10,
                 int patch = 64, int batch = 4, AdaptReport* report = nullptr);

}  // namespace liclab
