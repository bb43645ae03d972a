#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resdepth/checkpoint.hpp"
#include "resdepth/ortho.hpp"
#include "resdepth/sampling.hpp"
#include "resdepth/tensor.hpp"
#include "resdepth/unet.hpp"

namespace resdepth {

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-5;
    bool decoupled_weight_decay = false; // default: L2 folded into the gradient
    int batch_size = 20;
    double lr_drop_factor = 10.0;
    int lr_drop_epochs = 200; // 200 single-pair, 50 multi-pair
    int patience_epochs = 100;
    int max_epochs = 400;
    double early_stop_rel_tol = 1e-3;
    std::uint64_t seed = 0;
    bool augment = true;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// Stepped schedule: the base rate divided by factor^floor((epoch-1)/drop).
double lr_at_epoch(const TrainConfig& cfg, int epoch); // epoch is 1-based

// Standard Adam with bias correction; weight decay folded into the gradient
// (or decoupled when configured). Throws NumericError on non-finite grads.
template <typename T>
class Adam {
public:
    Adam(std::vector<ParamRef<T>> params, const TrainConfig& cfg);
    void step(double lr);
    std::int64_t steps() const { return t_; }

private:
    std::vector<ParamRef<T>> params_;
    TrainConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

// Mean absolute deviation over mask-valid pixels (valid: nonzero byte per
// pixel, n*h*w layout). Throws InputError when nothing is valid.
template <typename T>
double masked_l1(const Tensor4<T>& pred, const Tensor4<T>& target,
                 const std::vector<std::uint8_t>& valid);

// Loss plus d(loss)/d(pred): sign(pred - target) / n_valid on valid pixels.
template <typename T>
double masked_l1_grad(const Tensor4<T>& pred, const Tensor4<T>& target,
                      const std::vector<std::uint8_t>& valid, Tensor4<T>& d_pred);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool diverged = false;
};

// Supervised training loop: per-epoch shuffle + on-the-fly augmentation,
// stepped LR schedule, early stopping on the best validation loss, returns
// the checkpoint with minimal validation loss. Single-precision weights.
TrainResult train(const UNetConfig& model_cfg, const SampleSet& train_set,
                  const SampleSet& val_set, const TrainConfig& cfg, bool quiet = true);

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

// Full-raster inference: 50%-overlap tiles, triangular feathering of the
// metric residual, added to the input DSM. Grid header preserved.
Raster2D refine(const Checkpoint& ckpt, const Raster2D& dsm,
                const std::vector<Raster2D>& orthos);

// Cascade: refine, re-orthorectify the raw views against the refined DSM,
// refine again with the second checkpoint. One checkpoint = plain refine.
Raster2D refine_iterative(const std::vector<Checkpoint>& checkpoints, const Raster2D& dsm,
                          const std::vector<Raster2D>& raw_images,
                          const std::vector<ParallelCamera>& cameras);

} // namespace resdepth
