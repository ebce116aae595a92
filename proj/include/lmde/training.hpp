#pragma once

// Scale-invariant loss, cosine schedule, early stopping, AdamW and the fit loop.

#include "lmde/autodiff.hpp"
#include "lmde/dataset.hpp"
#include "lmde/image.hpp"
#include "lmde/model.hpp"
#include "lmde/params.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace lmde {

/// Over pixels with gt valid, gt > 0 and pred > 0: r_i = log d_i - log d^_i and
/// loss = mean((r_i - mean r)^2). No such pixel raises LossError.
double ssi_loss(const DepthMap& pred, const DepthMap& gt);

/// dL/dd^_i = (-2/n)(r_i - mean r)/d^_i on counted pixels, 0 elsewhere.
std::vector<double> ssi_loss_grad(const DepthMap& pred, const DepthMap& gt);

/// Differentiable form; `pred` is a column with one row per pixel of `gt`.
ad::Var ssi_loss(const ad::Var& pred, const DepthMap& gt);

/// lr_min + (lr0 - lr_min)(1 + cos(pi step / total)) / 2; steps past the end
/// give lr_min.
double cosine_lr(long step, long total_steps, double lr0, double lr_min);

enum class StopDecision { keep_going, stop };

/// Stops once the loss has failed to drop strictly below the best for
/// `patience` consecutive updates.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience = 5);

    StopDecision update(double val_loss);

    double best() const { return best_; }
    int bad_epochs() const { return bad_; }
    int patience() const { return patience_; }

private:
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    bool operator==(const AdamWConfig&) const = default;
};

/// Adaptive moments with decoupled weight decay over the trainable tensors of
/// a store. Tensors that are not trainable are never written.
class AdamW {
public:
    AdamW(ParamStore& store, const AdamWConfig& cfg);

    /// Applies one update from the accumulated gradients; tensors without a
    /// gradient only decay.
    void step(double lr);
    long steps() const { return t_; }

private:
    struct Slot {
        ad::Var var;
        Matrix m;
        Matrix v;
    };
    AdamWConfig cfg_;
    std::vector<Slot> slots_;
    long t_ = 0;
};

struct TrainConfig {
    int batch_size = 16;
    double lr0 = 1e-5;
    double lr_min_ratio = 0.01;  // lr_min = lr0 * ratio
    int epochs = 50;
    int patience = 5;
    AdamWConfig adam;
    /// Stops after this many optimizer steps when positive; the cosine
    /// schedule then spans min(max_steps, epochs * steps_per_epoch).
    long max_steps = 0;

    /// Throws ConfigError unless batch_size >= 1, patience >= 1 and epochs >= 1.
    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    bool stopped = false;
};

struct TrainState {
    long step = 0;
    int epoch = 0;
    EarlyStopper stopper;
};

struct FitResult {
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;  // training-mode batch loss per step
    long steps = 0;
    bool early_stopped = false;
};

/// Mean per-image SSI of the model in eval mode over `indices` of `pool`.
double evaluate_loss(DepthModel& model, const std::vector<SceneSample>& pool, const std::vector<std::size_t>& indices,
                     int batch_size);

/// Trains every trainable tensor of `model` on split.train. Each epoch visits
/// the training set in a seed-determined order; validation (falling back to
/// the epoch's mean training loss when split.val is empty) drives early
/// stopping, and the best-validation tensors are restored at exit. A
/// non-finite loss raises TrainError carrying the step index.
FitResult fit(DepthModel& model, const std::vector<SceneSample>& pool, const Split& split, const TrainConfig& cfg,
              std::uint64_t seed);

/// `epoch,train_loss,val_loss,lr,stopped` plus one row per epoch.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace lmde
