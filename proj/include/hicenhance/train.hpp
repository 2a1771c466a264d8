#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hicenhance/model.hpp"

namespace hicenhance::train {

struct TrainConfig {
    int batch_size = 64;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 100;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;   // epochs between ".latest" snapshots; 0 = best-only
    double grad_clip = 0.0;     // global-norm clip; 0 disables
    double weight_decay = 0.0;  // decoupled decay; 0 disables
    bool drop_zero_targets = false;

    void validate() const;  // lr >= 0, 0 <= beta < 1, batch/epochs >= 1
};

/// One training example: a low-coverage input patch and its target, both
/// [side, side] in [0, 1].
struct Sample {
    Tensor input, target;
};
using Dataset = std::vector<Sample>;

/// Per-parameter first/second moment estimates, allocated to match the
/// model's parameter registry order.
struct OptimizerState {
    std::vector<Tensor> m, v;
    long step = 0;

    static OptimizerState make(const std::vector<ad::ParamRef>& params);
};

/// Plain mean absolute difference over all entries. Shape mismatch throws.
double l1_value(const Tensor& pred, const Tensor& target);

/// One bias-corrected Adam update from the gradients currently accumulated
/// in the registry; increments the step counter.
void adam_step(const std::vector<ad::ParamRef>& params, OptimizerState& state,
               const TrainConfig& cfg);

struct HistoryRow {
    long step = 0;  // optimizer steps taken so far
    int epoch = 0;
    double train_l1 = 0.0;
    double val_l1 = 0.0;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::vector<Tensor> best_params;  // snapshot in registry order
};

/// Mean L1 of the model over a dataset (sample-weighted, batched forward).
double evaluate_l1(model::Model& m, const Dataset& data, int batch_size);

/// Copy a parameter snapshot (registry order) back into the model.
void apply_snapshot(model::Model& m, const std::vector<Tensor>& snapshot);

/// Seeded-shuffle minibatch training: forward, L1, backward, Adam. Records
/// one history row per epoch; retains the best-validation parameters (and
/// writes them to checkpoint_path when given). An empty validation set falls
/// back to tracking the training loss. Aborts with step/batch diagnostics on
/// a non-finite loss.
TrainResult train(model::Model& m, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::string& checkpoint_path = "");

/// History as CSV with a "step,train_l1,val_l1" header.
void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

struct GradCheckEntry {
    std::string name;       // parameter tensor
    std::size_t index = 0;  // offending element within it
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

/// Worst element per parameter tensor, sorted by descending relative error.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> entries;

    bool passed(double tol) const { return max_rel_err <= tol; }
};

/// Central-difference check (step fd_step) of d l1(model(input), target) /
/// d theta for every parameter element. Relative errors use an absolute
/// floor so zero-vs-zero comparisons pass.
GradCheckReport grad_check(model::Model& m, const Tensor& input, const Tensor& target,
                           double fd_step = 1e-4, double floor = 1e-6);

}  // namespace hicenhance::train
