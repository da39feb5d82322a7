#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "unisolver/dataset.hpp"
#include "unisolver/embedding.hpp"
#include "unisolver/model.hpp"
#include "unisolver/tensor.hpp"

namespace unisolver {

// --- metrics -------------------------------------------------------------

// Euclidean norm of (pred - truth) over Euclidean norm of truth, flattened
// across all points and channels. Throws on size mismatch or zero-norm truth.
double relative_l2(const std::vector<double>& pred,
                   const std::vector<double>& truth);

// Differentiable version of the same metric; the truth is treated as a
// constant.
Tensor relative_l2_loss(const Tensor& pred, const Tensor& truth);

// 1 - eps_ours / eps_second. Throws unless eps_second > 0 and eps_ours >= 0.
double relative_promotion(double eps_ours, double eps_second);

// --- optimizer and schedule ----------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // classic L2: added to the gradient
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct AdamState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;  // aligned with the parameter list
};

AdamState make_adam_state(const NamedParams& params);

// One bias-corrected Adam update, deterministic and single-threaded.
// Parameters without an accumulated gradient are treated as zero-gradient:
// their moments decay but a fresh (zero) moment never moves them.
void adam_step(const NamedParams& params, AdamState& state,
               const AdamConfig& config, double lr);

// Linear warmup to lr_init over warmup_steps, then cosine annealing to
// lr_min at total_steps. Requires step <= total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init,
                 double lr_min, std::size_t warmup_steps);

// --- parameter snapshots ---------------------------------------------------

using ParameterSnapshot = std::vector<std::pair<std::string, std::vector<double>>>;

ParameterSnapshot snapshot_parameters(const NamedParams& params);

// Writes snapshot values back into the (name-matched, size-checked) handles.
void load_parameter_values(const NamedParams& params,
                           const ParameterSnapshot& snapshot);

// Every trainable tensor of the network and its condition embedder, under
// "model." / "cond." prefixes.
NamedParams training_parameters(const UnisolverModel& model,
                                const ConditionEmbedder& embedder);

// --- training -----------------------------------------------------------

// How the conditioning payload reaches the network:
//  - Deep: through the condition embedder's (scale, shift, select) pathway.
//  - Ablated: conditions replaced by exact zeros (the network cannot tell
//    samples with different physics apart).
//  - ConcatInput: conditions appended to the input as extra channels
//    (coefficients broadcast over the grid, configured point fields as-is);
//    the deep pathway receives zeros.
enum class ConditioningMode : std::uint8_t {
    Deep = 0,
    Ablated = 1,
    ConcatInput = 2,
};

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t epochs = 200;
    double lr_init = 5e-4;
    double lr_min = 0.0;
    std::size_t warmup_epochs = 0;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double validation_fraction = 0.10;  // seed-stable held-out share
    ConditioningMode mode = ConditioningMode::Deep;
};

void validate_train_config(const TrainConfig& config);

// Extra input channels the concat mode appends: one per configured
// coefficient key plus the configured point-field channels.
std::size_t input_channel_count(std::size_t base_channels,
                                const ConditionEmbedderConfig& cond_config,
                                ConditioningMode mode);

// Network input for one sample (with concat channels when the mode asks).
Tensor sample_input(const Sample& sample, const GridSpec& grid,
                    const ConditionEmbedderConfig& cond_config,
                    ConditioningMode mode);

// Training target: the full space-time field for FullField tasks, the final
// frame for Frames tasks on 1-D grids, the stored output field on 2-D grids.
Tensor sample_target(const Sample& sample, const GridSpec& grid,
                     TaskMode mode);

struct TrainResult {
    std::vector<double> train_curve;  // mean minibatch loss per epoch
    std::vector<double> val_curve;    // held-out loss per epoch
    std::size_t best_epoch = 0;       // 0-based index into the curves
    double best_val_loss = std::numeric_limits<double>::infinity();
    ParameterSnapshot best_params;    // parameters at the best epoch
    std::size_t epochs_run = 0;
    bool aborted_non_finite = false;  // loss left the reals; last-good kept
};

// Minibatch training of the model and its embedder on the dataset's ID
// samples: embed conditions, forward, relative-L2 loss, backward, Adam with
// cosine-annealed lr. Deterministic under (configs, dataset, seed); the loss
// curve is bit-reproducible. A non-finite loss aborts training and restores
// the last completed epoch's parameters. When the validation split is empty
// the training loss stands in for it.
TrainResult train(UnisolverModel& model, ConditionEmbedder& embedder,
                  const Dataset& dataset, const TrainConfig& config);

// --- evaluation -----------------------------------------------------------

struct EvalGroup {
    std::map<std::string, double> coefficients;
    SplitTag split = SplitTag::ID;
    double mean_rel_l2 = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<EvalGroup> groups;  // unique (coefficients, split), sorted
    double mean_id = std::numeric_limits<double>::quiet_NaN();
    double mean_ood = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_id = 0, n_ood = 0;
};

// Relative L2 per (coefficient values, split) group plus per-split means.
// Pure: repeated calls agree bit-exactly. Groups absent from the dataset are
// absent from the report.
EvalReport evaluate(const UnisolverModel& model,
                    const ConditionEmbedder& embedder, const Dataset& dataset,
                    ConditioningMode mode = ConditioningMode::Deep);

// Mean over one split; throws if the report holds no samples for it.
double split_mean(const EvalReport& report, SplitTag split);

// relative_promotion of our split mean against a baseline's split mean.
double report_promotion(const EvalReport& ours, const EvalReport& baseline,
                        SplitTag split);

// One row per (coefficient values, split): coefficient columns are the
// sorted union of keys, blank where a group lacks a key.
std::string eval_report_csv(const EvalReport& report);

// epoch,train_loss,val_loss rows.
std::string loss_curve_csv(const TrainResult& result);

}  // namespace unisolver
