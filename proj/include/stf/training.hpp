#pragma once

#include "stf/network.hpp"

#include <filesystem>

namespace stf {

struct Milestone {
  Index epoch;
  Real multiplier;
};

struct TrainConfig {
  ModelConfig model;
  Index batch_size = 16;
  Index epochs = 20;
  std::uint64_t seed = 42;
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real adam_eps = 1e-8;
  Real huber_delta = 1.0;
  Real mape_threshold = 0.1;  // |y| below this is excluded from MAPE
  std::vector<Milestone> milestones{{30, 0.5}, {50, 0.5}};
  bool deterministic = false;  // force single-threaded execution
  int threads = 0;             // 0 = hardware concurrency

  void validate() const;
};

/// Learning rate in effect during a 1-based epoch: the base rate times the
/// multiplier of every milestone whose epoch has already passed.
Real lr_for_epoch(const TrainConfig& cfg, Index epoch);

struct OptimizerState {
  std::vector<std::string> names;  // visit order
  std::vector<Tensor> m, v;        // first/second moments
  Index step = 0;
  Real lr = 1e-4;
  Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static OptimizerState init(const ModelParams& params, const TrainConfig& cfg);
};

/// Gradients aligned with the visit_params order.
using GradVector = std::vector<Tensor>;

GradVector zero_grads_like(const ModelParams& params);

/// acc += scale * tape gradients, in visit order.
void accumulate_grads(GradVector& acc, const ModelParams& params, const GradientMap& grads,
                      Real scale);

/// One bias-corrected Adam update over every parameter. A non-finite
/// gradient entry is fatal and names the parameter.
void adam_step(ModelParams& params, const GradVector& grads, OptimizerState& state);

struct MetricReport {
  Real rmse = 0.0;
  Real mae = 0.0;
  Real mape = 0.0;  // percent
  Index n_eval = 0;
  Index n_masked = 0;
};

/// Streaming RMSE/MAE/MAPE over raw-unit (prediction, truth) pairs. Entries
/// with |truth| at or below the threshold are excluded from MAPE only.
struct MetricAccumulator {
  Real sum_sq = 0.0, sum_abs = 0.0, sum_ape = 0.0;
  Index n = 0, n_masked = 0;

  void add(Real pred, Real truth, Real mape_threshold);
  MetricReport report() const;  // fatal when nothing was accumulated
};

/// Horizon-averaged raw-unit metrics over every stride-one window of a
/// split part.
MetricReport evaluate(const ModelParams& params, const TrafficDataset& ds,
                      const Tensor& normalized, const SplitSpec& split, SplitPart part,
                      const NormStats& stats, const TrainConfig& cfg);

struct EpochLog {
  Index epoch;
  Real train_loss;
  MetricReport val;
  Real lr;
  Real seconds;
};

struct TrainResult {
  ModelParams best_params;
  Index best_epoch = 0;
  OptimizerState state;
  NormStats stats;
  SplitSpec split;
  std::vector<EpochLog> log;
  TrainConfig config;  // the resolved configuration (node count filled in)
};

/// Full training run: fit normalization on the train split, optimize with
/// Adam and the milestone schedule, evaluate on val every epoch, and keep
/// the parameters with the lowest val MAE. on_epoch, when set, sees every
/// log row as it is produced.
TrainResult train(const TrafficDataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// CSV: epoch,train_loss,val_rmse,val_mae,val_mape,lr,seconds
void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct Checkpoint {
  ModelParams params;
  OptimizerState state;
  NormStats stats;
  TrainConfig config;
};

/// Checkpoint file: magic "XLNG", u32 version 1, u32 header length, JSON
/// header (ordered tensor names and shapes, config echo, normalization
/// stats), then the concatenated little-endian f64 payloads in header
/// order. Model parameters first, then optimizer moments.
void save_checkpoint(const ModelParams& params, const OptimizerState& state,
                     const NormStats& stats, const TrainConfig& cfg,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Load only the model tensors of a checkpoint into an existing parameter
/// struct; name or shape disagreement is fatal and names the tensor.
void apply_checkpoint_params(const std::filesystem::path& path, ModelParams& params);

}  // namespace stf
