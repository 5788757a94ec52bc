#pragma once

#include "stf/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stf {

/// A loaded traffic dataset: the full signal matrix in native units, the
/// calendar anchor, and the (symmetric, self-looped) road-graph adjacency.
struct TrafficDataset {
  Tensor signal;  // T_total x N, raw units
  int steps_per_day = 288;
  int start_tod = 0;  // [0, steps_per_day)
  int start_dow = 0;  // [0, 7), 0 = Monday
  BoolMatrix adjacency;
  std::string name;

  Index num_steps() const { return signal.dim(0); }
  Index num_nodes() const { return signal.dim(1); }
  int tod_at(Index global_step) const {
    return static_cast<int>((start_tod + global_step) % steps_per_day);
  }
  int dow_at(Index global_step) const {
    return static_cast<int>((start_dow + (start_tod + global_step) / steps_per_day) % 7);
  }
};

/// Z-score statistics, fitted on the training split only.
struct NormStats {
  Real mean = 0.0;
  Real std = 1.0;
  Real apply(Real x) const { return (x - mean) / std; }
  Real invert(Real z) const { return z * std + mean; }
};

struct SplitSpec {
  Index train_end = 0;
  Index val_end = 0;
};

enum class SplitPart { kTrain, kVal, kTest };
const char* split_part_name(SplitPart part);

struct ForecastBatch {
  Tensor inputs;   // B x T x N, normalized
  Tensor targets;  // B x T_out x N, raw units
  std::vector<int> tod_idx;  // B*T, row-major
  std::vector<int> dow_idx;  // B*T
  std::vector<Index> window_starts;  // B, global step of each input window
  Index size() const { return inputs.dim(0); }

  std::vector<int> tod_row(Index s) const {
    return {tod_idx.begin() + static_cast<std::ptrdiff_t>(s * inputs.dim(1)),
            tod_idx.begin() + static_cast<std::ptrdiff_t>(s * inputs.dim(1) + inputs.dim(1))};
  }
  std::vector<int> dow_row(Index s) const {
    return {dow_idx.begin() + static_cast<std::ptrdiff_t>(s * inputs.dim(1)),
            dow_idx.begin() + static_cast<std::ptrdiff_t>(s * inputs.dim(1) + inputs.dim(1))};
  }
};

/// Directory loader. Expects signal.csv (or signal.stb), edges.csv and
/// meta.json; see the README for the exact formats. The adjacency comes
/// back symmetrized with self-loops set.
TrafficDataset load_dataset(const std::filesystem::path& dir);

/// Write a dataset in the loadable layout. With as_stb, the signal goes out
/// as the compact binary form (32-bit floats) instead of CSV.
void save_dataset(const TrafficDataset& ds, const std::filesystem::path& dir,
                  bool as_stb = false);

/// Chronological 6:2:2 split: train_end = floor(0.6 T), val_end = floor(0.8 T).
SplitSpec split_622(const TrafficDataset& ds);

/// Fit mean/std on [0, train_end) over all nodes and normalize the whole
/// signal with those statistics.
std::pair<Tensor, NormStats> fit_apply_zscore(const TrafficDataset& ds, const SplitSpec& split);

/// Sliding windows over one split part, stride one. Train order is shuffled
/// from the seed; val/test stay in natural order. Batches are materialized
/// on demand.
class WindowPlan {
 public:
  WindowPlan(const TrafficDataset& ds, const Tensor& normalized, const SplitSpec& split,
             SplitPart part, Index t_in, Index t_out, Index batch_size,
             std::optional<std::uint64_t> shuffle_seed);

  Index num_samples() const { return static_cast<Index>(order_.size()); }
  Index num_batches() const;
  ForecastBatch batch(Index k) const;

  Index t_in() const { return t_in_; }
  Index t_out() const { return t_out_; }

 private:
  Tensor normalized_;
  Tensor raw_;
  int steps_per_day_;
  int start_tod_;
  int start_dow_;
  Index t_in_, t_out_, batch_size_;
  std::vector<Index> order_;  // window start steps (global)
};

WindowPlan make_windows(const TrafficDataset& ds, const Tensor& normalized,
                        const SplitSpec& split, SplitPart part, Index t_in, Index t_out,
                        Index batch_size, std::optional<std::uint64_t> shuffle_seed = {});

/// Synthetic ring-graph dataset: a daily sinusoid per node with a phase
/// offset by node, a weekday/weekend level factor, and seeded Gaussian
/// noise; values clamped at 0. Same seed, same bits.
TrafficDataset synth_generate(Index n_nodes, Index n_days, int steps_per_day,
                              std::uint64_t seed, Real noise_sigma = 3.0);

}  // namespace stf
