#pragma once

#include "stf/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stf {

/// One measurement row: forward attention wall time (median of repeats)
/// and the exact count of materialized score scalars.
struct BenchRecord {
  std::string variant;  // "unified" or "classical"
  Index t = 0;
  Index n = 0;
  Index d = 0;
  Index heads = 0;
  Index repeats = 0;
  Real wall_ms_median = 0.0;
  std::uint64_t score_entries = 0;
  std::uint64_t score_bytes = 0;  // 8 * score_entries
  bool flagged_noisy = false;     // repeat spread exceeded half the median
};

struct BenchGrid {
  std::vector<std::pair<Index, Index>> sizes;  // (T, N)
  Index d = 16;
  Index heads = 1;
  Index repeats = 5;
  Index warmup = 2;
};

/// Closed forms for the score-buffer accounting.
std::uint64_t unified_score_entries(Index t, Index n, Index heads);    // h (T^2 + N^2)
std::uint64_t classical_score_entries(Index t, Index n, Index heads);  // h (N T^2 + T N^2)

/// Forward attention over one T x D temporal and one N x D spatial
/// representation: one score map per head per axis.
BenchRecord unified_attention_pass(Index t, Index n, Index d, Index heads, Index repeats = 5,
                                   Index warmup = 2, std::uint64_t seed = 42);

/// The separated reference: temporal attention once per node plus spatial
/// attention once per step.
BenchRecord classical_axial_pass(Index t, Index n, Index d, Index heads, Index repeats = 5,
                                 Index warmup = 2, std::uint64_t seed = 42);

struct BenchOutcome {
  std::vector<BenchRecord> records;
  Real unified_exponent = 0.0;    // log-log wall-time slope across the grid
  Real classical_exponent = 0.0;
};

/// Run both variants over the grid, write the CSV (and SVG when requested),
/// and fit per-variant log-log scaling exponents across the T sweep.
BenchOutcome run_grid(const BenchGrid& grid, const std::filesystem::path& csv_path,
                      const std::filesystem::path* svg_path = nullptr, std::uint64_t seed = 42);

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records);
void write_bench_svg(const std::filesystem::path& path, const std::vector<BenchRecord>& records);

}  // namespace stf
