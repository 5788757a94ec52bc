#include "stf/bench.hpp"

#include "stf/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace stf {

std::uint64_t unified_score_entries(Index t, Index n, Index heads) {
  return static_cast<std::uint64_t>(heads) *
         (static_cast<std::uint64_t>(t) * t + static_cast<std::uint64_t>(n) * n);
}

std::uint64_t classical_score_entries(Index t, Index n, Index heads) {
  return static_cast<std::uint64_t>(heads) *
         (static_cast<std::uint64_t>(n) * t * t + static_cast<std::uint64_t>(t) * n * n);
}

namespace {

struct HeadWeights {
  std::vector<RowMatrix> w_q, w_k, w_v;
  RowMatrix w_o;
};

HeadWeights random_weights(Index d, Index heads, Rng& rng) {
  const Index d_h = d / heads;
  HeadWeights w;
  auto fill = [&](RowMatrix& m, Index r, Index c) {
    m.resize(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  };
  w.w_q.resize(static_cast<std::size_t>(heads));
  w.w_k.resize(static_cast<std::size_t>(heads));
  w.w_v.resize(static_cast<std::size_t>(heads));
  for (Index k = 0; k < heads; ++k) {
    fill(w.w_q[static_cast<std::size_t>(k)], d, d_h);
    fill(w.w_k[static_cast<std::size_t>(k)], d, d_h);
    fill(w.w_v[static_cast<std::size_t>(k)], d, d_h);
  }
  fill(w.w_o, d, d);
  return w;
}

RowMatrix random_rep(Index rows, Index d, Rng& rng) {
  RowMatrix m(rows, d);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

/// Plain multi-head self-attention forward over the rows of e. Materializes
/// exactly one r x r score buffer per head; the counter tracks that.
Real attention_forward(const RowMatrix& e, const HeadWeights& w, std::uint64_t* score_counter) {
  const Index r = e.rows();
  const Index d = e.cols();
  const Index heads = static_cast<Index>(w.w_q.size());
  const Index d_h = d / heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(d_h));

  RowMatrix concat(r, d);
  for (Index k = 0; k < heads; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const RowMatrix q = e * w.w_q[ks];
    const RowMatrix kx = e * w.w_k[ks];
    const RowMatrix v = e * w.w_v[ks];
    RowMatrix scores = (q * kx.transpose()) * inv_sqrt;
    if (score_counter) *score_counter += static_cast<std::uint64_t>(r) * r;
    for (Index i = 0; i < r; ++i) {
      auto row = scores.row(i);
      const Real mx = row.maxCoeff();
      row = (row.array() - mx).exp();
      row /= row.sum();
    }
    concat.middleCols(k * d_h, d_h).noalias() = scores * v;
  }
  const RowMatrix out = concat * w.w_o;
  return out.sum();
}

struct TimedPass {
  Real wall_ms_median = 0.0;
  bool flagged_noisy = false;
  std::uint64_t score_entries = 0;
};

/// Median-of-repeats wall time of fn (after warmup), strictly
/// single-threaded. The first call runs with counting enabled.
template <typename Fn>
TimedPass time_pass(Index repeats, Index warmup, Fn&& fn) {
  TimedPass result;
  std::uint64_t counter = 0;
  volatile Real sink = 0.0;
  sink += fn(&counter);
  result.score_entries = counter;
  for (Index i = 1; i < warmup; ++i) sink += fn(nullptr);

  std::vector<Real> times;
  times.reserve(static_cast<std::size_t>(repeats));
  for (Index i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink += fn(nullptr);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<Real, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const Real median = times[times.size() / 2];
  result.wall_ms_median = median;
  result.flagged_noisy = (times.back() - times.front()) > 0.5 * median;
  (void)sink;
  return result;
}

}  // namespace

BenchRecord unified_attention_pass(Index t, Index n, Index d, Index heads, Index repeats,
                                   Index warmup, std::uint64_t seed) {
  if (t < 1 || n < 1 || d < 1 || heads < 1 || d % heads != 0) {
    throw ConfigError("bench: invalid dimensions (need T, N, D >= 1 and D divisible by heads)");
  }
  if (repeats < 3) throw ConfigError("bench: repeats must be >= 3");
  Rng rng = substream(seed, "bench");
  const HeadWeights weights = random_weights(d, heads, rng);
  const RowMatrix e_t = random_rep(t, d, rng);
  const RowMatrix e_s = random_rep(n, d, rng);

  TimedPass timed = time_pass(repeats, warmup, [&](std::uint64_t* counter) {
    return attention_forward(e_t, weights, counter) + attention_forward(e_s, weights, counter);
  });

  BenchRecord rec;
  rec.variant = "unified";
  rec.t = t;
  rec.n = n;
  rec.d = d;
  rec.heads = heads;
  rec.repeats = repeats;
  rec.wall_ms_median = timed.wall_ms_median;
  rec.score_entries = timed.score_entries;
  rec.score_bytes = timed.score_entries * sizeof(Real);
  rec.flagged_noisy = timed.flagged_noisy;
  return rec;
}

BenchRecord classical_axial_pass(Index t, Index n, Index d, Index heads, Index repeats,
                                 Index warmup, std::uint64_t seed) {
  if (t < 1 || n < 1 || d < 1 || heads < 1 || d % heads != 0) {
    throw ConfigError("bench: invalid dimensions (need T, N, D >= 1 and D divisible by heads)");
  }
  if (repeats < 3) throw ConfigError("bench: repeats must be >= 3");
  Rng rng = substream(seed, "bench");
  const HeadWeights weights = random_weights(d, heads, rng);
  // The separated representation is T x N x D: one T x D slice per node,
  // one N x D slice per step.
  std::vector<RowMatrix> temporal_slices;
  temporal_slices.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) temporal_slices.push_back(random_rep(t, d, rng));
  std::vector<RowMatrix> spatial_slices;
  spatial_slices.reserve(static_cast<std::size_t>(t));
  for (Index i = 0; i < t; ++i) spatial_slices.push_back(random_rep(n, d, rng));

  TimedPass timed = time_pass(repeats, warmup, [&](std::uint64_t* counter) {
    Real acc = 0.0;
    for (const RowMatrix& slice : temporal_slices) acc += attention_forward(slice, weights, counter);
    for (const RowMatrix& slice : spatial_slices) acc += attention_forward(slice, weights, counter);
    return acc;
  });

  BenchRecord rec;
  rec.variant = "classical";
  rec.t = t;
  rec.n = n;
  rec.d = d;
  rec.heads = heads;
  rec.repeats = repeats;
  rec.wall_ms_median = timed.wall_ms_median;
  rec.score_entries = timed.score_entries;
  rec.score_bytes = timed.score_entries * sizeof(Real);
  rec.flagged_noisy = timed.flagged_noisy;
  return rec;
}

namespace {

Real fit_loglog_slope(const std::vector<const BenchRecord*>& records) {
  if (records.size() < 2) return 0.0;
  Real sx = 0, sy = 0, sxx = 0, sxy = 0;
  const Real count = static_cast<Real>(records.size());
  for (const BenchRecord* r : records) {
    const Real x = std::log(static_cast<Real>(r->t));
    const Real y = std::log(std::max(r->wall_ms_median, 1e-9));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

}  // namespace

BenchOutcome run_grid(const BenchGrid& grid, const std::filesystem::path& csv_path,
                      const std::filesystem::path* svg_path, std::uint64_t seed) {
  if (grid.sizes.empty()) throw ConfigError("bench: empty grid");
  if (grid.repeats < 3) throw ConfigError("bench: repeats must be >= 3");
  BenchOutcome outcome;
  for (const auto& [t, n] : grid.sizes) {
    outcome.records.push_back(
        unified_attention_pass(t, n, grid.d, grid.heads, grid.repeats, grid.warmup, seed));
    outcome.records.push_back(
        classical_axial_pass(t, n, grid.d, grid.heads, grid.repeats, grid.warmup, seed));
  }

  std::vector<const BenchRecord*> unified, classical;
  for (const BenchRecord& r : outcome.records) {
    (r.variant == "unified" ? unified : classical).push_back(&r);
  }
  outcome.unified_exponent = fit_loglog_slope(unified);
  outcome.classical_exponent = fit_loglog_slope(classical);

  write_bench_csv(csv_path, outcome.records);
  if (svg_path) write_bench_svg(*svg_path, outcome.records);
  return outcome;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "variant,T,N,D,heads,repeats,wall_ms_median,score_entries,score_bytes,flagged\n";
  char buf[256];
  for (const BenchRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%lld,%lld,%lld,%.6f,%llu,%llu,%s\n",
                  r.variant.c_str(), static_cast<long long>(r.t), static_cast<long long>(r.n),
                  static_cast<long long>(r.d), static_cast<long long>(r.heads),
                  static_cast<long long>(r.repeats), r.wall_ms_median,
                  static_cast<unsigned long long>(r.score_entries),
                  static_cast<unsigned long long>(r.score_bytes), r.flagged_noisy ? "noisy" : "");
    out << buf;
  }
}

namespace {

/// Map a point into one SVG panel with log-scaled axes.
struct PanelScale {
  Real x0, x1, y0, y1;           // data bounds (log space)
  Real px, py, pw, ph;           // panel rectangle
  std::pair<Real, Real> map(Real x, Real y) const {
    const Real fx = (x - x0) / (x1 - x0 + 1e-12);
    const Real fy = (y - y0) / (y1 - y0 + 1e-12);
    return {px + fx * pw, py + ph - fy * ph};
  }
};

void draw_series(std::ofstream& out, const PanelScale& scale,
                 const std::vector<std::pair<Real, Real>>& points, const char* color) {
  out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
  for (const auto& [x, y] : points) {
    const auto [sx, sy] = scale.map(x, y);
    out << sx << ',' << sy << ' ';
  }
  out << "'/>\n";
  for (const auto& [x, y] : points) {
    const auto [sx, sy] = scale.map(x, y);
    out << "<circle cx='" << sx << "' cy='" << sy << "' r='2.5' fill='" << color << "'/>\n";
  }
}

}  // namespace

void write_bench_svg(const std::filesystem::path& path, const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");

  auto collect = [&](const std::string& variant, auto metric) {
    std::vector<std::pair<Real, Real>> pts;
    for (const BenchRecord& r : records) {
      if (r.variant != variant) continue;
      pts.emplace_back(std::log10(static_cast<Real>(r.t)),
                       std::log10(std::max(metric(r), 1e-9)));
    }
    return pts;
  };
  auto wall = [](const BenchRecord& r) { return r.wall_ms_median; };
  auto bytes = [](const BenchRecord& r) { return static_cast<Real>(r.score_bytes); };

  const std::vector<std::vector<std::pair<Real, Real>>> panels[2] = {
      {collect("unified", wall), collect("classical", wall)},
      {collect("unified", bytes), collect("classical", bytes)},
  };
  const char* titles[2] = {"wall time (log10 ms)", "score bytes (log10 B)"};

  out << "<svg xmlns='http://www.w3.org/2000/svg' width='920' height='420' "
         "font-family='monospace' font-size='12'>\n";
  out << "<rect width='920' height='420' fill='white'/>\n";
  for (int p = 0; p < 2; ++p) {
    PanelScale scale;
    scale.px = 60 + p * 460;
    scale.py = 40;
    scale.pw = 360;
    scale.ph = 320;
    scale.x0 = scale.y0 = std::numeric_limits<Real>::infinity();
    scale.x1 = scale.y1 = -std::numeric_limits<Real>::infinity();
    for (const auto& series : panels[p]) {
      for (const auto& [x, y] : series) {
        scale.x0 = std::min(scale.x0, x);
        scale.x1 = std::max(scale.x1, x);
        scale.y0 = std::min(scale.y0, y);
        scale.y1 = std::max(scale.y1, y);
      }
    }
    out << "<rect x='" << scale.px << "' y='" << scale.py << "' width='" << scale.pw
        << "' height='" << scale.ph << "' fill='none' stroke='black'/>\n";
    out << "<text x='" << scale.px << "' y='24'>" << titles[p] << " vs log10 T</text>\n";
    draw_series(out, scale, panels[p][0], "#1f77b4");
    draw_series(out, scale, panels[p][1], "#d62728");
  }
  out << "<text x='60' y='404' fill='#1f77b4'>unified</text>\n";
  out << "<text x='140' y='404' fill='#d62728'>classical</text>\n";
  out << "</svg>\n";
}

}  // namespace stf
