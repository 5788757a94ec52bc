#include "stf/dataset.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace stf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("stf_ds_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

void write_toy(const fs::path& dir, const std::string& edges) {
  std::string signal = "t,node_0,node_1,node_2\n";
  for (int i = 0; i < 10; ++i) {
    signal += std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(i + 1) + "," +
              std::to_string(2 * i) + "\n";
  }
  write_file(dir / "signal.csv", signal);
  write_file(dir / "edges.csv", edges);
  write_file(dir / "meta.json",
             R"({"steps_per_day": 4, "start_tod": 0, "start_dow": 0, "name": "toy"})");
}

}  // namespace

TEST_CASE("load_dataset symmetrizes and adds self-loops") {
  const fs::path dir = fresh_dir("toy");
  write_toy(dir, "from,to\n0,1\n1,2\n");
  TrafficDataset ds = load_dataset(dir);
  CHECK(ds.num_steps() == 10);
  CHECK(ds.num_nodes() == 3);
  int diag = 0, off = 0;
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      if (!ds.adjacency(i, j)) continue;
      (i == j ? diag : off)++;
    }
  }
  CHECK(diag == 3);
  CHECK(off == 4);
}

TEST_CASE("duplicate reversed edges give the same adjacency") {
  const fs::path a = fresh_dir("edges_once");
  const fs::path b = fresh_dir("edges_twice");
  write_toy(a, "from,to\n0,1\n");
  write_toy(b, "from,to\n0,1\n1,0\n");
  TrafficDataset da = load_dataset(a);
  TrafficDataset db = load_dataset(b);
  CHECK(da.adjacency == db.adjacency);
}

TEST_CASE("load_dataset rejects bad inputs with file and line") {
  const fs::path dir = fresh_dir("bad_edge");
  write_toy(dir, "from,to\n0,7\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("out of range"), DataError);

  const fs::path dir2 = fresh_dir("bad_signal");
  write_toy(dir2, "from,to\n0,1\n");
  write_file(dir2 / "signal.csv", "t,node_0,node_1,node_2\n0,1,nan,2\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir2), doctest::Contains("non-finite"), DataError);

  const fs::path dir3 = fresh_dir("missing");
  write_toy(dir3, "from,to\n0,1\n");
  fs::remove(dir3 / "signal.csv");
  CHECK_THROWS_AS(load_dataset(dir3), DataError);
}

TEST_CASE("stb round-trip and PEMS04-shaped load") {
  TrafficDataset ds;
  ds.signal = Tensor({16992, 307});
  Real* p = ds.signal.mutable_data();
  for (Index i = 0; i < ds.signal.size(); ++i) p[i] = static_cast<Real>(i % 97);
  ds.steps_per_day = 288;
  ds.start_tod = 0;
  ds.start_dow = 0;  // collection starts 2018-01-01, a Monday
  ds.name = "pems04-shaped";
  ds.adjacency = BoolMatrix::Identity(307, 307);
  ds.adjacency(0, 1) = ds.adjacency(1, 0) = true;

  const fs::path dir = fresh_dir("stb");
  save_dataset(ds, dir, /*as_stb=*/true);
  TrafficDataset loaded = load_dataset(dir);
  CHECK(loaded.num_steps() == 16992);
  CHECK(loaded.num_nodes() == 307);
  CHECK(loaded.adjacency(1, 0));
  // float32 payload: values here are small integers, exactly representable
  CHECK(loaded.signal(12345 / 307, 12345 % 307) == ds.signal(12345 / 307, 12345 % 307));

  SplitSpec split = split_622(loaded);
  CHECK(split.train_end == 10195);
  CHECK(split.val_end == 13593);
}

TEST_CASE("stb truncation is fatal") {
  TrafficDataset ds = synth_generate(3, 1, 8, 1);
  const fs::path dir = fresh_dir("trunc");
  save_dataset(ds, dir, /*as_stb=*/true);
  const auto size = fs::file_size(dir / "signal.stb");
  fs::resize_file(dir / "signal.stb", size - 5);
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("truncated"), DataError);
}

TEST_CASE("csv round-trip preserves doubles exactly") {
  TrafficDataset ds = synth_generate(4, 1, 16, 99);
  const fs::path dir = fresh_dir("csvrt");
  save_dataset(ds, dir);
  TrafficDataset loaded = load_dataset(dir);
  CHECK(stf::test::bitwise_equal(loaded.signal, ds.signal));
  CHECK(loaded.adjacency == ds.adjacency);
}

TEST_CASE("split_622 floors") {
  TrafficDataset ds;
  ds.signal = Tensor({10, 1});
  SplitSpec s = split_622(ds);
  CHECK(s.train_end == 6);
  CHECK(s.val_end == 8);

  ds.signal = Tensor({100, 1});
  s = split_622(ds);
  CHECK(s.train_end == 60);
  CHECK(s.val_end == 80);

  ds.signal = Tensor({9, 1});
  CHECK_THROWS_AS(split_622(ds), DataError);
}

TEST_CASE("zscore closed form and train-only stats") {
  TrafficDataset ds;
  ds.signal = Tensor({10, 1});
  Real* p = ds.signal.mutable_data();
  for (Index i = 0; i < 6; ++i) p[i] = (i % 2 == 0) ? 0.0 : 2.0;
  for (Index i = 6; i < 10; ++i) p[i] = 100.0 + static_cast<Real>(i);

  SplitSpec split = split_622(ds);
  auto [normalized, stats] = fit_apply_zscore(ds, split);
  CHECK(stats.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(stats.std == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(stats.apply(3.0) == doctest::Approx(2.0).epsilon(1e-15));

  // mutating val/test values leaves the stats unchanged
  ds.signal.mutable_data()[9] = -5000.0;
  auto [normalized2, stats2] = fit_apply_zscore(ds, split);
  CHECK(stats2.mean == stats.mean);
  CHECK(stats2.std == stats.std);

  // constant training split is fatal
  TrafficDataset flat;
  flat.signal = Tensor::full({20, 2}, 7.0);
  CHECK_THROWS_AS(fit_apply_zscore(flat, split_622(flat)), DataError);
}

TEST_CASE("zscore apply/invert round-trip") {
  TrafficDataset ds = synth_generate(5, 2, 24, 3);
  auto [normalized, stats] = fit_apply_zscore(ds, split_622(ds));
  Real worst = 0.0;
  for (Index i = 0; i < ds.signal.size(); ++i) {
    worst = std::max(worst,
                     std::abs(stats.invert(normalized.data()[i]) - ds.signal.data()[i]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("window counts and fatal when part too short") {
  TrafficDataset ds;
  ds.signal = Tensor({167, 2});  // train part = floor(0.6*167) = 100 steps
  Real* p = ds.signal.mutable_data();
  for (Index i = 0; i < ds.signal.size(); ++i) p[i] = static_cast<Real>(i % 13);
  ds.steps_per_day = 12;
  SplitSpec split = split_622(ds);
  CHECK(split.train_end == 100);
  auto [normalized, stats] = fit_apply_zscore(ds, split);

  WindowPlan plan = make_windows(ds, normalized, split, SplitPart::kTrain, 24, 24, 8);
  CHECK(plan.num_samples() == 53);

  CHECK_THROWS_WITH_AS(
      make_windows(ds, normalized, split, SplitPart::kTrain, 288, 288, 8),
      doctest::Contains("requires >= 576 steps"), DataError);
}

TEST_CASE("calendar indices advance across midnight") {
  TrafficDataset ds;
  ds.signal = Tensor({2000, 2});
  Real* p = ds.signal.mutable_data();
  for (Index i = 0; i < ds.signal.size(); ++i) p[i] = static_cast<Real>((i * 7) % 31);
  ds.steps_per_day = 288;
  ds.start_tod = 287;
  ds.start_dow = 3;
  SplitSpec split = split_622(ds);
  auto [normalized, stats] = fit_apply_zscore(ds, split);

  WindowPlan plan = make_windows(ds, normalized, split, SplitPart::kTrain, 4, 4, 2);
  ForecastBatch b = plan.batch(0);
  CHECK(b.window_starts[0] == 0);
  CHECK(b.tod_idx[0] == 287);
  CHECK(b.tod_idx[1] == 0);  // wraps at midnight
  CHECK(b.dow_idx[0] == 3);
  CHECK(b.dow_idx[1] == 4);  // day increments with the wrap
}

TEST_CASE("batches: inputs normalized, targets raw, no split crossing") {
  TrafficDataset ds = synth_generate(4, 4, 48, 11);
  SplitSpec split = split_622(ds);
  auto [normalized, stats] = fit_apply_zscore(ds, split);
  const Index t_in = 12, t_out = 6;

  const Index part_lens[3] = {split.train_end, split.val_end - split.train_end,
                              ds.num_steps() - split.val_end};
  const SplitPart parts[3] = {SplitPart::kTrain, SplitPart::kVal, SplitPart::kTest};
  const Index part_begin[3] = {0, split.train_end, split.val_end};
  const Index part_end[3] = {split.train_end, split.val_end, ds.num_steps()};

  for (int pi = 0; pi < 3; ++pi) {
    std::optional<std::uint64_t> seed;
    if (parts[pi] == SplitPart::kTrain) seed = 5;
    WindowPlan plan = make_windows(ds, normalized, split, parts[pi], t_in, t_out, 7, seed);
    CHECK(plan.num_samples() == part_lens[pi] - (t_in + t_out) + 1);

    Index seen = 0;
    for (Index k = 0; k < plan.num_batches(); ++k) {
      ForecastBatch b = plan.batch(k);
      seen += b.size();
      for (Index s = 0; s < b.size(); ++s) {
        const Index start = b.window_starts[static_cast<std::size_t>(s)];
        CHECK(start >= part_begin[pi]);
        CHECK(start + t_in + t_out <= part_end[pi]);
        for (Index t = 0; t < t_in; ++t) {
          for (Index j = 0; j < ds.num_nodes(); ++j) {
            CHECK(b.inputs(s, t, j) == normalized(start + t, j));
          }
        }
        for (Index t = 0; t < t_out; ++t) {
          for (Index j = 0; j < ds.num_nodes(); ++j) {
            const Real raw = b.targets(s, t, j);
            CHECK(raw == ds.signal(start + t_in + t, j));
            // re-normalizing the raw target reproduces the normalized row
            CHECK((raw - stats.mean) / stats.std == normalized(start + t_in + t, j));
          }
        }
      }
    }
    CHECK(seen == plan.num_samples());
  }
}

TEST_CASE("train shuffle is seeded and deterministic") {
  TrafficDataset ds = synth_generate(3, 3, 32, 17);
  SplitSpec split = split_622(ds);
  auto [normalized, stats] = fit_apply_zscore(ds, split);
  WindowPlan a = make_windows(ds, normalized, split, SplitPart::kTrain, 8, 4, 4, 42);
  WindowPlan b = make_windows(ds, normalized, split, SplitPart::kTrain, 8, 4, 4, 42);
  WindowPlan c = make_windows(ds, normalized, split, SplitPart::kTrain, 8, 4, 4, 43);
  CHECK(a.batch(0).window_starts == b.batch(0).window_starts);
  bool differs = false;
  for (Index k = 0; k < a.num_batches() && !differs; ++k) {
    differs = a.batch(k).window_starts != c.batch(k).window_starts;
  }
  CHECK(differs);
}

TEST_CASE("synth is deterministic per seed") {
  TrafficDataset a = synth_generate(6, 2, 48, 123);
  TrafficDataset b = synth_generate(6, 2, 48, 123);
  TrafficDataset c = synth_generate(6, 2, 48, 124);
  CHECK(stf::test::bitwise_equal(a.signal, b.signal));
  CHECK_FALSE(stf::test::bitwise_equal(a.signal, c.signal));
  CHECK_THROWS_AS(synth_generate(2, 1, 48, 1), ConfigError);
}

TEST_CASE("synth weekly periodicity is exact at sigma zero") {
  const int spd = 48;
  TrafficDataset ds = synth_generate(5, 15, spd, 7, /*noise_sigma=*/0.0);
  for (Index t = 0; t < ds.num_steps() - 7 * spd; t += 11) {
    for (Index n = 0; n < 5; ++n) {
      CHECK(ds.signal(t, n) == ds.signal(t + 7 * spd, n));
    }
  }
}

TEST_CASE("synth ring adjacency and per-node phase shift") {
  const int spd = 288;
  const Index nodes = 12;
  TrafficDataset ds = synth_generate(nodes, 1, spd, 5, /*noise_sigma=*/0.0);

  for (Index i = 0; i < nodes; ++i) {
    Index degree = 0;
    for (Index j = 0; j < nodes; ++j) degree += ds.adjacency(i, j) ? 1 : 0;
    CHECK(degree == 3);  // self + two ring neighbors
  }

  // daily argmax moves by steps_per_day / n_nodes from one node to the next
  auto argmax_of = [&](Index node) {
    Index best = 0;
    for (Index t = 1; t < spd; ++t) {
      if (ds.signal(t, node) > ds.signal(best, node)) best = t;
    }
    return best;
  };
  for (Index n = 0; n + 1 < nodes; ++n) {
    const Index lag = (argmax_of(n + 1) - argmax_of(n) + spd) % spd;
    CHECK(lag == spd / nodes);
  }
}
