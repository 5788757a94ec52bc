#include "stf/bench.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace stf;

TEST_CASE("score-entry closed forms") {
  CHECK(unified_score_entries(288, 64, 1) == 87040);
  CHECK(classical_score_entries(288, 64, 1) == 6488064);
  CHECK(classical_score_entries(288, 64, 1) % unified_score_entries(288, 64, 1) != 0);
  CHECK(static_cast<double>(classical_score_entries(288, 64, 1)) /
            static_cast<double>(unified_score_entries(288, 64, 1)) ==
        doctest::Approx(74.54).epsilon(1e-3));

  // degenerate agreement at T = N = 1
  for (Index h : {1, 2, 4}) {
    CHECK(unified_score_entries(1, 1, h) == static_cast<std::uint64_t>(2 * h));
    CHECK(classical_score_entries(1, 1, h) == static_cast<std::uint64_t>(2 * h));
  }

  // T = N = k: the ratio is exactly k
  for (Index k : {2, 7, 32}) {
    CHECK(classical_score_entries(k, k, 3) ==
          static_cast<std::uint64_t>(k) * unified_score_entries(k, k, 3));
  }

  // T = N: unified reduces to 2 h T^2
  CHECK(unified_score_entries(16, 16, 4) == 4 * 2 * 16 * 16);

  // doubling T with T >> N approaches a 4x count
  const double ratio = static_cast<double>(unified_score_entries(8192, 4, 1)) /
                       static_cast<double>(unified_score_entries(4096, 4, 1));
  CHECK(ratio == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("instrumented accounting agrees exactly with the closed forms") {
  for (auto [t, n, h] : {std::tuple<Index, Index, Index>{16, 5, 1},
                         {32, 8, 2},
                         {7, 7, 1},
                         {1, 1, 2}}) {
    BenchRecord u = unified_attention_pass(t, n, 8 * h, h, 3, 1);
    CHECK(u.score_entries == unified_score_entries(t, n, h));
    CHECK(u.score_bytes == 8 * u.score_entries);
    BenchRecord c = classical_axial_pass(t, n, 8 * h, h, 3, 1);
    CHECK(c.score_entries == classical_score_entries(t, n, h));
    CHECK(c.score_bytes == 8 * c.score_entries);
  }
}

TEST_CASE("classical pass costs more wall time than unified") {
  BenchRecord u = unified_attention_pass(64, 8, 16, 1, 5, 2);
  BenchRecord c = classical_axial_pass(64, 8, 16, 1, 5, 2);
  CHECK(c.wall_ms_median > u.wall_ms_median);
}

TEST_CASE("run_grid writes the CSV contract and fits exponents") {
  BenchGrid grid;
  grid.sizes = {{32, 8}, {64, 8}};
  grid.d = 16;
  grid.heads = 1;
  grid.repeats = 3;
  grid.warmup = 1;

  const auto csv = std::filesystem::temp_directory_path() / "stf_bench.csv";
  const auto svg = std::filesystem::temp_directory_path() / "stf_bench.svg";
  BenchOutcome outcome = run_grid(grid, csv, &svg);
  CHECK(outcome.records.size() == 4);
  CHECK(outcome.unified_exponent != 0.0);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,T,N,D,heads,repeats,wall_ms_median,score_entries,score_bytes,flagged");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);

  std::ifstream svg_in(svg);
  std::string svg_head;
  std::getline(svg_in, svg_head);
  CHECK(svg_head.rfind("<svg", 0) == 0);
}

TEST_CASE("bench input validation") {
  CHECK_THROWS_AS(unified_attention_pass(8, 8, 7, 2, 3, 1), ConfigError);
  CHECK_THROWS_AS(unified_attention_pass(8, 8, 8, 2, 2, 1), ConfigError);
  BenchGrid empty;
  CHECK_THROWS_AS(run_grid(empty, "/tmp/x.csv"), ConfigError);
}
