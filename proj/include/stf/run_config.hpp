#pragma once

#include "stf/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>

namespace stf {

/// Union of every tunable the CLI accepts: training and model fields plus
/// the benchmark and synthesizer knobs. Values come from built-in defaults,
/// a flat `key = value` config file, or command-line flags, in that
/// precedence order (flags win); each key remembers where its value came
/// from. The key set is closed: an unknown key is fatal and the message
/// suggests the nearest valid one.
struct RunConfig {
  TrainConfig train;

  Index bench_dim = 16;
  Index bench_heads = 1;
  Index bench_repeats = 5;
  Index bench_warmup = 2;

  Index synth_nodes = 12;
  Index synth_days = 30;
  int synth_steps_per_day = 288;
  Real synth_sigma = 3.0;

  std::map<std::string, std::string> sources;  // key -> default|file|flag

  static const std::vector<std::string>& known_keys();

  void set(const std::string& key, const std::string& value, const std::string& source);
  void load_file(const std::filesystem::path& path);
  std::string source_of(const std::string& key) const;

  /// One "key = value  (source)" line per key.
  void echo(std::ostream& out) const;
};

std::vector<Milestone> parse_milestones(const std::string& text);

}  // namespace stf
