#include "stf/dataset.hpp"

#include "stf/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace stf {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_part_name(SplitPart part) {
  switch (part) {
    case SplitPart::kTrain: return "train";
    case SplitPart::kVal: return "val";
    case SplitPart::kTest: return "test";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(const fs::path& file, Index line, const std::string& what) {
  throw DataError(file.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Real parse_real(const std::string& s, const fs::path& file, Index line) {
  try {
    std::size_t pos = 0;
    const Real v = std::stod(s, &pos);
    if (pos != s.size()) fail(file, line, "trailing characters in number '" + s + "'");
    return v;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    fail(file, line, "cannot parse number '" + s + "'");
  }
}

Index parse_index(const std::string& s, const fs::path& file, Index line) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) fail(file, line, "trailing characters in integer '" + s + "'");
    return static_cast<Index>(v);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    fail(file, line, "cannot parse integer '" + s + "'");
  }
}

Tensor load_signal_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) fail(file, 1, "empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t") {
    fail(file, 1, "expected header 't,node_0,...'");
  }
  const Index n = static_cast<Index>(header.size()) - 1;
  std::vector<Real> values;
  Index rows = 0;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != n + 1) {
      fail(file, lineno,
           "expected " + std::to_string(n + 1) + " fields, got " + std::to_string(fields.size()));
    }
    for (Index j = 1; j <= n; ++j) {
      const Real v = parse_real(fields[static_cast<std::size_t>(j)], file, lineno);
      if (!std::isfinite(v)) {
        fail(file, lineno,
             "non-finite signal value in column " + header[static_cast<std::size_t>(j)]);
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) fail(file, lineno, "no data rows");
  Tensor signal({rows, n});
  std::copy(values.begin(), values.end(), signal.mutable_data());
  return signal;
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

Tensor load_signal_stb(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(file.string() + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "STB1", 4) != 0) {
    throw DataError(file.string() + ": bad magic, expected STB1");
  }
  const Index rows = read_u32_le(in);
  const Index n = read_u32_le(in);
  if (!in || rows < 1 || n < 1) throw DataError(file.string() + ": bad header dimensions");
  Tensor signal({rows, n});
  Real* dst = signal.mutable_data();
  std::vector<float> buf(static_cast<std::size_t>(n));
  for (Index i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) {
      throw DataError(file.string() + ": truncated payload at row " + std::to_string(i));
    }
    for (Index j = 0; j < n; ++j) {
      const Real v = static_cast<Real>(buf[static_cast<std::size_t>(j)]);
      if (!std::isfinite(v)) {
        throw DataError(file.string() + ": non-finite value at byte offset " +
                        std::to_string(12 + (i * n + j) * 4));
      }
      dst[i * n + j] = v;
    }
  }
  return signal;
}

BoolMatrix load_edges(const fs::path& file, Index n) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) fail(file, 1, "empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "from" || header[1] != "to") {
    fail(file, 1, "expected header 'from,to[,cost]'");
  }
  // Self-loops are always set; the cost column is ignored (binary adjacency).
  BoolMatrix adj = BoolMatrix::Identity(n, n);
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) fail(file, lineno, "expected at least 'from,to'");
    const Index a = parse_index(fields[0], file, lineno);
    const Index b = parse_index(fields[1], file, lineno);
    for (Index v : {a, b}) {
      if (v < 0 || v >= n) {
        fail(file, lineno,
             "node index " + std::to_string(v) + " out of range [0, " + std::to_string(n) + ")");
      }
    }
    adj(a, b) = true;
    adj(b, a) = true;
  }
  return adj;
}

}  // namespace

TrafficDataset load_dataset(const fs::path& dir) {
  TrafficDataset ds;
  const fs::path csv = dir / "signal.csv";
  const fs::path stb = dir / "signal.stb";
  if (fs::exists(csv)) {
    ds.signal = load_signal_csv(csv);
  } else if (fs::exists(stb)) {
    ds.signal = load_signal_stb(stb);
  } else {
    throw DataError(dir.string() + ": neither signal.csv nor signal.stb found");
  }

  const fs::path meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DataError(meta_path.string() + ": cannot open");
  json meta;
  try {
    meta_in >> meta;
    ds.steps_per_day = meta.at("steps_per_day").get<int>();
    ds.start_tod = meta.at("start_tod").get<int>();
    ds.start_dow = meta.at("start_dow").get<int>();
    ds.name = meta.at("name").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (ds.steps_per_day < 1) throw DataError(meta_path.string() + ": steps_per_day must be >= 1");
  if (ds.start_tod < 0 || ds.start_tod >= ds.steps_per_day) {
    throw DataError(meta_path.string() + ": start_tod out of range [0, steps_per_day)");
  }
  if (ds.start_dow < 0 || ds.start_dow >= 7) {
    throw DataError(meta_path.string() + ": start_dow out of range [0, 7)");
  }

  ds.adjacency = load_edges(dir / "edges.csv", ds.num_nodes());
  return ds;
}

void save_dataset(const TrafficDataset& ds, const fs::path& dir, bool as_stb) {
  fs::create_directories(dir);
  const Index rows = ds.num_steps();
  const Index n = ds.num_nodes();

  if (as_stb) {
    std::ofstream out(dir / "signal.stb", std::ios::binary);
    out.write("STB1", 4);
    write_u32_le(out, static_cast<std::uint32_t>(rows));
    write_u32_le(out, static_cast<std::uint32_t>(n));
    std::vector<float> buf(static_cast<std::size_t>(n));
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < n; ++j) {
        buf[static_cast<std::size_t>(j)] = static_cast<float>(ds.signal(i, j));
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    }
  } else {
    std::ofstream out(dir / "signal.csv");
    out << 't';
    for (Index j = 0; j < n; ++j) out << ",node_" << j;
    out << '\n';
    char num[40];
    for (Index i = 0; i < rows; ++i) {
      out << i;
      for (Index j = 0; j < n; ++j) {
        std::snprintf(num, sizeof(num), "%.17g", ds.signal(i, j));
        out << ',' << num;
      }
      out << '\n';
    }
  }

  {
    std::ofstream out(dir / "edges.csv");
    out << "from,to\n";
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (ds.adjacency(i, j)) out << i << ',' << j << '\n';
      }
    }
  }

  {
    json meta;
    meta["steps_per_day"] = ds.steps_per_day;
    meta["start_tod"] = ds.start_tod;
    meta["start_dow"] = ds.start_dow;
    meta["name"] = ds.name;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
}

SplitSpec split_622(const TrafficDataset& ds) {
  const Index total = ds.num_steps();
  if (total < 10) {
    throw DataError("split_622: dataset has " + std::to_string(total) + " steps, need >= 10");
  }
  SplitSpec s;
  s.train_end = total * 6 / 10;
  s.val_end = total * 8 / 10;
  return s;
}

std::pair<Tensor, NormStats> fit_apply_zscore(const TrafficDataset& ds, const SplitSpec& split) {
  const Index n = ds.num_nodes();
  const Index train_count = split.train_end * n;
  const Real* p = ds.signal.data();
  Real mean = 0.0;
  for (Index i = 0; i < train_count; ++i) mean += p[i];
  mean /= static_cast<Real>(train_count);
  Real var = 0.0;
  for (Index i = 0; i < train_count; ++i) {
    const Real d = p[i] - mean;
    var += d * d;
  }
  var /= static_cast<Real>(train_count);
  if (var == 0.0) {
    throw DataError("fit_apply_zscore: training split is constant (zero standard deviation)");
  }
  NormStats stats{mean, std::sqrt(var)};
  Tensor normalized(ds.signal.shape());
  normalized.mutable_vec() = (ds.signal.vec().array() - stats.mean) / stats.std;
  return {std::move(normalized), stats};
}

WindowPlan::WindowPlan(const TrafficDataset& ds, const Tensor& normalized, const SplitSpec& split,
                       SplitPart part, Index t_in, Index t_out, Index batch_size,
                       std::optional<std::uint64_t> shuffle_seed)
    : normalized_(normalized),
      raw_(ds.signal),
      steps_per_day_(ds.steps_per_day),
      start_tod_(ds.start_tod),
      start_dow_(ds.start_dow),
      t_in_(t_in),
      t_out_(t_out),
      batch_size_(batch_size) {
  if (t_in < 1 || t_out < 1) throw ConfigError("make_windows: T and T_out must be >= 1");
  if (batch_size < 1) throw ConfigError("make_windows: batch_size must be >= 1");
  if (!normalized_.same_shape(raw_)) {
    throw ConfigError("make_windows: normalized signal " + normalized_.shape_str() +
                      " does not match raw signal " + raw_.shape_str());
  }
  Index begin = 0, end = 0;
  switch (part) {
    case SplitPart::kTrain: begin = 0; end = split.train_end; break;
    case SplitPart::kVal: begin = split.train_end; end = split.val_end; break;
    case SplitPart::kTest: begin = split.val_end; end = ds.num_steps(); break;
  }
  const Index needed = t_in + t_out;
  if (end - begin < needed) {
    throw DataError(std::string("make_windows: ") + split_part_name(part) + " part has " +
                    std::to_string(end - begin) + " steps but requires >= " +
                    std::to_string(needed) + " steps");
  }
  const Index count = (end - begin) - needed + 1;
  order_.resize(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) order_[static_cast<std::size_t>(i)] = begin + i;
  if (shuffle_seed) {
    Rng rng = substream(*shuffle_seed, "shuffle");
    rng.shuffle(order_);
  }
}

Index WindowPlan::num_batches() const {
  return (num_samples() + batch_size_ - 1) / batch_size_;
}

ForecastBatch WindowPlan::batch(Index k) const {
  const Index from = k * batch_size_;
  if (from < 0 || from >= num_samples()) {
    throw ConfigError("WindowPlan::batch: index " + std::to_string(k) + " out of range");
  }
  const Index b = std::min(batch_size_, num_samples() - from);
  const Index n = raw_.dim(1);

  ForecastBatch out;
  out.inputs = Tensor({b, t_in_, n});
  out.targets = Tensor({b, t_out_, n});
  out.tod_idx.resize(static_cast<std::size_t>(b * t_in_));
  out.dow_idx.resize(static_cast<std::size_t>(b * t_in_));
  out.window_starts.resize(static_cast<std::size_t>(b));

  Real* in_p = out.inputs.mutable_data();
  Real* tg_p = out.targets.mutable_data();
  const Real* norm_p = normalized_.data();
  const Real* raw_p = raw_.data();

  for (Index s = 0; s < b; ++s) {
    const Index start = order_[static_cast<std::size_t>(from + s)];
    out.window_starts[static_cast<std::size_t>(s)] = start;
    std::copy(norm_p + start * n, norm_p + (start + t_in_) * n, in_p + s * t_in_ * n);
    const Index tstart = start + t_in_;
    std::copy(raw_p + tstart * n, raw_p + (tstart + t_out_) * n, tg_p + s * t_out_ * n);
    for (Index t = 0; t < t_in_; ++t) {
      const Index g = start + t;
      out.tod_idx[static_cast<std::size_t>(s * t_in_ + t)] =
          static_cast<int>((start_tod_ + g) % steps_per_day_);
      out.dow_idx[static_cast<std::size_t>(s * t_in_ + t)] =
          static_cast<int>((start_dow_ + (start_tod_ + g) / steps_per_day_) % 7);
    }
  }
  return out;
}

WindowPlan make_windows(const TrafficDataset& ds, const Tensor& normalized, const SplitSpec& split,
                        SplitPart part, Index t_in, Index t_out, Index batch_size,
                        std::optional<std::uint64_t> shuffle_seed) {
  return WindowPlan(ds, normalized, split, part, t_in, t_out, batch_size, shuffle_seed);
}

TrafficDataset synth_generate(Index n_nodes, Index n_days, int steps_per_day, std::uint64_t seed,
                              Real noise_sigma) {
  if (n_nodes < 3) {
    throw ConfigError("synth_generate: need at least 3 nodes, got " + std::to_string(n_nodes));
  }
  if (n_days < 1 || steps_per_day < 1) {
    throw ConfigError("synth_generate: days and steps_per_day must be >= 1");
  }
  TrafficDataset ds;
  ds.steps_per_day = steps_per_day;
  ds.start_tod = 0;
  ds.start_dow = 0;  // Monday
  ds.name = "synth";

  ds.adjacency = BoolMatrix::Identity(n_nodes, n_nodes);
  for (Index i = 0; i < n_nodes; ++i) {
    const Index j = (i + 1) % n_nodes;
    ds.adjacency(i, j) = true;
    ds.adjacency(j, i) = true;
  }

  const Index total = n_days * steps_per_day;
  ds.signal = Tensor({total, n_nodes});
  Real* p = ds.signal.mutable_data();
  Rng rng = substream(seed, "synth");
  constexpr Real two_pi = 2.0 * std::numbers::pi_v<Real>;
  for (Index t = 0; t < total; ++t) {
    const Index tod = t % steps_per_day;
    const Index dow = (t / steps_per_day) % 7;
    const Real weekday_factor = dow < 5 ? 1.0 : 0.4;
    for (Index node = 0; node < n_nodes; ++node) {
      // Phase is computed from the position within the day, so with
      // sigma == 0 the value at (t, n) and (t + 7*steps_per_day, n) is
      // identical by construction.
      const Real phase = static_cast<Real>(tod) / static_cast<Real>(steps_per_day) -
                         static_cast<Real>(node) / static_cast<Real>(n_nodes);
      Real v = 100.0 + 40.0 * std::sin(two_pi * phase) + 15.0 * weekday_factor;
      if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
      p[t * n_nodes + node] = std::max(v, 0.0);
    }
  }
  return ds;
}

}  // namespace stf
