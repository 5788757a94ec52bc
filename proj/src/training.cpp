#include "stf/training.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <thread>

namespace stf {

using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("train: adam_eps must be > 0");
  if (huber_delta <= 0.0) throw ConfigError("train: huber_delta must be > 0");
  if (mape_threshold < 0.0) throw ConfigError("train: mape_threshold must be >= 0");
  for (const Milestone& m : milestones) {
    if (m.epoch < 1 || m.multiplier <= 0.0) {
      throw ConfigError("train: milestones need epoch >= 1 and multiplier > 0");
    }
  }
  if (threads < 0) throw ConfigError("train: threads must be >= 0");
}

Real lr_for_epoch(const TrainConfig& cfg, Index epoch) {
  Real lr = cfg.lr;
  for (const Milestone& m : cfg.milestones) {
    if (epoch > m.epoch) lr *= m.multiplier;
  }
  return lr;
}

OptimizerState OptimizerState::init(const ModelParams& params, const TrainConfig& cfg) {
  OptimizerState state;
  state.lr = cfg.lr;
  state.beta1 = cfg.beta1;
  state.beta2 = cfg.beta2;
  state.eps = cfg.adam_eps;
  visit_params(params, [&](const std::string& name, const Tensor& t) {
    state.names.push_back(name);
    state.m.push_back(Tensor::zeros(t.shape()));
    state.v.push_back(Tensor::zeros(t.shape()));
  });
  return state;
}

GradVector zero_grads_like(const ModelParams& params) {
  GradVector out;
  visit_params(params, [&](const std::string&, const Tensor& t) {
    out.push_back(Tensor::zeros(t.shape()));
  });
  return out;
}

void accumulate_grads(GradVector& acc, const ModelParams& params, const GradientMap& grads,
                      Real scale) {
  std::size_t i = 0;
  visit_params(params, [&](const std::string&, const Tensor& t) {
    acc[i].mutable_vec() += scale * grads.at(t).vec();
    ++i;
  });
}

void adam_step(ModelParams& params, const GradVector& grads, OptimizerState& state) {
  if (grads.size() != state.names.size()) {
    throw ConfigError("adam_step: gradient vector does not cover all trainable parameters");
  }
  state.step += 1;
  const Real bc1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.step));
  const Real bc2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.step));
  std::size_t i = 0;
  visit_params(params, [&](const std::string& name, Tensor& p) {
    const Tensor& g = grads[i];
    if (!g.vec().allFinite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + name + "'");
    }
    auto m = state.m[i].mutable_vec();
    auto v = state.v[i].mutable_vec();
    m = state.beta1 * m + (1.0 - state.beta1) * g.vec();
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g.vec().array().square();
    p.mutable_vec().array() -=
        state.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
    ++i;
  });
}

namespace {

struct SampleResult {
  Real loss = 0.0;
  GradVector grads;
};

SampleResult run_sample(const ForecastBatch& batch, Index s, const ModelParams& shared,
                        const BoolMatrix& adjacency, const NormStats& stats,
                        const TrainConfig& cfg) {
  // Shallow copy: buffers are shared, tape bindings stay private to this
  // sample (and thread).
  ModelParams local = shared;
  Tape tape;
  watch_params(tape, local);
  ForwardOptions opt;
  opt.training = true;
  Forecast f = forward(tape, batch.inputs.slice0(s), batch.tod_row(s), batch.dow_row(s),
                       adjacency, local, stats, opt);
  Tensor loss = huber_loss(tape, f.y_hat, batch.targets.slice0(s), cfg.huber_delta);
  GradientMap gm = tape.backward(loss);

  SampleResult r;
  r.loss = loss.scalar_value();
  visit_params(local, [&](const std::string&, const Tensor& t) { r.grads.push_back(gm.at(t)); });
  return r;
}

/// Gradient of the batch mean loss. Samples may be evaluated on several
/// threads; the reduction always runs in sample order, so the result is
/// identical at any thread count.
Real batch_gradients(const ForecastBatch& batch, const ModelParams& params,
                     const BoolMatrix& adjacency, const NormStats& stats, const TrainConfig& cfg,
                     int threads, GradVector& acc) {
  const Index b = batch.size();
  const Real inv_b = 1.0 / static_cast<Real>(b);
  Real loss_sum = 0.0;

  auto reduce = [&](const SampleResult& r) {
    loss_sum += r.loss;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i].mutable_vec() += inv_b * r.grads[i].vec();
    }
  };

  if (threads <= 1 || b == 1) {
    for (Index s = 0; s < b; ++s) reduce(run_sample(batch, s, params, adjacency, stats, cfg));
  } else {
    std::vector<std::optional<SampleResult>> slots(static_cast<std::size_t>(b));
    std::atomic<Index> next{0};
    auto worker = [&]() {
      for (;;) {
        const Index s = next.fetch_add(1);
        if (s >= b) return;
        slots[static_cast<std::size_t>(s)] = run_sample(batch, s, params, adjacency, stats, cfg);
      }
    };
    std::vector<std::thread> pool;
    const int k = static_cast<int>(std::min<Index>(threads, b));
    pool.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (Index s = 0; s < b; ++s) reduce(*slots[static_cast<std::size_t>(s)]);
  }
  return loss_sum;
}

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, Index epoch) {
  return seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch));
}

}  // namespace

void MetricAccumulator::add(Real pred, Real truth, Real mape_threshold) {
  const Real e = pred - truth;
  sum_sq += e * e;
  sum_abs += std::abs(e);
  ++n;
  if (std::abs(truth) > mape_threshold) {
    sum_ape += std::abs(e) / std::abs(truth);
  } else {
    ++n_masked;
  }
}

MetricReport MetricAccumulator::report() const {
  if (n == 0) throw DataError("metrics: empty evaluation set");
  MetricReport r;
  r.n_eval = n;
  r.n_masked = n_masked;
  r.rmse = std::sqrt(sum_sq / static_cast<Real>(n));
  r.mae = sum_abs / static_cast<Real>(n);
  r.mape = n > n_masked ? 100.0 * sum_ape / static_cast<Real>(n - n_masked) : 0.0;
  return r;
}

MetricReport evaluate(const ModelParams& params, const TrafficDataset& ds,
                      const Tensor& normalized, const SplitSpec& split, SplitPart part,
                      const NormStats& stats, const TrainConfig& cfg) {
  WindowPlan plan = make_windows(ds, normalized, split, part, cfg.model.t_in, cfg.model.t_out,
                                 cfg.batch_size);
  MetricAccumulator acc;
  for (Index k = 0; k < plan.num_batches(); ++k) {
    const ForecastBatch batch = plan.batch(k);
    for (Index s = 0; s < batch.size(); ++s) {
      Tape tape(false);
      Forecast f = forward(tape, batch.inputs.slice0(s), batch.tod_row(s), batch.dow_row(s),
                           ds.adjacency, params, stats, {});
      const Real* yh = f.y_hat.data();
      const Tensor yt = batch.targets.slice0(s);
      const Real* yp = yt.data();
      for (Index i = 0; i < yt.size(); ++i) acc.add(yh[i], yp[i], cfg.mape_threshold);
    }
  }
  return acc.report();
}

TrainResult train(const TrafficDataset& ds, const TrainConfig& cfg_in,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  TrainConfig cfg = cfg_in;
  if (cfg.model.n_nodes == 0) {
    cfg.model.n_nodes = ds.num_nodes();
  } else if (cfg.model.n_nodes != ds.num_nodes()) {
    throw ConfigError("train: config expects " + std::to_string(cfg.model.n_nodes) +
                      " nodes but the dataset has " + std::to_string(ds.num_nodes()));
  }
  cfg.model.steps_per_day = ds.steps_per_day;
  cfg.validate();

  const SplitSpec split = split_622(ds);
  auto [normalized, stats] = fit_apply_zscore(ds, split);

  Rng init_rng = substream(cfg.seed, "init");
  ModelParams params = ModelParams::init(cfg.model, init_rng);
  OptimizerState state = OptimizerState::init(params, cfg);

  int threads = 1;
  if (!cfg.deterministic) {
    threads = cfg.threads > 0 ? cfg.threads
                              : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }

  TrainResult result;
  result.stats = stats;
  result.split = split;
  Real best_mae = std::numeric_limits<Real>::infinity();

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    state.lr = lr_for_epoch(cfg, epoch);

    WindowPlan plan = make_windows(ds, normalized, split, SplitPart::kTrain, cfg.model.t_in,
                                   cfg.model.t_out, cfg.batch_size,
                                   epoch_shuffle_seed(cfg.seed, epoch));
    Real loss_sum = 0.0;
    for (Index k = 0; k < plan.num_batches(); ++k) {
      const ForecastBatch batch = plan.batch(k);
      GradVector acc = zero_grads_like(params);
      loss_sum += batch_gradients(batch, params, ds.adjacency, stats, cfg, threads, acc);
      adam_step(params, acc, state);
    }

    const MetricReport val = evaluate(params, ds, normalized, split, SplitPart::kVal, stats, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<Real>(plan.num_samples());
    row.val = val;
    row.lr = state.lr;
    row.seconds = std::chrono::duration<Real>(t1 - t0).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (val.mae < best_mae) {
      best_mae = val.mae;
      result.best_params = params.clone();
      result.best_epoch = epoch;
    }
  }
  result.state = std::move(state);
  result.config = cfg;
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "epoch,train_loss,val_rmse,val_mae,val_mape,lr,seconds\n";
  char buf[256];
  for (const EpochLog& row : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n",
                  static_cast<long long>(row.epoch), row.train_loss, row.val.rmse, row.val.mae,
                  row.val.mape, row.lr, row.seconds);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format.

namespace {

constexpr char kMagic[4] = {'X', 'L', 'N', 'G'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const TrainConfig& cfg) {
  json j;
  j["t_in"] = cfg.model.t_in;
  j["t_out"] = cfg.model.t_out;
  j["n_nodes"] = cfg.model.n_nodes;
  j["steps_per_day"] = cfg.model.steps_per_day;
  j["d_tf"] = cfg.model.dims.d_tf;
  j["d_tod"] = cfg.model.dims.d_tod;
  j["d_dow"] = cfg.model.dims.d_dow;
  j["d_sf"] = cfg.model.dims.d_sf;
  j["d_spatial"] = cfg.model.dims.d_spatial;
  j["heads"] = cfg.model.heads;
  j["layers"] = cfg.model.layers;
  j["w_t"] = cfg.model.w_t;
  j["w_s"] = cfg.model.w_s;
  j["w_m"] = cfg.model.w_m;
  j["local_mask_mode"] =
      cfg.model.mask_mode == LocalMaskMode::kNegInf ? "neg_inf" : "zero_product";
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["huber_delta"] = cfg.huber_delta;
  j["mape_threshold"] = cfg.mape_threshold;
  json ms = json::array();
  for (const Milestone& m : cfg.milestones) ms.push_back({m.epoch, m.multiplier});
  j["milestones"] = ms;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.model.t_in = j.at("t_in").get<Index>();
  cfg.model.t_out = j.at("t_out").get<Index>();
  cfg.model.n_nodes = j.at("n_nodes").get<Index>();
  cfg.model.steps_per_day = j.at("steps_per_day").get<int>();
  cfg.model.dims.d_tf = j.at("d_tf").get<Index>();
  cfg.model.dims.d_tod = j.at("d_tod").get<Index>();
  cfg.model.dims.d_dow = j.at("d_dow").get<Index>();
  cfg.model.dims.d_sf = j.at("d_sf").get<Index>();
  cfg.model.dims.d_spatial = j.at("d_spatial").get<Index>();
  cfg.model.heads = j.at("heads").get<Index>();
  cfg.model.layers = j.at("layers").get<Index>();
  cfg.model.w_t = j.at("w_t").get<Real>();
  cfg.model.w_s = j.at("w_s").get<Real>();
  cfg.model.w_m = j.at("w_m").get<Real>();
  cfg.model.mask_mode = j.at("local_mask_mode").get<std::string>() == "zero_product"
                            ? LocalMaskMode::kZeroProduct
                            : LocalMaskMode::kNegInf;
  cfg.batch_size = j.at("batch_size").get<Index>();
  cfg.epochs = j.at("epochs").get<Index>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.lr = j.at("lr").get<Real>();
  cfg.beta1 = j.at("beta1").get<Real>();
  cfg.beta2 = j.at("beta2").get<Real>();
  cfg.adam_eps = j.at("adam_eps").get<Real>();
  cfg.huber_delta = j.at("huber_delta").get<Real>();
  cfg.mape_threshold = j.at("mape_threshold").get<Real>();
  cfg.milestones.clear();
  for (const auto& m : j.at("milestones")) {
    cfg.milestones.push_back({m.at(0).get<Index>(), m.at(1).get<Real>()});
  }
  return cfg;
}

struct NamedTensors {
  std::vector<std::string> names;
  std::vector<const Tensor*> tensors;
  void add(const std::string& name, const Tensor& t) {
    names.push_back(name);
    tensors.push_back(&t);
  }
};

NamedTensors checkpoint_order(const ModelParams& params, const OptimizerState* state) {
  NamedTensors all;
  visit_params(params, [&](const std::string& name, const Tensor& t) { all.add(name, t); });
  if (state) {
    for (std::size_t i = 0; i < state->names.size(); ++i) {
      all.add("opt.m." + state->names[i], state->m[i]);
    }
    for (std::size_t i = 0; i < state->names.size(); ++i) {
      all.add("opt.v." + state->names[i], state->v[i]);
    }
  }
  return all;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const OptimizerState& state,
                     const NormStats& stats, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  NamedTensors all = checkpoint_order(params, &state);

  json header;
  json tensors = json::array();
  for (std::size_t i = 0; i < all.names.size(); ++i) {
    tensors.push_back({{"name", all.names[i]}, {"shape", all.tensors[i]->shape()}});
  }
  header["tensors"] = std::move(tensors);
  header["config"] = config_to_json(cfg);
  header["norm_stats"] = {{"mean", stats.mean}, {"std", stats.std}};
  header["adam_step"] = state.step;
  header["lr"] = state.lr;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor* t : all.tensors) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(Real)));
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

namespace {

struct HeaderEntry {
  std::string name;
  std::vector<Index> shape;
};

struct ParsedHeader {
  json header;
  std::vector<HeaderEntry> entries;
};

ParsedHeader read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": bad magic, not a checkpoint");
  }
  std::uint32_t version = 0, hlen = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw DataError(path + ": truncated header");
  if (version != kVersion) {
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw DataError(path + ": truncated header");
  ParsedHeader parsed;
  try {
    parsed.header = json::parse(hs);
    for (const auto& t : parsed.header.at("tensors")) {
      HeaderEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<std::vector<Index>>();
      parsed.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed header: " + e.what());
  }
  return parsed;
}

void read_payload_into(std::ifstream& in, const std::string& path,
                       const std::vector<HeaderEntry>& entries,
                       const std::function<Tensor*(const std::string&)>& locate) {
  for (const HeaderEntry& e : entries) {
    Tensor* dst = locate(e.name);
    if (dst == nullptr) {
      throw DataError(path + ": unknown tensor name '" + e.name + "'");
    }
    if (dst->shape() != e.shape) {
      throw DataError(path + ": tensor '" + e.name + "' has shape " + shape_to_string(e.shape) +
                      " but the configuration expects " + dst->shape_str());
    }
    in.read(reinterpret_cast<char*>(dst->mutable_data()),
            static_cast<std::streamsize>(dst->size() * sizeof(Real)));
    if (!in) {
      throw DataError(path + ": unexpected end of payload while reading '" + e.name + "'");
    }
  }
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  ParsedHeader parsed = read_header(in, path.string());

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(parsed.header.at("config"));
    ckpt.stats.mean = parsed.header.at("norm_stats").at("mean").get<Real>();
    ckpt.stats.std = parsed.header.at("norm_stats").at("std").get<Real>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  ckpt.params = ModelParams::build(ckpt.config.model);
  ckpt.state = OptimizerState::init(ckpt.params, ckpt.config);
  ckpt.state.step = parsed.header.value("adam_step", Index{0});
  ckpt.state.lr = parsed.header.value("lr", ckpt.config.lr);

  std::map<std::string, Tensor*> by_name;
  visit_params(ckpt.params,
               [&](const std::string& name, Tensor& t) { by_name.emplace(name, &t); });
  for (std::size_t i = 0; i < ckpt.state.names.size(); ++i) {
    by_name.emplace("opt.m." + ckpt.state.names[i], &ckpt.state.m[i]);
    by_name.emplace("opt.v." + ckpt.state.names[i], &ckpt.state.v[i]);
  }
  read_payload_into(in, path.string(), parsed.entries, [&](const std::string& name) -> Tensor* {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second;
  });
  return ckpt;
}

void apply_checkpoint_params(const std::filesystem::path& path, ModelParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  ParsedHeader parsed = read_header(in, path.string());

  std::map<std::string, Tensor*> by_name;
  visit_params(params, [&](const std::string& name, Tensor& t) { by_name.emplace(name, &t); });

  // Optimizer moments are present in the payload; route them to scratch.
  std::vector<Tensor> scratch;
  scratch.reserve(parsed.entries.size());
  for (const HeaderEntry& e : parsed.entries) {
    if (e.name.rfind("opt.", 0) == 0) {
      scratch.emplace_back(Tensor::zeros(e.shape));
      by_name.emplace(e.name, &scratch.back());
    }
  }
  read_payload_into(in, path.string(), parsed.entries, [&](const std::string& name) -> Tensor* {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second;
  });
}

}  // namespace stf
