#include "stf/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

namespace stf {

namespace {

Real to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const Real x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + v + "'");
  }
}

Index to_index(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<Index>(x);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string milestones_to_string(const std::vector<Milestone>& ms) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (i) os << ',';
    os << ms[i].epoch << ':' << ms[i].multiplier;
  }
  return os.str();
}

struct KeyBinding {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> print;
};

const std::vector<KeyBinding>& bindings() {
  auto idx = [](const char* k, auto member) {
    return KeyBinding{
        k,
        [k, member](RunConfig& c, const std::string& v) { c.*member = to_index(k, v); },
        [member](const RunConfig& c) { return std::to_string(c.*member); }};
  };
  static const std::vector<KeyBinding> table = {
      {"T", [](RunConfig& c, const std::string& v) { c.train.model.t_in = to_index("T", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.t_in); }},
      {"T_out",
       [](RunConfig& c, const std::string& v) { c.train.model.t_out = to_index("T_out", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.t_out); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = to_index("batch_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"epochs",
       [](RunConfig& c, const std::string& v) { c.train.epochs = to_index("epochs", v); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"learning_rate",
       [](RunConfig& c, const std::string& v) { c.train.lr = to_real("learning_rate", v); },
       [](const RunConfig& c) { return std::to_string(c.train.lr); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = to_real("beta1", v); },
       [](const RunConfig& c) { return std::to_string(c.train.beta1); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = to_real("beta2", v); },
       [](const RunConfig& c) { return std::to_string(c.train.beta2); }},
      {"adam_eps",
       [](RunConfig& c, const std::string& v) { c.train.adam_eps = to_real("adam_eps", v); },
       [](const RunConfig& c) { return std::to_string(c.train.adam_eps); }},
      {"huber_delta",
       [](RunConfig& c, const std::string& v) {
         c.train.huber_delta = to_real("huber_delta", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.huber_delta); }},
      {"mape_threshold",
       [](RunConfig& c, const std::string& v) {
         c.train.mape_threshold = to_real("mape_threshold", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.mape_threshold); }},
      {"milestones",
       [](RunConfig& c, const std::string& v) { c.train.milestones = parse_milestones(v); },
       [](const RunConfig& c) { return milestones_to_string(c.train.milestones); }},
      {"deterministic",
       [](RunConfig& c, const std::string& v) {
         c.train.deterministic = to_bool("deterministic", v);
       },
       [](const RunConfig& c) { return c.train.deterministic ? "true" : "false"; }},
      {"threads",
       [](RunConfig& c, const std::string& v) {
         c.train.threads = static_cast<int>(to_index("threads", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.threads); }},
      {"heads",
       [](RunConfig& c, const std::string& v) { c.train.model.heads = to_index("heads", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.heads); }},
      {"layers",
       [](RunConfig& c, const std::string& v) { c.train.model.layers = to_index("layers", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.layers); }},
      {"d_tf",
       [](RunConfig& c, const std::string& v) { c.train.model.dims.d_tf = to_index("d_tf", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.dims.d_tf); }},
      {"d_tod",
       [](RunConfig& c, const std::string& v) {
         c.train.model.dims.d_tod = to_index("d_tod", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.dims.d_tod); }},
      {"d_dow",
       [](RunConfig& c, const std::string& v) {
         c.train.model.dims.d_dow = to_index("d_dow", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.dims.d_dow); }},
      {"d_sf",
       [](RunConfig& c, const std::string& v) { c.train.model.dims.d_sf = to_index("d_sf", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.dims.d_sf); }},
      {"d_spatial",
       [](RunConfig& c, const std::string& v) {
         c.train.model.dims.d_spatial = to_index("d_spatial", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.model.dims.d_spatial); }},
      {"w_t", [](RunConfig& c, const std::string& v) { c.train.model.w_t = to_real("w_t", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.w_t); }},
      {"w_s", [](RunConfig& c, const std::string& v) { c.train.model.w_s = to_real("w_s", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.w_s); }},
      {"w_m", [](RunConfig& c, const std::string& v) { c.train.model.w_m = to_real("w_m", v); },
       [](const RunConfig& c) { return std::to_string(c.train.model.w_m); }},
      {"local_mask_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "neg_inf") {
           c.train.model.mask_mode = LocalMaskMode::kNegInf;
         } else if (v == "zero_product") {
           c.train.model.mask_mode = LocalMaskMode::kZeroProduct;
         } else {
           throw ConfigError("config key 'local_mask_mode': expected neg_inf or zero_product");
         }
       },
       [](const RunConfig& c) {
         return c.train.model.mask_mode == LocalMaskMode::kNegInf ? "neg_inf" : "zero_product";
       }},
      idx("bench_dim", &RunConfig::bench_dim),
      idx("bench_heads", &RunConfig::bench_heads),
      idx("bench_repeats", &RunConfig::bench_repeats),
      idx("bench_warmup", &RunConfig::bench_warmup),
      idx("synth_nodes", &RunConfig::synth_nodes),
      idx("synth_days", &RunConfig::synth_days),
      {"synth_steps_per_day",
       [](RunConfig& c, const std::string& v) {
         c.synth_steps_per_day = static_cast<int>(to_index("synth_steps_per_day", v));
       },
       [](const RunConfig& c) { return std::to_string(c.synth_steps_per_day); }},
      {"synth_sigma",
       [](RunConfig& c, const std::string& v) { c.synth_sigma = to_real("synth_sigma", v); },
       [](const RunConfig& c) { return std::to_string(c.synth_sigma); }},
  };
  return table;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::vector<Milestone> parse_milestones(const std::string& text) {
  std::vector<Milestone> out;
  if (trim(text).empty() || trim(text) == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("milestones: expected 'epoch:multiplier', got '" + item + "'");
    }
    Milestone m;
    m.epoch = to_index("milestones", trim(item.substr(0, colon)));
    m.multiplier = to_real("milestones", trim(item.substr(colon + 1)));
    out.push_back(m);
  }
  return out;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& b : bindings()) k.push_back(b.name);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& source) {
  for (const auto& b : bindings()) {
    if (key == b.name) {
      b.apply(*this, value);
      sources[key] = source;
      return;
    }
  }
  std::string nearest;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& b : bindings()) {
    const std::size_t d = levenshtein(key, b.name);
    if (d < best) {
      best = d;
      nearest = b.name;
    }
  }
  throw ConfigError("unknown config key '" + key + "'; nearest valid key is '" + nearest + "'");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), "file");
  }
}

std::string RunConfig::source_of(const std::string& key) const {
  const auto it = sources.find(key);
  return it == sources.end() ? "default" : it->second;
}

void RunConfig::echo(std::ostream& out) const {
  for (const auto& b : bindings()) {
    out << "  " << b.name << " = " << b.print(*this) << "  (" << source_of(b.name) << ")\n";
  }
}

}  // namespace stf
