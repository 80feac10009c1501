#include "byzsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include "json.hpp"

namespace byzsim {

namespace {

using nlohmann::json;

enum class KeyType { Str, Bool, Dbl, UInt, U64, I64, DblList, U64List, PAuto };

struct KeySpec {
  const char* key;
  KeyType type;
};

constexpr KeySpec kSchema[] = {
    {"problem", KeyType::Str},
    {"dataset", KeyType::Str},
    {"synthetic_samples", KeyType::UInt},
    {"synthetic_dim", KeyType::UInt},
    {"synthetic_seed", KeyType::U64},
    {"add_bias", KeyType::Bool},
    {"lambda", KeyType::Dbl},
    {"n_workers", KeyType::UInt},
    {"byz_count", KeyType::UInt},
    {"shard_mode", KeyType::Str},
    {"shard_seed", KeyType::U64},
    {"algorithm", KeyType::Str},
    {"gammas", KeyType::DblList},
    {"p", KeyType::PAuto},
    {"batch", KeyType::UInt},
    {"beta", KeyType::Dbl},
    {"epoch_len", KeyType::UInt},
    {"sampling", KeyType::Str},
    {"compressor", KeyType::Str},
    {"rand_k", KeyType::UInt},
    {"aggregator", KeyType::Str},
    {"bucket_s", KeyType::UInt},
    {"krum_assumed_byz", KeyType::I64},
    {"rfa_iters", KeyType::UInt},
    {"rfa_nu", KeyType::Dbl},
    {"attack", KeyType::Str},
    {"ipm_epsilon", KeyType::Dbl},
    {"alie_z", KeyType::Dbl},
    {"rounds", KeyType::U64},
    {"seeds", KeyType::U64List},
    {"out_dir", KeyType::Str},
};

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& s : kSchema) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

bool is_uint(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Parses one override "key=value" into a typed JSON value per the schema.
void apply_override(json& doc, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + kv + "'");
  }
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw ConfigError("override targets unknown key '" + key + "'");

  auto parse_double = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      throw ConfigError("override '" + key + "': '" + s + "' is not a number");
    }
    return v;
  };
  auto parse_u64 = [&](const std::string& s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || s.find('-') != std::string::npos) {
      throw ConfigError("override '" + key + "': '" + s + "' is not a nonnegative integer");
    }
    return static_cast<std::uint64_t>(v);
  };
  auto split_list = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
      const std::size_t comma = s.find(',', start);
      if (comma == std::string::npos) {
        parts.push_back(s.substr(start));
        break;
      }
      parts.push_back(s.substr(start, comma - start));
      start = comma + 1;
    }
    return parts;
  };

  switch (spec->type) {
    case KeyType::Str:
      doc[key] = raw;
      break;
    case KeyType::Bool:
      if (raw == "true" || raw == "1") {
        doc[key] = true;
      } else if (raw == "false" || raw == "0") {
        doc[key] = false;
      } else {
        throw ConfigError("override '" + key + "': expected true/false");
      }
      break;
    case KeyType::Dbl:
      doc[key] = parse_double(raw);
      break;
    case KeyType::UInt:
    case KeyType::U64:
      doc[key] = parse_u64(raw);
      break;
    case KeyType::I64: {
      char* end = nullptr;
      const long long v = std::strtoll(raw.c_str(), &end, 10);
      if (end == raw.c_str() || *end != '\0') {
        throw ConfigError("override '" + key + "': '" + raw + "' is not an integer");
      }
      doc[key] = static_cast<std::int64_t>(v);
      break;
    }
    case KeyType::DblList: {
      json arr = json::array();
      for (const std::string& part : split_list(raw)) arr.push_back(parse_double(part));
      doc[key] = arr;
      break;
    }
    case KeyType::U64List: {
      json arr = json::array();
      for (const std::string& part : split_list(raw)) arr.push_back(parse_u64(part));
      doc[key] = arr;
      break;
    }
    case KeyType::PAuto:
      if (raw == "auto") {
        doc[key] = "auto";
      } else {
        doc[key] = parse_double(raw);
      }
      break;
  }
}

RunConfig config_from_json(const json& doc) {
  std::vector<std::string> errors;
  auto fail = [&errors](const std::string& msg) { errors.push_back(msg); };

  if (!doc.is_object()) {
    throw ConfigError("config: top-level document must be a JSON object");
  }

  for (const auto& item : doc.items()) {
    if (find_key(item.key()) == nullptr) fail("unknown key '" + item.key() + "'");
  }

  RunConfig cfg;
  auto get = [&](const char* key) -> const json* {
    const auto it = doc.find(key);
    if (it == doc.end()) {
      fail(std::string("missing key '") + key + "'");
      return nullptr;
    }
    return &*it;
  };
  auto get_str = [&](const char* key, std::string& out) {
    if (const json* v = get(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        fail(std::string("key '") + key + "' must be a string");
      }
    }
  };
  auto get_bool = [&](const char* key, bool& out) {
    if (const json* v = get(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        fail(std::string("key '") + key + "' must be a boolean");
      }
    }
  };
  auto get_dbl = [&](const char* key, double& out) {
    if (const json* v = get(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(std::string("key '") + key + "' must be a number");
      }
    }
  };
  auto get_uint = [&](const char* key, std::size_t& out) {
    if (const json* v = get(key)) {
      if (is_uint(*v)) {
        out = v->get<std::size_t>();
      } else {
        fail(std::string("key '") + key + "' must be a nonnegative integer");
      }
    }
  };
  auto get_u64 = [&](const char* key, std::uint64_t& out) {
    if (const json* v = get(key)) {
      if (is_uint(*v)) {
        out = v->get<std::uint64_t>();
      } else {
        fail(std::string("key '") + key + "' must be a nonnegative integer");
      }
    }
  };

  get_str("problem", cfg.problem);
  get_str("dataset", cfg.dataset);
  get_uint("synthetic_samples", cfg.synthetic_samples);
  get_uint("synthetic_dim", cfg.synthetic_dim);
  get_u64("synthetic_seed", cfg.synthetic_seed);
  get_bool("add_bias", cfg.add_bias);
  get_dbl("lambda", cfg.lambda);
  get_uint("n_workers", cfg.n_workers);
  get_uint("byz_count", cfg.byz_count);
  get_str("shard_mode", cfg.shard_mode);
  get_u64("shard_seed", cfg.shard_seed);
  get_str("algorithm", cfg.algorithm);
  if (const json* v = get("gammas")) {
    if (v->is_array() && !v->empty()) {
      for (const json& g : *v) {
        if (g.is_number()) {
          cfg.gammas.push_back(g.get<double>());
        } else {
          fail("key 'gammas' must hold numbers");
          break;
        }
      }
    } else {
      fail("key 'gammas' must be a nonempty array of numbers");
    }
  }
  if (const json* v = get("p")) {
    if (v->is_string()) {
      if (v->get<std::string>() == "auto") {
        cfg.p_auto = true;
      } else {
        fail("key 'p' must be a number or \"auto\"");
      }
    } else if (v->is_number()) {
      cfg.p = v->get<double>();
    } else {
      fail("key 'p' must be a number or \"auto\"");
    }
  }
  get_uint("batch", cfg.batch);
  get_dbl("beta", cfg.beta);
  get_uint("epoch_len", cfg.epoch_len);
  get_str("sampling", cfg.sampling);
  get_str("compressor", cfg.compressor);
  get_uint("rand_k", cfg.rand_k);
  get_str("aggregator", cfg.aggregator);
  get_uint("bucket_s", cfg.bucket_s);
  if (const json* v = get("krum_assumed_byz")) {
    if (v->is_number_integer() || v->is_number_unsigned()) {
      cfg.krum_assumed_byz = v->get<std::int64_t>();
    } else {
      fail("key 'krum_assumed_byz' must be an integer (-1 = byz_count)");
    }
  }
  get_uint("rfa_iters", cfg.rfa_iters);
  get_dbl("rfa_nu", cfg.rfa_nu);
  get_str("attack", cfg.attack);
  get_dbl("ipm_epsilon", cfg.ipm_epsilon);
  get_dbl("alie_z", cfg.alie_z);
  get_u64("rounds", cfg.rounds);
  if (const json* v = get("seeds")) {
    if (v->is_array() && !v->empty()) {
      for (const json& s : *v) {
        if (is_uint(s)) {
          cfg.seeds.push_back(s.get<std::uint64_t>());
        } else {
          fail("key 'seeds' must hold nonnegative integers");
          break;
        }
      }
    } else {
      fail("key 'seeds' must be a nonempty array of integers");
    }
  }
  get_str("out_dir", cfg.out_dir);

  // Semantic checks only when the syntactic pass produced the values.
  if (errors.empty()) {
    auto one_of = [&fail](const char* key, const std::string& v,
                          std::initializer_list<const char*> allowed) {
      for (const char* a : allowed) {
        if (v == a) return;
      }
      std::string msg = std::string("key '") + key + "': '" + v + "' is not one of {";
      bool first = true;
      for (const char* a : allowed) {
        if (!first) msg += ", ";
        msg += a;
        first = false;
      }
      fail(msg + "}");
    };
    one_of("problem", cfg.problem, {"logistic_l2", "logistic_nonconvex", "quadratic"});
    one_of("shard_mode", cfg.shard_mode, {"full_copy", "disjoint_shuffle"});
    one_of("algorithm", cfg.algorithm, {"marina", "sgd", "csgd", "br_sgdm", "byrd_svrg"});
    one_of("sampling", cfg.sampling, {"uniform", "importance"});
    one_of("compressor", cfg.compressor, {"identity", "rand_k"});
    one_of("aggregator", cfg.aggregator,
           {"mean", "coordinate_median", "krum", "rfa"});
    one_of("attack", cfg.attack, {"na", "lf", "bf", "alie", "ipm"});

    if (cfg.dataset.empty()) fail("key 'dataset' must be a path or \"synthetic\"");
    if (cfg.dataset == "synthetic") {
      if (cfg.synthetic_samples == 0) fail("synthetic dataset needs synthetic_samples >= 1");
      if (cfg.synthetic_dim == 0) fail("synthetic dataset needs synthetic_dim >= 1");
      if (cfg.add_bias) fail("add_bias applies to file datasets only");
    }
    if (!(cfg.lambda >= 0.0)) fail("lambda must be nonnegative");
    if (cfg.problem == "quadratic" && cfg.lambda != 0.0) {
      fail("the quadratic model takes no regularizer; set lambda = 0");
    }
    if (cfg.n_workers == 0) fail("n_workers must be at least 1");
    if (2 * cfg.byz_count >= cfg.n_workers) fail("byz_count must be below n_workers / 2");
    for (double g : cfg.gammas) {
      if (!(g > 0.0)) {
        fail("gammas must be positive");
        break;
      }
    }
    if (!cfg.p_auto && !(cfg.p > 0.0 && cfg.p <= 1.0)) {
      fail("p must lie in (0, 1] or be \"auto\"");
    }
    if (cfg.batch == 0) fail("batch must be at least 1");
    if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) fail("beta must lie in [0, 1)");
    if (cfg.bucket_s == 0) fail("bucket_s must be at least 1 (1 disables bucketing)");
    if (cfg.krum_assumed_byz < -1) fail("krum_assumed_byz must be >= -1 (-1 = byz_count)");
    if (cfg.rfa_iters == 0) fail("rfa_iters must be at least 1");
    if (!(cfg.rfa_nu > 0.0)) fail("rfa_nu must be positive");
    if (!(cfg.ipm_epsilon >= 0.0)) fail("ipm_epsilon must be nonnegative");
    if (!(cfg.alie_z >= 0.0)) fail("alie_z must be nonnegative (0 = automatic)");
    if (cfg.rounds == 0) fail("rounds must be at least 1");
    if (cfg.out_dir.empty()) fail("out_dir must be a directory path");

    if (cfg.algorithm == "sgd" && cfg.compressor != "identity") {
      fail("algorithm 'sgd' sends uncompressed gradients; use 'csgd' for rand_k");
    }
    if (cfg.algorithm == "csgd" && cfg.compressor != "rand_k") {
      fail("algorithm 'csgd' requires the rand_k compressor");
    }
    if ((cfg.algorithm == "br_sgdm" || cfg.algorithm == "byrd_svrg") &&
        cfg.compressor != "identity") {
      fail("algorithm '" + cfg.algorithm + "' sends dense messages; compressor must be identity");
    }
    if (cfg.aggregator == "krum") {
      const std::size_t assumed = cfg.krum_assumed_byz < 0
                                      ? cfg.byz_count
                                      : static_cast<std::size_t>(cfg.krum_assumed_byz);
      const std::size_t inputs = (cfg.n_workers + cfg.bucket_s - 1) / cfg.bucket_s;
      if (inputs < assumed + 3) {
        fail("krum needs ceil(n/bucket_s) >= assumed_byz + 3 inputs, got " +
             std::to_string(inputs));
      }
    }
  }

  if (!errors.empty()) {
    std::string msg = "config invalid:";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace

RunConfig parse_config(const std::string& json_text,
                       const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top-level document must be a JSON object");
  for (const std::string& kv : overrides) apply_override(doc, kv);
  return config_from_json(doc);
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text, overrides);
}

ProblemSetup build_problem(const RunConfig& cfg) {
  ProblemSetup setup;
  Dataset ds;
  if (cfg.dataset == "synthetic") {
    ds = cfg.problem == "quadratic"
             ? synth_quadratic(cfg.synthetic_samples, cfg.synthetic_dim, cfg.synthetic_seed)
             : synth_logistic(cfg.synthetic_samples, cfg.synthetic_dim, cfg.synthetic_seed);
  } else {
    try {
      ds = load_libsvm(cfg.dataset, 0, cfg.add_bias);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
  }
  setup.data = std::make_shared<const Dataset>(std::move(ds));
  setup.dim = setup.data->dim;
  const ShardMode mode = cfg.shard_mode == "full_copy" ? ShardMode::FullCopy
                                                       : ShardMode::DisjointShuffle;
  setup.shards = build_worker_shards(setup.data, cfg.n_workers, cfg.byz_count, mode,
                                     cfg.shard_seed);
  setup.model = LossModel{model_kind_from_string(cfg.problem), cfg.lambda};
  const std::size_t n_good = cfg.n_workers - cfg.byz_count;
  double acc = 0.0;
  for (std::size_t w = 0; w < n_good; ++w) {
    acc += static_cast<double>(setup.shards[w].size());
  }
  setup.mean_good_shard_size = acc / static_cast<double>(n_good);
  return setup;
}

ClusterConfig build_cluster_config(const RunConfig& cfg, const ProblemSetup& setup,
                                   std::uint64_t master_seed) {
  ClusterConfig cc;
  cc.model = setup.model;
  cc.estimator.scheme = cfg.sampling == "importance" ? SamplingScheme::Importance
                                                     : SamplingScheme::Uniform;
  cc.estimator.batch = cfg.batch;
  cc.compressor.kind = compressor_kind_from_string(cfg.compressor);
  cc.compressor.k = cfg.rand_k != 0 ? cfg.rand_k : (setup.dim + 9) / 10;
  cc.compressor.value_bits = 64;
  if (cc.compressor.kind == CompressorKind::RandK && cc.compressor.k > setup.dim) {
    throw ConfigError("rand_k exceeds the problem dimension " + std::to_string(setup.dim));
  }
  cc.aggregator.kind = aggregator_kind_from_string(cfg.aggregator);
  cc.aggregator.bucket_s = cfg.bucket_s;
  cc.aggregator.assumed_byz = cfg.krum_assumed_byz < 0
                                  ? cfg.byz_count
                                  : static_cast<std::size_t>(cfg.krum_assumed_byz);
  cc.aggregator.rfa_iters = cfg.rfa_iters;
  cc.aggregator.rfa_nu = cfg.rfa_nu;
  cc.attack.kind = attack_kind_from_string(cfg.attack);
  cc.attack.ipm_epsilon = cfg.ipm_epsilon;
  cc.attack.alie_z = cfg.alie_z;
  cc.n_total = cfg.n_workers;
  cc.byz_count = cfg.byz_count;
  cc.master_seed = master_seed;
  return cc;
}

double resolve_p(const RunConfig& cfg, const ProblemSetup& setup) {
  if (!cfg.p_auto) return cfg.p;
  const std::size_t k = cfg.rand_k != 0 ? cfg.rand_k : (setup.dim + 9) / 10;
  Compressor comp{compressor_kind_from_string(cfg.compressor), k, 64};
  const double omega = compressor_omega(comp, setup.dim);
  return default_p(static_cast<double>(cfg.batch), setup.mean_good_shard_size, omega);
}

FstarResult compute_fstar(const RunConfig& cfg, const ProblemSetup& setup) {
  const std::size_t n_good = cfg.n_workers - cfg.byz_count;
  const std::vector<WorkerShard> good(setup.shards.begin(),
                                      setup.shards.begin() +
                                          static_cast<std::ptrdiff_t>(n_good));
  if (setup.model.kind == ModelKind::Quadratic) {
    return FstarResult{quadratic_constants(good).f_star, false};
  }
  std::vector<SmoothnessTable> tables;
  tables.reserve(good.size());
  for (const WorkerShard& s : good) tables.push_back(smoothness_table(setup.model, s));
  const double L = global_smoothness(tables);

  const GlobalObjective obj(setup.model, good);
  Vec x = zeros(setup.dim);
  Vec grad;
  const double gamma = 1.0 / L;
  for (int it = 0; it < 1000; ++it) {
    obj.eval(x, nullptr, &grad);
    if (std::sqrt(norm_sq(grad)) < 1e-12) break;
    axpy(-gamma, grad, x);
  }
  return FstarResult{obj.value(x), setup.model.kind == ModelKind::LogisticNonconvex};
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write_file: cannot open '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("atomic_write_file: write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<double> relative_compression(const std::vector<std::uint64_t>& cum_bits,
                                         std::size_t n_workers, std::size_t dim,
                                         std::size_t value_bits,
                                         double samples_per_worker) {
  if (n_workers == 0 || dim == 0 || value_bits == 0 || !(samples_per_worker > 0.0)) {
    throw std::invalid_argument("relative_compression: bad normalizers");
  }
  const double full_round_bits = static_cast<double>(n_workers) *
                                 static_cast<double>(dim) *
                                 static_cast<double>(value_bits);
  std::vector<double> out(cum_bits.size());
  for (std::size_t t = 0; t < cum_bits.size(); ++t) {
    out[t] = static_cast<double>(cum_bits[t]) / full_round_bits / samples_per_worker;
  }
  return out;
}

namespace {

struct CellResult {
  bool diverged = false;
  double final_gap = std::numeric_limits<double>::infinity();
  double quarter_gap = std::numeric_limits<double>::infinity();
};

// Drives one (gamma, seed) run, writes its trace CSV, and reports the gap
// statistics used for step-size selection.
CellResult run_cell(const RunConfig& cfg, const ProblemSetup& setup, double gamma,
                    std::uint64_t seed, double fstar_value, const std::string& csv_path) {
  Cluster cl(build_cluster_config(cfg, setup, seed), setup.shards);
  const GlobalObjective& obj = cl.objective();
  const Vec x0 = zeros(cl.dim());

  std::string csv = "seed,k,gap,grad_norm_sq,cum_bits,cum_oracle,diag_msg_var,diag_gdist\n";
  std::uint64_t cum_bits = 0;
  double cum_oracle = 0.0;

  const std::uint64_t quarter_start = 3 * cfg.rounds / 4;
  double quarter_sum = 0.0;
  std::size_t quarter_count = 0;
  double last_gap = std::numeric_limits<double>::infinity();
  bool aborted = false;

  // Appends one row; reports false (abort) on a non-finite gap or gradient.
  auto emit = [&](std::uint64_t k, const Vec& x, const Vec* g, double msg_var) {
    double f = 0.0;
    Vec grad;
    obj.eval(x, &f, &grad);
    const double gap = f - fstar_value;
    const double gn = norm_sq(grad);
    if (!std::isfinite(gap) || !std::isfinite(gn)) return false;
    const double gdist = g != nullptr ? dist_sq(*g, grad) : 0.0;
    csv += std::to_string(seed);
    csv += ',';
    csv += std::to_string(k);
    csv += ',';
    csv += fmt_g17(gap);
    csv += ',';
    csv += fmt_g17(gn);
    csv += ',';
    csv += std::to_string(cum_bits);
    csv += ',';
    csv += fmt_g17(cum_oracle);
    csv += ',';
    csv += fmt_g17(msg_var);
    csv += ',';
    csv += fmt_g17(gdist);
    csv += '\n';
    last_gap = gap;
    if (k >= quarter_start) {
      quarter_sum += gap;
      ++quarter_count;
    }
    return true;
  };

  const double p = resolve_p(cfg, setup);
  const std::size_t epoch_len =
      cfg.epoch_len != 0
          ? cfg.epoch_len
          : static_cast<std::size_t>(
                std::ceil(setup.mean_good_shard_size / static_cast<double>(cfg.batch)));

  if (cfg.algorithm == "marina") {
    RoundRecord rec0;
    MarinaState st = marina_init(cl, x0, &rec0);
    aborted = st.diverged || !emit(0, st.x, &st.g, rec0.msg_pair_var);
    for (std::uint64_t k = 1; k <= cfg.rounds && !aborted; ++k) {
      const RoundRecord rec = marina_round(cl, st, gamma, p);
      if (st.diverged) {
        aborted = true;
        break;
      }
      cum_bits += rec.total_bits;
      cum_oracle += rec.oracle_per_good_worker;
      aborted = !emit(k, st.x, &st.g, rec.msg_pair_var);
    }
  } else if (cfg.algorithm == "sgd" || cfg.algorithm == "csgd") {
    SgdState st = sgd_init(cl, x0);
    aborted = !emit(0, st.x, nullptr, 0.0);
    for (std::uint64_t k = 1; k <= cfg.rounds && !aborted; ++k) {
      const RoundRecord rec = sgd_round(cl, st, gamma);
      if (st.diverged) {
        aborted = true;
        break;
      }
      cum_bits += rec.total_bits;
      cum_oracle += rec.oracle_per_good_worker;
      aborted = !emit(k, st.x, nullptr, rec.msg_pair_var);
    }
  } else if (cfg.algorithm == "br_sgdm") {
    SgdmState st = sgdm_init(cl, x0);
    aborted = !emit(0, st.x, nullptr, 0.0);
    for (std::uint64_t k = 1; k <= cfg.rounds && !aborted; ++k) {
      const RoundRecord rec = sgdm_round(cl, st, gamma, cfg.beta);
      if (st.diverged) {
        aborted = true;
        break;
      }
      cum_bits += rec.total_bits;
      cum_oracle += rec.oracle_per_good_worker;
      aborted = !emit(k, st.x, nullptr, rec.msg_pair_var);
    }
  } else if (cfg.algorithm == "byrd_svrg") {
    SvrgState st = svrg_init(cl, x0);
    aborted = !emit(0, st.x, nullptr, 0.0);
    for (std::uint64_t k = 1; k <= cfg.rounds && !aborted; ++k) {
      const RoundRecord rec = svrg_round(cl, st, gamma, epoch_len);
      if (st.diverged) {
        aborted = true;
        break;
      }
      cum_bits += rec.total_bits;
      cum_oracle += rec.oracle_per_good_worker;
      aborted = !emit(k, st.x, nullptr, rec.msg_pair_var);
    }
  } else {
    throw std::logic_error("run_cell: unhandled algorithm " + cfg.algorithm);
  }

  atomic_write_file(csv_path, csv);

  CellResult result;
  result.diverged = aborted;
  if (!aborted) {
    result.final_gap = last_gap;
    result.quarter_gap = quarter_count > 0
                             ? quarter_sum / static_cast<double>(quarter_count)
                             : std::numeric_limits<double>::infinity();
  }
  return result;
}

}  // namespace

int run(const RunConfig& cfg) {
  const ProblemSetup setup = build_problem(cfg);
  const FstarResult fstar = compute_fstar(cfg, setup);
  std::filesystem::create_directories(cfg.out_dir);

  struct GammaStats {
    double gamma = 0.0;
    std::vector<std::uint64_t> diverged_seeds;
    std::vector<double> final_gaps;    // surviving seeds only
    std::vector<double> quarter_gaps;  // surviving seeds only
  };
  std::vector<GammaStats> stats;
  stats.reserve(cfg.gammas.size());

  for (double gamma : cfg.gammas) {
    GammaStats gs;
    gs.gamma = gamma;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string path = cfg.out_dir + "/trace_gamma" + fmt_short(gamma) +
                               "_seed" + std::to_string(seed) + ".csv";
      const CellResult cell = run_cell(cfg, setup, gamma, seed, fstar.value, path);
      if (cell.diverged) {
        gs.diverged_seeds.push_back(seed);
      } else {
        gs.final_gaps.push_back(cell.final_gap);
        gs.quarter_gaps.push_back(cell.quarter_gap);
      }
    }
    stats.push_back(std::move(gs));
  }

  // Step-size selection: fewest diverged seeds first, then smallest mean
  // final-quarter gap; ties keep the earlier grid entry.
  std::size_t best_index = stats.size();
  std::size_t best_div = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::size_t div = stats[i].diverged_seeds.size();
    double score = std::numeric_limits<double>::infinity();
    if (!stats[i].quarter_gaps.empty()) {
      score = 0.0;
      for (double q : stats[i].quarter_gaps) score += q;
      score /= static_cast<double>(stats[i].quarter_gaps.size());
    }
    const bool better =
        best_index == stats.size() || div < best_div || (div == best_div && score < best_score);
    if (better) {
      best_index = i;
      best_div = div;
      best_score = score;
    }
  }
  const bool all_diverged =
      std::all_of(stats.begin(), stats.end(),
                  [&](const GammaStats& gs) { return gs.final_gaps.empty(); });

  json summary;
  summary["best_gamma"] = all_diverged ? json(nullptr) : json(stats[best_index].gamma);
  summary["per_gamma"] = json::array();
  for (const GammaStats& gs : stats) {
    json entry;
    entry["gamma"] = gs.gamma;
    if (gs.final_gaps.empty()) {
      entry["mean_final_gap"] = nullptr;
      entry["stderr"] = nullptr;
    } else {
      double mean = 0.0;
      for (double g : gs.final_gaps) mean += g;
      mean /= static_cast<double>(gs.final_gaps.size());
      double se = 0.0;
      if (gs.final_gaps.size() > 1) {
        double var = 0.0;
        for (double g : gs.final_gaps) var += (g - mean) * (g - mean);
        var /= static_cast<double>(gs.final_gaps.size() - 1);
        se = std::sqrt(var / static_cast<double>(gs.final_gaps.size()));
      }
      entry["mean_final_gap"] = mean;
      entry["stderr"] = se;
    }
    entry["diverged_seeds"] = gs.diverged_seeds;
    summary["per_gamma"].push_back(std::move(entry));
  }
  summary["fstar"] = fstar.value;
  summary["fstar_approximate"] = fstar.approximate;
  summary["samples_per_worker"] = setup.mean_good_shard_size;
  summary["algorithm"] = cfg.algorithm;
  summary["rounds"] = cfg.rounds;
  summary["seeds"] = cfg.seeds;
  atomic_write_file(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");

  return all_diverged ? 3 : 0;
}

}  // namespace byzsim
