#ifndef BYZSIM_HARNESS_HPP
#define BYZSIM_HARNESS_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzsim/data.hpp"
#include "byzsim/optimizers.hpp"
#include "byzsim/problems.hpp"

namespace byzsim {

// A configuration problem (bad file, unknown key, invalid value). The CLI
// maps this to exit code 2; every detected issue is listed in the message.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat experiment description. Every key is mandatory in the JSON document;
// unknown keys are rejected. Sentinels ("auto" p, rand_k = 0,
// krum_assumed_byz = -1, epoch_len = 0, alie_z = 0) resolve against the
// materialized problem at run time.
struct RunConfig {
  std::string problem;           // logistic_l2 | logistic_nonconvex | quadratic
  std::string dataset;           // "synthetic" or a LIBSVM file path
  std::size_t synthetic_samples = 0;
  std::size_t synthetic_dim = 0;
  std::uint64_t synthetic_seed = 0;
  bool add_bias = false;
  double lambda = 0.0;
  std::size_t n_workers = 0;
  std::size_t byz_count = 0;
  std::string shard_mode;        // full_copy | disjoint_shuffle
  std::uint64_t shard_seed = 0;
  std::string algorithm;         // marina | sgd | csgd | br_sgdm | byrd_svrg
  std::vector<double> gammas;
  bool p_auto = false;
  double p = 0.0;
  std::size_t batch = 0;
  double beta = 0.0;
  std::size_t epoch_len = 0;     // 0 = ceil(m / batch)
  std::string sampling;          // uniform | importance
  std::string compressor;        // identity | rand_k
  std::size_t rand_k = 0;        // 0 = ceil(0.1 * dim)
  std::string aggregator;        // mean | coordinate_median | krum | rfa
  std::size_t bucket_s = 0;
  std::int64_t krum_assumed_byz = 0;  // -1 = byz_count
  std::size_t rfa_iters = 0;
  double rfa_nu = 0.0;
  std::string attack;            // na | lf | bf | alie | ipm
  double ipm_epsilon = 0.0;
  double alie_z = 0.0;           // 0 = order-statistic default
  std::uint64_t rounds = 0;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
};

// Parses and fully validates a config file, applying --override key=value
// pairs (comma-separated lists for array keys) before validation.
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});

// Same, from an in-memory JSON document string.
RunConfig parse_config(const std::string& json_text,
                       const std::vector<std::string>& overrides = {});

// The materialized problem: dataset, per-worker shards (Byzantines last,
// unflipped — the cluster applies label flipping), and loss model.
struct ProblemSetup {
  std::shared_ptr<const Dataset> data;
  std::vector<WorkerShard> shards;
  LossModel model;
  std::size_t dim = 0;
  double mean_good_shard_size = 0.0;
};

ProblemSetup build_problem(const RunConfig& cfg);

// Cluster configuration with all sentinels resolved for one seed.
ClusterConfig build_cluster_config(const RunConfig& cfg, const ProblemSetup& setup,
                                   std::uint64_t master_seed);

// Resolved round-coin probability for the setup (marina only).
double resolve_p(const RunConfig& cfg, const ProblemSetup& setup);

struct FstarResult {
  double value = 0.0;
  bool approximate = false;  // true when the model is nonconvex
};

// Reference optimal value of the good-worker objective: closed form for the
// quadratic model, otherwise gradient descent at stepsize 1/L for 1000
// passes or until the gradient norm falls below 1e-12.
FstarResult compute_fstar(const RunConfig& cfg, const ProblemSetup& setup);

// Runs the full (gamma x seed) grid, writing one trace CSV per cell plus
// summary.json into cfg.out_dir (all writes atomic: temp file + rename).
// Returns 0 normally, 3 when every gamma diverged on every seed.
int run(const RunConfig& cfg);

// Cumulative uplink traffic normalized by one full-precision round
// (n * dim * value_bits) and by the per-worker dataset size, per trace row.
std::vector<double> relative_compression(const std::vector<std::uint64_t>& cum_bits,
                                         std::size_t n_workers, std::size_t dim,
                                         std::size_t value_bits,
                                         double samples_per_worker);

// Writes content to path atomically (temp file in the same directory, then
// rename).
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace byzsim

#endif  // BYZSIM_HARNESS_HPP
