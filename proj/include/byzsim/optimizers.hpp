#ifndef BYZSIM_OPTIMIZERS_HPP
#define BYZSIM_OPTIMIZERS_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "byzsim/aggregation.hpp"
#include "byzsim/attacks.hpp"
#include "byzsim/compression.hpp"
#include "byzsim/data.hpp"
#include "byzsim/problems.hpp"
#include "byzsim/rng.hpp"
#include "byzsim/vec.hpp"

namespace byzsim {

// Everything a round engine needs about the federation: who holds what data,
// which loss, estimator, compressor, aggregator and attack are in play, and
// the named random streams that make runs bit-for-bit reproducible.
struct ClusterConfig {
  LossModel model;
  DeltaEstimator estimator;
  Compressor compressor;
  AggregatorSpec aggregator;
  AttackSpec attack;
  std::size_t n_total = 1;
  std::size_t byz_count = 0;
  std::uint64_t master_seed = 1;
};

// Builds the per-worker shard list with Byzantine workers last: under
// FullCopy every worker holds the whole dataset; under DisjointShuffle the
// good workers split it and each Byzantine worker holds a full copy
// (the adversary is omniscient anyway).
std::vector<WorkerShard> build_worker_shards(std::shared_ptr<const Dataset> data,
                                             std::size_t n_total,
                                             std::size_t byz_count, ShardMode mode,
                                             std::uint64_t shard_seed);

class Cluster {
 public:
  // shards must have one entry per worker, good workers first. When the
  // attack is label flipping, the Byzantine shards are flipped here.
  Cluster(const ClusterConfig& cfg, std::vector<WorkerShard> shards);

  std::size_t n_total() const { return cfg_.n_total; }
  std::size_t n_good() const { return cfg_.n_total - cfg_.byz_count; }
  std::size_t byz_count() const { return cfg_.byz_count; }
  std::size_t dim() const { return objective_.dim(); }
  double mean_good_shard_size() const { return mean_good_shard_size_; }

  const ClusterConfig& config() const { return cfg_; }
  const LossModel& model() const { return cfg_.model; }
  const DeltaEstimator& estimator() const { return cfg_.estimator; }
  const Compressor& compressor() const { return cfg_.compressor; }
  const AggregatorSpec& aggregator() const { return cfg_.aggregator; }
  const AttackSpec& attack() const { return cfg_.attack; }

  const WorkerShard& shard(std::size_t w) const { return shards_[w]; }
  // Null when the worker samples uniformly.
  const SamplingDist* dist(std::size_t w) const;

  // The objective being optimized: the mean over good-worker objectives.
  const GlobalObjective& objective() const { return objective_; }

  RngStream& sampling(std::size_t w) { return sampling_[w]; }
  RngStream& compression(std::size_t w) { return compression_[w]; }
  RngStream& coin() { return coin_; }
  RngStream& bucketing() { return bucketing_; }

 private:
  ClusterConfig cfg_;
  std::vector<WorkerShard> shards_;
  std::vector<SamplingDist> dists_;
  std::vector<RngStream> sampling_;
  std::vector<RngStream> compression_;
  RngStream coin_;
  RngStream bucketing_;
  GlobalObjective objective_;
  double mean_good_shard_size_ = 0.0;
};

// Per-round accounting, reported by every round engine.
struct RoundRecord {
  bool full_round = false;          // variance-reduced engine: anchor round?
  double oracle_per_good_worker = 0.0;  // sample-gradient evaluations charged
  double components_per_worker = 0.0;   // coordinates each worker put on the wire
  std::uint64_t total_bits = 0;         // uplink bits summed over all n workers
  double msg_pair_var = 0.0;  // pairwise variance of the aggregated messages
};

// ---- Variance-reduced engine ----

struct MarinaState {
  Vec x;
  Vec g;
  std::uint64_t k = 0;
  bool diverged = false;
};

// Initialization round: every worker reports its full local gradient at x0
// (dense; attacks apply), the server aggregates into g^0. Costs are not
// charged, but the record carries the message dispersion diagnostic.
MarinaState marina_init(Cluster& cl, const Vec& x0, RoundRecord* record = nullptr);

// One round: the server flips a p-coin and broadcasts it with the step; on
// heads every worker sends its full local gradient at the new iterate, on
// tails it sends g^k plus a compressed stochastic gradient difference.
// Byzantine workers run the same pipeline, then substitute their crafted
// message (projected onto a legal sparse frame in compressed rounds).
RoundRecord marina_round(Cluster& cl, MarinaState& st, double gamma, double p);

// ---- Single-point baselines ----

struct SgdState {
  Vec x;
  std::uint64_t k = 0;
  bool diverged = false;
};

SgdState sgd_init(const Cluster& cl, const Vec& x0);

// Robust (optionally compressed) stochastic gradient round: workers send
// minibatch gradients through the cluster's compressor, the server applies
// the robust aggregator and steps.
RoundRecord sgd_round(Cluster& cl, SgdState& st, double gamma);

struct SgdmState {
  Vec x;
  std::vector<Vec> momenta;  // one per worker, zero-initialized
  std::uint64_t k = 0;
  bool diverged = false;
};

SgdmState sgdm_init(const Cluster& cl, const Vec& x0);

// Robust momentum round: each worker updates m_i <- beta m_i + (1-beta) gh_i
// and sends m_i densely; the server aggregates robustly and steps.
RoundRecord sgdm_round(Cluster& cl, SgdmState& st, double gamma, double beta);

struct SvrgState {
  Vec x;
  std::vector<Vec> anchors;       // one per worker
  std::vector<Vec> anchor_grads;  // full local gradient at the anchor
  std::uint64_t k = 0;
  bool diverged = false;
};

SvrgState svrg_init(const Cluster& cl, const Vec& x0);

// Robust SVRG round: every epoch_len rounds (including round 0) workers
// re-anchor at the current iterate and pay a full local gradient; each round
// they send anchor_grad + minibatch correction, densely.
RoundRecord svrg_round(Cluster& cl, SvrgState& st, double gamma,
                       std::size_t epoch_len);

// ---- Diagnostics support ----

// One Monte-Carlo replay of the good workers' compressed-round messages at
// the given state, drawing from caller-owned streams (shared sequentially
// across workers) so protocol streams stay untouched.
std::vector<Vec> replay_compressed_good_messages(const Cluster& cl,
                                                 const Vec& x_next,
                                                 const Vec& x_prev, const Vec& g,
                                                 RngStream& sampling,
                                                 RngStream& compression);

// Default round-coin probability min{batch/m, 1/(1+omega)}.
double default_p(double batch, double mean_shard_size, double omega);

}  // namespace byzsim

#endif  // BYZSIM_OPTIMIZERS_HPP
