#include "byzsim/optimizers.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

namespace byzsim {

std::vector<WorkerShard> build_worker_shards(std::shared_ptr<const Dataset> data,
                                             std::size_t n_total,
                                             std::size_t byz_count, ShardMode mode,
                                             std::uint64_t shard_seed) {
  if (n_total == 0 || byz_count >= n_total) {
    throw std::invalid_argument("build_worker_shards: need at least one good worker");
  }
  const std::size_t n_good = n_total - byz_count;
  std::vector<WorkerShard> shards;
  shards.reserve(n_total);
  if (mode == ShardMode::FullCopy) {
    for (std::size_t w = 0; w < n_total; ++w) {
      shards.push_back(full_copy_shard(data, w));
    }
    return shards;
  }
  shards = shard_dataset(data, n_good, ShardMode::DisjointShuffle, shard_seed);
  for (std::size_t w = n_good; w < n_total; ++w) {
    shards.push_back(full_copy_shard(data, w));
  }
  return shards;
}

namespace {

std::vector<WorkerShard> prepare_shards(const ClusterConfig& cfg,
                                        std::vector<WorkerShard> shards) {
  if (cfg.n_total == 0 || cfg.byz_count >= cfg.n_total) {
    throw std::invalid_argument("Cluster: need at least one good worker");
  }
  if (shards.size() != cfg.n_total) {
    throw std::invalid_argument("Cluster: got " + std::to_string(shards.size()) +
                                " shards for " + std::to_string(cfg.n_total) +
                                " workers");
  }
  if (cfg.attack.kind == AttackKind::Lf) {
    for (std::size_t w = cfg.n_total - cfg.byz_count; w < cfg.n_total; ++w) {
      shards[w] = flip_labels(shards[w]);
    }
  }
  return shards;
}

std::vector<WorkerShard> good_prefix(const std::vector<WorkerShard>& shards,
                                     std::size_t n_good) {
  return std::vector<WorkerShard>(shards.begin(),
                                  shards.begin() + static_cast<std::ptrdiff_t>(n_good));
}

bool messages_finite(const std::vector<Vec>& msgs) {
  for (const Vec& m : msgs) {
    if (!all_finite(m)) return false;
  }
  return true;
}

std::uint64_t sum_bits(const std::vector<std::uint64_t>& bits) {
  std::uint64_t s = 0;
  for (std::uint64_t b : bits) s += b;
  return s;
}

}  // namespace

Cluster::Cluster(const ClusterConfig& cfg, std::vector<WorkerShard> shards)
    : cfg_(cfg),
      shards_(prepare_shards(cfg, std::move(shards))),
      coin_(cfg.master_seed, StreamRole::ServerCoin, 0),
      bucketing_(cfg.master_seed, StreamRole::ServerBucketing, 0),
      objective_(cfg.model, good_prefix(shards_, cfg.n_total - cfg.byz_count)) {
  sampling_.reserve(cfg_.n_total);
  compression_.reserve(cfg_.n_total);
  for (std::size_t w = 0; w < cfg_.n_total; ++w) {
    sampling_.emplace_back(cfg_.master_seed, StreamRole::WorkerSampling, w);
    compression_.emplace_back(cfg_.master_seed, StreamRole::WorkerCompression, w);
  }
  if (cfg_.estimator.scheme == SamplingScheme::Importance) {
    dists_.reserve(cfg_.n_total);
    for (std::size_t w = 0; w < cfg_.n_total; ++w) {
      const SmoothnessTable table =
          cfg_.model.kind == ModelKind::Quadratic
              ? quadratic_curvature_table(shards_[w])
              : smoothness_table(cfg_.model, shards_[w]);
      dists_.push_back(build_sampling_dist(table));
    }
  }
  double acc = 0.0;
  const std::size_t ng = n_good();
  for (std::size_t w = 0; w < ng; ++w) acc += static_cast<double>(shards_[w].size());
  mean_good_shard_size_ = acc / static_cast<double>(ng);
}

const SamplingDist* Cluster::dist(std::size_t w) const {
  if (cfg_.estimator.scheme != SamplingScheme::Importance) return nullptr;
  return &dists_[w];
}

namespace {

// Replaces the Byzantine workers' honest messages (already sitting at the
// tail of msgs) with crafted ones, respecting the wire format of the round:
// when sparse_k > 0 a crafted message must travel as an anchor plus a
// k-sparse delta, so it is projected onto its k largest-magnitude delta
// coordinates. Na/Lf keep their honest (already legal) messages and bits.
void apply_attack(Cluster& cl, std::vector<Vec>& msgs,
                  std::vector<std::uint64_t>& bits, const Vec* anchor,
                  std::size_t sparse_k, std::uint64_t round) {
  const std::size_t n = cl.n_total();
  const std::size_t n_good = cl.n_good();
  if (n_good == n) return;
  const AttackKind kind = cl.attack().kind;
  if (kind == AttackKind::Na || kind == AttackKind::Lf) return;

  const std::vector<Vec> good_msgs(msgs.begin(),
                                   msgs.begin() + static_cast<std::ptrdiff_t>(n_good));
  AttackContext ctx;
  ctx.good_messages = &good_msgs;
  ctx.n_total = n;
  ctx.byz_count = cl.byz_count();
  ctx.round = round;

  const std::size_t d = msgs[0].size();
  const Compressor& comp = cl.compressor();
  for (std::size_t w = n_good; w < n; ++w) {
    Vec crafted = byz_message(cl.attack(), ctx, msgs[w]);
    if (sparse_k > 0) {
      Vec delta = anchor != nullptr ? sub(crafted, *anchor) : std::move(crafted);
      const std::vector<std::uint32_t> idx = top_k_indices(delta, sparse_k);
      Vec eff = anchor != nullptr ? *anchor : zeros(d);
      for (std::uint32_t t : idx) eff[t] += delta[t];
      msgs[w] = std::move(eff);
      bits[w] = sparse_bit_cost(sparse_k, d, comp.value_bits);
    } else {
      msgs[w] = std::move(crafted);
      bits[w] = dense_bit_cost(d, comp.value_bits);
    }
  }
}

void step_state(Vec& x, const Vec& g, double gamma) { axpy(-gamma, g, x); }

}  // namespace

MarinaState marina_init(Cluster& cl, const Vec& x0, RoundRecord* record) {
  if (x0.size() != cl.dim()) throw std::invalid_argument("marina_init: x0 has wrong dimension");
  const std::size_t n = cl.n_total();
  std::vector<Vec> msgs(n);
  std::vector<std::uint64_t> bits(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    msgs[w] = full_grad(cl.model(), cl.shard(w), x0);
  }
  apply_attack(cl, msgs, bits, nullptr, 0, 0);

  MarinaState st;
  st.x = x0;
  st.k = 0;
  if (!messages_finite(msgs)) {
    st.diverged = true;
    st.g = zeros(cl.dim());
    return st;
  }
  const double pair_var = pairwise_variance(msgs);
  st.g = aggregate(cl.aggregator(), msgs, cl.bucketing());
  st.diverged = !all_finite(st.g);
  if (record != nullptr) {
    *record = RoundRecord{};
    record->full_round = true;
    record->msg_pair_var = pair_var;
  }
  return st;
}

RoundRecord marina_round(Cluster& cl, MarinaState& st, double gamma, double p) {
  if (st.diverged) throw std::logic_error("marina_round: state already diverged");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("marina_round: p must lie in (0, 1]");
  const std::size_t n = cl.n_total();
  const std::size_t d = cl.dim();
  const Compressor& comp = cl.compressor();

  const bool full = cl.coin().bernoulli(p);

  Vec x_next = st.x;
  step_state(x_next, st.g, gamma);

  RoundRecord rec;
  rec.full_round = full;
  if (!all_finite(x_next)) {
    st.diverged = true;
    st.x = std::move(x_next);
    st.k += 1;
    return rec;
  }

  std::vector<Vec> msgs(n);
  std::vector<std::uint64_t> bits(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    if (full) {
      msgs[w] = full_grad(cl.model(), cl.shard(w), x_next);
      bits[w] = dense_bit_cost(d, comp.value_bits);
    } else {
      const Vec delta = delta_hat(cl.estimator(), cl.model(), cl.shard(w), x_next,
                                  st.x, cl.sampling(w), cl.dist(w));
      const CompressedMessage cm = compress(comp, delta, cl.compression(w));
      Vec eff = st.g;
      axpy(1.0, decompress(cm, d), eff);
      msgs[w] = std::move(eff);
      bits[w] = cm.bit_cost;
    }
  }
  const std::size_t sparse_k =
      !full && comp.kind == CompressorKind::RandK ? comp.k : 0;
  apply_attack(cl, msgs, bits, &st.g, sparse_k, st.k + 1);

  rec.oracle_per_good_worker =
      full ? cl.mean_good_shard_size() : 2.0 * static_cast<double>(cl.estimator().batch);
  rec.components_per_worker = static_cast<double>(sparse_k > 0 ? sparse_k : d);
  rec.total_bits = sum_bits(bits);

  if (!messages_finite(msgs)) {
    st.diverged = true;
    st.x = std::move(x_next);
    st.k += 1;
    return rec;
  }
  rec.msg_pair_var = pairwise_variance(msgs);
  Vec g_next = aggregate(cl.aggregator(), msgs, cl.bucketing());
  st.diverged = !all_finite(g_next);
  st.x = std::move(x_next);
  st.g = std::move(g_next);
  st.k += 1;
  return rec;
}

SgdState sgd_init(const Cluster& cl, const Vec& x0) {
  if (x0.size() != cl.dim()) throw std::invalid_argument("sgd_init: x0 has wrong dimension");
  SgdState st;
  st.x = x0;
  return st;
}

RoundRecord sgd_round(Cluster& cl, SgdState& st, double gamma) {
  if (st.diverged) throw std::logic_error("sgd_round: state already diverged");
  const std::size_t n = cl.n_total();
  const std::size_t d = cl.dim();
  const Compressor& comp = cl.compressor();

  std::vector<Vec> msgs(n);
  std::vector<std::uint64_t> bits(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    const Vec ghat = batch_grad(cl.estimator(), cl.model(), cl.shard(w), st.x,
                                cl.sampling(w), cl.dist(w));
    const CompressedMessage cm = compress(comp, ghat, cl.compression(w));
    msgs[w] = decompress(cm, d);
    bits[w] = cm.bit_cost;
  }
  const std::size_t sparse_k = comp.kind == CompressorKind::RandK ? comp.k : 0;
  apply_attack(cl, msgs, bits, nullptr, sparse_k, st.k + 1);

  RoundRecord rec;
  rec.oracle_per_good_worker = static_cast<double>(cl.estimator().batch);
  rec.components_per_worker = static_cast<double>(sparse_k > 0 ? sparse_k : d);
  rec.total_bits = sum_bits(bits);

  if (!messages_finite(msgs)) {
    st.diverged = true;
    st.k += 1;
    return rec;
  }
  rec.msg_pair_var = pairwise_variance(msgs);
  const Vec g = aggregate(cl.aggregator(), msgs, cl.bucketing());
  step_state(st.x, g, gamma);
  st.diverged = !all_finite(st.x) || !all_finite(g);
  st.k += 1;
  return rec;
}

SgdmState sgdm_init(const Cluster& cl, const Vec& x0) {
  if (x0.size() != cl.dim()) throw std::invalid_argument("sgdm_init: x0 has wrong dimension");
  SgdmState st;
  st.x = x0;
  st.momenta.assign(cl.n_total(), zeros(cl.dim()));
  return st;
}

RoundRecord sgdm_round(Cluster& cl, SgdmState& st, double gamma, double beta) {
  if (st.diverged) throw std::logic_error("sgdm_round: state already diverged");
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument("sgdm_round: beta must lie in [0, 1)");
  }
  const std::size_t n = cl.n_total();
  const std::size_t d = cl.dim();

  std::vector<Vec> msgs(n);
  std::vector<std::uint64_t> bits(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    const Vec ghat = batch_grad(cl.estimator(), cl.model(), cl.shard(w), st.x,
                                cl.sampling(w), cl.dist(w));
    Vec& m = st.momenta[w];
    scale(m, beta);
    axpy(1.0 - beta, ghat, m);
    msgs[w] = m;
    bits[w] = dense_bit_cost(d, cl.compressor().value_bits);
  }
  apply_attack(cl, msgs, bits, nullptr, 0, st.k + 1);

  RoundRecord rec;
  rec.oracle_per_good_worker = static_cast<double>(cl.estimator().batch);
  rec.components_per_worker = static_cast<double>(d);
  rec.total_bits = sum_bits(bits);

  if (!messages_finite(msgs)) {
    st.diverged = true;
    st.k += 1;
    return rec;
  }
  rec.msg_pair_var = pairwise_variance(msgs);
  const Vec g = aggregate(cl.aggregator(), msgs, cl.bucketing());
  step_state(st.x, g, gamma);
  st.diverged = !all_finite(st.x) || !all_finite(g);
  st.k += 1;
  return rec;
}

SvrgState svrg_init(const Cluster& cl, const Vec& x0) {
  if (x0.size() != cl.dim()) throw std::invalid_argument("svrg_init: x0 has wrong dimension");
  SvrgState st;
  st.x = x0;
  st.anchors.resize(cl.n_total());
  st.anchor_grads.resize(cl.n_total());
  return st;
}

RoundRecord svrg_round(Cluster& cl, SvrgState& st, double gamma,
                       std::size_t epoch_len) {
  if (st.diverged) throw std::logic_error("svrg_round: state already diverged");
  if (epoch_len == 0) throw std::invalid_argument("svrg_round: epoch_len must be positive");
  const std::size_t n = cl.n_total();
  const std::size_t d = cl.dim();

  RoundRecord rec;
  const bool refresh = st.k % epoch_len == 0;
  rec.full_round = refresh;
  if (refresh) {
    for (std::size_t w = 0; w < n; ++w) {
      st.anchors[w] = st.x;
      st.anchor_grads[w] = full_grad(cl.model(), cl.shard(w), st.x);
    }
  }

  std::vector<Vec> msgs(n);
  std::vector<std::uint64_t> bits(n, 0);
  for (std::size_t w = 0; w < n; ++w) {
    Vec v = delta_hat(cl.estimator(), cl.model(), cl.shard(w), st.x, st.anchors[w],
                      cl.sampling(w), cl.dist(w));
    axpy(1.0, st.anchor_grads[w], v);
    msgs[w] = std::move(v);
    bits[w] = dense_bit_cost(d, cl.compressor().value_bits);
  }
  apply_attack(cl, msgs, bits, nullptr, 0, st.k + 1);

  rec.oracle_per_good_worker = 2.0 * static_cast<double>(cl.estimator().batch) +
                               (refresh ? cl.mean_good_shard_size() : 0.0);
  rec.components_per_worker = static_cast<double>(d);
  rec.total_bits = sum_bits(bits);

  if (!messages_finite(msgs)) {
    st.diverged = true;
    st.k += 1;
    return rec;
  }
  rec.msg_pair_var = pairwise_variance(msgs);
  const Vec g = aggregate(cl.aggregator(), msgs, cl.bucketing());
  step_state(st.x, g, gamma);
  st.diverged = !all_finite(st.x) || !all_finite(g);
  st.k += 1;
  return rec;
}

std::vector<Vec> replay_compressed_good_messages(const Cluster& cl,
                                                 const Vec& x_next,
                                                 const Vec& x_prev, const Vec& g,
                                                 RngStream& sampling,
                                                 RngStream& compression) {
  const std::size_t d = cl.dim();
  std::vector<Vec> out(cl.n_good());
  for (std::size_t w = 0; w < cl.n_good(); ++w) {
    const Vec delta = delta_hat(cl.estimator(), cl.model(), cl.shard(w), x_next,
                                x_prev, sampling, cl.dist(w));
    const CompressedMessage cm = compress(cl.compressor(), delta, compression);
    out[w] = g;
    axpy(1.0, decompress(cm, d), out[w]);
  }
  return out;
}

double default_p(double batch, double mean_shard_size, double omega) {
  if (batch <= 0.0 || mean_shard_size <= 0.0) {
    throw std::invalid_argument("default_p: batch and shard size must be positive");
  }
  return std::min(batch / mean_shard_size, 1.0 / (1.0 + omega));
}

}  // namespace byzsim
