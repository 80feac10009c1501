#include "byzsim/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace byzsim {

namespace {

void check_inputs(const std::vector<Vec>& msgs, const char* where) {
  if (msgs.empty()) throw std::invalid_argument(std::string(where) + ": no inputs");
  const std::size_t dim = msgs[0].size();
  for (const Vec& m : msgs) {
    if (m.size() != dim) {
      throw std::invalid_argument(std::string(where) + ": mixed input dimensions");
    }
  }
}

}  // namespace

AggregatorKind aggregator_kind_from_string(const std::string& s) {
  if (s == "mean") return AggregatorKind::Mean;
  if (s == "coordinate_median") return AggregatorKind::CoordinateMedian;
  if (s == "krum") return AggregatorKind::Krum;
  if (s == "rfa") return AggregatorKind::Rfa;
  throw std::invalid_argument("aggregator_kind_from_string: unknown aggregator '" + s + "'");
}

Vec agg_mean(const std::vector<Vec>& msgs) {
  check_inputs(msgs, "agg_mean");
  Vec out = zeros(msgs[0].size());
  for (const Vec& m : msgs) axpy(1.0, m, out);
  scale(out, 1.0 / static_cast<double>(msgs.size()));
  return out;
}

Vec agg_coordinate_median(const std::vector<Vec>& msgs) {
  check_inputs(msgs, "agg_coordinate_median");
  const std::size_t n = msgs.size();
  const std::size_t dim = msgs[0].size();
  Vec out(dim);
  std::vector<double> col(n);
  for (std::size_t t = 0; t < dim; ++t) {
    for (std::size_t i = 0; i < n; ++i) col[i] = msgs[i][t];
    std::sort(col.begin(), col.end());
    out[t] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

Vec agg_krum(const std::vector<Vec>& msgs, std::size_t assumed_byz) {
  check_inputs(msgs, "agg_krum");
  const std::size_t n = msgs.size();
  if (n < assumed_byz + 3) {
    throw std::invalid_argument(
        "agg_krum: needs n - assumed_byz - 2 >= 1 neighbours (n=" + std::to_string(n) +
        ", assumed_byz=" + std::to_string(assumed_byz) + ")");
  }
  const std::size_t n_near = n - assumed_byz - 2;

  std::size_t best = 0;
  double best_score = 0.0;
  std::vector<double> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t l = 0; l < n; ++l) {
      if (l != i) dists.push_back(dist_sq(msgs[i], msgs[l]));
    }
    std::partial_sort(dists.begin(), dists.begin() + n_near, dists.end());
    double score = 0.0;
    for (std::size_t t = 0; t < n_near; ++t) score += dists[t];
    if (i == 0 || score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return msgs[best];
}

Vec agg_rfa(const std::vector<Vec>& msgs, std::size_t iters, double nu) {
  check_inputs(msgs, "agg_rfa");
  if (nu <= 0.0) throw std::invalid_argument("agg_rfa: nu must be positive");
  const std::size_t n = msgs.size();
  Vec z = agg_mean(msgs);
  for (std::size_t it = 0; it < iters; ++it) {
    double wsum = 0.0;
    Vec next = zeros(z.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 1.0 / std::max(nu, std::sqrt(dist_sq(z, msgs[i])));
      wsum += w;
      axpy(w, msgs[i], next);
    }
    scale(next, 1.0 / wsum);
    z = std::move(next);
  }
  return z;
}

std::vector<Vec> bucket_means(const std::vector<Vec>& msgs, std::size_t s,
                              RngStream& rng) {
  check_inputs(msgs, "bucket_means");
  if (s == 0) throw std::invalid_argument("bucket_means: bucket size must be positive");
  const std::size_t n = msgs.size();

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);

  const std::size_t n_buckets = (n + s - 1) / s;
  std::vector<Vec> out;
  out.reserve(n_buckets);
  for (std::size_t b = 0; b < n_buckets; ++b) {
    const std::size_t lo = b * s;
    const std::size_t hi = std::min(lo + s, n);
    Vec acc = zeros(msgs[0].size());
    for (std::size_t t = lo; t < hi; ++t) axpy(1.0, msgs[perm[t]], acc);
    scale(acc, 1.0 / static_cast<double>(hi - lo));
    out.push_back(std::move(acc));
  }
  return out;
}

Vec aggregate(const AggregatorSpec& spec, const std::vector<Vec>& msgs,
              RngStream& rng) {
  const std::vector<Vec>* inputs = &msgs;
  std::vector<Vec> bucketed;
  if (spec.bucket_s > 1) {
    bucketed = bucket_means(msgs, spec.bucket_s, rng);
    inputs = &bucketed;
  }
  switch (spec.kind) {
    case AggregatorKind::Mean:
      return agg_mean(*inputs);
    case AggregatorKind::CoordinateMedian:
      return agg_coordinate_median(*inputs);
    case AggregatorKind::Krum:
      return agg_krum(*inputs, spec.assumed_byz);
    case AggregatorKind::Rfa:
      return agg_rfa(*inputs, spec.rfa_iters, spec.rfa_nu);
  }
  throw std::logic_error("aggregate: unhandled aggregator kind");
}

double pairwise_variance(const std::vector<Vec>& msgs) {
  check_inputs(msgs, "pairwise_variance");
  const std::size_t n = msgs.size();
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = i + 1; l < n; ++l) acc += dist_sq(msgs[i], msgs[l]);
  }
  return 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace byzsim
