#ifndef BYZSIM_AGGREGATION_HPP
#define BYZSIM_AGGREGATION_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "byzsim/rng.hpp"
#include "byzsim/vec.hpp"

namespace byzsim {

// Robust aggregation rules applied server-side to the n worker messages.
enum class AggregatorKind { Mean, CoordinateMedian, Krum, Rfa };

AggregatorKind aggregator_kind_from_string(const std::string& s);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::Mean;
  std::size_t bucket_s = 1;      // 1 disables bucketing (no randomness drawn)
  std::size_t assumed_byz = 0;   // Krum's f parameter
  std::size_t rfa_iters = 8;
  double rfa_nu = 1e-6;
};

// Arithmetic mean in fixed input order.
Vec agg_mean(const std::vector<Vec>& msgs);

// Per-coordinate median; even counts use the midpoint of the middle pair.
Vec agg_coordinate_median(const std::vector<Vec>& msgs);

// Krum: each candidate is scored by the sum of squared distances to its
// n - assumed_byz - 2 nearest OTHER inputs; the lowest score wins, ties
// broken toward the lower index. Requires n - assumed_byz - 2 >= 1.
Vec agg_krum(const std::vector<Vec>& msgs, std::size_t assumed_byz);

// Smoothed geometric median via Weiszfeld iteration: starts at the mean and
// runs exactly `iters` updates with weights 1 / max(nu, ||z - x_i||).
Vec agg_rfa(const std::vector<Vec>& msgs, std::size_t iters, double nu);

// Random bucketing: permutes the inputs with rng, splits them into
// ceil(n/s) consecutive buckets (the last may be short), and averages each
// bucket over its actual size.
std::vector<Vec> bucket_means(const std::vector<Vec>& msgs, std::size_t s,
                              RngStream& rng);

// Full pipeline: optional bucketing (when spec.bucket_s > 1), then the base
// rule. With bucket_s == 1 the rng is never touched.
Vec aggregate(const AggregatorSpec& spec, const std::vector<Vec>& msgs,
              RngStream& rng);

// Mean squared pairwise distance over ordered distinct pairs,
// (1/(n(n-1))) * sum_{i != l} ||x_i - x_l||^2. The input-quality quantity a
// robust rule is judged against.
double pairwise_variance(const std::vector<Vec>& msgs);

}  // namespace byzsim

#endif  // BYZSIM_AGGREGATION_HPP
