#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "byzsim/data.hpp"
#include "byzsim/rng.hpp"
#include "byzsim/vec.hpp"

namespace byzsim {

// Finite-sum objectives. Each worker i holds a shard and optimizes the mean
// of per-sample losses f_{i,j}; the global objective is the mean over
// workers' local objectives.
//
//   LogisticL2        binary cross-entropy + lambda * ||x||^2
//   LogisticNonconvex binary cross-entropy + lambda * sum_t x_t^2/(1+x_t^2)
//   Quadratic         f_{i,j}(x) = h_j/2 ||x||^2 - g_j.x + ||g_j||^2/(2 h_j),
//                     a least-squares test fixture with closed-form optimum;
//                     h_j > 0 lives in the dataset's label slot and g_j in
//                     the feature row.
enum class ModelKind { LogisticL2, LogisticNonconvex, Quadratic };

struct LossModel {
  ModelKind kind = ModelKind::LogisticL2;
  double lambda = 0.0;
};

ModelKind model_kind_from_string(const std::string& s);

// Overflow-safe logistic primitives.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow for large |z|.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sparse_dot(const SparseRow& row, const Vec& x) {
  double s = 0.0;
  for (std::size_t t = 0; t < row.idx.size(); ++t) s += row.val[t] * x[row.idx[t]];
  return s;
}

// Local objective value (1/m) sum_j f_{i,j}(x).
double loss(const LossModel& model, const WorkerShard& shard, const Vec& x);

// Gradient of one sample's loss, written densely into out (overwritten).
void grad_sample(const LossModel& model, const WorkerShard& shard, std::size_t j,
                 const Vec& x, Vec& out);

// Mean of per-sample gradients, accumulated in ascending sample order.
Vec full_grad(const LossModel& model, const WorkerShard& shard, const Vec& x);

// Per-sample gradient-smoothness constants for the logistic models:
// L_{i,j} = ||a_{i,j}||^2 / 4 + 2*lambda. Errors on the quadratic model, whose
// constants are exact and come from quadratic_curvature_table instead.
struct SmoothnessTable {
  std::vector<double> per_sample;  // shard order
  double mean = 0.0;
};

SmoothnessTable smoothness_table(const LossModel& model, const WorkerShard& shard);

// Exact per-sample curvatures h_j of the quadratic fixture, same shape as
// smoothness_table.
SmoothnessTable quadratic_curvature_table(const WorkerShard& shard);

// max over workers of the mean per-sample constant; a valid gradient
// Lipschitz constant for the global objective.
double global_smoothness(const std::vector<SmoothnessTable>& tables);

// Mini-batch gradient-difference estimators, b i.i.d. draws with replacement:
//   Uniform     (1/b) sum      [grad_j(x) - grad_j(y)]
//   Importance  (1/b) sum w_j  [grad_j(x) - grad_j(y)],  w_j = Lbar / L_j,
//               P{draw j} = L_j / (m * Lbar)
// Both are unbiased for Delta_i(x,y) = full_grad(x) - full_grad(y).
enum class SamplingScheme { Uniform, Importance };

struct DeltaEstimator {
  SamplingScheme scheme = SamplingScheme::Uniform;
  std::size_t batch = 1;
};

// Inverse-CDF tables for importance draws, plus the raw constants needed to
// form the unbiasing weights Lbar / L_j.
struct SamplingDist {
  std::vector<double> cum;         // running sums of per-sample constants
  std::vector<double> per_sample;  // the constants themselves
  double total = 0.0;
  double mean = 0.0;
};

SamplingDist build_sampling_dist(const SmoothnessTable& table);

// One index, one RNG draw each.
std::size_t draw_uniform_index(RngStream& rng, std::size_t m);
std::size_t draw_importance_index(RngStream& rng, const SamplingDist& dist);

// Deterministic estimator core: the value the estimator takes for a given
// index multiset. weights[t] multiplies draw t (1.0 for uniform).
Vec delta_for_indices(const LossModel& model, const WorkerShard& shard,
                      const Vec& x, const Vec& y,
                      const std::vector<std::size_t>& indices,
                      const std::vector<double>& weights);

// Draws est.batch indices from rng and evaluates the core. dist is required
// for Importance and ignored for Uniform.
Vec delta_hat(const DeltaEstimator& est, const LossModel& model,
              const WorkerShard& shard, const Vec& x, const Vec& y,
              RngStream& rng, const SamplingDist* dist = nullptr);

// Plain mini-batch gradient estimate at x with the same sampling schemes
// (used by the non-variance-reduced baselines); unbiased for full_grad(x).
Vec batch_grad(const DeltaEstimator& est, const LossModel& model,
               const WorkerShard& shard, const Vec& x, RngStream& rng,
               const SamplingDist* dist = nullptr);

// The global objective (1/G) sum_i f_i over a set of worker shards.
// Shards that share storage (full copies) are evaluated once and weighted,
// so per-round metric passes stay cheap in replicated setups.
class GlobalObjective {
 public:
  GlobalObjective(const LossModel& model, const std::vector<WorkerShard>& shards);

  // Either output may be null. grad, if present, is resized to dim.
  void eval(const Vec& x, double* f_out, Vec* grad_out) const;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  std::size_t dim() const { return dim_; }

 private:
  struct Group {
    const Dataset* data;
    const std::vector<std::uint32_t>* ids;
    double weight;  // multiplicity / n_shards
  };
  LossModel model_;
  std::vector<Group> groups_;
  std::size_t dim_ = 0;
};

// Synthetic binary-classification data: dense rows with norms spread over
// [0.5, 1.5], labels drawn from a ground-truth logistic model.
Dataset synth_logistic(std::size_t n_samples, std::size_t dim, std::uint64_t seed);

// Synthetic quadratic data: h_j uniform on [0.5, 1.5), g_j gaussian.
Dataset synth_quadratic(std::size_t n_samples, std::size_t dim, std::uint64_t seed);

// Exact constants of the quadratic objective defined by a set of shards:
// gradient Lipschitz constant L (= curvature mean, also the PL constant mu),
// worker-level and sample-level curvature dispersions, and the closed-form
// minimizer.
struct QuadraticConstants {
  double L = 0.0;
  double mu = 0.0;
  double L_pm = 0.0;      // sqrt(Var over workers of mean curvature)
  double cal_L_pm = 0.0;  // sqrt(mean over workers of within-shard curvature variance)
  Vec x_star;
  double f_star = 0.0;
};

QuadraticConstants quadratic_constants(const std::vector<WorkerShard>& shards);

}  // namespace byzsim
