#include "byzsim/problems.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace byzsim {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logistic_l2") return ModelKind::LogisticL2;
  if (s == "logistic_nonconvex") return ModelKind::LogisticNonconvex;
  if (s == "quadratic") return ModelKind::Quadratic;
  throw std::invalid_argument("model_kind_from_string: unknown model '" + s + "'");
}

namespace {

double regularizer_value(const LossModel& model, const Vec& x) {
  if (model.kind == ModelKind::LogisticL2) return model.lambda * norm_sq(x);
  double s = 0.0;
  for (double v : x) s += v * v / (1.0 + v * v);
  return model.lambda * s;
}

void regularizer_grad(const LossModel& model, const Vec& x, Vec& out) {
  out.assign(x.size(), 0.0);
  if (model.kind == ModelKind::LogisticL2) {
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = 2.0 * model.lambda * x[t];
  } else {
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double q = 1.0 + x[t] * x[t];
      out[t] = model.lambda * 2.0 * x[t] / (q * q);
    }
  }
}

void check_dim(const WorkerShard& shard, const Vec& x, const char* where) {
  if (x.size() != shard.data->dim) {
    throw std::invalid_argument(std::string(where) + ": x has dimension " +
                                std::to_string(x.size()) + ", dataset has " +
                                std::to_string(shard.data->dim));
  }
}

}  // namespace

double loss(const LossModel& model, const WorkerShard& shard, const Vec& x) {
  check_dim(shard, x, "loss");
  const std::size_t m = shard.size();
  if (m == 0) throw std::invalid_argument("loss: empty shard");
  double acc = 0.0;
  if (model.kind == ModelKind::Quadratic) {
    const double xx = norm_sq(x);
    for (std::size_t j = 0; j < m; ++j) {
      const double h = shard.label(j);
      if (h <= 0.0) throw std::invalid_argument("loss: quadratic curvature must be positive");
      const SparseRow& row = shard.row(j);
      const double gx = sparse_dot(row, x);
      double gg = 0.0;
      for (double v : row.val) gg += v * v;
      acc += 0.5 * h * xx - gx + 0.5 * gg / h;
    }
    return acc / static_cast<double>(m);
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double z = sparse_dot(shard.row(j), x);
    acc += softplus(z) - shard.label(j) * z;
  }
  return acc / static_cast<double>(m) + regularizer_value(model, x);
}

void grad_sample(const LossModel& model, const WorkerShard& shard, std::size_t j,
                 const Vec& x, Vec& out) {
  check_dim(shard, x, "grad_sample");
  if (j >= shard.size()) throw std::invalid_argument("grad_sample: sample index out of range");
  const SparseRow& row = shard.row(j);
  if (model.kind == ModelKind::Quadratic) {
    const double h = shard.label(j);
    out.assign(x.size(), 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = h * x[t];
    for (std::size_t t = 0; t < row.idx.size(); ++t) out[row.idx[t]] -= row.val[t];
    return;
  }
  regularizer_grad(model, x, out);
  const double c = sigmoid(sparse_dot(row, x)) - shard.label(j);
  for (std::size_t t = 0; t < row.idx.size(); ++t) out[row.idx[t]] += c * row.val[t];
}

Vec full_grad(const LossModel& model, const WorkerShard& shard, const Vec& x) {
  check_dim(shard, x, "full_grad");
  const std::size_t m = shard.size();
  if (m == 0) throw std::invalid_argument("full_grad: empty shard");
  Vec acc = zeros(x.size());
  Vec tmp(x.size());
  for (std::size_t j = 0; j < m; ++j) {
    grad_sample(model, shard, j, x, tmp);
    axpy(1.0, tmp, acc);
  }
  scale(acc, 1.0 / static_cast<double>(m));
  return acc;
}

SmoothnessTable smoothness_table(const LossModel& model, const WorkerShard& shard) {
  if (model.kind == ModelKind::Quadratic) {
    throw std::invalid_argument("smoothness_table: unsupported model kind (quadratic constants are exact; use quadratic_curvature_table)");
  }
  SmoothnessTable table;
  const std::size_t m = shard.size();
  table.per_sample.resize(m);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const SparseRow& row = shard.row(j);
    double aa = 0.0;
    for (double v : row.val) aa += v * v;
    table.per_sample[j] = aa / 4.0 + 2.0 * model.lambda;
    sum += table.per_sample[j];
  }
  table.mean = sum / static_cast<double>(m);
  return table;
}

SmoothnessTable quadratic_curvature_table(const WorkerShard& shard) {
  SmoothnessTable table;
  const std::size_t m = shard.size();
  table.per_sample.resize(m);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    table.per_sample[j] = shard.label(j);
    sum += table.per_sample[j];
  }
  table.mean = sum / static_cast<double>(m);
  return table;
}

double global_smoothness(const std::vector<SmoothnessTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("global_smoothness: no tables");
  double L = tables[0].mean;
  for (const SmoothnessTable& t : tables) L = std::max(L, t.mean);
  return L;
}

SamplingDist build_sampling_dist(const SmoothnessTable& table) {
  SamplingDist dist;
  dist.per_sample = table.per_sample;
  dist.cum.resize(table.per_sample.size());
  double run = 0.0;
  for (std::size_t j = 0; j < table.per_sample.size(); ++j) {
    if (table.per_sample[j] <= 0.0) {
      throw std::invalid_argument("build_sampling_dist: constants must be positive");
    }
    run += table.per_sample[j];
    dist.cum[j] = run;
  }
  dist.total = run;
  dist.mean = run / static_cast<double>(table.per_sample.size());
  return dist;
}

std::size_t draw_uniform_index(RngStream& rng, std::size_t m) {
  const double u = rng.uniform01();
  const std::size_t j = static_cast<std::size_t>(u * static_cast<double>(m));
  return std::min(j, m - 1);
}

std::size_t draw_importance_index(RngStream& rng, const SamplingDist& dist) {
  const double u = rng.uniform01() * dist.total;
  const auto it = std::upper_bound(dist.cum.begin(), dist.cum.end(), u);
  const std::size_t j = static_cast<std::size_t>(it - dist.cum.begin());
  return std::min(j, dist.cum.size() - 1);
}

Vec delta_for_indices(const LossModel& model, const WorkerShard& shard,
                      const Vec& x, const Vec& y,
                      const std::vector<std::size_t>& indices,
                      const std::vector<double>& weights) {
  if (indices.empty() || indices.size() != weights.size()) {
    throw std::invalid_argument("delta_for_indices: indices/weights size mismatch");
  }
  check_same_dim(x, y, "delta_for_indices");
  Vec acc = zeros(x.size());
  Vec gx(x.size()), gy(x.size());
  for (std::size_t t = 0; t < indices.size(); ++t) {
    grad_sample(model, shard, indices[t], x, gx);
    grad_sample(model, shard, indices[t], y, gy);
    const double w = weights[t];
    for (std::size_t u = 0; u < acc.size(); ++u) acc[u] += w * (gx[u] - gy[u]);
  }
  scale(acc, 1.0 / static_cast<double>(indices.size()));
  return acc;
}

namespace {

void draw_batch(const DeltaEstimator& est, std::size_t m, RngStream& rng,
                const SamplingDist* dist, std::vector<std::size_t>& indices,
                std::vector<double>& weights) {
  if (est.batch == 0) throw std::invalid_argument("delta_hat: batch must be positive");
  indices.resize(est.batch);
  weights.resize(est.batch);
  if (est.scheme == SamplingScheme::Uniform) {
    for (std::size_t t = 0; t < est.batch; ++t) {
      indices[t] = draw_uniform_index(rng, m);
      weights[t] = 1.0;
    }
  } else {
    if (dist == nullptr) {
      throw std::invalid_argument("delta_hat: importance sampling needs a SamplingDist");
    }
    for (std::size_t t = 0; t < est.batch; ++t) {
      indices[t] = draw_importance_index(rng, *dist);
      weights[t] = dist->mean / dist->per_sample[indices[t]];
    }
  }
}

}  // namespace

Vec delta_hat(const DeltaEstimator& est, const LossModel& model,
              const WorkerShard& shard, const Vec& x, const Vec& y,
              RngStream& rng, const SamplingDist* dist) {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
  draw_batch(est, shard.size(), rng, dist, indices, weights);
  return delta_for_indices(model, shard, x, y, indices, weights);
}

Vec batch_grad(const DeltaEstimator& est, const LossModel& model,
               const WorkerShard& shard, const Vec& x, RngStream& rng,
               const SamplingDist* dist) {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
  draw_batch(est, shard.size(), rng, dist, indices, weights);
  Vec acc = zeros(x.size());
  Vec g(x.size());
  for (std::size_t t = 0; t < indices.size(); ++t) {
    grad_sample(model, shard, indices[t], x, g);
    axpy(weights[t], g, acc);
  }
  scale(acc, 1.0 / static_cast<double>(indices.size()));
  return acc;
}

GlobalObjective::GlobalObjective(const LossModel& model,
                                 const std::vector<WorkerShard>& shards)
    : model_(model) {
  if (shards.empty()) throw std::invalid_argument("GlobalObjective: no shards");
  dim_ = shards[0].data->dim;
  std::map<std::pair<const void*, const void*>, std::size_t> counts;
  std::vector<std::pair<const Dataset*, const std::vector<std::uint32_t>*>> order;
  for (const WorkerShard& s : shards) {
    if (s.data->dim != dim_) throw std::invalid_argument("GlobalObjective: mixed dimensions");
    const auto key = std::make_pair(static_cast<const void*>(s.data.get()),
                                    static_cast<const void*>(s.ids.get()));
    if (counts.find(key) == counts.end()) order.push_back({s.data.get(), s.ids.get()});
    counts[key] += 1;
  }
  const double inv_n = 1.0 / static_cast<double>(shards.size());
  for (const auto& [data, ids] : order) {
    const auto key = std::make_pair(static_cast<const void*>(data),
                                    static_cast<const void*>(ids));
    groups_.push_back(Group{data, ids, static_cast<double>(counts[key]) * inv_n});
  }
}

void GlobalObjective::eval(const Vec& x, double* f_out, Vec* grad_out) const {
  if (x.size() != dim_) throw std::invalid_argument("GlobalObjective::eval: bad dimension");
  double f = 0.0;
  if (grad_out) grad_out->assign(dim_, 0.0);
  Vec group_grad;
  const double xx = model_.kind == ModelKind::Quadratic ? norm_sq(x) : 0.0;

  for (const Group& g : groups_) {
    const std::size_t m = g.ids->size();
    const double wm = g.weight / static_cast<double>(m);
    double fl = 0.0;
    if (grad_out) group_grad.assign(dim_, 0.0);

    if (model_.kind == ModelKind::Quadratic) {
      double hsum = 0.0;
      for (std::uint32_t id : *g.ids) {
        const double h = g.data->labels[id];
        const SparseRow& row = g.data->rows[id];
        double gx = 0.0, gg = 0.0;
        for (std::size_t t = 0; t < row.idx.size(); ++t) {
          gx += row.val[t] * x[row.idx[t]];
          gg += row.val[t] * row.val[t];
        }
        if (f_out) fl += 0.5 * h * xx - gx + 0.5 * gg / h;
        if (grad_out) {
          hsum += h;
          for (std::size_t t = 0; t < row.idx.size(); ++t) {
            group_grad[row.idx[t]] -= row.val[t];
          }
        }
      }
      if (grad_out) {
        for (std::size_t t = 0; t < dim_; ++t) {
          (*grad_out)[t] += wm * (group_grad[t] + hsum * x[t]);
        }
      }
    } else {
      for (std::uint32_t id : *g.ids) {
        const SparseRow& row = g.data->rows[id];
        double z = 0.0;
        for (std::size_t t = 0; t < row.idx.size(); ++t) z += row.val[t] * x[row.idx[t]];
        const double y = g.data->labels[id];
        if (f_out) fl += softplus(z) - y * z;
        if (grad_out) {
          const double c = sigmoid(z) - y;
          for (std::size_t t = 0; t < row.idx.size(); ++t) {
            group_grad[row.idx[t]] += c * row.val[t];
          }
        }
      }
      if (grad_out) axpy(wm, group_grad, *grad_out);
    }
    if (f_out) f += wm * fl;
  }

  if (model_.kind != ModelKind::Quadratic) {
    if (f_out) f += regularizer_value(model_, x);
    if (grad_out) {
      Vec reg;
      regularizer_grad(model_, x, reg);
      axpy(1.0, reg, *grad_out);
    }
  }
  if (f_out) *f_out = f;
}

double GlobalObjective::value(const Vec& x) const {
  double f = 0.0;
  eval(x, &f, nullptr);
  return f;
}

Vec GlobalObjective::gradient(const Vec& x) const {
  Vec g;
  eval(x, nullptr, &g);
  return g;
}

Dataset synth_logistic(std::size_t n_samples, std::size_t dim, std::uint64_t seed) {
  if (n_samples == 0 || dim == 0) throw std::invalid_argument("synth_logistic: empty shape");
  RngStream rng(seed, StreamRole::Synthetic, 0);
  Vec w_star(dim);
  const double w_scale = 2.0 / std::sqrt(static_cast<double>(dim));
  for (double& w : w_star) w = w_scale * rng.normal();

  Dataset ds;
  ds.dim = dim;
  ds.rows.resize(n_samples);
  ds.labels.resize(n_samples);
  Vec a(dim);
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (double& v : a) v = rng.normal();
    const double target_norm = 0.5 + rng.uniform01();
    const double s = target_norm / std::sqrt(norm_sq(a));
    SparseRow& row = ds.rows[i];
    row.idx.resize(dim);
    row.val.resize(dim);
    for (std::size_t t = 0; t < dim; ++t) {
      row.idx[t] = static_cast<std::uint32_t>(t);
      row.val[t] = s * a[t];
    }
    const double margin = sparse_dot(row, w_star);
    ds.labels[i] = rng.uniform01() < sigmoid(4.0 * margin) ? 1.0 : 0.0;
  }
  return ds;
}

Dataset synth_quadratic(std::size_t n_samples, std::size_t dim, std::uint64_t seed) {
  if (n_samples == 0 || dim == 0) throw std::invalid_argument("synth_quadratic: empty shape");
  RngStream rng(seed, StreamRole::Synthetic, 1);
  Dataset ds;
  ds.dim = dim;
  ds.rows.resize(n_samples);
  ds.labels.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    ds.labels[i] = 0.5 + rng.uniform01();
    SparseRow& row = ds.rows[i];
    row.idx.resize(dim);
    row.val.resize(dim);
    for (std::size_t t = 0; t < dim; ++t) {
      row.idx[t] = static_cast<std::uint32_t>(t);
      row.val[t] = 0.7 * rng.normal();
    }
  }
  return ds;
}

QuadraticConstants quadratic_constants(const std::vector<WorkerShard>& shards) {
  if (shards.empty()) throw std::invalid_argument("quadratic_constants: no shards");
  const std::size_t dim = shards[0].data->dim;
  const double inv_g = 1.0 / static_cast<double>(shards.size());

  double mean_h = 0.0, mean_h_sq = 0.0, mean_within_var = 0.0;
  Vec mean_g = zeros(dim);
  for (const WorkerShard& s : shards) {
    const std::size_t m = s.size();
    double hbar = 0.0;
    Vec gbar = zeros(dim);
    for (std::size_t j = 0; j < m; ++j) {
      const double h = s.label(j);
      if (h <= 0.0) throw std::invalid_argument("quadratic_constants: curvature must be positive");
      hbar += h;
      const SparseRow& row = s.row(j);
      for (std::size_t t = 0; t < row.idx.size(); ++t) gbar[row.idx[t]] += row.val[t];
    }
    hbar /= static_cast<double>(m);
    scale(gbar, 1.0 / static_cast<double>(m));
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = s.label(j) - hbar;
      var += d * d;
    }
    var /= static_cast<double>(m);

    mean_h += inv_g * hbar;
    mean_h_sq += inv_g * hbar * hbar;
    mean_within_var += inv_g * var;
    axpy(inv_g, gbar, mean_g);
  }

  QuadraticConstants c;
  c.L = mean_h;
  c.mu = mean_h;
  c.L_pm = std::sqrt(std::max(0.0, mean_h_sq - mean_h * mean_h));
  c.cal_L_pm = std::sqrt(mean_within_var);
  c.x_star = mean_g;
  scale(c.x_star, 1.0 / mean_h);
  GlobalObjective obj(LossModel{ModelKind::Quadratic, 0.0}, shards);
  c.f_star = obj.value(c.x_star);
  return c;
}

}  // namespace byzsim
