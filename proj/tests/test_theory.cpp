#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include "byzsim/data.hpp"
#include "byzsim/optimizers.hpp"
#include "byzsim/problems.hpp"
#include "byzsim/rng.hpp"
#include "byzsim/theory.hpp"
#include "byzsim/vec.hpp"

using namespace byzsim;

namespace {

// Independently coded stepsize constant: long-double arithmetic, terms
// accumulated in a different order and factorization.
double oracle_A(const TheoryInputs& in) {
  const long double p = in.p, w = in.omega, G = in.G, b = in.b;
  const long double cd = static_cast<long double>(in.c) * in.delta;
  const long double L2 = static_cast<long double>(in.L) * in.L;
  const long double Lpm2 = static_cast<long double>(in.L_pm) * in.L_pm;
  const long double calL2 = static_cast<long double>(in.calL_pm) * in.calL_pm;

  long double acc = 48.0L * in.B * L2 * cd / p;
  const long double lam = (1.0L - p) / p * 6.0L;
  acc += lam * (4.0L * cd / p) * (w * L2 + (1.0L + w) * calL2 / b);
  acc += lam * (1.0L / (2.0L * G)) * (w * L2 + (1.0L + w) * calL2 / b);
  acc += lam * (4.0L * cd * (1.0L + w) / p) * Lpm2;
  acc += lam * (w / (2.0L * G)) * Lpm2;
  return static_cast<double>(acc);
}

TheoryInputs random_inputs(RngStream& rng, bool with_mu) {
  TheoryInputs in;
  in.L = 0.1 + 4.0 * rng.uniform01();
  in.L_pm = 2.0 * rng.uniform01();
  in.calL_pm = 2.0 * rng.uniform01();
  in.mu = with_mu ? 0.01 + 0.2 * rng.uniform01() : 0.0;
  in.p = 0.05 + 0.95 * rng.uniform01();
  in.b = 1.0 + std::floor(16.0 * rng.uniform01());
  in.omega = 10.0 * rng.uniform01();
  in.G = 1.0 + std::floor(12.0 * rng.uniform01());
  in.c = 2.0 * rng.uniform01();
  in.delta = 0.49 * rng.uniform01();
  in.B = 2.0 * rng.uniform01();
  in.zeta2 = 3.0 * rng.uniform01();
  return in;
}

TheoryInputs frozen_inputs() {
  TheoryInputs in;
  in.L = 1.0;
  in.L_pm = 1.0;
  in.calL_pm = 1.0;
  in.p = 0.5;
  in.b = 1.0;
  in.omega = 1.0;
  in.G = 4.0;
  in.c = 1.0;
  in.delta = 0.1;
  in.B = 0.0;
  in.zeta2 = 0.0;
  return in;
}

}  // namespace

TEST_CASE("the stepsize constant matches its frozen value and an independent oracle") {
  // Hand-derived: 6*1*(0.8 + 0.125)*3 + 6*1*(1.6 + 0.125)*1 = 16.65 + 10.35.
  const double A = compute_A(frozen_inputs());
  CHECK(A == doctest::Approx(27.0).epsilon(1e-14));

  RngStream rng(41, StreamRole::Synthetic, 0);
  for (int i = 0; i < 500; ++i) {
    const TheoryInputs in = random_inputs(rng, true);
    const double got = compute_A(in);
    const double want = oracle_A(in);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("the stepsize constant is monotone in each antagonistic direction") {
  RngStream rng(43, StreamRole::Synthetic, 0);
  for (int i = 0; i < 400; ++i) {
    TheoryInputs in = random_inputs(rng, false);
    const double base = compute_A(in);
    const double bump = 1.0 + rng.uniform01();

    TheoryInputs up = in;
    up.omega += bump;
    CHECK(compute_A(up) >= base * (1.0 - 1e-14));
    up = in;
    up.delta = std::min(0.499, in.delta + 0.3 * rng.uniform01());
    CHECK(compute_A(up) >= base * (1.0 - 1e-14));
    up = in;
    up.L_pm += bump;
    CHECK(compute_A(up) >= base * (1.0 - 1e-14));
    up = in;
    up.calL_pm += bump;
    CHECK(compute_A(up) >= base * (1.0 - 1e-14));

    TheoryInputs down = in;
    down.b += 1.0 + std::floor(4.0 * rng.uniform01());
    CHECK(compute_A(down) <= base * (1.0 + 1e-14));
    down = in;
    down.G += 1.0 + std::floor(4.0 * rng.uniform01());
    CHECK(compute_A(down) <= base * (1.0 + 1e-14));
  }
}

TEST_CASE("at p = 1 with no heterogeneity slope the constant vanishes") {
  TheoryInputs in = frozen_inputs();
  in.p = 1.0;
  CHECK(compute_A(in) == 0.0);
  // The smoothness ceiling then reduces to 1/L.
  const TheoryOutputs out = theory_outputs(in);
  CHECK(out.gamma_max_nc == 1.0);
}

TEST_CASE("the strongly-regularized ceiling never exceeds the general one") {
  RngStream rng(47, StreamRole::Synthetic, 0);
  int feasible_seen = 0;
  for (int i = 0; i < 600; ++i) {
    TheoryInputs in = random_inputs(rng, true);
    if (i % 3 == 0) in.B = 0.0;  // guarantee a healthy feasible population
    const TheoryOutputs out = theory_outputs(in);
    if (!out.pl_feasible) {
      CHECK(out.gamma_max_pl == 0.0);
      continue;
    }
    ++feasible_seen;
    CHECK(out.gamma_max_pl <= out.gamma_max_nc * (1.0 + 1e-15));
  }
  CHECK(feasible_seen > 50);
}

TEST_CASE("the nonconvex neighborhood satisfies its exact product identity") {
  RngStream rng(53, StreamRole::Synthetic, 0);
  const double eps = std::numeric_limits<double>::epsilon();
  for (int i = 0; i < 500; ++i) {
    const TheoryInputs in = random_inputs(rng, false);
    const TheoryOutputs out = theory_outputs(in);
    const double lhs = out.neighborhood_nc * in.p;
    const double rhs = 24.0 * in.c * in.delta * in.zeta2;
    CHECK(std::fabs(lhs - rhs) <= 2.0 * eps * std::max(lhs, rhs));
  }
}

TEST_CASE("feasibility flags and degenerate outputs") {
  TheoryInputs in = frozen_inputs();
  in.B = 1.0;
  in.delta = 0.4;
  in.p = 0.1;  // 48 * B * c * delta = 19.2 >> p
  in.mu = 0.3;
  const TheoryOutputs out = theory_outputs(in);
  CHECK_FALSE(out.nc_feasible);
  CHECK_FALSE(out.pl_feasible);
  CHECK(out.gamma_max_pl == 0.0);
  CHECK(std::isinf(out.neighborhood_nc_gen));
  CHECK(std::isinf(out.neighborhood_pl_gen));

  // mu = 0: no strong-regularization bound; its neighborhood degenerates.
  TheoryInputs nc = frozen_inputs();
  nc.zeta2 = 1.0;
  CHECK(std::isinf(theory_outputs(nc).neighborhood_pl));
  nc.zeta2 = 0.0;
  CHECK(theory_outputs(nc).neighborhood_pl == 0.0);
}

TEST_CASE("theory inputs are validated") {
  TheoryInputs in = frozen_inputs();
  in.p = 0.0;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
  in = frozen_inputs();
  in.p = 1.5;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
  in = frozen_inputs();
  in.delta = 0.5;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
  in = frozen_inputs();
  in.b = 0.5;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
  in = frozen_inputs();
  in.G = 0.0;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
  in = frozen_inputs();
  in.L = -1.0;
  CHECK_THROWS_AS(validate_theory_inputs(in), std::invalid_argument);
}

TEST_CASE("attack-free rate bound halves when the horizon doubles") {
  TheoryInputs in = frozen_inputs();  // delta = 0.1 but B = 0; force delta 0
  in.delta = 0.0;
  const double phi0 = 3.7, gamma = 0.05;
  for (std::uint64_t K : {10ull, 100ull, 1000ull, 100000ull}) {
    const double r1 = theorem1_rhs(in, phi0, K, gamma).value;
    const double r2 = theorem1_rhs(in, phi0, 2 * K, gamma).value;
    const double ratio = r2 / r1;
    CHECK(ratio >= 0.45);
    CHECK(ratio <= 0.55);
    // Closed form at delta = 0.
    CHECK(r1 == doctest::Approx(2.0 * phi0 / (gamma * (K + 1))).epsilon(1e-15));
  }
}

TEST_CASE("rate bounds expose admissibility and the geometric contraction") {
  TheoryInputs in = frozen_inputs();
  in.mu = 0.3;
  in.zeta2 = 0.5;
  const TheoryOutputs out = theory_outputs(in);

  const double ok_gamma = 0.9 * out.gamma_max_nc;
  CHECK(theorem1_rhs(in, 1.0, 10, ok_gamma).admissible);
  CHECK_FALSE(theorem1_rhs(in, 1.0, 10, 1.1 * out.gamma_max_nc).admissible);

  const double pl_gamma = 0.9 * out.gamma_max_pl;
  const BoundValue b2 = theorem2_rhs(in, 2.0, 7, pl_gamma);
  CHECK(b2.admissible);
  const double rate = 1.0 - pl_gamma * in.mu;  // B = 0: shrink = 1
  CHECK(b2.value ==
        doctest::Approx(std::pow(rate, 7.0) * 2.0 + out.neighborhood_pl_gen)
            .epsilon(1e-14));
  CHECK_FALSE(theorem2_rhs(in, 2.0, 7, 1.1 * out.gamma_max_pl).admissible);

  TheoryInputs nomu = frozen_inputs();
  CHECK_THROWS_AS(theorem2_rhs(nomu, 1.0, 5, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(theorem1_rhs(in, 1.0, 5, 0.0), std::invalid_argument);
}

TEST_CASE("round prediction inverts the rate bounds") {
  RngStream rng(59, StreamRole::Synthetic, 0);
  for (int i = 0; i < 200; ++i) {
    TheoryInputs in = random_inputs(rng, true);
    in.B = 0.5 * in.B;
    const TheoryOutputs out = theory_outputs(in);
    if (!out.nc_feasible) continue;
    const double gamma = 0.9 * out.gamma_max_nc;
    const double phi0 = 0.1 + 5.0 * rng.uniform01();

    const double eps_nc = out.neighborhood_nc_gen * 1.5 +
                          theorem1_rhs(in, phi0, 20, gamma).value * 0.5;
    const std::uint64_t K = predict_rounds(in, phi0, gamma, eps_nc, BoundMode::Nonconvex);
    CHECK(theorem1_rhs(in, phi0, K, gamma).value <= eps_nc * (1.0 + 1e-12));
    if (K > 0) {
      CHECK(theorem1_rhs(in, phi0, K - 1, gamma).value > eps_nc * (1.0 - 1e-12));
    }

    if (out.pl_feasible && out.gamma_max_pl > 0.0) {
      const double gpl = 0.9 * out.gamma_max_pl;
      const double eps_pl = out.neighborhood_pl_gen + 0.3 * phi0;
      const std::uint64_t Kp = predict_rounds(in, phi0, gpl, eps_pl, BoundMode::Pl);
      CHECK(theorem2_rhs(in, phi0, Kp, gpl).value <= eps_pl * (1.0 + 1e-10));
      if (Kp > 0) {
        CHECK(theorem2_rhs(in, phi0, Kp - 1, gpl).value > eps_pl * (1.0 - 1e-10));
      }
    }
  }

  // Unreachable targets are rejected.
  TheoryInputs in = frozen_inputs();
  in.zeta2 = 1.0;  // nonzero neighborhood
  const TheoryOutputs out = theory_outputs(in);
  CHECK(out.neighborhood_nc_gen > 0.0);
  CHECK_THROWS_AS(
      predict_rounds(in, 1.0, 0.01, 0.5 * out.neighborhood_nc_gen, BoundMode::Nonconvex),
      std::invalid_argument);
}

TEST_CASE("the quadratic-vs-linear stepsize inequality holds at its root") {
  RngStream rng(61, StreamRole::Synthetic, 0);
  for (int i = 0; i < 1000; ++i) {
    const double a = std::exp(12.0 * rng.uniform01() - 4.0);
    const double b = std::exp(12.0 * rng.uniform01() - 4.0);
    const double gamma = 1.0 / (std::sqrt(a) + b);
    const double value = a * gamma * gamma + b * gamma;
    CHECK(value <= 1.0 + 4.0 * std::numeric_limits<double>::epsilon());
    const double g2 = 0.5 * gamma;
    CHECK(a * g2 * g2 + b * g2 <= 1.0);
  }
}

TEST_CASE("replicated shards measure zero heterogeneity") {
  auto data = std::make_shared<Dataset>(synth_logistic(80, 5, 3));
  const auto shards = shard_dataset(data, 4, ShardMode::FullCopy, 1);
  const LossModel model{ModelKind::LogisticL2, 0.01};

  std::vector<Vec> xs;
  RngStream rng(67, StreamRole::Synthetic, 0);
  for (int i = 0; i < 6; ++i) {
    Vec x(5);
    for (double& v : x) v = rng.normal();
    xs.push_back(x);
  }
  const HeterogeneityStats h = measure_heterogeneity(shards, model, xs);
  CHECK(h.zeta2_max == 0.0);
  CHECK(h.B_fit == 0.0);
  CHECK(h.zeta2_fit == 0.0);
}

TEST_CASE("split shards measure heterogeneity matching a direct recomputation") {
  auto data = std::make_shared<Dataset>(synth_logistic(90, 4, 13));
  const auto shards = shard_dataset(data, 3, ShardMode::DisjointShuffle, 7);
  const LossModel model{ModelKind::LogisticL2, 0.01};

  std::vector<Vec> xs;
  RngStream rng(71, StreamRole::Synthetic, 0);
  for (int i = 0; i < 5; ++i) {
    Vec x(4);
    for (double& v : x) v = 0.7 * rng.normal();
    xs.push_back(x);
  }
  const HeterogeneityStats h = measure_heterogeneity(shards, model, xs);
  CHECK(h.zeta2_max > 0.0);

  // Direct recomputation.
  std::vector<double> ys, ts;
  for (const Vec& x : xs) {
    std::vector<Vec> grads;
    for (const auto& s : shards) grads.push_back(full_grad(model, s, x));
    Vec mean = zeros(4);
    for (const Vec& g : grads) axpy(1.0, g, mean);
    scale(mean, 1.0 / 3.0);
    double dev = 0.0;
    for (const Vec& g : grads) dev += dist_sq(g, mean);
    ys.push_back(dev / 3.0);
    ts.push_back(norm_sq(mean));
  }
  double zmax = 0.0, mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    zmax = std::max(zmax, ys[i]);
    mt += ts[i];
    my += ys[i];
  }
  mt /= ys.size();
  my /= ys.size();
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    sty += (ts[i] - mt) * (ys[i] - my);
  }
  const double slope = sty / stt;
  CHECK(h.zeta2_max == doctest::Approx(zmax).epsilon(1e-12));
  CHECK(h.B_fit == doctest::Approx(slope).epsilon(1e-10));
  CHECK(h.zeta2_fit == doctest::Approx(my - slope * mt).epsilon(1e-10));

  // A single sample point cannot identify a slope.
  const HeterogeneityStats one = measure_heterogeneity(shards, model, {xs[0]});
  CHECK(one.B_fit == 0.0);
  CHECK(one.zeta2_fit == doctest::Approx(ys[0]).epsilon(1e-12));

  CHECK_THROWS_AS(measure_heterogeneity({}, model, xs), std::invalid_argument);
  CHECK_THROWS_AS(measure_heterogeneity(shards, model, {}), std::invalid_argument);
}

TEST_CASE("recursion audit reports no violations on a replicated always-sync run") {
  auto data = std::make_shared<Dataset>(synth_quadratic(60, 5, 17));
  ClusterConfig cfg;
  cfg.model = LossModel{ModelKind::Quadratic, 0.0};
  cfg.estimator = DeltaEstimator{SamplingScheme::Uniform, 4};
  cfg.compressor = Compressor{CompressorKind::Identity, 0, 64};
  cfg.aggregator.kind = AggregatorKind::Mean;
  cfg.attack.kind = AttackKind::Na;
  cfg.n_total = 3;
  cfg.byz_count = 0;
  cfg.master_seed = 5;
  Cluster cl(cfg, build_worker_shards(data, 3, 0, ShardMode::FullCopy, 1));

  const QuadraticConstants qc = quadratic_constants(
      {cl.shard(0), cl.shard(1), cl.shard(2)});
  TheoryInputs in;
  in.L = qc.L;
  in.L_pm = qc.L_pm;
  in.calL_pm = qc.cal_L_pm;
  in.mu = qc.mu;
  in.p = 1.0;  // always the deterministic full branch
  in.b = 4.0;
  in.omega = 0.0;
  in.G = 3.0;
  in.c = 0.0;
  in.delta = 0.0;
  in.B = 0.0;
  in.zeta2 = 0.0;

  const auto diags = measure_lemma_bounds(cl, in, 0.1, 5, 4, 123);
  REQUIRE(diags.size() == 5);
  for (const auto& d : diags) {
    // Identical replicated workers send identical full gradients; the
    // aggregate differs from the dedup-group gradient only by rounding.
    CHECK(d.lhs_variance == 0.0);
    CHECK(d.lhs_distortion <= 1e-28);
    CHECK(d.se_variance == 0.0);
    CHECK(d.se_distortion == 0.0);
    CHECK_FALSE(d.variance_violation);
    CHECK_FALSE(d.distortion_violation);
    CHECK(d.rhs_variance >= 0.0);
    CHECK(d.rhs_distortion >= 0.0);
  }
}

TEST_CASE("recursion audit holds on a compressed stochastic run") {
  auto data = std::make_shared<Dataset>(synth_quadratic(80, 6, 19));
  ClusterConfig cfg;
  cfg.model = LossModel{ModelKind::Quadratic, 0.0};
  cfg.estimator = DeltaEstimator{SamplingScheme::Uniform, 2};
  cfg.compressor = Compressor{CompressorKind::RandK, 2, 64};
  cfg.aggregator.kind = AggregatorKind::Mean;
  cfg.attack.kind = AttackKind::Na;
  cfg.n_total = 4;
  cfg.byz_count = 0;
  cfg.master_seed = 9;
  Cluster cl(cfg, build_worker_shards(data, 4, 0, ShardMode::FullCopy, 1));

  const QuadraticConstants qc = quadratic_constants(
      {cl.shard(0), cl.shard(1), cl.shard(2), cl.shard(3)});
  TheoryInputs in;
  in.L = qc.L;
  in.L_pm = qc.L_pm;      // 0 for replicated shards
  in.calL_pm = qc.cal_L_pm;
  in.mu = qc.mu;
  in.p = 0.5;
  in.b = 2.0;
  in.omega = compressor_omega(cfg.compressor, 6);
  in.G = 4.0;
  in.c = 0.0;
  in.delta = 0.0;
  in.B = 0.0;
  in.zeta2 = 0.0;

  const TheoryOutputs out = theory_outputs(in);
  const double gamma = 0.5 * out.gamma_max_nc;
  const auto diags = measure_lemma_bounds(cl, in, gamma, 6, 48, 321);
  REQUIRE(diags.size() == 6);
  for (const auto& d : diags) {
    CHECK(std::isfinite(d.lhs_variance));
    CHECK(std::isfinite(d.rhs_variance));
    CHECK_FALSE(d.variance_violation);
    CHECK_FALSE(d.distortion_violation);
    CHECK(d.se_variance >= 0.0);
  }

  CHECK_THROWS_AS(measure_lemma_bounds(cl, in, gamma, 2, 1, 1), std::invalid_argument);
}
