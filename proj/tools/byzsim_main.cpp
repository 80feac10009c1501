// Command-line front end: experiment runner, f* solver, robust-aggregator
// certification audit, and convergence-bound calculator.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "byzsim/aggregation.hpp"
#include "byzsim/harness.hpp"
#include "byzsim/rng.hpp"
#include "byzsim/theory.hpp"

namespace {

using nlohmann::json;

int cmd_run(const std::string& config_path, const std::string& out_override,
            const std::vector<std::string>& overrides) {
  byzsim::RunConfig cfg = byzsim::load_config(config_path, overrides);
  if (!out_override.empty()) cfg.out_dir = out_override;
  return byzsim::run(cfg);
}

int cmd_fstar(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  const byzsim::RunConfig cfg = byzsim::load_config(config_path, overrides);
  const byzsim::ProblemSetup setup = byzsim::build_problem(cfg);
  const byzsim::FstarResult result = byzsim::compute_fstar(cfg, setup);
  json out;
  out["fstar"] = result.value;
  out["approximate"] = result.approximate;
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

struct CertifyArgs {
  std::string aggregator = "coordinate_median";
  std::size_t bucket_s = 1;
  std::int64_t krum_byz = -1;
  std::size_t rfa_iters = 8;
  double rfa_nu = 1e-6;
  std::size_t n = 20;
  std::size_t byz = 2;
  std::size_t dim = 10;
  std::size_t trials = 200;
  std::uint64_t seed = 1;
};

// Monte-Carlo audit of the robust-aggregation contract: over random scaled
// Gaussian instances with adversarial outliers, estimate the constant c in
// E||agg(x) - mean(good)||^2 <= c * delta * (pairwise variance of good).
int cmd_certify(const CertifyArgs& args) {
  if (args.byz == 0 || 2 * args.byz >= args.n) {
    std::fprintf(stderr, "certify-aggregator: need 0 < byz < n/2\n");
    return 2;
  }
  byzsim::AggregatorSpec spec;
  spec.kind = byzsim::aggregator_kind_from_string(args.aggregator);
  spec.bucket_s = args.bucket_s;
  spec.assumed_byz = args.krum_byz < 0 ? args.byz : static_cast<std::size_t>(args.krum_byz);
  spec.rfa_iters = args.rfa_iters;
  spec.rfa_nu = args.rfa_nu;

  const std::size_t n_good = args.n - args.byz;
  const double delta = static_cast<double>(args.byz) / static_cast<double>(args.n);

  byzsim::RngStream instance_rng(args.seed, byzsim::StreamRole::Synthetic, 0);
  byzsim::RngStream agg_rng(args.seed, byzsim::StreamRole::ServerBucketing, 0);

  double c_max = 0.0;
  double c_sum = 0.0;
  for (std::size_t t = 0; t < args.trials; ++t) {
    // Random location and scale so the estimate reflects shape, not units.
    const double scale = std::exp(instance_rng.uniform01() * 3.0 - 1.0);
    byzsim::Vec center(args.dim);
    for (double& v : center) v = 5.0 * instance_rng.normal();

    std::vector<byzsim::Vec> inputs(args.n);
    for (std::size_t i = 0; i < n_good; ++i) {
      inputs[i] = center;
      for (double& v : inputs[i]) v += scale * instance_rng.normal();
    }
    for (std::size_t i = n_good; i < args.n; ++i) {
      inputs[i] = center;
      for (double& v : inputs[i]) v += 50.0 * scale * (instance_rng.normal() + 2.0);
    }

    const std::vector<byzsim::Vec> good(inputs.begin(),
                                        inputs.begin() + static_cast<std::ptrdiff_t>(n_good));
    const byzsim::Vec good_mean = byzsim::agg_mean(good);
    const double sigma_sq = byzsim::pairwise_variance(good);
    const byzsim::Vec agg = byzsim::aggregate(spec, inputs, agg_rng);
    const double err = byzsim::dist_sq(agg, good_mean);
    const double ratio = err / (delta * sigma_sq);
    c_max = std::max(c_max, ratio);
    c_sum += ratio;
  }

  json out;
  out["aggregator"] = args.aggregator;
  out["bucket_s"] = args.bucket_s;
  out["n"] = args.n;
  out["byz"] = args.byz;
  out["delta"] = delta;
  out["trials"] = args.trials;
  out["c_hat_max"] = c_max;
  out["c_hat_mean"] = c_sum / static_cast<double>(args.trials);
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

struct TheoryArgs {
  byzsim::TheoryInputs in;
  double phi0 = -1.0;
  double gamma = -1.0;
  std::uint64_t K = 0;
  double epsilon = -1.0;
};

int cmd_theory(const TheoryArgs& args) {
  const byzsim::TheoryOutputs out = byzsim::theory_outputs(args.in);
  json doc;
  doc["A"] = out.A;
  doc["gamma_max_nc"] = out.gamma_max_nc;
  doc["gamma_max_pl"] = out.gamma_max_pl;
  doc["neighborhood_nc"] = out.neighborhood_nc;
  doc["neighborhood_pl"] = out.neighborhood_pl;
  doc["neighborhood_nc_gen"] = out.neighborhood_nc_gen;
  doc["neighborhood_pl_gen"] = out.neighborhood_pl_gen;
  doc["nc_feasible"] = out.nc_feasible;
  doc["pl_feasible"] = out.pl_feasible;
  if (args.phi0 >= 0.0 && args.gamma > 0.0 && args.K > 0) {
    const byzsim::BoundValue nc = byzsim::theorem1_rhs(args.in, args.phi0, args.K, args.gamma);
    doc["theorem1_rhs"] = nc.value;
    doc["theorem1_admissible"] = nc.admissible;
    if (args.in.mu > 0.0) {
      const byzsim::BoundValue pl = byzsim::theorem2_rhs(args.in, args.phi0, args.K, args.gamma);
      doc["theorem2_rhs"] = pl.value;
      doc["theorem2_admissible"] = pl.admissible;
    }
  }
  if (args.phi0 >= 0.0 && args.gamma > 0.0 && args.epsilon > 0.0) {
    doc["predicted_rounds_nc"] = byzsim::predict_rounds(
        args.in, args.phi0, args.gamma, args.epsilon, byzsim::BoundMode::Nonconvex);
    if (args.in.mu > 0.0) {
      doc["predicted_rounds_pl"] = byzsim::predict_rounds(
          args.in, args.phi0, args.gamma, args.epsilon, byzsim::BoundMode::Pl);
    }
  }
  std::printf("%s\n", doc.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Byzantine-robust distributed optimization simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  int threads = 0;  // accepted for interface stability; execution is serial
  std::vector<std::string> overrides;

  CLI::App* run_cmd = app.add_subcommand("run", "run the experiment grid from a config");
  run_cmd->add_option("config,--config", config_path, "config JSON path")->required();
  run_cmd->add_option("--out", out_override, "output directory (overrides out_dir)");
  run_cmd->add_option("--threads", threads, "worker threads (0 = auto); results are thread-count independent");
  run_cmd->add_option("--override", overrides, "key=value config override (repeatable)");

  CLI::App* fstar_cmd = app.add_subcommand("fstar", "compute the reference optimal value");
  fstar_cmd->add_option("config,--config", config_path, "config JSON path")->required();
  fstar_cmd->add_option("--override", overrides, "key=value config override (repeatable)");

  CertifyArgs cert;
  CLI::App* cert_cmd =
      app.add_subcommand("certify-aggregator", "Monte-Carlo robustness-constant audit");
  cert_cmd->add_option("--aggregator", cert.aggregator, "mean|coordinate_median|krum|rfa");
  cert_cmd->add_option("--bucket-s", cert.bucket_s, "bucket size (1 = no bucketing)");
  cert_cmd->add_option("--krum-byz", cert.krum_byz, "krum's assumed byz count (-1 = byz)");
  cert_cmd->add_option("--rfa-iters", cert.rfa_iters, "Weiszfeld iterations");
  cert_cmd->add_option("--rfa-nu", cert.rfa_nu, "Weiszfeld smoothing");
  cert_cmd->add_option("--n", cert.n, "total inputs per trial");
  cert_cmd->add_option("--byz", cert.byz, "outlier inputs per trial");
  cert_cmd->add_option("--dim", cert.dim, "vector dimension");
  cert_cmd->add_option("--trials", cert.trials, "number of trials");
  cert_cmd->add_option("--seed", cert.seed, "audit seed");

  TheoryArgs th;
  CLI::App* theory_cmd = app.add_subcommand("theory", "evaluate step bounds and guarantees");
  theory_cmd->add_option("--L", th.in.L, "smoothness of f");
  theory_cmd->add_option("--L-pm", th.in.L_pm, "worker-deviation smoothness");
  theory_cmd->add_option("--calL-pm", th.in.calL_pm, "sample-deviation smoothness");
  theory_cmd->add_option("--mu", th.in.mu, "PL modulus (0 = none)");
  theory_cmd->add_option("--p", th.in.p, "full-sync probability");
  theory_cmd->add_option("--b", th.in.b, "minibatch size");
  theory_cmd->add_option("--omega", th.in.omega, "compressor variance parameter");
  theory_cmd->add_option("--G", th.in.G, "good worker count");
  theory_cmd->add_option("--c", th.in.c, "aggregator robustness constant");
  theory_cmd->add_option("--delta", th.in.delta, "Byzantine fraction bound");
  theory_cmd->add_option("--B", th.in.B, "heterogeneity slope");
  theory_cmd->add_option("--zeta2", th.in.zeta2, "heterogeneity offset");
  theory_cmd->add_option("--phi0", th.phi0, "initial Lyapunov value (enables rhs output)");
  theory_cmd->add_option("--gamma", th.gamma, "step size (enables rhs output)");
  theory_cmd->add_option("--K", th.K, "round count (enables rhs output)");
  theory_cmd->add_option("--epsilon", th.epsilon, "target accuracy (enables round prediction)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, out_override, overrides);
    if (fstar_cmd->parsed()) return cmd_fstar(config_path, overrides);
    if (cert_cmd->parsed()) return cmd_certify(cert);
    if (theory_cmd->parsed()) return cmd_theory(th);
  } catch (const byzsim::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
