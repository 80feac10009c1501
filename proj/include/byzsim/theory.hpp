#ifndef BYZSIM_THEORY_HPP
#define BYZSIM_THEORY_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "byzsim/optimizers.hpp"
#include "byzsim/vec.hpp"

namespace byzsim {

// Problem and protocol constants entering the convergence bounds.
struct TheoryInputs {
  double L = 0.0;        // smoothness of f
  double L_pm = 0.0;     // root-mean-square smoothness of f_i - f
  double calL_pm = 0.0;  // root-mean-square local smoothness of f_{i,j} - f_i
  double mu = 0.0;       // PL / strong-convexity modulus (0 = not assumed)
  double p = 1.0;        // full-synchronization probability
  double b = 1.0;        // minibatch size
  double omega = 0.0;    // compressor variance parameter
  double G = 1.0;        // number of good workers
  double c = 0.0;        // robust-aggregator constant
  double delta = 0.0;    // Byzantine fraction bound
  double B = 0.0;        // gradient-heterogeneity slope
  double zeta2 = 0.0;    // gradient-heterogeneity offset
};

void validate_theory_inputs(const TheoryInputs& in);

// The stepsize-controlling constant. The B-dependent leading term vanishes
// when B or c*delta is zero, recovering the homogeneous-bound value.
double compute_A(const TheoryInputs& in);

struct TheoryOutputs {
  double A = 0.0;
  double gamma_max_nc = 0.0;        // 1 / (L + sqrt(A))
  double gamma_max_pl = 0.0;        // min{1/(L + sqrt(2A)), p/(4 mu (1 - 96Bc delta/p))}
  double neighborhood_nc = 0.0;     // 24 c delta zeta^2 / p
  double neighborhood_pl = 0.0;     // 24 c delta zeta^2 / mu
  double neighborhood_nc_gen = 0.0; // 24 c delta zeta^2 / (p - 48 B c delta)
  double neighborhood_pl_gen = 0.0; // 24 c delta zeta^2 / (mu (1 - 96 B c delta / p))
  bool nc_feasible = true;          // delta < p / (48 c B) when both positive
  bool pl_feasible = true;          // delta < p / (96 c B) when both positive
};

TheoryOutputs theory_outputs(const TheoryInputs& in);

// Lyapunov offsets: optimality gap at x^0 plus the weighted initial
// aggregation error ||g^0 - grad f(x^0)||^2.
double phi0_nc(double gap0, double gdist0, double gamma, double p);
double phi0_pl(double gap0, double gdist0, double gamma, double p);

struct BoundValue {
  double value = 0.0;
  bool admissible = true;  // gamma within its ceiling and feasibility holds
};

// Right-hand sides of the convergence guarantees; the B > 0 generalization
// is used, which collapses to the plain form at B = 0.
BoundValue theorem1_rhs(const TheoryInputs& in, double phi0, std::uint64_t K,
                        double gamma);
BoundValue theorem2_rhs(const TheoryInputs& in, double phi0, std::uint64_t K,
                        double gamma);

enum class BoundMode { Nonconvex, Pl };

// Smallest K whose bound value drops to epsilon; throws when epsilon does
// not exceed the attack-induced neighborhood (no K can reach it).
std::uint64_t predict_rounds(const TheoryInputs& in, double phi0, double gamma,
                             double epsilon, BoundMode mode);

// Measured gradient heterogeneity across good workers at the given points:
// zeta2_max is the largest observed mean squared deviation (slope-free
// reading), (B_fit, zeta2_fit) the least-squares affine fit against
// ||grad f(x)||^2.
struct HeterogeneityStats {
  double zeta2_max = 0.0;
  double B_fit = 0.0;
  double zeta2_fit = 0.0;
};

HeterogeneityStats measure_heterogeneity(const std::vector<WorkerShard>& good_shards,
                                         const LossModel& model,
                                         const std::vector<Vec>& x_samples);

// Per-round audit of the two one-step recursions behind the convergence
// proof: the pairwise variance of good-worker messages, and the distortion
// ||g^{k+1} - grad f(x^{k+1})||^2 of the aggregate. The conditional
// expectations are measured as p * (deterministic full branch) + (1-p) *
// (Monte-Carlo mean over `replays` compressed branches on replay streams).
struct LemmaRoundDiag {
  std::uint64_t k = 0;
  double lhs_variance = 0.0;
  double rhs_variance = 0.0;
  double se_variance = 0.0;
  double lhs_distortion = 0.0;
  double rhs_distortion = 0.0;
  double se_distortion = 0.0;
  bool variance_violation = false;    // lhs - 3 se > rhs
  bool distortion_violation = false;  // lhs - 3 se > rhs
};

std::vector<LemmaRoundDiag> measure_lemma_bounds(Cluster& cl,
                                                 const TheoryInputs& in,
                                                 double gamma, std::size_t rounds,
                                                 std::size_t replays,
                                                 std::uint64_t replay_seed);

}  // namespace byzsim

#endif  // BYZSIM_THEORY_HPP
