#include "byzsim/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace byzsim {

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "na") return AttackKind::Na;
  if (s == "lf") return AttackKind::Lf;
  if (s == "bf") return AttackKind::Bf;
  if (s == "alie") return AttackKind::Alie;
  if (s == "ipm") return AttackKind::Ipm;
  throw std::invalid_argument("attack_kind_from_string: unknown attack '" + s + "'");
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("inverse_normal_cdf: p must lie in (0, 1)");
  }
  // Rational approximation in three regimes (central and two tails).
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against Phi(x) = erfc(-x / sqrt(2)) / 2. The residual
  // Phi(x) - p is formed from whichever tail mass is small: near p = 1 the
  // direct difference would cancel catastrophically, while 1 - p is exact
  // for p >= 1/2 and the upper-tail erfc keeps full relative precision.
  const double sqrt2 = std::sqrt(2.0);
  const double sqrt_2pi = std::sqrt(2.0 * std::acos(-1.0));
  const double e = p <= 0.5 ? 0.5 * std::erfc(-x / sqrt2) - p
                            : (1.0 - p) - 0.5 * std::erfc(x / sqrt2);
  const double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double alie_auto_z(std::size_t n, std::size_t byz) {
  if (n == 0 || 2 * byz >= n) {
    throw std::invalid_argument("alie_auto_z: requires byz < n/2");
  }
  const std::size_t supporters = n / 2 + 1 - byz;
  const std::size_t good = n - byz;
  const double arg =
      static_cast<double>(good - supporters) / static_cast<double>(good);
  if (arg <= 0.5) return 0.3;
  return inverse_normal_cdf(arg);
}

namespace {

Vec good_mean(const AttackContext& ctx, const char* where) {
  if (ctx.good_messages == nullptr || ctx.good_messages->empty()) {
    throw std::invalid_argument(std::string(where) + ": no good messages in context");
  }
  const std::vector<Vec>& msgs = *ctx.good_messages;
  Vec mu = zeros(msgs[0].size());
  for (const Vec& m : msgs) axpy(1.0, m, mu);
  scale(mu, 1.0 / static_cast<double>(msgs.size()));
  return mu;
}

}  // namespace

Vec byz_message(const AttackSpec& spec, const AttackContext& ctx,
                const Vec& honest_message) {
  switch (spec.kind) {
    case AttackKind::Na:
    case AttackKind::Lf:
      return honest_message;
    case AttackKind::Bf: {
      Vec out = honest_message;
      scale(out, -1.0);
      return out;
    }
    case AttackKind::Ipm: {
      Vec mu = good_mean(ctx, "byz_message/ipm");
      scale(mu, -spec.ipm_epsilon);
      return mu;
    }
    case AttackKind::Alie: {
      const Vec mu = good_mean(ctx, "byz_message/alie");
      const std::vector<Vec>& msgs = *ctx.good_messages;
      const double inv_g = 1.0 / static_cast<double>(msgs.size());
      double z = spec.alie_z;
      if (z == 0.0) z = alie_auto_z(ctx.n_total, ctx.byz_count);
      Vec out(mu.size());
      for (std::size_t t = 0; t < mu.size(); ++t) {
        double var = 0.0;
        for (const Vec& m : msgs) {
          const double d = m[t] - mu[t];
          var += d * d;
        }
        out[t] = mu[t] - z * std::sqrt(var * inv_g);
      }
      return out;
    }
  }
  throw std::logic_error("byz_message: unhandled attack kind");
}

std::vector<std::uint32_t> top_k_indices(const Vec& v, std::size_t k) {
  if (k == 0 || k > v.size()) {
    throw std::invalid_argument("top_k_indices: k must be in [1, dim]");
  }
  std::vector<std::uint32_t> order(v.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&v](std::uint32_t x, std::uint32_t y) {
                     return std::abs(v[x]) > std::abs(v[y]);
                   });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace byzsim
