#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace byzsim {

// Dense parameter/gradient vector. All reductions in this project run in
// ascending index order so that repeated runs reproduce bit for bit.
using Vec = std::vector<double>;

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

inline void check_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  check_same_dim(x, y, "axpy");
  for (std::size_t t = 0; t < x.size(); ++t) y[t] += a * x[t];
}

inline void scale(Vec& x, double a) {
  for (double& v : x) v *= a;
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
  return s;
}

inline double norm_sq(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double dist_sq(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dist_sq");
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double d = a[t] - b[t];
    s += d * d;
  }
  return s;
}

inline Vec sub(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "sub");
  Vec r(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) r[t] = a[t] - b[t];
  return r;
}

inline Vec add(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "add");
  Vec r(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) r[t] = a[t] + b[t];
  return r;
}

inline bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace byzsim
