#ifndef CAMOBREW_LINALG_HPP
#define CAMOBREW_LINALG_HPP

#include <cmath>
#include <cstddef>
#include <span>

namespace camobrew::linalg {

// Reductions use four interleaved accumulators combined in a fixed order,
// so results are bit-identical from run to run and independent of threading.
template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  const std::size_t n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
    s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
    s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return (s0 + s1) + (s2 + s3);
}

template <typename A>
double squared_norm(std::span<const A> a) {
  return dot<A, A>(a, a);
}

template <typename A>
double norm(std::span<const A> a) {
  return std::sqrt(squared_norm(a));
}

/// y += alpha * x
template <typename X>
void axpy(double alpha, std::span<const X> x, std::span<double> y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

inline double max_abs(std::span<const double> a) {
  double m = 0;
  for (double v : a) m = std::fmax(m, std::fabs(v));
  return m;
}

}  // namespace camobrew::linalg

#endif  // CAMOBREW_LINALG_HPP
