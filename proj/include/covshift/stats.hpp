#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <span>
#include <stdexcept>

namespace covshift {

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty series");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Two-sided tail probability 2 * P(T_df > |t|).
inline double student_t_two_sided(double t, double df) {
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct PairedTTest {
  double t = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // differences have zero variance
};

inline PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: series lengths differ");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  PairedTTest out;
  if (!(sd > 0.0)) {
    out.degenerate = true;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p_value = student_t_two_sided(out.t, static_cast<double>(n - 1));
  return out;
}

}  // namespace covshift
