#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace testutil {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // divisor N - 1
  std::size_t count = 0;

  double se() const { return std::sqrt(var / static_cast<double>(count)); }
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.count = v.size();
  long double s = 0.0L;
  for (double x : v) s += x;
  m.mean = static_cast<double>(s / v.size());
  long double q = 0.0L;
  for (double x : v) q += (x - m.mean) * (x - m.mean);
  m.var = static_cast<double>(q / (v.size() - 1));
  return m;
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
  }
  return d;
}

/// Asymptotic KS critical value at level 0.01.
inline double ks_critical_01(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline Eigen::MatrixXd random_matrix(int rows, int cols, unsigned seed) {
  std::srand(seed);
  return Eigen::MatrixXd::Random(rows, cols);
}

}  // namespace testutil
