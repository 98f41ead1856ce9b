#pragma once

#include <functional>
#include <span>
#include <vector>

namespace stablab {

/// Order-fixed pairwise summation.
double pairwise_sum(std::span<const double> xs);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};
MeanSe mean_se(std::span<const double> xs);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS residual
};
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf);

/// Two-sample Kolmogorov-Smirnov statistic with per-point weights
/// (each weight vector is normalised internally).
double ks_two_sample(std::span<const double> a, std::span<const double> wa,
                     std::span<const double> b, std::span<const double> wb);
double ks_two_sample(std::span<const double> a, std::span<const double> b);

}  // namespace stablab
