#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace fusioniv {

inline double expit(double u) {
  // overflow-safe logistic
  if (u >= 0.0) {
    const double e = std::exp(-u);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// standard normal CDF
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Standard normal quantile: rational approximation (|error| < 1.2e-9)
// plus one Halley step, pushing the error to machine precision.
double norm_quantile(double p);

// delta_hat +/- z_{(1+level)/2} * se
std::pair<double, double> wald_ci(double delta_hat, double se, double level);

// Compensated summation; used wherever moment residuals are asserted at
// tolerances near machine precision.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double kahan_mean(const std::vector<double>& values);
double mean(const std::vector<double>& values);
double sample_sd(const std::vector<double>& values);  // (n-1)-normalized
double population_variance(const std::vector<double>& values);

}  // namespace fusioniv
