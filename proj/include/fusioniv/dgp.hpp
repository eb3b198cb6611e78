#pragma once

#include <Eigen/Dense>

#include "fusioniv/rng.hpp"
#include "fusioniv/sample.hpp"

namespace fusioniv {

// Parameters of the simulated two-population mechanism. Defaults match the
// benchmark design: three uniform covariates, a bounded latent confounder,
// logistic instrument and treatment assignment, Gaussian outcome.
struct DgpParams {
  Eigen::Vector3d vartheta{0.5, -0.5, 0.0};          // confounder location loadings
  Eigen::Vector4d psi{-1.0, 0.5, 0.5, 0.5};          // instrument model on (1, x)
  Eigen::Matrix<double, 5, 1> xi{-1.3, 1.2, 0.5, -0.25, -0.25};  // treatment on (1, z, x)
  Eigen::Vector4d gamma{2.0, 0.5, 0.5, 0.5};         // effect curve on (1, x)
  double outcome_slope = 1.25;                       // on 1'x
  double confounder_slope = 6.0;                     // on u
  double noise_sd = 1.0;
  double confounder_load = 0.2;                      // perturbation of the treatment mean
  double q0 = 0.7;                                   // pr(primary)
  double delta_truth = 2.75;                         // E{gamma'(1,X) | primary}
};

// Simulation output: the sample estimators see, plus latent truth retained
// only for diagnostics (never exposed through FusedSample).
struct SimulatedSample {
  FusedSample sample;
  Eigen::VectorXd u_truth;        // latent confounder (NaN on auxiliary rows)
  Eigen::ArrayXi d_latent;        // hidden treatment on primary rows (-1 elsewhere)
  double clamp_rate = 0.0;        // share of primary draws with clipped treatment mean
};

// Truncated normal via inverse CDF; the mixed uniform is clamped into
// [1e-12, 1-1e-12] before inversion.
double sample_truncnorm(double mu, double sigma, double lo, double hi, SplitRng& rng);

// Primary rows expose (Y, Z, X); auxiliary rows expose (D, Z, X). Each unit
// is primary independently with probability q0.
SimulatedSample gen_fused(const DgpParams& params, int n, SplitRng& rng);

// Reversed-fusion variant: the population of interest contributes the
// treatment arm (r=0) and the outcome arm (r=1) comes from a second
// population sharing the same outcome law but a different covariate
// marginal. E(Y|Z,X) is equal across arms by construction.
SimulatedSample gen_fused_reversed(const DgpParams& params, int n, SplitRng& rng);

// Attaches the transformed covariates (z*, x*) used to misspecify working
// models:
//   z* ~ Bernoulli(Phi(-2 + 3 z)),
//   x1* = exp(-0.5 x1) + e1,
//   x2* = x2 / (1 + exp(z)) + e2,
//   x3* = (x1 x3)^3 + e3,  (e1,e2,e3) ~ N(0, I).
// Observed columns are unchanged.
FusedSample misspecify(const FusedSample& sample, SplitRng& rng);

}  // namespace fusioniv
