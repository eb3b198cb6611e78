#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fusioniv/nuisance.hpp"

namespace fusioniv {

enum class EstimatorKind { Mle, D1, D2, D3, Mul, Tsiv, Ts2sls, Dr, Dr2, Dr3 };

std::string estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator_name(const std::string& name);
std::vector<EstimatorKind> all_estimator_kinds();

// nuisance components a kind consumes
struct RequiredComponents {
  bool pi = false, lambda = false, tau = false, theta = false;
  bool effect_m2 = false, effect_m3 = false, effect_dr = false;
  bool first_stage = false, omega_only = false;
};
RequiredComponents required_components(EstimatorKind kind);

struct EstimatorOptions {
  double weak_instrument_tol = 1e-6;
};

struct Diagnostics {
  double min_tau_gap = std::numeric_limits<double>::quiet_NaN();
  long pi_clamps = 0;
  long lambda_clamps = 0;
  long tau_clamps = 0;
  int solver_iterations = 0;
  double moment_norm = std::numeric_limits<double>::quiet_NaN();
};

struct ConfidenceInterval {
  double lo = 0.0, hi = 0.0, level = 0.95;
};

struct EstimateResult {
  EstimatorKind kind = EstimatorKind::D1;
  double delta_hat = 0.0;
  std::optional<double> se_sandwich;
  std::optional<double> se_boot;
  std::optional<ConfidenceInterval> ci;
  Diagnostics diagnostics;
  std::shared_ptr<const NuisanceSet> nuisances;
};

// ---- point estimators -----------------------------------------------------
// All estimating functions are affine in Delta given the nuisances, so each
// point estimate is a closed-form empirical mean (compensated summation).

EstimateResult estimate_d1(const FusedSample& sample, const GlmFit& lambda, const GlmFit& tau,
                           const EstimatorOptions& opts = {});

EstimateResult estimate_d2(const FusedSample& sample, const EffectCurveFit& effect_m2);
EstimateResult estimate_d3(const FusedSample& sample, const EffectCurveFit& effect_m3);

EstimateResult estimate_mle(const FusedSample& sample, const GlmFit& pi, const GlmFit& lambda,
                            const GlmFit& tau, const GlmFit& theta,
                            const EstimatorOptions& opts = {});

EstimateResult estimate_mul(const FusedSample& sample, const GlmFit& lambda, const GlmFit& tau,
                            const GlmFit& pi, const EffectCurveFit& effect_dr,
                            const EstimatorOptions& opts = {});

EstimateResult estimate_tsiv(const FusedSample& sample, const EffectModelSpec& omega_spec);
EstimateResult estimate_ts2sls(const FusedSample& sample, const EffectModelSpec& omega_spec,
                               const GlmFit& first_stage);
EstimateResult estimate_dr(const FusedSample& sample, const GlmFit& tau, const GlmFit& pi,
                           const EffectModelSpec& omega_spec);

EstimateResult estimate_dr2(const FusedSample& sample, const EffectCurveFit& effect_dr);
// reversed-fusion variant: averages the effect curve over the r=0 rows
EstimateResult estimate_dr3(const FusedSample& sample, const EffectCurveFit& effect_dr);

// ---- efficient influence function ----------------------------------------

// Single observation; requires lambda, tau, pi and effect in `nuisances`.
// Affine in Delta with slope -R/q.
double efficient_influence(const FusedRow& row, const NuisanceSet& nuisances, double delta,
                           double q, const EstimatorOptions& opts = {});

// Vectorized influence values over a sample (same formula), plus diagnostics.
Eigen::VectorXd efficient_influence_values(const FusedSample& sample, const GlmFit& lambda,
                                           const GlmFit& tau, const GlmFit& pi,
                                           const EffectCurveFit& effect, double delta,
                                           Diagnostics* diag = nullptr,
                                           const EstimatorOptions& opts = {});

}  // namespace fusioniv
