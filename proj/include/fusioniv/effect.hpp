#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "fusioniv/glm.hpp"
#include "fusioniv/sample.hpp"

namespace fusioniv {

enum class HLink { identity, tanh_link };
enum class EffectSolver { M2, M3, DR };

// Analyst-specified index vectors entering the stacked moments; defaults to
// the design vectors of the effect-curve and remainder formulas.
struct IndexFunctions {
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x)> v;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x)> w;
};

struct EffectModelSpec {
  Formula h_formula;      // no z factor
  Formula omega_formula;  // no z factor
  HLink link = HLink::identity;
  CovariateSource h_source = CovariateSource::observed;
  CovariateSource omega_source = CovariateSource::observed;
  std::optional<IndexFunctions> index;
};

struct EffectCurveFit {
  Formula h_formula, omega_formula;
  HLink link = HLink::identity;
  CovariateSource h_source = CovariateSource::observed;
  CovariateSource omega_source = CovariateSource::observed;
  EffectSolver solver = EffectSolver::M2;
  Eigen::VectorXd gamma, eta;
  bool converged = false;
  int iterations = 0;
  double moment_norm = 0.0;
  long pi_clamps = 0;   // clamped source-score predictions while assembling
  long tau_clamps = 0;  // clamped propensity predictions while assembling
};

// Joint (gamma, eta) solvers. Identity links make the stacked moments linear
// in the parameters, solved directly; the tanh link uses damped Newton with a
// central-difference Jacobian.
//
// M2 residual:  R[Y - H tau - omega] - (1-R) H [D - tau]
// M3 residual:  R[Y - omega] - (1-R) {pi/(1-pi)} H D
// DR residual:  R[Y - H tau - omega] - (1-R) {pi/(1-pi)} H [D - tau]
EffectCurveFit fit_effect_m2(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& tau);
EffectCurveFit fit_effect_m3(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& pi);
EffectCurveFit fit_effect_dr(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& tau, const GlmFit& pi);

Eigen::VectorXd effect_h_values(const EffectCurveFit& fit, const FusedSample& sample);
Eigen::VectorXd effect_omega_values(const EffectCurveFit& fit, const FusedSample& sample);

// index matrices (defaults: effect/remainder designs)
Eigen::MatrixXd index_v_matrix(const EffectModelSpec& spec, const FusedSample& sample);
Eigen::MatrixXd index_w_matrix(const EffectModelSpec& spec, const FusedSample& sample);

}  // namespace fusioniv
