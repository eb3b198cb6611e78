#include "fusioniv/nuisance.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {

double clamp_prob(double p, ClampStats* clamps) {
  if (p < kProbClampLo) {
    if (clamps) ++clamps->clamped;
    return kProbClampLo;
  }
  if (p > kProbClampHi) {
    if (clamps) ++clamps->clamped;
    return kProbClampHi;
  }
  return p;
}

}  // namespace

double predict(const GlmFit& fit, Component component, const FusedRow& row, ClampStats* clamps) {
  switch (component) {
    case Component::pi: {
      const double eta = design_row(fit.formula, row, fit.source).dot(fit.beta);
      return clamp_prob(expit(eta), clamps);
    }
    case Component::lambda1: {
      const double eta = design_row(fit.formula, row, fit.source).dot(fit.beta);
      return clamp_prob(expit(eta), clamps);
    }
    case Component::tau: {
      const double eta = design_row(fit.formula, row, fit.source).dot(fit.beta);
      return clamp_prob(expit(eta), clamps);
    }
    case Component::theta_mean: {
      return design_row(fit.formula, row, fit.source).dot(fit.beta);
    }
    default:
      throw Error(ErrorCode::MissingNuisance, "component not served by a GLM fit");
  }
}

double predict(const EffectCurveFit& fit, Component component, const FusedRow& row) {
  switch (component) {
    case Component::H: {
      const double u = design_row(fit.h_formula, row, fit.h_source).dot(fit.gamma);
      return fit.link == HLink::tanh_link ? std::tanh(u) : u;
    }
    case Component::omega: {
      return design_row(fit.omega_formula, row, fit.omega_source).dot(fit.eta);
    }
    default:
      throw Error(ErrorCode::MissingNuisance, "component not served by an effect-curve fit");
  }
}

double predict_tau_at(const GlmFit& tau, const FusedRow& row, int z_value, ClampStats* clamps) {
  const double eta = design_row(tau.formula, row, tau.source, z_value).dot(tau.beta);
  return clamp_prob(expit(eta), clamps);
}

}  // namespace fusioniv
