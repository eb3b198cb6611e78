#pragma once

#include <memory>
#include <optional>

#include "fusioniv/effect.hpp"
#include "fusioniv/glm.hpp"

namespace fusioniv {

// Everything a given estimator may consume, fitted on one sample.
struct NuisanceSet {
  std::optional<GlmFit> pi;
  std::optional<GlmFit> lambda;
  std::optional<GlmFit> tau;
  std::optional<GlmFit> theta;
  std::optional<GlmFit> first_stage;
  std::optional<EffectCurveFit> effect;
  double q_hat = 0.0;
};

enum class Component { pi, lambda1, tau, theta_mean, H, omega };

// Single-row prediction. Logistic outputs are clamped into [1e-12, 1-1e-12]
// (tallied via `clamps`); tanh-link H lies in [-1, 1].
double predict(const GlmFit& fit, Component component, const FusedRow& row,
               ClampStats* clamps = nullptr);
double predict(const EffectCurveFit& fit, Component component, const FusedRow& row);

// tau at a forced instrument value
double predict_tau_at(const GlmFit& tau, const FusedRow& row, int z_value,
                      ClampStats* clamps = nullptr);

}  // namespace fusioniv
