#pragma once

#include <optional>
#include <vector>

#include "fusioniv/estimators.hpp"

namespace fusioniv {

// Per-model covariate sources; misspecification scenarios flip these to the
// transformed copies.
struct SourceFlags {
  CovariateSource pi = CovariateSource::observed;
  CovariateSource lambda = CovariateSource::observed;
  CovariateSource tau = CovariateSource::observed;
  CovariateSource theta = CovariateSource::observed;
  CovariateSource h = CovariateSource::observed;
  CovariateSource omega = CovariateSource::observed;
};

// Formulas, link and index choice for a whole analysis.
struct AnalysisSpec {
  std::optional<Formula> pi_formula;
  std::optional<Formula> lambda_formula;
  std::optional<Formula> tau_formula;
  std::optional<Formula> theta_formula;
  std::optional<Formula> h_formula;
  std::optional<Formula> omega_formula;
  HLink h_link = HLink::identity;
  SourceFlags sources;
  std::optional<IndexFunctions> index;
  EstimatorOptions options;

  EffectModelSpec effect_spec() const;  // requires h and omega formulas
  EffectModelSpec omega_only_spec() const;

  // throws ConfigError when a requested estimator lacks a formula
  void validate_for(const std::vector<EstimatorKind>& kinds) const;
};

// Nuisances fitted once per sample and shared across estimators.
struct FittedModels {
  std::optional<GlmFit> pi, lambda, tau, theta, first_stage;
  std::optional<EffectCurveFit> m2, m3, dr;
  double q_hat = 0.0;
};

FittedModels fit_models(const FusedSample& sample, const AnalysisSpec& spec,
                        const std::vector<EstimatorKind>& kinds);

EstimateResult point_estimate(EstimatorKind kind, const FusedSample& sample,
                              const AnalysisSpec& spec, const FittedModels& models);

// fit + estimate in one step (bootstrap replicates, scenario runs)
EstimateResult fit_and_estimate(EstimatorKind kind, const FusedSample& sample,
                                const AnalysisSpec& spec);

std::shared_ptr<const NuisanceSet> nuisance_snapshot(EstimatorKind kind,
                                                     const FittedModels& models);

}  // namespace fusioniv
