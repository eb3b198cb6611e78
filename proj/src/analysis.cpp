#include "fusioniv/analysis.hpp"

#include "fusioniv/error.hpp"

namespace fusioniv {

EffectModelSpec AnalysisSpec::effect_spec() const {
  if (!h_formula || !omega_formula) {
    throw Error(ErrorCode::ConfigError, "effect-curve estimation needs h and omega formulas");
  }
  EffectModelSpec spec;
  spec.h_formula = *h_formula;
  spec.omega_formula = *omega_formula;
  spec.link = h_link;
  spec.h_source = sources.h;
  spec.omega_source = sources.omega;
  spec.index = index;
  return spec;
}

EffectModelSpec AnalysisSpec::omega_only_spec() const {
  if (!omega_formula) {
    throw Error(ErrorCode::ConfigError, "estimator needs an omega formula");
  }
  EffectModelSpec spec;
  spec.h_formula = Formula::parse("1");
  spec.omega_formula = *omega_formula;
  spec.link = HLink::identity;
  spec.omega_source = sources.omega;
  spec.index = index;
  return spec;
}

void AnalysisSpec::validate_for(const std::vector<EstimatorKind>& kinds) const {
  for (EstimatorKind kind : kinds) {
    const RequiredComponents req = required_components(kind);
    const std::string name = estimator_name(kind);
    auto need = [&](const std::optional<Formula>& f, const char* which) {
      if (!f) {
        throw Error(ErrorCode::ConfigError,
                    "estimator '" + name + "' requires a " + which + " formula");
      }
    };
    if (req.pi) need(pi_formula, "pi");
    if (req.lambda) need(lambda_formula, "lambda");
    if (req.tau) need(tau_formula, "tau");
    if (req.theta) need(theta_formula, "theta");
    if (req.effect_m2 || req.effect_m3 || req.effect_dr) {
      need(h_formula, "h");
      need(omega_formula, "omega");
    }
    if (req.omega_only) need(omega_formula, "omega");
  }
}

FittedModels fit_models(const FusedSample& sample, const AnalysisSpec& spec,
                        const std::vector<EstimatorKind>& kinds) {
  spec.validate_for(kinds);
  RequiredComponents need;
  for (EstimatorKind kind : kinds) {
    const RequiredComponents req = required_components(kind);
    need.pi |= req.pi;
    need.lambda |= req.lambda;
    need.tau |= req.tau;
    need.theta |= req.theta;
    need.effect_m2 |= req.effect_m2;
    need.effect_m3 |= req.effect_m3;
    need.effect_dr |= req.effect_dr;
    need.first_stage |= req.first_stage;
  }

  FittedModels models;
  models.q_hat = sample.q_hat();
  if (need.pi) models.pi = fit_pi(sample, *spec.pi_formula, spec.sources.pi);
  if (need.lambda) models.lambda = fit_lambda(sample, *spec.lambda_formula, spec.sources.lambda);
  if (need.tau) models.tau = fit_tau(sample, *spec.tau_formula, spec.sources.tau);
  if (need.theta) models.theta = fit_theta(sample, *spec.theta_formula, spec.sources.theta);
  if (need.first_stage) models.first_stage = fit_first_stage(sample);
  if (need.effect_m2) models.m2 = fit_effect_m2(sample, spec.effect_spec(), *models.tau);
  if (need.effect_m3) models.m3 = fit_effect_m3(sample, spec.effect_spec(), *models.pi);
  if (need.effect_dr) models.dr = fit_effect_dr(sample, spec.effect_spec(), *models.tau, *models.pi);
  return models;
}

std::shared_ptr<const NuisanceSet> nuisance_snapshot(EstimatorKind kind,
                                                     const FittedModels& models) {
  auto snap = std::make_shared<NuisanceSet>();
  snap->pi = models.pi;
  snap->lambda = models.lambda;
  snap->tau = models.tau;
  snap->theta = models.theta;
  snap->first_stage = models.first_stage;
  switch (kind) {
    case EstimatorKind::D2: snap->effect = models.m2; break;
    case EstimatorKind::D3: snap->effect = models.m3; break;
    default: snap->effect = models.dr; break;
  }
  snap->q_hat = models.q_hat;
  return snap;
}

EstimateResult point_estimate(EstimatorKind kind, const FusedSample& sample,
                              const AnalysisSpec& spec, const FittedModels& models) {
  EstimateResult res;
  switch (kind) {
    case EstimatorKind::Mle:
      res = estimate_mle(sample, *models.pi, *models.lambda, *models.tau, *models.theta,
                         spec.options);
      break;
    case EstimatorKind::D1:
      res = estimate_d1(sample, *models.lambda, *models.tau, spec.options);
      break;
    case EstimatorKind::D2:
      res = estimate_d2(sample, *models.m2);
      break;
    case EstimatorKind::D3:
      res = estimate_d3(sample, *models.m3);
      break;
    case EstimatorKind::Mul:
      res = estimate_mul(sample, *models.lambda, *models.tau, *models.pi, *models.dr,
                         spec.options);
      break;
    case EstimatorKind::Tsiv:
      res = estimate_tsiv(sample, spec.omega_only_spec());
      break;
    case EstimatorKind::Ts2sls:
      res = estimate_ts2sls(sample, spec.omega_only_spec(), *models.first_stage);
      break;
    case EstimatorKind::Dr:
      res = estimate_dr(sample, *models.tau, *models.pi, spec.omega_only_spec());
      break;
    case EstimatorKind::Dr2:
      res = estimate_dr2(sample, *models.dr);
      break;
    case EstimatorKind::Dr3:
      res = estimate_dr3(sample, *models.dr);
      break;
  }
  res.nuisances = nuisance_snapshot(kind, models);
  return res;
}

EstimateResult fit_and_estimate(EstimatorKind kind, const FusedSample& sample,
                                const AnalysisSpec& spec) {
  const FittedModels models = fit_models(sample, spec, {kind});
  return point_estimate(kind, sample, spec, models);
}

}  // namespace fusioniv
