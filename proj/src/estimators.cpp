#include "fusioniv/estimators.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Mle: return "mle";
    case EstimatorKind::D1: return "d1";
    case EstimatorKind::D2: return "d2";
    case EstimatorKind::D3: return "d3";
    case EstimatorKind::Mul: return "mul";
    case EstimatorKind::Tsiv: return "tsiv";
    case EstimatorKind::Ts2sls: return "ts2sls";
    case EstimatorKind::Dr: return "dr";
    case EstimatorKind::Dr2: return "dr2";
    case EstimatorKind::Dr3: return "dr3";
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator_name(const std::string& name) {
  for (EstimatorKind kind : all_estimator_kinds()) {
    if (estimator_name(kind) == name) return kind;
  }
  return std::nullopt;
}

std::vector<EstimatorKind> all_estimator_kinds() {
  return {EstimatorKind::Mle, EstimatorKind::D1,     EstimatorKind::D2, EstimatorKind::D3,
          EstimatorKind::Mul, EstimatorKind::Tsiv,   EstimatorKind::Ts2sls,
          EstimatorKind::Dr,  EstimatorKind::Dr2,    EstimatorKind::Dr3};
}

RequiredComponents required_components(EstimatorKind kind) {
  RequiredComponents req;
  switch (kind) {
    case EstimatorKind::Mle:
      req.pi = req.lambda = req.tau = req.theta = true;
      break;
    case EstimatorKind::D1:
      req.lambda = req.tau = true;
      break;
    case EstimatorKind::D2:
      req.tau = req.effect_m2 = true;
      break;
    case EstimatorKind::D3:
      req.pi = req.effect_m3 = true;
      break;
    case EstimatorKind::Mul:
      req.pi = req.lambda = req.tau = req.effect_dr = true;
      break;
    case EstimatorKind::Tsiv:
      req.omega_only = true;
      break;
    case EstimatorKind::Ts2sls:
      req.omega_only = req.first_stage = true;
      break;
    case EstimatorKind::Dr:
      req.pi = req.tau = req.omega_only = true;
      break;
    case EstimatorKind::Dr2:
    case EstimatorKind::Dr3:
      req.pi = req.tau = req.effect_dr = true;
      break;
  }
  return req;
}

namespace {

// (-1)^{1-Z} with the recorded instrument
inline double zsign(int z) { return z == 1 ? 1.0 : -1.0; }

struct TauGap {
  Eigen::VectorXd diff;   // tau(1,x) - tau(0,x)
  double min_abs_primary = std::numeric_limits<double>::infinity();
  double min_abs_all = std::numeric_limits<double>::infinity();
};

TauGap tau_gap(const GlmFit& tau, const FusedSample& sample, ClampStats* clamps) {
  TauGap gap;
  const Eigen::VectorXd t1 = glm_predictions(tau, sample, 1, clamps);
  const Eigen::VectorXd t0 = glm_predictions(tau, sample, 0, clamps);
  gap.diff = t1 - t0;
  for (int i = 0; i < sample.n(); ++i) {
    const double a = std::abs(gap.diff[i]);
    gap.min_abs_all = std::min(gap.min_abs_all, a);
    if (sample.r(i) == 1) gap.min_abs_primary = std::min(gap.min_abs_primary, a);
  }
  return gap;
}

void check_weak(double min_gap, double tol) {
  if (min_gap < tol) {
    throw Error(ErrorCode::WeakInstrument,
                "|tau(1,x)-tau(0,x)| fell below " + std::to_string(tol));
  }
}

EstimateResult make_result(EstimatorKind kind, double delta, Diagnostics diag) {
  EstimateResult res;
  res.kind = kind;
  res.delta_hat = delta;
  res.diagnostics = diag;
  return res;
}

// mean of H over one stratum
double stratum_h_mean(const FusedSample& sample, const EffectCurveFit& effect, int r_value) {
  const Eigen::VectorXd h = effect_h_values(effect, sample);
  KahanSum acc;
  int count = 0;
  for (int i = 0; i < sample.n(); ++i) {
    if (sample.r(i) == r_value) {
      acc.add(h[i]);
      ++count;
    }
  }
  return acc.value() / static_cast<double>(count);
}

// Solves the joint (Delta, eta) linear system
//   0 = E{ (z, w(x)') { r y - Delta a - r w(x)' eta } }
// shared by the two-sample IV, two-stage least squares and scalar doubly
// robust estimators; they differ only in the Delta multiplier a and in the
// extra constant c entering via a (see call sites).
struct ScalarSystemResult {
  double delta = 0.0;
  Eigen::VectorXd eta;
  double moment_norm = 0.0;
};

ScalarSystemResult solve_scalar_delta_system(const FusedSample& sample,
                                             const EffectModelSpec& omega_spec,
                                             const Eigen::VectorXd& a) {
  if (omega_spec.omega_formula.has_z()) {
    throw Error(ErrorCode::InvalidFormula, "remainder formula must not involve z");
  }
  const int n = sample.n();
  const Eigen::MatrixXd W = build_design(omega_spec.omega_formula, sample,
                                         omega_spec.omega_source)
                                .values;
  Eigen::MatrixXd Widx = W;
  if (omega_spec.index) {
    Widx.resize(n, W.cols());
    const bool transformed = omega_spec.omega_source == CovariateSource::transformed;
    const Eigen::MatrixXd& X = transformed ? sample.x_star_mat() : sample.x_mat();
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd w = omega_spec.index->w(X.row(i).transpose());
      if (w.size() != W.cols()) {
        throw Error(ErrorCode::ConsistencyError, "index function dimension mismatch");
      }
      Widx.row(i) = w.transpose();
    }
  }
  const int kw = static_cast<int>(W.cols());
  const int k = 1 + kw;

  Eigen::VectorXd ry(n), rr(n), zc(n);
  for (int i = 0; i < n; ++i) {
    rr[i] = static_cast<double>(sample.r(i));
    ry[i] = sample.r(i) == 1 ? sample.y(i) : 0.0;
    zc[i] = static_cast<double>(sample.z(i));
  }

  Eigen::MatrixXd G(n, k);
  G.col(0) = zc;  // index v == 1 scaled by the instrument
  G.rightCols(kw) = Widx;
  Eigen::MatrixXd P(n, k);
  P.col(0) = a;
  P.rightCols(kw) = W.array().colwise() * rr.array();

  const double dn = static_cast<double>(n);
  const Eigen::MatrixXd M = G.transpose() * P / dn;
  const Eigen::VectorXd rhs = G.transpose() * ry / dn;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "system is singular");
  Eigen::VectorXd beta = lu.solve(rhs);
  beta += lu.solve(rhs - M * beta);

  std::vector<KahanSum> acc(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    const double resid = ry[i] - a[i] * beta[0] - rr[i] * W.row(i).dot(beta.tail(kw));
    for (int j = 0; j < k; ++j) acc[static_cast<std::size_t>(j)].add(G(i, j) * resid);
  }
  double norm = 0.0;
  for (int j = 0; j < k; ++j) {
    norm = std::max(norm, std::abs(acc[static_cast<std::size_t>(j)].value() / dn));
  }
  if (norm > 1e-10) {
    throw Error(ErrorCode::SingularSystem, "stacked moments not solvable to tolerance");
  }

  ScalarSystemResult out;
  out.delta = beta[0];
  out.eta = beta.tail(kw);
  out.moment_norm = norm;
  return out;
}

}  // namespace

EstimateResult estimate_d1(const FusedSample& sample, const GlmFit& lambda, const GlmFit& tau,
                           const EstimatorOptions& opts) {
  Diagnostics diag;
  ClampStats lclamp, tclamp;
  const Eigen::VectorXd lam = lambda_at_z(lambda, sample, &lclamp);
  const TauGap gap = tau_gap(tau, sample, &tclamp);
  diag.lambda_clamps = lclamp.clamped;
  diag.tau_clamps = tclamp.clamped;
  diag.min_tau_gap = gap.min_abs_primary;
  check_weak(gap.min_abs_primary, opts.weak_instrument_tol);

  const double q = sample.q_hat();
  KahanSum acc;
  for (int i = 0; i < sample.n(); ++i) {
    if (sample.r(i) != 1) {
      acc.add(0.0);
      continue;
    }
    acc.add(zsign(sample.z(i)) * sample.y(i) / (q * lam[i] * gap.diff[i]));
  }
  return make_result(EstimatorKind::D1, acc.value() / sample.n(), diag);
}

EstimateResult estimate_d2(const FusedSample& sample, const EffectCurveFit& effect_m2) {
  Diagnostics diag;
  diag.solver_iterations = effect_m2.iterations;
  diag.moment_norm = effect_m2.moment_norm;
  diag.tau_clamps = effect_m2.tau_clamps;
  return make_result(EstimatorKind::D2, stratum_h_mean(sample, effect_m2, 1), diag);
}

EstimateResult estimate_d3(const FusedSample& sample, const EffectCurveFit& effect_m3) {
  Diagnostics diag;
  diag.solver_iterations = effect_m3.iterations;
  diag.moment_norm = effect_m3.moment_norm;
  diag.pi_clamps = effect_m3.pi_clamps;
  return make_result(EstimatorKind::D3, stratum_h_mean(sample, effect_m3, 1), diag);
}

EstimateResult estimate_mle(const FusedSample& sample, const GlmFit& pi, const GlmFit& lambda,
                            const GlmFit& tau, const GlmFit& theta,
                            const EstimatorOptions& opts) {
  Diagnostics diag;
  ClampStats pclamp, lclamp, tclamp;
  const Eigen::VectorXd lam = lambda_at_z(lambda, sample, &lclamp);
  const Eigen::VectorXd pih = glm_predictions(pi, sample, std::nullopt, &pclamp);
  const Eigen::VectorXd ymean = glm_predictions(theta, sample);
  const TauGap gap = tau_gap(tau, sample, &tclamp);
  diag.pi_clamps = pclamp.clamped;
  diag.lambda_clamps = lclamp.clamped;
  diag.tau_clamps = tclamp.clamped;
  diag.min_tau_gap = gap.min_abs_all;
  check_weak(gap.min_abs_all, opts.weak_instrument_tol);

  const double q = sample.q_hat();
  KahanSum acc;
  for (int i = 0; i < sample.n(); ++i) {
    acc.add(zsign(sample.z(i)) * pih[i] * ymean[i] / (q * lam[i] * gap.diff[i]));
  }
  return make_result(EstimatorKind::Mle, acc.value() / sample.n(), diag);
}

Eigen::VectorXd efficient_influence_values(const FusedSample& sample, const GlmFit& lambda,
                                           const GlmFit& tau, const GlmFit& pi,
                                           const EffectCurveFit& effect, double delta,
                                           Diagnostics* diag, const EstimatorOptions& opts) {
  ClampStats pclamp, lclamp, tclamp;
  const Eigen::VectorXd lam = lambda_at_z(lambda, sample, &lclamp);
  const Eigen::VectorXd tau_at = glm_predictions(tau, sample, std::nullopt, &tclamp);
  const TauGap gap = tau_gap(tau, sample, &tclamp);
  const Eigen::VectorXd odds = pi_odds_auxiliary(pi, sample, &pclamp);
  const Eigen::VectorXd h = effect_h_values(effect, sample);
  const Eigen::VectorXd omega = effect_omega_values(effect, sample);
  if (diag) {
    diag->pi_clamps += pclamp.clamped;
    diag->lambda_clamps += lclamp.clamped;
    diag->tau_clamps += tclamp.clamped;
    diag->min_tau_gap = gap.min_abs_all;
  }
  check_weak(gap.min_abs_all, opts.weak_instrument_tol);

  const double q = sample.q_hat();
  Eigen::VectorXd out(sample.n());
  for (int i = 0; i < sample.n(); ++i) {
    const double denom = lam[i] * gap.diff[i];
    double core;
    if (sample.r(i) == 1) {
      core = (sample.y(i) - h[i] * tau_at[i] - omega[i]) / q;
    } else {
      core = -odds[i] * h[i] * (sample.d(i) - tau_at[i]) / q;
    }
    const double tail = sample.r(i) == 1 ? (h[i] - delta) / q : 0.0;
    out[i] = zsign(sample.z(i)) * core / denom + tail;
  }
  return out;
}

double efficient_influence(const FusedRow& row, const NuisanceSet& nuisances, double delta,
                           double q, const EstimatorOptions& opts) {
  if (!nuisances.lambda || !nuisances.tau || !nuisances.pi || !nuisances.effect) {
    throw Error(ErrorCode::MissingNuisance,
                "efficient influence needs lambda, tau, pi and the effect curve");
  }
  const GlmFit& lambda = *nuisances.lambda;
  const GlmFit& tau = *nuisances.tau;
  const GlmFit& pi = *nuisances.pi;
  const EffectCurveFit& effect = *nuisances.effect;

  const double p1 = predict(lambda, Component::lambda1, row);
  const double lam = row.z == 1 ? p1 : 1.0 - p1;

  const double t1 = predict_tau_at(tau, row, 1);
  const double t0 = predict_tau_at(tau, row, 0);
  const double gap = t1 - t0;
  if (std::abs(gap) < opts.weak_instrument_tol) {
    throw Error(ErrorCode::WeakInstrument, "|tau(1,x)-tau(0,x)| below tolerance");
  }
  const double tau_at = predict(tau, Component::tau, row);
  const double h = predict(effect, Component::H, row);
  const double omega = predict(effect, Component::omega, row);

  double core;
  double tail = 0.0;
  if (row.r == 1) {
    core = (*row.y - h * tau_at - omega) / q;
    tail = (h - delta) / q;
  } else {
    const double pih = predict(pi, Component::pi, row);
    core = -(pih / (1.0 - pih)) * h * (*row.d - tau_at) / q;
  }
  return zsign(row.z) * core / (lam * gap) + tail;
}

EstimateResult estimate_mul(const FusedSample& sample, const GlmFit& lambda, const GlmFit& tau,
                            const GlmFit& pi, const EffectCurveFit& effect_dr,
                            const EstimatorOptions& opts) {
  Diagnostics diag;
  diag.solver_iterations = effect_dr.iterations;
  diag.moment_norm = effect_dr.moment_norm;
  diag.pi_clamps += effect_dr.pi_clamps;
  diag.tau_clamps += effect_dr.tau_clamps;
  const Eigen::VectorXd base =
      efficient_influence_values(sample, lambda, tau, pi, effect_dr, 0.0, &diag, opts);
  KahanSum acc;
  for (int i = 0; i < sample.n(); ++i) acc.add(base[i]);
  const double delta = acc.value() / sample.n();

  // E{mu_eff} is affine in Delta with slope -E{R}/q = -1, so the residual at
  // the solution must vanish to numerical precision.
  const double q = sample.q_hat();
  KahanSum resid;
  for (int i = 0; i < sample.n(); ++i) {
    resid.add(base[i] - delta * (sample.r(i) == 1 ? 1.0 / q : 0.0));
  }
  const double residual = std::abs(resid.value() / sample.n());
  if (residual > 1e-12) {
    throw Error(ErrorCode::SingularSystem, "influence residual did not vanish at the solution");
  }
  return make_result(EstimatorKind::Mul, delta, diag);
}

EstimateResult estimate_tsiv(const FusedSample& sample, const EffectModelSpec& omega_spec) {
  const double q = sample.q_hat();
  const double w = q / (1.0 - q);
  Eigen::VectorXd a(sample.n());
  for (int i = 0; i < sample.n(); ++i) {
    a[i] = sample.r(i) == 0 ? w * sample.d(i) : 0.0;
  }
  const ScalarSystemResult sol = solve_scalar_delta_system(sample, omega_spec, a);
  Diagnostics diag;
  diag.moment_norm = sol.moment_norm;
  return make_result(EstimatorKind::Tsiv, sol.delta, diag);
}

EstimateResult estimate_ts2sls(const FusedSample& sample, const EffectModelSpec& omega_spec,
                               const GlmFit& first_stage) {
  const Eigen::VectorXd tau_lin = glm_predictions(first_stage, sample);
  const double q = sample.q_hat();
  const double w = q / (1.0 - q);
  Eigen::VectorXd a(sample.n());
  for (int i = 0; i < sample.n(); ++i) {
    a[i] = sample.r(i) == 1 ? tau_lin[i] : w * (sample.d(i) - tau_lin[i]);
  }
  const ScalarSystemResult sol = solve_scalar_delta_system(sample, omega_spec, a);
  Diagnostics diag;
  diag.moment_norm = sol.moment_norm;
  return make_result(EstimatorKind::Ts2sls, sol.delta, diag);
}

EstimateResult estimate_dr(const FusedSample& sample, const GlmFit& tau, const GlmFit& pi,
                           const EffectModelSpec& omega_spec) {
  ClampStats pclamp, tclamp;
  const Eigen::VectorXd tau_at = glm_predictions(tau, sample, std::nullopt, &tclamp);
  const Eigen::VectorXd odds = pi_odds_auxiliary(pi, sample, &pclamp);
  Eigen::VectorXd a(sample.n());
  for (int i = 0; i < sample.n(); ++i) {
    a[i] = sample.r(i) == 1 ? tau_at[i] : odds[i] * (sample.d(i) - tau_at[i]);
  }
  const ScalarSystemResult sol = solve_scalar_delta_system(sample, omega_spec, a);
  Diagnostics diag;
  diag.pi_clamps = pclamp.clamped;
  diag.tau_clamps = tclamp.clamped;
  diag.moment_norm = sol.moment_norm;
  return make_result(EstimatorKind::Dr, sol.delta, diag);
}

EstimateResult estimate_dr2(const FusedSample& sample, const EffectCurveFit& effect_dr) {
  Diagnostics diag;
  diag.solver_iterations = effect_dr.iterations;
  diag.moment_norm = effect_dr.moment_norm;
  diag.pi_clamps += effect_dr.pi_clamps;
  diag.tau_clamps += effect_dr.tau_clamps;
  return make_result(EstimatorKind::Dr2, stratum_h_mean(sample, effect_dr, 1), diag);
}

EstimateResult estimate_dr3(const FusedSample& sample, const EffectCurveFit& effect_dr) {
  Diagnostics diag;
  diag.solver_iterations = effect_dr.iterations;
  diag.moment_norm = effect_dr.moment_norm;
  diag.pi_clamps += effect_dr.pi_clamps;
  diag.tau_clamps += effect_dr.tau_clamps;
  return make_result(EstimatorKind::Dr3, stratum_h_mean(sample, effect_dr, 0), diag);
}

}  // namespace fusioniv
