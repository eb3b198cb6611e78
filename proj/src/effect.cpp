#include "fusioniv/effect.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {

Eigen::MatrixXd custom_index_matrix(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn, const FusedSample& sample,
    CovariateSource source, int expected_dim) {
  const bool transformed = source == CovariateSource::transformed;
  const Eigen::MatrixXd& X = transformed ? sample.x_star_mat() : sample.x_mat();
  Eigen::MatrixXd out(sample.n(), expected_dim);
  for (int i = 0; i < sample.n(); ++i) {
    const Eigen::VectorXd v = fn(X.row(i).transpose());
    if (v.size() != expected_dim) {
      throw Error(ErrorCode::ConsistencyError, "index function dimension mismatch");
    }
    out.row(i) = v.transpose();
  }
  return out;
}

struct EffectProblem {
  Eigen::MatrixXd Vh;   // effect-curve design (dim gamma)
  Eigen::MatrixXd Wo;   // remainder design (dim eta)
  Eigen::MatrixXd Gv;   // index v rows scaled by instrument z
  Eigen::MatrixXd Gw;   // index w rows
  Eigen::VectorXd ry;   // r ? y : 0
  Eigen::VectorXd a;    // multiplier of H in the residual
  Eigen::VectorXd rr;   // r as double
  int n = 0;
  long pi_clamps = 0;
  long tau_clamps = 0;
};

EffectProblem build_problem(const FusedSample& sample, const EffectModelSpec& spec,
                            EffectSolver solver, const GlmFit* tau, const GlmFit* pi) {
  if (spec.h_formula.has_z() || spec.omega_formula.has_z()) {
    throw Error(ErrorCode::InvalidFormula, "effect-curve and remainder formulas must not involve z");
  }
  EffectProblem prob;
  prob.n = sample.n();
  prob.Vh = build_design(spec.h_formula, sample, spec.h_source).values;
  prob.Wo = build_design(spec.omega_formula, sample, spec.omega_source).values;

  Eigen::MatrixXd Vidx = prob.Vh;
  Eigen::MatrixXd Widx = prob.Wo;
  if (spec.index) {
    Vidx = custom_index_matrix(spec.index->v, sample, spec.h_source,
                               static_cast<int>(prob.Vh.cols()));
    Widx = custom_index_matrix(spec.index->w, sample, spec.omega_source,
                               static_cast<int>(prob.Wo.cols()));
  }
  prob.Gw = std::move(Widx);
  prob.Gv = std::move(Vidx);
  for (int i = 0; i < prob.n; ++i) {
    prob.Gv.row(i) *= static_cast<double>(sample.z(i));
  }

  prob.ry.resize(prob.n);
  prob.rr.resize(prob.n);
  for (int i = 0; i < prob.n; ++i) {
    prob.rr[i] = static_cast<double>(sample.r(i));
    prob.ry[i] = sample.r(i) == 1 ? sample.y(i) : 0.0;
  }

  Eigen::VectorXd tau_at;
  if (tau) {
    ClampStats clamps;
    tau_at = glm_predictions(*tau, sample, std::nullopt, &clamps);
    prob.tau_clamps = clamps.clamped;
  }
  Eigen::VectorXd odds;
  if (pi) {
    ClampStats clamps;
    odds = pi_odds_auxiliary(*pi, sample, &clamps);
    prob.pi_clamps = clamps.clamped;
  }

  prob.a.resize(prob.n);
  for (int i = 0; i < prob.n; ++i) {
    const bool primary = sample.r(i) == 1;
    switch (solver) {
      case EffectSolver::M2:
        prob.a[i] = primary ? tau_at[i] : sample.d(i) - tau_at[i];
        break;
      case EffectSolver::M3:
        prob.a[i] = primary ? 0.0 : odds[i] * sample.d(i);
        break;
      case EffectSolver::DR:
        prob.a[i] = primary ? tau_at[i] : odds[i] * (sample.d(i) - tau_at[i]);
        break;
    }
  }
  return prob;
}

// stacked moment mean at (gamma, eta), compensated summation per coordinate
Eigen::VectorXd moment_mean(const EffectProblem& prob, HLink link, const Eigen::VectorXd& gamma,
                            const Eigen::VectorXd& eta) {
  const int kv = static_cast<int>(prob.Gv.cols());
  const int kw = static_cast<int>(prob.Gw.cols());
  std::vector<KahanSum> acc(static_cast<std::size_t>(kv + kw));
  for (int i = 0; i < prob.n; ++i) {
    double h = prob.Vh.row(i).dot(gamma);
    if (link == HLink::tanh_link) h = std::tanh(h);
    const double resid = prob.ry[i] - prob.a[i] * h - prob.rr[i] * prob.Wo.row(i).dot(eta);
    for (int j = 0; j < kv; ++j) acc[static_cast<std::size_t>(j)].add(prob.Gv(i, j) * resid);
    for (int j = 0; j < kw; ++j) {
      acc[static_cast<std::size_t>(kv + j)].add(prob.Gw(i, j) * resid);
    }
  }
  Eigen::VectorXd out(kv + kw);
  for (int j = 0; j < kv + kw; ++j) {
    out[j] = acc[static_cast<std::size_t>(j)].value() / static_cast<double>(prob.n);
  }
  return out;
}

// identity links: solve the linear system  E{G (a V', r W')} beta = E{G ry}
void solve_linear(const EffectProblem& prob, Eigen::VectorXd& gamma, Eigen::VectorXd& eta) {
  const int kv = static_cast<int>(prob.Gv.cols());
  const int kw = static_cast<int>(prob.Gw.cols());
  const int k = kv + kw;
  Eigen::MatrixXd G(prob.n, k);
  G.leftCols(kv) = prob.Gv;
  G.rightCols(kw) = prob.Gw;
  Eigen::MatrixXd P(prob.n, k);
  P.leftCols(kv) = prob.Vh.array().colwise() * prob.a.array();
  P.rightCols(kw) = prob.Wo.array().colwise() * prob.rr.array();

  const double n = static_cast<double>(prob.n);
  const Eigen::MatrixXd M = G.transpose() * P / n;
  const Eigen::VectorXd rhs = G.transpose() * prob.ry / n;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularSystem, "effect-curve system is singular");
  }
  Eigen::VectorXd beta = lu.solve(rhs);
  beta += lu.solve(rhs - M * beta);  // refinement
  gamma = beta.head(kv);
  eta = beta.tail(kw);
}

// damped Newton with central-difference Jacobian for the tanh link
int solve_newton(const EffectProblem& prob, Eigen::VectorXd& gamma, Eigen::VectorXd& eta) {
  const int kv = static_cast<int>(gamma.size());
  const int kw = static_cast<int>(eta.size());
  const int k = kv + kw;
  Eigen::VectorXd theta(k);
  theta << gamma, eta;

  auto eval = [&](const Eigen::VectorXd& t) {
    return moment_mean(prob, HLink::tanh_link, t.head(kv), t.tail(kw));
  };

  Eigen::VectorXd F = eval(theta);
  for (int iter = 1; iter <= 200; ++iter) {
    const double fnorm = F.lpNorm<Eigen::Infinity>();
    if (fnorm <= 1e-10) {
      gamma = theta.head(kv);
      eta = theta.tail(kw);
      return iter - 1;
    }
    Eigen::MatrixXd J(k, k);
    for (int j = 0; j < k; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      J.col(j) = (eval(tp) - eval(tm)) / (2.0 * h);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::SingularSystem, "Newton Jacobian is singular");
    }
    const Eigen::VectorXd step = lu.solve(F);
    double scale = 1.0;
    bool accepted = false;
    for (int h2 = 0; h2 < 40; ++h2) {
      const Eigen::VectorXd cand = theta - scale * step;
      const Eigen::VectorXd Fc = eval(cand);
      if (Fc.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * scale) * fnorm) {
        theta = cand;
        F = Fc;
        accepted = true;
        break;
      }
      scale /= 2.0;
    }
    if (!accepted) {
      throw Error(ErrorCode::NotConverged, "damped Newton stalled");
    }
  }
  throw Error(ErrorCode::NotConverged, "Newton did not converge in 200 iterations");
}

EffectCurveFit fit_effect(const FusedSample& sample, const EffectModelSpec& spec,
                          EffectSolver solver, const GlmFit* tau, const GlmFit* pi) {
  const EffectProblem prob = build_problem(sample, spec, solver, tau, pi);

  Eigen::VectorXd gamma, eta;
  int iterations = 0;
  if (spec.link == HLink::identity) {
    solve_linear(prob, gamma, eta);
  } else {
    // initialize from the linearized system
    solve_linear(prob, gamma, eta);
    iterations = solve_newton(prob, gamma, eta);
  }

  const double norm =
      moment_mean(prob, spec.link, gamma, eta).lpNorm<Eigen::Infinity>();
  if (norm > 1e-10) {
    throw Error(ErrorCode::SingularSystem, "stacked moments not solvable to tolerance");
  }

  EffectCurveFit fit;
  fit.h_formula = spec.h_formula;
  fit.omega_formula = spec.omega_formula;
  fit.link = spec.link;
  fit.h_source = spec.h_source;
  fit.omega_source = spec.omega_source;
  fit.solver = solver;
  fit.gamma = std::move(gamma);
  fit.eta = std::move(eta);
  fit.converged = true;
  fit.iterations = iterations;
  fit.moment_norm = norm;
  fit.pi_clamps = prob.pi_clamps;
  fit.tau_clamps = prob.tau_clamps;
  return fit;
}

}  // namespace

EffectCurveFit fit_effect_m2(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& tau) {
  return fit_effect(sample, spec, EffectSolver::M2, &tau, nullptr);
}

EffectCurveFit fit_effect_m3(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& pi) {
  return fit_effect(sample, spec, EffectSolver::M3, nullptr, &pi);
}

EffectCurveFit fit_effect_dr(const FusedSample& sample, const EffectModelSpec& spec,
                             const GlmFit& tau, const GlmFit& pi) {
  return fit_effect(sample, spec, EffectSolver::DR, &tau, &pi);
}

Eigen::VectorXd effect_h_values(const EffectCurveFit& fit, const FusedSample& sample) {
  const Eigen::MatrixXd V = build_design(fit.h_formula, sample, fit.h_source).values;
  Eigen::VectorXd h = V * fit.gamma;
  if (fit.link == HLink::tanh_link) {
    for (int i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i]);
  }
  return h;
}

Eigen::VectorXd effect_omega_values(const EffectCurveFit& fit, const FusedSample& sample) {
  const Eigen::MatrixXd W = build_design(fit.omega_formula, sample, fit.omega_source).values;
  return W * fit.eta;
}

Eigen::MatrixXd index_v_matrix(const EffectModelSpec& spec, const FusedSample& sample) {
  if (spec.index) {
    const Eigen::MatrixXd Vh = build_design(spec.h_formula, sample, spec.h_source).values;
    return custom_index_matrix(spec.index->v, sample, spec.h_source,
                               static_cast<int>(Vh.cols()));
  }
  return build_design(spec.h_formula, sample, spec.h_source).values;
}

Eigen::MatrixXd index_w_matrix(const EffectModelSpec& spec, const FusedSample& sample) {
  if (spec.index) {
    const Eigen::MatrixXd Wo = build_design(spec.omega_formula, sample, spec.omega_source).values;
    return custom_index_matrix(spec.index->w, sample, spec.omega_source,
                               static_cast<int>(Wo.cols()));
  }
  return build_design(spec.omega_formula, sample, spec.omega_source).values;
}

}  // namespace fusioniv
