#include <doctest.h>

#include <array>

#include "fusioniv/dgp.hpp"
#include "fusioniv/effect.hpp"
#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

using namespace fusioniv;

namespace {

// Zero-residual construction: primary outcomes equal H(x) tau(z,x) + omega(x)
// exactly, and auxiliary cells carry exactly tau(z,x) * 8 treated units out of
// 8, so every stacked moment vanishes at the true parameters.
struct ExactInstance {
  FusedSample sample;
  GlmFit tau;
  Eigen::VectorXd gamma_true, eta_true;
};

// saturated logistic interpolation of tau through the three grid points
Eigen::VectorXd tau_beta_for(const std::array<double, 3>& t0, const std::array<double, 3>& t1) {
  const double xs[3] = {0.0, 0.5, 1.0};
  Eigen::Matrix3d M;
  Eigen::Vector3d r0, r1;
  for (int i = 0; i < 3; ++i) {
    M(i, 0) = 1.0;
    M(i, 1) = xs[i];
    M(i, 2) = xs[i] * xs[i];
    r0[i] = logit(t0[static_cast<std::size_t>(i)]);
    r1[i] = logit(t1[static_cast<std::size_t>(i)]);
  }
  const Eigen::Vector3d b0 = M.fullPivLu().solve(r0);
  const Eigen::Vector3d b1 = M.fullPivLu().solve(r1);
  // term order of "1 + x1 + x1^2 + z + z*x1 + z*x1^2": 1, x1, z, x1^2, z*x1, z*x1^2
  Eigen::VectorXd beta(6);
  beta << b0[0], b0[1], b1[0] - b0[0], b0[2], b1[1] - b0[1], b1[2] - b0[2];
  return beta;
}

ExactInstance make_exact_instance(HLink link = HLink::identity) {
  Eigen::VectorXd gamma(2), eta(2);
  gamma << 1.5, -0.8;
  eta << 0.4, 1.1;
  const double xs[3] = {0.0, 0.5, 1.0};
  const std::array<double, 3> t0 = {0.25, 0.375, 0.5};
  const std::array<double, 3> t1 = {0.75, 0.75, 0.875};  // eighths: cells of 8 balance exactly

  GlmFit tau;
  tau.formula = Formula::parse("1 + x1 + x1^2 + z + z*x1 + z*x1^2");
  tau.link = Link::logit;
  tau.role = ModelRole::tau;
  tau.beta = tau_beta_for(t0, t1);
  tau.converged = true;

  std::vector<FusedRow> rows;
  for (int xi = 0; xi < 3; ++xi) {
    const double x = xs[xi];
    const double u = gamma[0] + gamma[1] * x;
    const double h = link == HLink::tanh_link ? std::tanh(u) : u;
    const double omega = eta[0] + eta[1] * x;
    for (int z = 0; z <= 1; ++z) {
      const double tau_v = z == 1 ? t1[static_cast<std::size_t>(xi)]
                                  : t0[static_cast<std::size_t>(xi)];
      FusedRow primary;
      primary.r = 1;
      primary.z = z;
      primary.x = Eigen::VectorXd::Constant(1, x);
      primary.y = h * tau_v + omega;
      rows.push_back(primary);
      const int treated = static_cast<int>(tau_v * 8.0 + 0.5);
      for (int k = 0; k < 8; ++k) {
        FusedRow aux;
        aux.r = 0;
        aux.z = z;
        aux.x = Eigen::VectorXd::Constant(1, x);
        aux.d = k < treated ? 1 : 0;
        rows.push_back(aux);
      }
    }
  }
  return {FusedSample::from_rows(rows), std::move(tau), std::move(gamma), std::move(eta)};
}

EffectModelSpec simple_spec(HLink link = HLink::identity) {
  EffectModelSpec spec;
  spec.h_formula = Formula::parse("1 + x1");
  spec.omega_formula = Formula::parse("1 + x1");
  spec.link = link;
  return spec;
}

}  // namespace

TEST_SUITE("effect") {

TEST_CASE("noise-free outcome recovers (gamma, eta) exactly under every solver") {
  const ExactInstance inst = make_exact_instance();
  const EffectModelSpec spec = simple_spec();

  GlmFit pi;  // constant source score 0.5
  pi.formula = Formula::parse("1");
  pi.link = Link::logit;
  pi.role = ModelRole::pi;
  pi.beta = Eigen::VectorXd::Zero(1);

  const EffectCurveFit m2 = fit_effect_m2(inst.sample, spec, inst.tau);
  CHECK((m2.gamma - inst.gamma_true).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((m2.eta - inst.eta_true).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(m2.solver == EffectSolver::M2);
  CHECK(m2.moment_norm <= 1e-10);

  const EffectCurveFit dr = fit_effect_dr(inst.sample, spec, inst.tau, pi);
  CHECK((dr.gamma - inst.gamma_true).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((dr.eta - inst.eta_true).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("two-point toy system matches explicit inversion") {
  // two rows, intercept-only effect and remainder: hand 2x2 system
  std::vector<FusedRow> rows(2);
  rows[0].r = 1;
  rows[0].z = 1;
  rows[0].x = Eigen::VectorXd::Constant(1, 0.0);
  rows[0].y = 2.0;
  rows[1].r = 0;
  rows[1].z = 0;
  rows[1].x = Eigen::VectorXd::Constant(1, 0.0);
  rows[1].d = 1;
  const FusedSample sample = FusedSample::from_rows(rows);

  GlmFit tau;
  tau.formula = Formula::parse("1 + z");
  tau.link = Link::logit;
  tau.role = ModelRole::tau;
  tau.beta.resize(2);
  tau.beta << logit(0.25), logit(0.75) - logit(0.25);  // tau(0)=0.25, tau(1)=0.75

  EffectModelSpec spec;
  spec.h_formula = Formula::parse("1");
  spec.omega_formula = Formula::parse("1");

  // rows of the moment system E{G (a, r)' (gamma, eta)} = E{G ry}:
  //   row0 (primary, z=1): G=(1,1), a=tau(1)=0.75, contributes to both rows
  //   row1 (aux, z=0):     G=(0,1), a=(d - tau(0))=0.75
  Eigen::Matrix2d M;
  M << 0.75, 1.0, (0.75 + 0.75), 1.0;
  M /= 2.0;
  Eigen::Vector2d rhs(2.0 / 2.0, 2.0 / 2.0);
  const Eigen::Vector2d oracle = M.inverse() * rhs;

  const EffectCurveFit fit = fit_effect_m2(sample, spec, tau);
  CHECK(fit.gamma[0] == doctest::Approx(oracle[0]).epsilon(1e-10));
  CHECK(fit.eta[0] == doctest::Approx(oracle[1]).epsilon(1e-10));
}

TEST_CASE("simulated design recovers the effect curve at scale") {
  // individual curve coefficients are noisy (the moment system is nearly
  // collinear in gamma) but unbiased, and the averaged curve is tight
  const DgpParams params;
  EffectModelSpec spec;
  spec.h_formula = Formula::parse("1 + x1 + x2 + x3");
  spec.omega_formula = Formula::parse("1 + x1 + x2 + x3");
  const int reps = 20;
  const int n = 60000;
  Eigen::MatrixXd gammas2(reps, 4), gammas3(reps, 4);
  std::vector<double> proj2, proj3;
  for (int k = 0; k < reps; ++k) {
    SplitRng rng(777, static_cast<std::uint64_t>(k));
    const SimulatedSample sim = gen_fused(params, n, rng);
    const GlmFit tau = fit_tau(sim.sample, Formula::parse("1 + z + x1 + x2 + x3"));
    const EffectCurveFit m2 = fit_effect_m2(sim.sample, spec, tau);
    gammas2.row(k) = m2.gamma.transpose();
    const GlmFit pi =
        fit_pi(sim.sample, Formula::parse("1 + z + x1 + x2 + x3 + x1^2 + x2^2 + x3^2"));
    const EffectCurveFit m3 = fit_effect_m3(sim.sample, spec, pi);
    gammas3.row(k) = m3.gamma.transpose();
    Eigen::Vector4d mid(1.0, 0.5, 0.5, 0.5);
    proj2.push_back(m2.gamma.dot(mid));
    proj3.push_back(m3.gamma.dot(mid));
  }
  const Eigen::Vector4d truth(2.0, 0.5, 0.5, 0.5);
  for (int j = 0; j < 4; ++j) {
    for (const Eigen::MatrixXd* g : {&gammas2, &gammas3}) {
      const double m = g->col(j).mean();
      const double sd = std::sqrt((g->col(j).array() - m).square().sum() / (reps - 1));
      CHECK(std::abs(m - truth[j]) <= 3.0 * sd / std::sqrt(static_cast<double>(reps)));
    }
  }
  // the midpoint projection is the well-identified direction
  CHECK(std::abs(mean(proj2) - 2.75) < 0.1);
  CHECK(std::abs(mean(proj3) - 2.75) < 0.15);
}

TEST_CASE("row permutation leaves the fit unchanged") {
  const ExactInstance inst = make_exact_instance();
  const EffectModelSpec spec = simple_spec();
  const EffectCurveFit base = fit_effect_m2(inst.sample, spec, inst.tau);
  const int n = inst.sample.n();
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 17) % n;
  const FusedSample shuffled = inst.sample.subsample(perm);
  const EffectCurveFit fit = fit_effect_m2(shuffled, spec, inst.tau);
  CHECK((fit.gamma - base.gamma).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((fit.eta - base.eta).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("tanh link solves by damped Newton and bounds the effect curve") {
  const ExactInstance inst = make_exact_instance(HLink::tanh_link);
  const EffectCurveFit fit = fit_effect_m2(inst.sample, simple_spec(HLink::tanh_link), inst.tau);
  CHECK((fit.gamma - inst.gamma_true).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK((fit.eta - inst.eta_true).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(fit.moment_norm <= 1e-10);
  const Eigen::VectorXd h = effect_h_values(fit, inst.sample);
  CHECK(h.maxCoeff() <= 1.0);
  CHECK(h.minCoeff() >= -1.0);
}

TEST_CASE("formulas with z are rejected") {
  const ExactInstance inst = make_exact_instance();
  EffectModelSpec spec = simple_spec();
  spec.h_formula = Formula::parse("1 + z");
  CHECK_THROWS_AS(fit_effect_m2(inst.sample, spec, inst.tau), Error);
}

}  // TEST_SUITE
