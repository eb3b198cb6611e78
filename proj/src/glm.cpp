#include "fusioniv/glm.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {

constexpr double kScoreTol = 1e-8;
constexpr double kBetaLimit = 1e3;
constexpr int kMaxIter = 100;

double clamp_prob(double p, long* clamped) {
  if (p < kProbClampLo) {
    if (clamped) ++*clamped;
    return kProbClampLo;
  }
  if (p > kProbClampHi) {
    if (clamped) ++*clamped;
    return kProbClampHi;
  }
  return p;
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& response,
                      const std::vector<std::uint8_t>& subset) {
  KahanSum ll;
  for (int i = 0; i < eta.size(); ++i) {
    if (!subset[static_cast<std::size_t>(i)]) continue;
    const double p = clamp_prob(expit(eta[i]), nullptr);
    ll.add(response[i] * std::log(p) + (1.0 - response[i]) * std::log(1.0 - p));
  }
  return ll.value();
}

}  // namespace

GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                    const std::vector<std::uint8_t>& subset) {
  const int n = static_cast<int>(design.rows());
  const int k = static_cast<int>(design.cols());
  if (static_cast<int>(subset.size()) != n || response.size() != n) {
    throw Error(ErrorCode::ConsistencyError, "design/response/subset sizes disagree");
  }
  int n_sub = 0;
  double resp_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (subset[static_cast<std::size_t>(i)]) {
      ++n_sub;
      resp_sum += response[i];
    }
  }
  if (n_sub == 0) throw Error(ErrorCode::DegenerateSample, "empty subset");
  if (resp_sum == 0.0 || resp_sum == static_cast<double>(n_sub)) {
    throw Error(ErrorCode::Separation, "response constant on subset");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = log_likelihood(eta, response, subset);

  GlmFit fit;
  fit.link = Link::logit;
  fit.beta = beta;

  Eigen::VectorXd score(k);
  Eigen::MatrixXd info(k, k);
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    score.setZero();
    info.setZero();
    for (int i = 0; i < n; ++i) {
      if (!subset[static_cast<std::size_t>(i)]) continue;
      const double p = clamp_prob(expit(eta[i]), nullptr);
      const double w = p * (1.0 - p);
      score.noalias() += design.row(i).transpose() * (response[i] - p);
      info.noalias() += design.row(i).transpose() * design.row(i) * w;
    }
    score /= static_cast<double>(n_sub);
    info /= static_cast<double>(n_sub);

    const double score_norm = score.lpNorm<Eigen::Infinity>();
    if (score_norm <= kScoreTol) {
      fit.beta = beta;
      fit.converged = true;
      fit.iterations = iter - 1;
      fit.score_norm = score_norm;
      return fit;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::SingularInformation, "information matrix is singular");
    }
    const Eigen::VectorXd step = lu.solve(score);

    // step halving until the likelihood stops decreasing; the slack scales
    // with |ll| so summation rounding cannot veto a good step
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    double scale = 1.0;
    Eigen::VectorXd beta_new;
    Eigen::VectorXd eta_new;
    double ll_new = 0.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      beta_new = beta + scale * step;
      eta_new = design * beta_new;
      ll_new = log_likelihood(eta_new, response, subset);
      if (ll_new >= ll - slack) {
        accepted = true;
        break;
      }
      scale /= 2.0;
    }
    if (!accepted) {
      throw Error(ErrorCode::NotConverged, "step halving failed to improve likelihood");
    }
    beta = beta_new;
    eta = eta_new;
    ll = ll_new;
    if (beta.lpNorm<Eigen::Infinity>() > kBetaLimit) {
      throw Error(ErrorCode::Separation, "coefficients diverging (|beta| > 1e3)");
    }
  }
  throw Error(ErrorCode::NotConverged, "IRLS did not reach tolerance in 100 iterations");
}

GlmFit fit_linear(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                  const std::vector<std::uint8_t>& subset) {
  const int n = static_cast<int>(design.rows());
  const int k = static_cast<int>(design.cols());
  if (static_cast<int>(subset.size()) != n || response.size() != n) {
    throw Error(ErrorCode::ConsistencyError, "design/response/subset sizes disagree");
  }
  int n_sub = 0;
  for (int i = 0; i < n; ++i) n_sub += subset[static_cast<std::size_t>(i)] ? 1 : 0;
  if (n_sub == 0) throw Error(ErrorCode::DegenerateSample, "empty subset");

  Eigen::MatrixXd xs(n_sub, k);
  Eigen::VectorXd ys(n_sub);
  int row = 0;
  for (int i = 0; i < n; ++i) {
    if (!subset[static_cast<std::size_t>(i)]) continue;
    xs.row(row) = design.row(i);
    ys[row] = response[i];
    ++row;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  if (qr.rank() < k) throw Error(ErrorCode::SingularDesign, "design is rank-deficient");
  Eigen::VectorXd beta = qr.solve(ys);
  // one refinement pass keeps the residual moment near machine precision
  beta += qr.solve(ys - xs * beta);

  const Eigen::VectorXd resid = ys - xs * beta;
  const double moment = (xs.transpose() * resid).lpNorm<Eigen::Infinity>() /
                        static_cast<double>(n_sub);
  if (moment > 1e-10) {
    throw Error(ErrorCode::SingularDesign, "normal equations not solvable to tolerance");
  }

  GlmFit fit;
  fit.link = Link::identity;
  fit.beta = std::move(beta);
  fit.converged = true;
  fit.iterations = 1;
  fit.score_norm = moment;
  return fit;
}

namespace {

std::vector<std::uint8_t> stratum_mask(const FusedSample& sample, int r_value) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(sample.n()));
  for (int i = 0; i < sample.n(); ++i) {
    mask[static_cast<std::size_t>(i)] = sample.r(i) == r_value ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> all_mask(int n) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1);
}

}  // namespace

GlmFit fit_lambda(const FusedSample& sample, const Formula& formula, CovariateSource source) {
  if (formula.has_z()) {
    throw Error(ErrorCode::InvalidFormula, "instrument-density formula must not involve z");
  }
  // the instrument is the response of this model, so misspecification only
  // swaps the covariate design; the recorded z is modeled either way
  const DesignMatrix design = build_design(formula, sample, source);
  Eigen::VectorXd response = sample.z_col().cast<double>().matrix();
  GlmFit fit = fit_logistic(design.values, response, stratum_mask(sample, 1));
  fit.formula = formula;
  fit.source = source;
  fit.role = ModelRole::lambda;
  return fit;
}

GlmFit fit_tau(const FusedSample& sample, const Formula& formula, CovariateSource source) {
  const DesignMatrix design = build_design(formula, sample, source);
  Eigen::VectorXd response(sample.n());
  for (int i = 0; i < sample.n(); ++i) response[i] = sample.r(i) == 0 ? sample.d(i) : 0.0;
  GlmFit fit = fit_logistic(design.values, response, stratum_mask(sample, 0));
  fit.formula = formula;
  fit.source = source;
  fit.role = ModelRole::tau;
  return fit;
}

GlmFit fit_pi(const FusedSample& sample, const Formula& formula, CovariateSource source) {
  const DesignMatrix design = build_design(formula, sample, source);
  Eigen::VectorXd response = sample.r_col().cast<double>().matrix();
  GlmFit fit = fit_logistic(design.values, response, all_mask(sample.n()));
  fit.formula = formula;
  fit.source = source;
  fit.role = ModelRole::pi;
  return fit;
}

GlmFit fit_theta(const FusedSample& sample, const Formula& formula, CovariateSource source) {
  const DesignMatrix design = build_design(formula, sample, source);
  Eigen::VectorXd response(sample.n());
  for (int i = 0; i < sample.n(); ++i) response[i] = sample.r(i) == 1 ? sample.y(i) : 0.0;
  GlmFit fit = fit_linear(design.values, response, stratum_mask(sample, 1));
  fit.formula = formula;
  fit.source = source;
  fit.role = ModelRole::theta;
  return fit;
}

Formula main_effects_formula(int p, bool with_z) {
  std::vector<Term> terms;
  terms.push_back(Term{});
  if (with_z) {
    Term tz;
    tz.z_pow = 1;
    terms.push_back(tz);
  }
  for (int j = 1; j <= p; ++j) {
    Term t;
    t.x_pows.emplace_back(j, 1);
    terms.push_back(t);
  }
  return Formula(std::move(terms));
}

GlmFit fit_first_stage(const FusedSample& sample) {
  const Formula formula = main_effects_formula(sample.p(), /*with_z=*/true);
  const DesignMatrix design = build_design(formula, sample, CovariateSource::observed);
  Eigen::VectorXd response(sample.n());
  for (int i = 0; i < sample.n(); ++i) response[i] = sample.r(i) == 0 ? sample.d(i) : 0.0;
  GlmFit fit = fit_linear(design.values, response, stratum_mask(sample, 0));
  fit.formula = formula;
  fit.source = CovariateSource::observed;
  fit.role = ModelRole::first_stage;
  return fit;
}

Eigen::VectorXd glm_predictions(const GlmFit& fit, const FusedSample& sample,
                                std::optional<int> z_override, ClampStats* clamps) {
  const DesignMatrix design = build_design(fit.formula, sample, fit.source, z_override);
  Eigen::VectorXd eta = design.values * fit.beta;
  if (fit.link == Link::identity) return eta;
  long clamped = 0;
  for (int i = 0; i < eta.size(); ++i) eta[i] = clamp_prob(expit(eta[i]), &clamped);
  if (clamps) clamps->clamped += clamped;
  return eta;
}

Eigen::VectorXd lambda_at_z(const GlmFit& lambda, const FusedSample& sample, ClampStats* clamps) {
  if (lambda.role != ModelRole::lambda) {
    throw Error(ErrorCode::MissingNuisance, "lambda_at_z requires a lambda fit");
  }
  Eigen::VectorXd p1 = glm_predictions(lambda, sample, std::nullopt, clamps);
  Eigen::VectorXd out(sample.n());
  for (int i = 0; i < sample.n(); ++i) out[i] = sample.z(i) == 1 ? p1[i] : 1.0 - p1[i];
  return out;
}

Eigen::VectorXd pi_odds_auxiliary(const GlmFit& pi, const FusedSample& sample,
                                  ClampStats* clamps) {
  Eigen::VectorXd p = glm_predictions(pi, sample, std::nullopt, clamps);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sample.n());
  for (int i = 0; i < sample.n(); ++i) {
    if (sample.r(i) == 0) out[i] = p[i] / (1.0 - p[i]);
  }
  return out;
}

}  // namespace fusioniv
