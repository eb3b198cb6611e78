#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "fusioniv/sample.hpp"

namespace fusioniv {

enum class Link { logit, identity };

// Which nuisance a fit plays; drives prediction and score stacking.
enum class ModelRole { pi, lambda, tau, theta, first_stage, other };

struct GlmFit {
  Formula formula;
  Link link = Link::logit;
  CovariateSource source = CovariateSource::observed;
  ModelRole role = ModelRole::other;
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // max-norm of the mean score at beta
};

// Counts probability predictions truncated into [1e-12, 1-1e-12].
struct ClampStats {
  long clamped = 0;
};

inline constexpr double kProbClampLo = 1e-12;
inline constexpr double kProbClampHi = 1.0 - 1e-12;

// Logistic MLE by Newton/IRLS with step halving. Score max-norm tolerance
// 1e-8, at most 100 iterations; |beta_j| > 1e3 during iteration is declared
// Separation. `subset` masks rows (1 = include).
GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                    const std::vector<std::uint8_t>& subset);

// Least squares via QR; residual moment max |X'e|/n <= 1e-10 verified.
GlmFit fit_linear(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                  const std::vector<std::uint8_t>& subset);

// pr(Z=1 | X, R=1) on the primary rows; formula must not involve z.
GlmFit fit_lambda(const FusedSample& sample, const Formula& formula,
                  CovariateSource source = CovariateSource::observed);

// pr(D=1 | Z, X) fit on the auxiliary rows (D is observed there).
GlmFit fit_tau(const FusedSample& sample, const Formula& formula,
               CovariateSource source = CovariateSource::observed);

// pr(R=1 | Z, X) on all rows.
GlmFit fit_pi(const FusedSample& sample, const Formula& formula,
              CovariateSource source = CovariateSource::observed);

// E(Y | Z, X, R=1) as a linear regression on the primary rows.
GlmFit fit_theta(const FusedSample& sample, const Formula& formula,
                 CovariateSource source = CovariateSource::observed);

// Linear-probability first stage: D on (1, z, x1..xp) over auxiliary rows.
GlmFit fit_first_stage(const FusedSample& sample);

Formula main_effects_formula(int p, bool with_z);

// Vectorized predictions over a sample; logit-link outputs are clamped into
// [1e-12, 1-1e-12] and clamps are tallied.
Eigen::VectorXd glm_predictions(const GlmFit& fit, const FusedSample& sample,
                                std::optional<int> z_override = std::nullopt,
                                ClampStats* clamps = nullptr);

// lambda(Z|X): the fitted pr(Z=1|X) or its complement, selected by the
// z value seen through the fit's covariate source.
Eigen::VectorXd lambda_at_z(const GlmFit& lambda, const FusedSample& sample,
                            ClampStats* clamps = nullptr);

// odds pi/(1-pi) on auxiliary rows, 0 on primary rows
Eigen::VectorXd pi_odds_auxiliary(const GlmFit& pi, const FusedSample& sample,
                                  ClampStats* clamps = nullptr);

}  // namespace fusioniv
