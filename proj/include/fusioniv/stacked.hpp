#pragma once

#include <Eigen/Dense>
#include <functional>

#include "fusioniv/analysis.hpp"

namespace fusioniv {

// Stacked estimating equations: zeta concatenates every nuisance parameter an
// estimator consumes, the sampling share q (equation R - q) and Delta. The
// per-row evaluator recomputes all model predictions from zeta, so numerical
// differentiation sees the full nuisance dependence.
struct StackedSystem {
  int dim = 0;
  int n = 0;
  int delta_index = -1;
  Eigen::VectorXd zeta;
  // writes the dim-vector m(O_i; zeta)
  std::function<void(int i, const Eigen::VectorXd& zeta, double* out)> eval_row;

  Eigen::VectorXd moment_mean(const Eigen::VectorXd& at) const;
};

struct SandwichResult {
  Eigen::MatrixXd bread;       // A = d E{m} / d zeta
  Eigen::MatrixXd meat;        // B = E{m m'}
  Eigen::MatrixXd covariance;  // A^{-1} B A^{-T} / n
  double se_delta = 0.0;
};

// Bread by central differences (step 1e-6 * max(1, |zeta_j|)); requires the
// stacked moments to vanish at zeta (max-norm 1e-8).
SandwichResult sandwich(const StackedSystem& system);

StackedSystem build_stacked_system(EstimatorKind kind, const FusedSample& sample,
                                   const AnalysisSpec& spec, const FittedModels& models,
                                   double delta_hat);

// build + solve in one step
SandwichResult sandwich_for(EstimatorKind kind, const FusedSample& sample,
                            const AnalysisSpec& spec, const FittedModels& models,
                            double delta_hat);

}  // namespace fusioniv
