#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fusioniv/formula.hpp"

namespace fusioniv {

// Working models can be pointed at either the recorded covariates or the
// transformed (z*, x*) copies attached by the simulation's misspecification
// step, so one sample supports mixed correct/incorrect specifications.
enum class CovariateSource { observed, transformed };

struct FusedRow {
  int r = 0;                          // 1 = primary-sample unit
  std::optional<double> y;            // present iff r == 1
  std::optional<int> d;               // present iff r == 0
  int z = 0;
  Eigen::VectorXd x;
  std::optional<int> z_star;          // transformed copies, if attached
  std::optional<Eigen::VectorXd> x_star;
};

// Immutable merged two-source sample. Column storage internally; rows are
// materialized on demand.
class FusedSample {
 public:
  static FusedSample from_rows(const std::vector<FusedRow>& rows);

  // column-wise constructor used by the generators; y/d must be NaN exactly
  // where absent
  FusedSample(Eigen::ArrayXi r, Eigen::VectorXd y, Eigen::VectorXd d, Eigen::ArrayXi z,
              Eigen::MatrixXd x);

  int n() const { return static_cast<int>(r_.size()); }
  int n_primary() const { return n_primary_; }
  int n_auxiliary() const { return n() - n_primary_; }
  int p() const { return static_cast<int>(x_.cols()); }
  // empirical mean of r, exactly n_p / n
  double q_hat() const { return static_cast<double>(n_primary_) / static_cast<double>(n()); }

  int r(int i) const { return r_[i]; }
  int z(int i) const { return z_[i]; }
  bool has_y(int i) const { return r_[i] == 1; }
  bool has_d(int i) const { return r_[i] == 0; }
  double y(int i) const { return y_[i]; }  // NaN when absent
  double d(int i) const { return d_[i]; }  // NaN when absent

  const Eigen::ArrayXi& r_col() const { return r_; }
  const Eigen::ArrayXi& z_col() const { return z_; }
  const Eigen::VectorXd& y_col() const { return y_; }
  const Eigen::VectorXd& d_col() const { return d_; }
  const Eigen::MatrixXd& x_mat() const { return x_; }

  bool has_transformed() const { return z_star_.has_value(); }
  int z_star(int i) const;
  const Eigen::ArrayXi& z_star_col() const;
  const Eigen::MatrixXd& x_star_mat() const;

  FusedRow row(int i) const;

  // copy with transformed covariates attached (observed columns unchanged)
  FusedSample with_transformed(Eigen::ArrayXi z_star, Eigen::MatrixXd x_star) const;

  // row-index resample (bootstrap); may throw DegenerateSample
  FusedSample subsample(const std::vector<int>& indices) const;

 private:
  void validate() const;

  Eigen::ArrayXi r_, z_;
  Eigen::VectorXd y_, d_;
  Eigen::MatrixXd x_;
  std::optional<Eigen::ArrayXi> z_star_;
  std::optional<Eigen::MatrixXd> x_star_;
  int n_primary_ = 0;
};

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<Term> labels;
};

// Row i, column t holds term t evaluated at row i. The z factor may be
// forced to a constant (propensity contrasts tau(1,x) vs tau(0,x)).
DesignMatrix build_design(const Formula& formula, const FusedSample& sample,
                          CovariateSource source,
                          std::optional<int> z_override = std::nullopt);

// single-row variant over a FusedRow
Eigen::VectorXd design_row(const Formula& formula, const FusedRow& row, CovariateSource source,
                           std::optional<int> z_override = std::nullopt);

}  // namespace fusioniv
