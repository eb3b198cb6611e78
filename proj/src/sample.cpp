#include "fusioniv/sample.hpp"

#include <cmath>

#include "fusioniv/error.hpp"

namespace fusioniv {

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}

FusedSample FusedSample::from_rows(const std::vector<FusedRow>& rows) {
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw Error(ErrorCode::DegenerateSample, "need at least two rows");
  const int p = static_cast<int>(rows.front().x.size());
  Eigen::ArrayXi r(n), z(n);
  Eigen::VectorXd y(n), d(n);
  Eigen::MatrixXd x(n, p);
  bool any_star = false;
  for (const FusedRow& row : rows) {
    if (row.z_star || row.x_star) any_star = true;
  }
  Eigen::ArrayXi zs;
  Eigen::MatrixXd xs;
  if (any_star) {
    zs.resize(n);
    xs.resize(n, p);
  }
  for (int i = 0; i < n; ++i) {
    const FusedRow& row = rows[i];
    if (static_cast<int>(row.x.size()) != p) {
      throw Error(ErrorCode::ConsistencyError, "rows disagree on covariate dimension");
    }
    if (row.r != 0 && row.r != 1) throw Error(ErrorCode::ConsistencyError, "r must be 0 or 1");
    if (row.z != 0 && row.z != 1) throw Error(ErrorCode::ConsistencyError, "z must be 0 or 1");
    if (row.r == 1) {
      if (!row.y) throw Error(ErrorCode::ConsistencyError, "primary row missing y");
      if (row.d) throw Error(ErrorCode::ConsistencyError, "primary row must not carry d");
    } else {
      if (!row.d) throw Error(ErrorCode::ConsistencyError, "auxiliary row missing d");
      if (row.y) throw Error(ErrorCode::ConsistencyError, "auxiliary row must not carry y");
      if (*row.d != 0 && *row.d != 1) {
        throw Error(ErrorCode::ConsistencyError, "d must be 0 or 1");
      }
    }
    r[i] = row.r;
    z[i] = row.z;
    y[i] = row.y ? *row.y : kNaN;
    d[i] = row.d ? static_cast<double>(*row.d) : kNaN;
    x.row(i) = row.x.transpose();
    if (any_star) {
      if (!row.z_star || !row.x_star || static_cast<int>(row.x_star->size()) != p) {
        throw Error(ErrorCode::ConsistencyError,
                    "transformed covariates must be attached on every row or none");
      }
      zs[i] = *row.z_star;
      xs.row(i) = row.x_star->transpose();
    }
  }
  FusedSample s(std::move(r), std::move(y), std::move(d), std::move(z), std::move(x));
  if (any_star) return s.with_transformed(std::move(zs), std::move(xs));
  return s;
}

FusedSample::FusedSample(Eigen::ArrayXi r, Eigen::VectorXd y, Eigen::VectorXd d, Eigen::ArrayXi z,
                         Eigen::MatrixXd x)
    : r_(std::move(r)), z_(std::move(z)), y_(std::move(y)), d_(std::move(d)), x_(std::move(x)) {
  n_primary_ = 0;
  for (int i = 0; i < r_.size(); ++i) n_primary_ += r_[i];
  validate();
}

void FusedSample::validate() const {
  const int n = static_cast<int>(r_.size());
  if (n < 2 || y_.size() != n || d_.size() != n || z_.size() != n || x_.rows() != n) {
    throw Error(ErrorCode::DegenerateSample, "inconsistent or too-small sample");
  }
  if (n_primary_ == 0 || n_primary_ == n) {
    throw Error(ErrorCode::DegenerateSample, "both samples must be nonempty");
  }
  for (int i = 0; i < n; ++i) {
    if (r_[i] != 0 && r_[i] != 1) throw Error(ErrorCode::ConsistencyError, "r must be 0 or 1");
    if (z_[i] != 0 && z_[i] != 1) throw Error(ErrorCode::ConsistencyError, "z must be 0 or 1");
    const bool y_present = !std::isnan(y_[i]);
    const bool d_present = !std::isnan(d_[i]);
    if (y_present != (r_[i] == 1) || d_present != (r_[i] == 0)) {
      throw Error(ErrorCode::ConsistencyError, "y/d presence inconsistent with r");
    }
    if (y_present && !std::isfinite(y_[i])) {
      throw Error(ErrorCode::ConsistencyError, "non-finite outcome");
    }
    if (d_present && d_[i] != 0.0 && d_[i] != 1.0) {
      throw Error(ErrorCode::ConsistencyError, "d must be 0 or 1");
    }
    for (int j = 0; j < x_.cols(); ++j) {
      if (!std::isfinite(x_(i, j))) {
        throw Error(ErrorCode::ConsistencyError, "non-finite covariate");
      }
    }
  }
}

int FusedSample::z_star(int i) const {
  if (!z_star_) throw Error(ErrorCode::MissingTransformed, "transformed covariates not attached");
  return (*z_star_)[i];
}

const Eigen::ArrayXi& FusedSample::z_star_col() const {
  if (!z_star_) throw Error(ErrorCode::MissingTransformed, "transformed covariates not attached");
  return *z_star_;
}

const Eigen::MatrixXd& FusedSample::x_star_mat() const {
  if (!x_star_) throw Error(ErrorCode::MissingTransformed, "transformed covariates not attached");
  return *x_star_;
}

FusedRow FusedSample::row(int i) const {
  FusedRow row;
  row.r = r_[i];
  row.z = z_[i];
  if (r_[i] == 1) row.y = y_[i];
  if (r_[i] == 0) row.d = static_cast<int>(d_[i]);
  row.x = x_.row(i).transpose();
  if (z_star_) {
    row.z_star = (*z_star_)[i];
    row.x_star = x_star_->row(i).transpose();
  }
  return row;
}

FusedSample FusedSample::with_transformed(Eigen::ArrayXi z_star, Eigen::MatrixXd x_star) const {
  if (z_star.size() != r_.size() || x_star.rows() != x_.rows() || x_star.cols() != x_.cols()) {
    throw Error(ErrorCode::ConsistencyError, "transformed covariates have wrong shape");
  }
  FusedSample out = *this;
  out.z_star_ = std::move(z_star);
  out.x_star_ = std::move(x_star);
  return out;
}

FusedSample FusedSample::subsample(const std::vector<int>& indices) const {
  const int m = static_cast<int>(indices.size());
  if (m < 2) throw Error(ErrorCode::DegenerateSample, "resample too small");
  Eigen::ArrayXi r(m), z(m);
  Eigen::VectorXd y(m), d(m);
  Eigen::MatrixXd x(m, p());
  Eigen::ArrayXi zs;
  Eigen::MatrixXd xs;
  if (z_star_) {
    zs.resize(m);
    xs.resize(m, p());
  }
  for (int k = 0; k < m; ++k) {
    const int i = indices[k];
    r[k] = r_[i];
    z[k] = z_[i];
    y[k] = y_[i];
    d[k] = d_[i];
    x.row(k) = x_.row(i);
    if (z_star_) {
      zs[k] = (*z_star_)[i];
      xs.row(k) = x_star_->row(i);
    }
  }
  FusedSample out(std::move(r), std::move(y), std::move(d), std::move(z), std::move(x));
  if (z_star_) return out.with_transformed(std::move(zs), std::move(xs));
  return out;
}

DesignMatrix build_design(const Formula& formula, const FusedSample& sample,
                          CovariateSource source, std::optional<int> z_override) {
  const int need = formula.max_x_index();
  if (need > sample.p()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "formula references x" + std::to_string(need) + " but sample has p=" +
                    std::to_string(sample.p()));
  }
  const bool transformed = source == CovariateSource::transformed;
  if (transformed && !sample.has_transformed()) {
    throw Error(ErrorCode::MissingTransformed,
                "transformed covariates requested but not attached");
  }
  const Eigen::MatrixXd& X = transformed ? sample.x_star_mat() : sample.x_mat();
  const Eigen::ArrayXi& Z = transformed ? sample.z_star_col() : sample.z_col();
  const int n = sample.n();
  DesignMatrix design;
  design.labels = formula.terms();
  design.values.resize(n, formula.size());
  std::vector<double> xr(static_cast<std::size_t>(sample.p()));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < sample.p(); ++j) xr[static_cast<std::size_t>(j)] = X(i, j);
    const double z = z_override ? static_cast<double>(*z_override) : static_cast<double>(Z[i]);
    for (int t = 0; t < formula.size(); ++t) {
      design.values(i, t) = formula.terms()[static_cast<std::size_t>(t)].eval(z, xr.data(), sample.p());
    }
  }
  return design;
}

Eigen::VectorXd design_row(const Formula& formula, const FusedRow& row, CovariateSource source,
                           std::optional<int> z_override) {
  const bool transformed = source == CovariateSource::transformed;
  if (transformed && (!row.z_star || !row.x_star)) {
    throw Error(ErrorCode::MissingTransformed,
                "transformed covariates requested but not attached");
  }
  const Eigen::VectorXd& x = transformed ? *row.x_star : row.x;
  const double z =
      z_override ? static_cast<double>(*z_override)
                 : static_cast<double>(transformed ? *row.z_star : row.z);
  const int p = static_cast<int>(x.size());
  Eigen::VectorXd out(formula.size());
  for (int t = 0; t < formula.size(); ++t) {
    out[t] = formula.terms()[static_cast<std::size_t>(t)].eval(z, x.data(), p);
  }
  return out;
}

}  // namespace fusioniv
