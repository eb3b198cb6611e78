#include "fusioniv/dgp.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double sample_truncnorm(double mu, double sigma, double lo, double hi, SplitRng& rng) {
  if (!(lo < hi) || !(sigma > 0.0)) {
    throw Error(ErrorCode::ConfigError, "truncated normal needs lo < hi and sigma > 0");
  }
  const double a = norm_cdf((lo - mu) / sigma);
  const double b = norm_cdf((hi - mu) / sigma);
  double v = a + rng.uniform() * (b - a);
  if (v < 1e-12) v = 1e-12;
  if (v > 1.0 - 1e-12) v = 1.0 - 1e-12;
  const double x = mu + sigma * norm_quantile(v);
  return std::min(hi, std::max(lo, x));
}

namespace {

struct RowDraw {
  int r, z;
  double y, d;
  Eigen::Vector3d x;
  double u;      // NaN on auxiliary rows
  int d_latent;  // -1 when not drawn
};

RowDraw draw_unit(const DgpParams& prm, int r, bool reversed, SplitRng& rng, long& clamped,
                  long& primary_like) {
  RowDraw row;
  row.r = r;
  // In the forward design the r=1 arm carries the confounded outcome
  // mechanism; reversed fusion runs that mechanism on both arms and flips
  // which variable is exposed.
  const bool outcome_mech = reversed ? true : r == 1;
  const bool uniform_x = reversed ? r == 0 : r == 1;

  for (int j = 0; j < 3; ++j) {
    row.x[j] = uniform_x ? rng.uniform() : sample_truncnorm(0.5, 1.0, 0.0, 1.0, rng);
  }
  const double pz = expit(prm.psi[0] + prm.psi.tail(3).dot(row.x));
  row.z = rng.bernoulli(pz);

  const double xi_lin =
      prm.xi[0] + prm.xi[1] * row.z + prm.xi[2] * row.x[0] + prm.xi[3] * row.x[1] +
      prm.xi[4] * row.x[2];

  row.u = kNaN;
  row.d = kNaN;
  row.y = kNaN;
  row.d_latent = -1;

  if (outcome_mech) {
    const double loc = prm.vartheta.dot(row.x);
    row.u = sample_truncnorm(loc, 1.0, loc - 1.0, loc + 1.0, rng);
    double pd = expit(xi_lin) + prm.confounder_load * (row.u - loc);
    ++primary_like;
    if (pd < 0.0 || pd > 1.0) {
      ++clamped;
      pd = std::min(1.0, std::max(0.0, pd));
    }
    const int d = rng.bernoulli(pd);
    const double h = prm.gamma[0] + prm.gamma.tail(3).dot(row.x);
    const double mean = h * d + prm.outcome_slope * row.x.sum() + prm.confounder_slope * row.u;
    const double y = rng.normal(mean, prm.noise_sd);
    if (r == 1) {
      row.y = y;
      row.d_latent = d;
    } else {
      row.d = d;  // reversed fusion: treatment arm exposes d only
    }
  } else {
    // forward-design auxiliary arm: treatment follows the logistic mean
    row.d = rng.bernoulli(expit(xi_lin));
  }
  return row;
}

SimulatedSample generate(const DgpParams& prm, int n, bool reversed, SplitRng& rng) {
  if (n < 10) throw Error(ErrorCode::DegenerateSample, "need n >= 10");
  Eigen::ArrayXi r(n), z(n), d_latent(n);
  Eigen::VectorXd y(n), d(n), u(n);
  Eigen::MatrixXd x(n, 3);
  long clamped = 0;
  long primary_like = 0;
  for (int i = 0; i < n; ++i) {
    const int ri = rng.bernoulli(prm.q0);
    const RowDraw row = draw_unit(prm, ri, reversed, rng, clamped, primary_like);
    r[i] = row.r;
    z[i] = row.z;
    y[i] = row.y;
    d[i] = row.d;
    u[i] = row.u;
    d_latent[i] = row.d_latent;
    x.row(i) = row.x.transpose();
  }
  SimulatedSample out{FusedSample(std::move(r), std::move(y), std::move(d), std::move(z),
                                  std::move(x)),
                      std::move(u), std::move(d_latent),
                      primary_like > 0 ? static_cast<double>(clamped) /
                                             static_cast<double>(primary_like)
                                       : 0.0};
  return out;
}

}  // namespace

SimulatedSample gen_fused(const DgpParams& params, int n, SplitRng& rng) {
  return generate(params, n, /*reversed=*/false, rng);
}

SimulatedSample gen_fused_reversed(const DgpParams& params, int n, SplitRng& rng) {
  return generate(params, n, /*reversed=*/true, rng);
}

FusedSample misspecify(const FusedSample& sample, SplitRng& rng) {
  const int n = sample.n();
  if (sample.p() != 3) {
    throw Error(ErrorCode::ConsistencyError, "misspecification transform expects p=3");
  }
  Eigen::ArrayXi zs(n);
  Eigen::MatrixXd xs(n, 3);
  const double phi_m2 = norm_cdf(-2.0);
  const double phi_p1 = norm_cdf(1.0);
  for (int i = 0; i < n; ++i) {
    const double pz = sample.z(i) == 1 ? phi_p1 : phi_m2;
    zs[i] = rng.bernoulli(pz);
    const double x1 = sample.x_mat()(i, 0);
    const double x2 = sample.x_mat()(i, 1);
    const double x3 = sample.x_mat()(i, 2);
    xs(i, 0) = std::exp(-0.5 * x1) + rng.normal();
    xs(i, 1) = x2 / (1.0 + std::exp(static_cast<double>(sample.z(i)))) + rng.normal();
    const double x13 = x1 * x3;
    xs(i, 2) = x13 * x13 * x13 + rng.normal();
  }
  return sample.with_transformed(std::move(zs), std::move(xs));
}

}  // namespace fusioniv
