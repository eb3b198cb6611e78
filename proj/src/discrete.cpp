#include "fusioniv/discrete.hpp"

#include <cmath>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

namespace {
inline double zsign(int z) { return z == 1 ? 1.0 : -1.0; }
}

DiscreteOracle::DiscreteOracle(DiscreteDgp dgp) : dgp_(std::move(dgp)) {
  if (!dgp_.y_var) {
    dgp_.y_var = [](const Eigen::VectorXd&, double) { return 0.0; };
  }
  validate();
  compute();
}

void DiscreteOracle::validate() {
  const std::size_t nx = dgp_.x_support.size();
  const std::size_t nu = dgp_.u_support.size();
  if (nx == 0 || nu == 0) throw Error(ErrorCode::AssumptionViolated, "empty support");
  if (dgp_.x_prob.size() != nx || dgp_.u_prob_given_x.size() != nx ||
      dgp_.lambda1.size() != nx) {
    throw Error(ErrorCode::AssumptionViolated, "table sizes disagree");
  }
  double px = 0.0;
  for (double p : dgp_.x_prob) {
    if (p < 0.0) throw Error(ErrorCode::AssumptionViolated, "negative probability");
    px += p;
  }
  if (std::abs(px - 1.0) > 1e-12) {
    throw Error(ErrorCode::AssumptionViolated, "pr(X) does not sum to one");
  }
  for (std::size_t xi = 0; xi < nx; ++xi) {
    if (dgp_.u_prob_given_x[xi].size() != nu) {
      throw Error(ErrorCode::AssumptionViolated, "pr(U|X) table has wrong width");
    }
    double pu = 0.0;
    for (double p : dgp_.u_prob_given_x[xi]) {
      if (p < 0.0) throw Error(ErrorCode::AssumptionViolated, "negative probability");
      pu += p;
    }
    if (std::abs(pu - 1.0) > 1e-12) {
      throw Error(ErrorCode::AssumptionViolated, "pr(U|X) does not sum to one");
    }
    const double lam = dgp_.lambda1[xi];
    if (!(lam > 0.0 && lam < 1.0)) {
      throw Error(ErrorCode::AssumptionViolated, "instrument positivity fails");
    }
    const Eigen::VectorXd& x = dgp_.x_support[xi];
    for (int z = 0; z <= 1; ++z) {
      const double pz = dgp_.pi(z, x);
      if (!(pz > 0.0 && pz < 1.0)) {
        throw Error(ErrorCode::AssumptionViolated, "support overlap fails");
      }
      for (std::size_t ui = 0; ui < nu; ++ui) {
        const double u = dgp_.u_support[ui];
        const double m = dgp_.g0(x, u) + dgp_.g1(x, u) * z;
        if (m < 0.0 || m > 1.0) {
          throw Error(ErrorCode::AssumptionViolated, "treatment mean outside [0,1]");
        }
        if (dgp_.y_var(x, u) < 0.0) {
          throw Error(ErrorCode::AssumptionViolated, "negative outcome variance");
        }
      }
    }
  }
}

void DiscreteOracle::compute() {
  const std::size_t nx = dgp_.x_support.size();
  const std::size_t nu = dgp_.u_support.size();

  tau_table_.assign(2, std::vector<double>(nx, 0.0));
  h_table_.assign(nx, 0.0);
  omega_table_.assign(nx, 0.0);
  cov_table_.assign(nx, 0.0);

  for (std::size_t xi = 0; xi < nx; ++xi) {
    const Eigen::VectorXd& x = dgp_.x_support[xi];
    double eg0 = 0.0, eg1 = 0.0, eh0 = 0.0, eh1 = 0.0, eg1h1 = 0.0, eg0h1 = 0.0;
    for (std::size_t ui = 0; ui < nu; ++ui) {
      const double pu = dgp_.u_prob_given_x[xi][ui];
      const double u = dgp_.u_support[ui];
      eg0 += pu * dgp_.g0(x, u);
      eg1 += pu * dgp_.g1(x, u);
      eh0 += pu * dgp_.h0(x, u);
      eh1 += pu * dgp_.h1(x, u);
      eg1h1 += pu * dgp_.g1(x, u) * dgp_.h1(x, u);
      eg0h1 += pu * dgp_.g0(x, u) * dgp_.h1(x, u);
    }
    tau_table_[0][xi] = eg0;
    tau_table_[1][xi] = eg0 + eg1;
    if (std::abs(eg1) < 1e-12) {
      throw Error(ErrorCode::AssumptionViolated, "instrument relevance fails at a support point");
    }
    h_table_[xi] = eh1;
    cov_table_[xi] = eg1h1 - eg1 * eh1;
    // remainder of the outcome-mean decomposition; the baseline-arm
    // covariance term belongs here (expand E[h1 (g0 + g1 z) | x] and match
    // coefficients against H(x) tau(z,x))
    omega_table_[xi] = (eg0h1 - eg0 * eh1) + eh0;
  }

  // pr(R=1) implied by pi and the primary (Z,X) law
  double inv_q = 0.0;
  for (std::size_t xi = 0; xi < nx; ++xi) {
    for (int z = 0; z <= 1; ++z) {
      const double fzx = dgp_.x_prob[xi] * (z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi]);
      inv_q += fzx / dgp_.pi(z, dgp_.x_support[xi]);
    }
  }
  values_.q = 1.0 / inv_q;

  KahanSum delta, functional, discrepancy;
  for (std::size_t xi = 0; xi < nx; ++xi) {
    const double px = dgp_.x_prob[xi];
    const double gap = tau_table_[1][xi] - tau_table_[0][xi];
    delta.add(px * h_table_[xi]);
    discrepancy.add(px * cov_table_[xi] / gap);
    for (int z = 0; z <= 1; ++z) {
      const double lam = z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi];
      functional.add(px * lam * zsign(z) * outcome_mean(z, static_cast<int>(xi)) / (lam * gap));
    }
  }
  values_.delta = delta.value();
  values_.functional = functional.value();
  values_.discrepancy = discrepancy.value();
  values_.mean_influence = mean_influence_at(values_.delta);

  // second moment of the influence function at the true delta
  KahanSum second;
  const double q = values_.q;
  for (std::size_t xi = 0; xi < nx; ++xi) {
    const Eigen::VectorXd& x = dgp_.x_support[xi];
    const double px = dgp_.x_prob[xi];
    const double gap = tau_table_[1][xi] - tau_table_[0][xi];
    const double h = h_table_[xi];
    const double om = omega_table_[xi];
    for (int z = 0; z <= 1; ++z) {
      const double lam = z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi];
      const double tau_at = tau_table_[static_cast<std::size_t>(z)][xi];
      const double denom = q * lam * gap;
      // primary branch: enumerate (U, D), outcome through its conditional law
      const double a = zsign(z) / denom;
      const double b = -zsign(z) * (h * tau_at + om) / denom + (h - values_.delta) / q;
      for (std::size_t ui = 0; ui < nu; ++ui) {
        const double pu = dgp_.u_prob_given_x[xi][ui];
        const double u = dgp_.u_support[ui];
        const double pd1 = dgp_.g0(x, u) + dgp_.g1(x, u) * z;
        for (int d = 0; d <= 1; ++d) {
          const double pd = d == 1 ? pd1 : 1.0 - pd1;
          const double ymean = dgp_.h0(x, u) + dgp_.h1(x, u) * d;
          const double mu = a * ymean + b;
          const double pr = q * px * lam * pu * pd;
          second.add(pr * (mu * mu + a * a * dgp_.y_var(x, u)));
        }
      }
      // auxiliary branch: f(z,x | R=0) via Bayes, D ~ Bernoulli(tau)
      const double pz = dgp_.pi(z, x);
      const double f_aux = px * lam * q * (1.0 - pz) / (pz * (1.0 - q));
      const double c = -zsign(z) * (pz / (1.0 - pz)) * h / denom;
      for (int d = 0; d <= 1; ++d) {
        const double pd = d == 1 ? tau_at : 1.0 - tau_at;
        const double mu = c * (d - tau_at);
        second.add((1.0 - q) * f_aux * pd * mu * mu);
      }
    }
  }
  values_.second_moment = second.value();
}

double DiscreteOracle::tau(int z, int xi) const {
  return tau_table_[static_cast<std::size_t>(z)][static_cast<std::size_t>(xi)];
}
double DiscreteOracle::effect_h(int xi) const { return h_table_[static_cast<std::size_t>(xi)]; }
double DiscreteOracle::omega(int xi) const { return omega_table_[static_cast<std::size_t>(xi)]; }
double DiscreteOracle::cov_g1_h1(int xi) const { return cov_table_[static_cast<std::size_t>(xi)]; }

double DiscreteOracle::outcome_mean(int z, int xi) const {
  const Eigen::VectorXd& x = dgp_.x_support[static_cast<std::size_t>(xi)];
  double out = 0.0;
  for (std::size_t ui = 0; ui < dgp_.u_support.size(); ++ui) {
    const double pu = dgp_.u_prob_given_x[static_cast<std::size_t>(xi)][ui];
    const double u = dgp_.u_support[ui];
    const double pd1 = dgp_.g0(x, u) + dgp_.g1(x, u) * z;
    out += pu * (dgp_.h0(x, u) + dgp_.h1(x, u) * pd1);
  }
  return out;
}

double DiscreteOracle::moment_weight_only(
    const std::function<double(const Eigen::VectorXd&)>& m) const {
  KahanSum acc;
  for (std::size_t xi = 0; xi < dgp_.x_support.size(); ++xi) {
    const double gap = tau_table_[1][xi] - tau_table_[0][xi];
    const double mv = m(dgp_.x_support[xi]);
    for (int z = 0; z <= 1; ++z) {
      const double lam = z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi];
      acc.add(dgp_.x_prob[xi] * lam * zsign(z) * mv / (lam * gap));
    }
  }
  return acc.value();
}

double DiscreteOracle::moment_weight_tau(
    const std::function<double(const Eigen::VectorXd&)>& m) const {
  KahanSum acc;
  for (std::size_t xi = 0; xi < dgp_.x_support.size(); ++xi) {
    const double gap = tau_table_[1][xi] - tau_table_[0][xi];
    const double mv = m(dgp_.x_support[xi]);
    for (int z = 0; z <= 1; ++z) {
      const double lam = z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi];
      acc.add(dgp_.x_prob[xi] * lam * zsign(z) * mv *
              tau_table_[static_cast<std::size_t>(z)][xi] / (lam * gap));
    }
  }
  return acc.value();
}

double DiscreteOracle::primary_mean(
    const std::function<double(const Eigen::VectorXd&)>& m) const {
  KahanSum acc;
  for (std::size_t xi = 0; xi < dgp_.x_support.size(); ++xi) {
    acc.add(dgp_.x_prob[xi] * m(dgp_.x_support[xi]));
  }
  return acc.value();
}

double DiscreteOracle::mean_influence_at(double delta) const {
  const double q = values_.q;
  KahanSum acc;
  for (std::size_t xi = 0; xi < dgp_.x_support.size(); ++xi) {
    const Eigen::VectorXd& x = dgp_.x_support[xi];
    const double px = dgp_.x_prob[xi];
    const double gap = tau_table_[1][xi] - tau_table_[0][xi];
    const double h = h_table_[xi];
    const double om = omega_table_[xi];
    for (int z = 0; z <= 1; ++z) {
      const double lam = z == 1 ? dgp_.lambda1[xi] : 1.0 - dgp_.lambda1[xi];
      const double tau_at = tau_table_[static_cast<std::size_t>(z)][xi];
      // primary branch, outcome replaced by its conditional mean (exact:
      // the influence function is affine in y)
      const double core1 = zsign(z) *
                               (outcome_mean(z, static_cast<int>(xi)) - h * tau_at - om) /
                               (q * lam * gap) +
                           (h - delta) / q;
      acc.add(q * px * lam * core1);
      // auxiliary branch: E(D - tau | Z, X, R=0) = 0, by propensity equality;
      // enumerate anyway so the cancellation is computed rather than assumed
      const double pz = dgp_.pi(z, x);
      const double f_aux = px * lam * q * (1.0 - pz) / (pz * (1.0 - q));
      for (int d = 0; d <= 1; ++d) {
        const double pd = d == 1 ? tau_at : 1.0 - tau_at;
        const double mu =
            -zsign(z) * (pz / (1.0 - pz)) * h * (d - tau_at) / (q * lam * gap);
        acc.add((1.0 - q) * f_aux * pd * mu);
      }
    }
  }
  return acc.value();
}

namespace {

DiscreteDgp base_oracle() {
  DiscreteDgp dgp;
  for (double v : {0.0, 0.5, 1.0}) {
    Eigen::VectorXd x(1);
    x[0] = v;
    dgp.x_support.push_back(x);
  }
  dgp.x_prob = {0.3, 0.4, 0.3};
  dgp.u_support = {-0.5, 0.5};
  dgp.u_prob_given_x = {{0.5, 0.5}, {0.4, 0.6}, {0.6, 0.4}};
  dgp.lambda1 = {0.4, 0.5, 0.6};
  dgp.g0 = [](const Eigen::VectorXd& x, double u) { return 0.2 + 0.1 * x[0] + 0.1 * u; };
  dgp.h0 = [](const Eigen::VectorXd& x, double u) { return 1.0 + x[0] + 2.0 * u; };
  dgp.pi = [](int z, const Eigen::VectorXd& x) {
    return expit(-0.5 + 0.3 * z + 0.4 * x[0] - 0.2 * x[0] * x[0]);
  };
  return dgp;
}

}  // namespace

DiscreteDgp make_oracle_sharp_null() {
  DiscreteDgp dgp = base_oracle();
  dgp.g1 = [](const Eigen::VectorXd& x, double u) { return 0.3 + 0.2 * x[0] + 0.2 * u; };
  dgp.h1 = [](const Eigen::VectorXd&, double) { return 0.0; };
  return dgp;
}

DiscreteDgp make_oracle_u_free_g1() {
  DiscreteDgp dgp = base_oracle();
  dgp.g1 = [](const Eigen::VectorXd& x, double) { return 0.3 + 0.2 * x[0]; };
  dgp.h1 = [](const Eigen::VectorXd& x, double u) { return 1.0 + x[0] + u; };
  return dgp;
}

DiscreteDgp make_oracle_correlated() {
  DiscreteDgp dgp = base_oracle();
  dgp.g1 = [](const Eigen::VectorXd& x, double u) { return 0.3 + 0.2 * x[0] + 0.2 * u; };
  dgp.h1 = [](const Eigen::VectorXd& x, double u) { return 1.0 + x[0] + 1.5 * u; };
  dgp.y_var = [](const Eigen::VectorXd&, double) { return 0.5; };
  return dgp;
}

DiscreteDgp make_oracle_x_free_pi() {
  DiscreteDgp dgp = make_oracle_u_free_g1();
  dgp.pi = [](int, const Eigen::VectorXd&) { return 0.65; };
  return dgp;
}

}  // namespace fusioniv
