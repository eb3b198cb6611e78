#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace fusioniv {

// Finite-support structural model over (X, U, Z, D, Y-means), enumerable
// exactly. Serves as the ground-truth oracle for the identification
// functional, the influence function and the stacked moment identities.
//
// The merged law is induced by the primary-population law together with the
// source score pi(z,x); pr(R=1) follows from consistency of the mixture.
struct DiscreteDgp {
  // support of X (vectors of shared dimension) with pr(X=x | R=1)
  std::vector<Eigen::VectorXd> x_support;
  std::vector<double> x_prob;

  // support of U with pr(U=u | X=x, R=1); row = x index, col = u index.
  // Z is independent of U given X in the primary population by construction.
  std::vector<double> u_support;
  std::vector<std::vector<double>> u_prob_given_x;

  // pr(Z=1 | X=x, R=1)
  std::vector<double> lambda1;

  // structural means: E(D|Z,X,U,R=1) = g0 + g1 Z, E(Y|D,Z,X,U,R=1) = h0 + h1 D
  std::function<double(const Eigen::VectorXd&, double)> g0, g1, h0, h1;

  // optional outcome variance var(Y|D,Z,X,U,R=1); defaults to 0
  std::function<double(const Eigen::VectorXd&, double)> y_var;

  // pr(R=1 | Z=z, X=x) over the merged population
  std::function<double(int, const Eigen::VectorXd&)> pi;
};

struct OracleValues {
  double q = 0.0;                 // pr(R=1) implied by pi and the primary law
  double delta = 0.0;             // E(h1 | R=1)
  double functional = 0.0;        // identification functional of the observed law
  double discrepancy = 0.0;       // E{(-1)^{1-Z} Z cov(g1,h1|X) / (lambda tau-gap) | R=1}
  double mean_influence = 0.0;    // E[mu_eff(O; delta)] over the merged law
  double second_moment = 0.0;     // E[mu_eff(O; delta)^2]
};

class DiscreteOracle {
 public:
  explicit DiscreteOracle(DiscreteDgp dgp);

  const OracleValues& values() const { return values_; }

  // tau(z,x), effect curve H(x), remainder omega(x), cov(g1,h1|x), all exact
  double tau(int z, int xi) const;
  double effect_h(int xi) const;
  double omega(int xi) const;
  double cov_g1_h1(int xi) const;
  double outcome_mean(int z, int xi) const;  // E(Y | Z=z, X=x, R=1)

  // moment identities used by the identification proof:
  //   E{(-1)^{1-Z} m(X) / (lambda [tau1-tau0]) | R=1}            -> 0
  //   E{(-1)^{1-Z} m(X) tau(Z,X) / (lambda [tau1-tau0]) | R=1}   -> E{m(X)|R=1}
  double moment_weight_only(const std::function<double(const Eigen::VectorXd&)>& m) const;
  double moment_weight_tau(const std::function<double(const Eigen::VectorXd&)>& m) const;
  double primary_mean(const std::function<double(const Eigen::VectorXd&)>& m) const;

  // E[mu_eff(O; delta)] at an arbitrary delta (affine check support)
  double mean_influence_at(double delta) const;

  const DiscreteDgp& dgp() const { return dgp_; }

 private:
  void validate();
  void compute();

  DiscreteDgp dgp_;
  OracleValues values_;
  std::vector<std::vector<double>> tau_table_;  // [z][x index]
  std::vector<double> h_table_, omega_table_, cov_table_;
};

// ready-made instances for tests: sharp null, U-free instrument effect,
// correlated effects, independent source score
DiscreteDgp make_oracle_sharp_null();
DiscreteDgp make_oracle_u_free_g1();
DiscreteDgp make_oracle_correlated();
DiscreteDgp make_oracle_x_free_pi();

}  // namespace fusioniv
