#include "fusioniv/stacked.hpp"

#include <cmath>
#include <memory>

#include "fusioniv/error.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

Eigen::VectorXd StackedSystem::moment_mean(const Eigen::VectorXd& at) const {
  std::vector<KahanSum> acc(static_cast<std::size_t>(dim));
  std::vector<double> buf(static_cast<std::size_t>(dim));
  for (int i = 0; i < n; ++i) {
    eval_row(i, at, buf.data());
    for (int j = 0; j < dim; ++j) acc[static_cast<std::size_t>(j)].add(buf[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd out(dim);
  for (int j = 0; j < dim; ++j) out[j] = acc[static_cast<std::size_t>(j)].value() / n;
  return out;
}

SandwichResult sandwich(const StackedSystem& system) {
  const int k = system.dim;
  const Eigen::VectorXd at_solution = system.moment_mean(system.zeta);
  if (at_solution.lpNorm<Eigen::Infinity>() > 1e-8) {
    throw Error(ErrorCode::SingularBread,
                "stacked moments do not vanish at the fitted parameters");
  }

  SandwichResult res;
  res.bread.resize(k, k);
  for (int j = 0; j < k; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(system.zeta[j]));
    Eigen::VectorXd zp = system.zeta, zm = system.zeta;
    zp[j] += h;
    zm[j] -= h;
    res.bread.col(j) = (system.moment_mean(zp) - system.moment_mean(zm)) / (2.0 * h);
  }

  res.meat.setZero(k, k);
  std::vector<double> buf(static_cast<std::size_t>(k));
  Eigen::Map<Eigen::VectorXd> m(buf.data(), k);
  for (int i = 0; i < system.n; ++i) {
    system.eval_row(i, system.zeta, buf.data());
    res.meat.noalias() += m * m.transpose();
  }
  res.meat /= static_cast<double>(system.n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(res.bread);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularBread, "bread matrix is singular");
  const Eigen::MatrixXd ainv_b = lu.solve(res.meat);
  res.covariance = lu.solve(ainv_b.transpose()).transpose() / static_cast<double>(system.n);

  const double scale = std::max(1.0, res.covariance.cwiseAbs().maxCoeff());
  const double asym = (res.covariance - res.covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw Error(ErrorCode::SingularBread, "sandwich covariance is far from symmetric");
  }
  res.covariance = ((res.covariance + res.covariance.transpose()) / 2.0).eval();
  res.se_delta = std::sqrt(std::max(0.0, res.covariance(system.delta_index, system.delta_index)));
  return res;
}

namespace {

constexpr double kLo = kProbClampLo;
constexpr double kHi = kProbClampHi;

inline double clampp(double p) { return p < kLo ? kLo : (p > kHi ? kHi : p); }

// everything the row evaluators read; kept alive by shared_ptr in closures
struct Caches {
  int n = 0;
  Eigen::VectorXd r;      // 0/1
  Eigen::VectorXd zsign;  // (-1)^{1-z}
  Eigen::VectorXd ztrue;  // z as double
  Eigen::VectorXd ry;     // y on primary rows else 0
  Eigen::VectorXd d0;     // d on auxiliary rows else 0

  Eigen::MatrixXd lam_design;
  Eigen::VectorXd lam_z;  // z through lambda's covariate source
  Eigen::MatrixXd tau_at, tau_1, tau_0;
  Eigen::MatrixXd pi_design;
  Eigen::MatrixXd theta_design;
  Eigen::MatrixXd fs_design;  // first stage, at the observed z
  Eigen::MatrixXd Vh, Wo, Gv, Gw;  // effect designs and index rows
  Eigen::MatrixXd Wonly, Wonly_idx;  // omega-only systems
  HLink h_link = HLink::identity;
};

struct Slice {
  int offset = 0;
  int dim = 0;
};

using RowFn = std::function<void(int, const Eigen::VectorXd&, double*)>;

class Assembler {
 public:
  explicit Assembler(std::shared_ptr<Caches> caches) : c_(std::move(caches)) {}

  Slice alloc(const Eigen::VectorXd& init) {
    Slice s{dim_, static_cast<int>(init.size())};
    init_.push_back(init);
    dim_ += s.dim;
    return s;
  }
  Slice alloc(double init) {
    Eigen::VectorXd v(1);
    v[0] = init;
    return alloc(v);
  }

  void add(Slice slice, RowFn fn) { blocks_.push_back({slice, std::move(fn)}); }

  StackedSystem finish(int n, int delta_index) {
    StackedSystem sys;
    sys.dim = dim_;
    sys.n = n;
    sys.delta_index = delta_index;
    sys.zeta.resize(dim_);
    int off = 0;
    for (const auto& v : init_) {
      sys.zeta.segment(off, v.size()) = v;
      off += static_cast<int>(v.size());
    }
    auto blocks = std::make_shared<std::vector<Block>>(std::move(blocks_));
    auto caches = c_;
    sys.eval_row = [blocks, caches](int i, const Eigen::VectorXd& zeta, double* out) {
      (void)caches;
      for (const Block& b : *blocks) b.fn(i, zeta, out + b.slice.offset);
    };
    return sys;
  }

 private:
  struct Block {
    Slice slice;
    RowFn fn;
  };
  std::shared_ptr<Caches> c_;
  int dim_ = 0;
  std::vector<Eigen::VectorXd> init_;
  std::vector<Block> blocks_;
};

// ---- shared row computations ----------------------------------------------

inline double dotrow(const Eigen::MatrixXd& m, int i, const Eigen::VectorXd& zeta,
                     const Slice& s) {
  double acc = 0.0;
  const int k = s.dim;
  for (int j = 0; j < k; ++j) acc += m(i, j) * zeta[s.offset + j];
  return acc;
}

RowFn logit_score(std::shared_ptr<Caches> c, const Eigen::MatrixXd* design,
                  Eigen::VectorXd response, std::function<bool(const Caches&, int)> included,
                  Slice slice) {
  return [c, design, response = std::move(response), included, slice](
             int i, const Eigen::VectorXd& zeta, double* out) {
    if (!included(*c, i)) {
      for (int j = 0; j < slice.dim; ++j) out[j] = 0.0;
      return;
    }
    const double p = clampp(expit(dotrow(*design, i, zeta, slice)));
    const double resid = response[i] - p;
    for (int j = 0; j < slice.dim; ++j) out[j] = (*design)(i, j) * resid;
  };
}

RowFn linear_score(std::shared_ptr<Caches> c, const Eigen::MatrixXd* design,
                   Eigen::VectorXd response, std::function<bool(const Caches&, int)> included,
                   Slice slice) {
  return [c, design, response = std::move(response), included, slice](
             int i, const Eigen::VectorXd& zeta, double* out) {
    if (!included(*c, i)) {
      for (int j = 0; j < slice.dim; ++j) out[j] = 0.0;
      return;
    }
    const double resid = response[i] - dotrow(*design, i, zeta, slice);
    for (int j = 0; j < slice.dim; ++j) out[j] = (*design)(i, j) * resid;
  };
}

inline double lambda_value(const Caches& c, int i, const Eigen::VectorXd& zeta,
                           const Slice& psi) {
  const double p1 = clampp(expit(dotrow(c.lam_design, i, zeta, psi)));
  return c.lam_z[i] == 1.0 ? p1 : 1.0 - p1;
}

inline double tau_gap_value(const Caches& c, int i, const Eigen::VectorXd& zeta,
                            const Slice& xi) {
  return clampp(expit(dotrow(c.tau_1, i, zeta, xi))) -
         clampp(expit(dotrow(c.tau_0, i, zeta, xi)));
}

inline double h_value(const Caches& c, int i, const Eigen::VectorXd& zeta, const Slice& gamma) {
  const double u = dotrow(c.Vh, i, zeta, gamma);
  return c.h_link == HLink::tanh_link ? std::tanh(u) : u;
}

}  // namespace

StackedSystem build_stacked_system(EstimatorKind kind, const FusedSample& sample,
                                   const AnalysisSpec& spec, const FittedModels& models,
                                   double delta_hat) {
  auto c = std::make_shared<Caches>();
  const int n = sample.n();
  c->n = n;
  c->r.resize(n);
  c->zsign.resize(n);
  c->ztrue.resize(n);
  c->ry.resize(n);
  c->d0.resize(n);
  for (int i = 0; i < n; ++i) {
    c->r[i] = static_cast<double>(sample.r(i));
    c->zsign[i] = sample.z(i) == 1 ? 1.0 : -1.0;
    c->ztrue[i] = static_cast<double>(sample.z(i));
    c->ry[i] = sample.r(i) == 1 ? sample.y(i) : 0.0;
    c->d0[i] = sample.r(i) == 0 ? sample.d(i) : 0.0;
  }

  const RequiredComponents req = required_components(kind);
  Assembler assembler(c);

  auto primary = [](const Caches& cc, int i) { return cc.r[i] == 1.0; };
  auto auxiliary = [](const Caches& cc, int i) { return cc.r[i] == 0.0; };
  auto everyone = [](const Caches&, int) { return true; };

  Slice psi, xi, alpha, theta, xi_lin, gamma_eta, q_slice, delta_slice;

  if (req.lambda) {
    const GlmFit& fit = *models.lambda;
    c->lam_design = build_design(fit.formula, sample, fit.source).values;
    c->lam_z = sample.z_col().cast<double>().matrix();
    psi = assembler.alloc(fit.beta);
    assembler.add(psi, logit_score(c, &c->lam_design, c->lam_z, primary, psi));
  }
  if (req.tau) {
    const GlmFit& fit = *models.tau;
    c->tau_at = build_design(fit.formula, sample, fit.source).values;
    c->tau_1 = build_design(fit.formula, sample, fit.source, 1).values;
    c->tau_0 = build_design(fit.formula, sample, fit.source, 0).values;
    xi = assembler.alloc(fit.beta);
    assembler.add(xi, logit_score(c, &c->tau_at, c->d0, auxiliary, xi));
  }
  if (req.pi) {
    const GlmFit& fit = *models.pi;
    c->pi_design = build_design(fit.formula, sample, fit.source).values;
    alpha = assembler.alloc(fit.beta);
    assembler.add(alpha, logit_score(c, &c->pi_design, c->r, everyone, alpha));
  }
  if (req.theta) {
    const GlmFit& fit = *models.theta;
    c->theta_design = build_design(fit.formula, sample, fit.source).values;
    theta = assembler.alloc(fit.beta);
    assembler.add(theta, linear_score(c, &c->theta_design, c->ry, primary, theta));
  }
  if (req.first_stage) {
    const GlmFit& fit = *models.first_stage;
    c->fs_design = build_design(fit.formula, sample, fit.source).values;
    xi_lin = assembler.alloc(fit.beta);
    assembler.add(xi_lin, linear_score(c, &c->fs_design, c->d0, auxiliary, xi_lin));
  }

  const bool effect_based = req.effect_m2 || req.effect_m3 || req.effect_dr;
  const EffectCurveFit* effect = nullptr;
  if (effect_based) {
    effect = req.effect_m2 ? &*models.m2 : (req.effect_m3 ? &*models.m3 : &*models.dr);
    const EffectModelSpec espec = spec.effect_spec();
    c->h_link = espec.link;
    c->Vh = build_design(espec.h_formula, sample, espec.h_source).values;
    c->Wo = build_design(espec.omega_formula, sample, espec.omega_source).values;
    c->Gv = index_v_matrix(espec, sample);
    for (int i = 0; i < n; ++i) c->Gv.row(i) *= c->ztrue[i];
    c->Gw = index_w_matrix(espec, sample);

    Eigen::VectorXd init(effect->gamma.size() + effect->eta.size());
    init << effect->gamma, effect->eta;
    gamma_eta = assembler.alloc(init);
    const int kv = static_cast<int>(effect->gamma.size());
    const Slice gamma{gamma_eta.offset, kv};
    const Slice eta{gamma_eta.offset + kv, static_cast<int>(effect->eta.size())};
    const Slice xi_cap = xi;
    const Slice alpha_cap = alpha;
    assembler.add(gamma_eta, [c, gamma, eta, xi_cap, alpha_cap, kv, req](
                                 int i, const Eigen::VectorXd& zeta, double* out) {
      const double h = h_value(*c, i, zeta, gamma);
      const double omega = dotrow(c->Wo, i, zeta, eta);
      double a;
      if (req.effect_m2) {
        const double tau = clampp(expit(dotrow(c->tau_at, i, zeta, xi_cap)));
        a = c->r[i] == 1.0 ? tau : c->d0[i] - tau;
      } else if (req.effect_m3) {
        if (c->r[i] == 1.0) {
          a = 0.0;
        } else {
          const double pi = clampp(expit(dotrow(c->pi_design, i, zeta, alpha_cap)));
          a = pi / (1.0 - pi) * c->d0[i];
        }
      } else {
        const double tau = clampp(expit(dotrow(c->tau_at, i, zeta, xi_cap)));
        if (c->r[i] == 1.0) {
          a = tau;
        } else {
          const double pi = clampp(expit(dotrow(c->pi_design, i, zeta, alpha_cap)));
          a = pi / (1.0 - pi) * (c->d0[i] - tau);
        }
      }
      const double resid = c->ry[i] - a * h - c->r[i] * omega;
      for (int j = 0; j < kv; ++j) out[j] = c->Gv(i, j) * resid;
      for (int j = 0; j < eta.dim; ++j) out[kv + j] = c->Gw(i, j) * resid;
    });
  }

  // q is always stacked with the equation R - q
  q_slice = assembler.alloc(sample.q_hat());
  assembler.add(q_slice, [c, q_slice](int i, const Eigen::VectorXd& zeta, double* out) {
    out[0] = c->r[i] - zeta[q_slice.offset];
  });

  const bool in_system_delta = kind == EstimatorKind::Tsiv || kind == EstimatorKind::Ts2sls ||
                               kind == EstimatorKind::Dr;
  int delta_index = -1;

  if (in_system_delta) {
    const EffectModelSpec ospec = spec.omega_only_spec();
    c->Wonly = build_design(ospec.omega_formula, sample, ospec.omega_source).values;
    c->Wonly_idx = index_w_matrix(ospec, sample);
    const int kw = static_cast<int>(c->Wonly.cols());

    Eigen::VectorXd init(1 + kw);
    init[0] = delta_hat;
    // recover eta by re-solving: caller passes fitted models but the scalar
    // system's eta lives in the estimate path; recompute it here
    {
      Eigen::VectorXd a(n);
      const double q = sample.q_hat();
      const double w = q / (1.0 - q);
      Eigen::VectorXd tau_at_fit, odds;
      if (kind == EstimatorKind::Ts2sls) {
        tau_at_fit = glm_predictions(*models.first_stage, sample);
      } else if (kind == EstimatorKind::Dr) {
        tau_at_fit = glm_predictions(*models.tau, sample);
        odds = pi_odds_auxiliary(*models.pi, sample);
      }
      for (int i = 0; i < n; ++i) {
        switch (kind) {
          case EstimatorKind::Tsiv:
            a[i] = c->r[i] == 0.0 ? w * c->d0[i] : 0.0;
            break;
          case EstimatorKind::Ts2sls:
            a[i] = c->r[i] == 1.0 ? tau_at_fit[i] : w * (c->d0[i] - tau_at_fit[i]);
            break;
          default:
            a[i] = c->r[i] == 1.0 ? tau_at_fit[i] : odds[i] * (c->d0[i] - tau_at_fit[i]);
            break;
        }
      }
      // eta solves the lower block given delta_hat:  E{Gw (ry - a delta - r W eta)} = 0
      Eigen::MatrixXd M(kw, kw);
      Eigen::VectorXd rhs(kw);
      M.setZero();
      rhs.setZero();
      for (int i = 0; i < n; ++i) {
        const double res0 = c->ry[i] - a[i] * delta_hat;
        for (int jj = 0; jj < kw; ++jj) {
          rhs[jj] += c->Wonly_idx(i, jj) * res0;
          for (int ll = 0; ll < kw; ++ll) {
            M(jj, ll) += c->Wonly_idx(i, jj) * c->r[i] * c->Wonly(i, ll);
          }
        }
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (!lu.isInvertible()) throw Error(ErrorCode::SingularSystem, "eta block is singular");
      init.tail(kw) = lu.solve(rhs);
    }
    const Slice sys_slice = assembler.alloc(init);
    delta_index = sys_slice.offset;
    const Slice xi_cap = xi;
    const Slice alpha_cap = alpha;
    const Slice fs_cap = xi_lin;
    const Slice q_cap = q_slice;
    assembler.add(sys_slice, [c, kind, sys_slice, xi_cap, alpha_cap, fs_cap, q_cap, kw](
                                 int i, const Eigen::VectorXd& zeta, double* out) {
      const double delta = zeta[sys_slice.offset];
      double a;
      if (kind == EstimatorKind::Tsiv) {
        const double q = zeta[q_cap.offset];
        a = c->r[i] == 0.0 ? q / (1.0 - q) * c->d0[i] : 0.0;
      } else if (kind == EstimatorKind::Ts2sls) {
        const double q = zeta[q_cap.offset];
        const double tau = dotrow(c->fs_design, i, zeta, fs_cap);
        a = c->r[i] == 1.0 ? tau : q / (1.0 - q) * (c->d0[i] - tau);
      } else {
        const double tau = clampp(expit(dotrow(c->tau_at, i, zeta, xi_cap)));
        if (c->r[i] == 1.0) {
          a = tau;
        } else {
          const double pi = clampp(expit(dotrow(c->pi_design, i, zeta, alpha_cap)));
          a = pi / (1.0 - pi) * (c->d0[i] - tau);
        }
      }
      double omega = 0.0;
      for (int j = 0; j < kw; ++j) omega += c->Wonly(i, j) * zeta[sys_slice.offset + 1 + j];
      const double resid = c->ry[i] - a * delta - c->r[i] * omega;
      out[0] = c->ztrue[i] * resid;
      for (int j = 0; j < kw; ++j) out[1 + j] = c->Wonly_idx(i, j) * resid;
    });
  } else {
    delta_slice = assembler.alloc(delta_hat);
    delta_index = delta_slice.offset;
    const Slice psi_cap = psi;
    const Slice xi_cap = xi;
    const Slice alpha_cap = alpha;
    const Slice theta_cap = theta;
    const Slice q_cap = q_slice;
    const Slice d_cap = delta_slice;
    Slice gamma_cap{};
    if (effect_based) gamma_cap = Slice{gamma_eta.offset, static_cast<int>(effect->gamma.size())};
    Slice eta_cap{};
    if (effect_based) {
      eta_cap = Slice{gamma_eta.offset + gamma_cap.dim, static_cast<int>(effect->eta.size())};
    }

    switch (kind) {
      case EstimatorKind::D1:
        assembler.add(delta_slice, [c, psi_cap, xi_cap, q_cap, d_cap](
                                       int i, const Eigen::VectorXd& zeta, double* out) {
          const double q = zeta[q_cap.offset];
          double term = 0.0;
          if (c->r[i] == 1.0) {
            const double lam = lambda_value(*c, i, zeta, psi_cap);
            const double gap = tau_gap_value(*c, i, zeta, xi_cap);
            term = c->zsign[i] * c->ry[i] / (q * lam * gap);
          }
          out[0] = term - zeta[d_cap.offset];
        });
        break;
      case EstimatorKind::Mle:
        assembler.add(delta_slice, [c, psi_cap, xi_cap, alpha_cap, theta_cap, q_cap, d_cap](
                                       int i, const Eigen::VectorXd& zeta, double* out) {
          const double q = zeta[q_cap.offset];
          const double lam = lambda_value(*c, i, zeta, psi_cap);
          const double gap = tau_gap_value(*c, i, zeta, xi_cap);
          const double pi = clampp(expit(dotrow(c->pi_design, i, zeta, alpha_cap)));
          const double ymean = dotrow(c->theta_design, i, zeta, theta_cap);
          out[0] = c->zsign[i] * pi * ymean / (q * lam * gap) - zeta[d_cap.offset];
        });
        break;
      case EstimatorKind::D2:
      case EstimatorKind::D3:
      case EstimatorKind::Dr2:
        assembler.add(delta_slice, [c, gamma_cap, q_cap, d_cap](
                                       int i, const Eigen::VectorXd& zeta, double* out) {
          const double q = zeta[q_cap.offset];
          out[0] = c->r[i] / q * (h_value(*c, i, zeta, gamma_cap) - zeta[d_cap.offset]);
        });
        break;
      case EstimatorKind::Dr3:
        assembler.add(delta_slice, [c, gamma_cap, q_cap, d_cap](
                                       int i, const Eigen::VectorXd& zeta, double* out) {
          const double q = zeta[q_cap.offset];
          out[0] = (1.0 - c->r[i]) / (1.0 - q) *
                   (h_value(*c, i, zeta, gamma_cap) - zeta[d_cap.offset]);
        });
        break;
      case EstimatorKind::Mul:
        assembler.add(delta_slice, [c, psi_cap, xi_cap, alpha_cap, gamma_cap, eta_cap, q_cap,
                                    d_cap](int i, const Eigen::VectorXd& zeta, double* out) {
          const double q = zeta[q_cap.offset];
          const double lam = lambda_value(*c, i, zeta, psi_cap);
          const double gap = tau_gap_value(*c, i, zeta, xi_cap);
          const double h = h_value(*c, i, zeta, gamma_cap);
          const double omega = dotrow(c->Wo, i, zeta, eta_cap);
          const double tau = clampp(expit(dotrow(c->tau_at, i, zeta, xi_cap)));
          double core, tail = 0.0;
          if (c->r[i] == 1.0) {
            core = (c->ry[i] - h * tau - omega) / q;
            tail = (h - zeta[d_cap.offset]) / q;
          } else {
            const double pi = clampp(expit(dotrow(c->pi_design, i, zeta, alpha_cap)));
            core = -(pi / (1.0 - pi)) * h * (c->d0[i] - tau) / q;
          }
          out[0] = c->zsign[i] * core / (lam * gap) + tail;
        });
        break;
      default:
        throw Error(ErrorCode::MissingNuisance, "no stacked system for this estimator");
    }
  }

  return assembler.finish(n, delta_index);
}

SandwichResult sandwich_for(EstimatorKind kind, const FusedSample& sample,
                            const AnalysisSpec& spec, const FittedModels& models,
                            double delta_hat) {
  return sandwich(build_stacked_system(kind, sample, spec, models, delta_hat));
}

}  // namespace fusioniv
