#include "setscreen/glm.hpp"

#include <cmath>
#include <set>

#include "setscreen/error.hpp"
#include "setscreen/parallel.hpp"

namespace setscreen {

std::string_view to_string(OutcomeFamily family) {
  return family == OutcomeFamily::Continuous ? "continuous" : "binary";
}

OutcomeFamily parse_family(std::string_view text) {
  if (text == "continuous" || text == "gaussian" || text == "linear")
    return OutcomeFamily::Continuous;
  if (text == "binary" || text == "binomial" || text == "logistic") return OutcomeFamily::Binary;
  throw ValidationError("unknown outcome family '" + std::string(text) + "'");
}

std::string_view to_string(VariantStatus status) {
  switch (status) {
    case VariantStatus::Ok:
      return "ok";
    case VariantStatus::ExcludedMonomorphic:
      return "excluded_monomorphic";
    case VariantStatus::ExcludedUnstable:
      return "excluded_unstable";
  }
  return "ok";
}

VariantStatus parse_status(std::string_view text) {
  if (text == "ok") return VariantStatus::Ok;
  if (text == "excluded_monomorphic") return VariantStatus::ExcludedMonomorphic;
  if (text == "excluded_unstable") return VariantStatus::ExcludedUnstable;
  throw ValidationError("unknown variant status '" + std::string(text) + "'");
}

void validate(const GenotypeDataset& data) {
  const auto n = static_cast<std::size_t>(data.outcome.size());
  const auto q = static_cast<std::size_t>(data.covariates.cols());
  if (static_cast<std::size_t>(data.covariates.rows()) != n)
    throw ValidationError("covariate rows (" + std::to_string(data.covariates.rows()) +
                          ") differ from outcome length (" + std::to_string(n) + ")");
  if (q == 0) throw ValidationError("covariate matrix needs an intercept column");
  for (std::size_t i = 0; i < n; ++i) {
    if (data.covariates(static_cast<Eigen::Index>(i), 0) != 1.0)
      throw ValidationError("covariate column 0 must be an intercept of ones (row " +
                            std::to_string(i + 1) + ")");
  }
  if (n < q + 2)
    throw ValidationError("need at least q + 2 = " + std::to_string(q + 2) + " individuals, got " +
                          std::to_string(n));
  if (data.genotypes.n_individuals() != n)
    throw ValidationError("genotype rows differ from outcome length");
  const std::size_t m = data.genotypes.n_variants();
  if (data.variant_ids.size() != m || data.region_ids.size() != m)
    throw ValidationError("variant ids / region map do not cover every genotype column");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < m; ++j) {
    if (!seen.insert(data.variant_ids[j]).second)
      throw ValidationError("duplicate variant id '" + data.variant_ids[j] + "'");
    if (data.region_ids[j].empty())
      throw ValidationError("variant '" + data.variant_ids[j] + "' has no region");
    const auto col = data.genotypes.column(j);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = col[i];
      if (v != GenotypeMatrix::kMissing && (v < 0 || v > 2))
        throw ValidationError("genotype value " + std::to_string(v) + " out of range at row " +
                              std::to_string(i + 1) + ", column " + std::to_string(j + 1));
    }
  }
  if (data.family == OutcomeFamily::Binary) {
    for (std::size_t i = 0; i < n; ++i) {
      const double y = data.outcome(static_cast<Eigen::Index>(i));
      if (y != 0.0 && y != 1.0)
        throw ValidationError("binary outcome must be 0/1 (row " + std::to_string(i + 1) + ")");
    }
  }
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// log(1 + exp(x))
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double binomial_deviance(const VectorXd& y, const VectorXd& eta) {
  double dev = 0.0;
  for (Index i = 0; i < y.size(); ++i)
    dev += y(i) > 0.5 ? softplus(-eta(i)) : softplus(eta(i));
  return 2.0 * dev;
}

GlmFit fit_linear(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& X,
                  const Eigen::Ref<const VectorXd>& g) {
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw RankDeficient("covariate matrix is not of full column rank");

  // Partial out the covariates; the slope on the residualized genotype is the
  // full-model coefficient and its squared norm is 1 / [(D'D)^-1]_gg.
  const VectorXd g_res = g - X * qr.solve(g);
  const VectorXd y_res = y - X * qr.solve(y);
  const double gg = g_res.squaredNorm();
  if (!(gg > 1e-12 * std::max(1.0, g.squaredNorm())))
    throw RankDeficient("genotype is collinear with the covariates");

  GlmFit fit;
  fit.beta_hat = g_res.dot(y_res) / gg;
  const double rss = (y_res - fit.beta_hat * g_res).squaredNorm();
  fit.residual_variance = rss / static_cast<double>(y.size());
  fit.se = std::sqrt(fit.residual_variance / gg);
  fit.iterations = 1;
  return fit;
}

GlmFit fit_logistic(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& X,
                    const Eigen::Ref<const VectorXd>& g, const GlmOptions& opt) {
  const Index n = y.size();
  const Index p = X.cols() + 1;
  MatrixXd D(n, p);
  D.leftCols(p - 1) = X;
  D.col(p - 1) = g;
  {
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
    if (qr.rank() < p) throw RankDeficient("design [X | g] is not of full column rank");
  }
  for (Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("binary outcome must be 0/1");

  VectorXd w(n);
  VectorXd resid(n);
  // One Newton-Raphson / IRLS proposal from the current linear predictor.
  auto newton_step = [&](const VectorXd& eta_cur) -> std::pair<VectorXd, MatrixXd> {
    for (Index i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta_cur(i)));
      w(i) = mu * (1.0 - mu);
      resid(i) = y(i) - mu;
    }
    MatrixXd info = D.transpose() * w.asDiagonal() * D;
    const VectorXd rhs = D.transpose() * (w.cwiseProduct(eta_cur) + resid);
    const Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all())
      throw Separation("information matrix became singular");
    return {ldlt.solve(rhs), std::move(info)};
  };

  // Start from eta = logit((y + 0.5) / 2), as glm() does.
  VectorXd eta(n);
  for (Index i = 0; i < n; ++i) {
    const double mu0 = (y(i) + 0.5) / 2.0;
    eta(i) = std::log(mu0 / (1.0 - mu0));
  }
  VectorXd beta = VectorXd::Zero(p);
  double dev_old = binomial_deviance(y, eta);
  bool converged = false;
  int iter = 0;
  for (iter = 1; iter <= opt.max_iter; ++iter) {
    VectorXd beta_new = newton_step(eta).first;
    VectorXd eta_new = D * beta_new;
    double dev_new = binomial_deviance(y, eta_new);
    for (int h = 0; iter > 1 && h < opt.max_halvings && !(dev_new <= dev_old); ++h) {
      beta_new = 0.5 * (beta_new + beta);
      eta_new = D * beta_new;
      dev_new = binomial_deviance(y, eta_new);
    }
    if (!std::isfinite(dev_new)) throw Separation("deviance is not finite");
    converged = std::abs(dev_new - dev_old) / (std::abs(dev_new) + 0.1) < opt.tol;
    beta = std::move(beta_new);
    eta = std::move(eta_new);
    dev_old = dev_new;
    if (converged) break;
  }
  if (!converged)
    throw NonConvergence("IRLS did not converge in " + std::to_string(opt.max_iter) +
                         " iterations");

  // Polish with one more Newton step; quadratic convergence makes this
  // worth several digits in beta.
  {
    VectorXd beta_new = newton_step(eta).first;
    VectorXd eta_new = D * beta_new;
    if (binomial_deviance(y, eta_new) <= dev_old * (1.0 + 1e-12) + 1e-300) {
      beta = std::move(beta_new);
      eta = std::move(eta_new);
    }
  }

  const MatrixXd info = newton_step(eta).second;
  const MatrixXd cov = info.ldlt().solve(MatrixXd::Identity(p, p));
  GlmFit fit;
  fit.beta_hat = beta(p - 1);
  fit.se = std::sqrt(cov(p - 1, p - 1));
  fit.iterations = iter;
  if (!std::isfinite(fit.beta_hat) || !std::isfinite(fit.se) ||
      std::abs(fit.beta_hat) > opt.beta_cap || fit.se > opt.se_cap)
    throw Separation("unstable logistic fit (beta=" + std::to_string(fit.beta_hat) +
                     ", se=" + std::to_string(fit.se) + ")");
  return fit;
}

}  // namespace

GlmFit fit_variant_glm(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const MatrixXd>& X,
                       const Eigen::Ref<const VectorXd>& g, OutcomeFamily family,
                       const GlmOptions& options) {
  if (X.rows() != y.size() || g.size() != y.size())
    throw ValidationError("fit_variant_glm: dimension mismatch");
  if (y.size() < X.cols() + 2) throw ValidationError("fit_variant_glm: too few observations");
  if (g.size() == 0 || (g.array() == g(0)).all())
    throw RankDeficient("genotype is monomorphic");
  return family == OutcomeFamily::Continuous ? fit_linear(y, X, g)
                                             : fit_logistic(y, X, g, options);
}

std::vector<VariantSummary> summarize_dataset(const GenotypeDataset& data,
                                              const GlmOptions& options, int threads) {
  validate(data);
  const std::size_t m = data.genotypes.n_variants();
  const auto n = static_cast<std::size_t>(data.outcome.size());
  const auto q = data.covariates.cols();
  std::vector<VariantSummary> out(m);

  parallel_for(m, threads, [&](std::size_t j) {
    VariantSummary& s = out[j];
    s.region_id = data.region_ids[j];
    s.variant_id = data.variant_ids[j];
    const auto col = data.genotypes.column(j);

    std::vector<Index> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (col[i] != GenotypeMatrix::kMissing) rows.push_back(static_cast<Index>(i));
    s.n_used = static_cast<int>(rows.size());

    auto exclude = [&](VariantStatus status, std::string reason) {
      s.status = status;
      s.reason = std::move(reason);
      s.beta_hat = 0.0;
      s.se = 0.0;
    };
    if (rows.size() < static_cast<std::size_t>(q) + 2) {
      exclude(VariantStatus::ExcludedUnstable, "too few complete cases");
      return;
    }

    VectorXd g(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) g(static_cast<Index>(r)) = col[rows[r]];
    if ((g.array() == g(0)).all()) {
      exclude(VariantStatus::ExcludedMonomorphic, "monomorphic genotype");
      return;
    }
    try {
      GlmFit fit;
      if (rows.size() == n) {
        fit = fit_variant_glm(data.outcome, data.covariates, g, data.family, options);
      } else {
        const VectorXd y = data.outcome(rows);
        const MatrixXd X = data.covariates(rows, Eigen::all);
        fit = fit_variant_glm(y, X, g, data.family, options);
      }
      if (!(fit.se > 0.0)) {
        exclude(VariantStatus::ExcludedUnstable, "zero standard error (perfect fit)");
        return;
      }
      s.beta_hat = fit.beta_hat;
      s.se = fit.se;
      s.status = VariantStatus::Ok;
    } catch (const RankDeficient& e) {
      exclude(VariantStatus::ExcludedUnstable, e.what());
    } catch (const NumericalError& e) {
      exclude(VariantStatus::ExcludedUnstable, e.name() + ": " + e.what());
    }
  });
  return out;
}

}  // namespace setscreen
