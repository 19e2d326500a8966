#include "setscreen/posterior.hpp"

#include <cmath>
#include <map>

#include "setscreen/error.hpp"
#include "setscreen/math.hpp"

namespace setscreen {

double StepCdf::operator()(double t) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < jump_points.size() && jump_points[i] <= t; ++i) acc += masses[i];
  return std::min(acc, 1.0);
}

double StepCdf::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) m += masses[i] * jump_points[i];
  return m;
}

double StepCdf::sd() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double d = jump_points[i] - m;
    v += masses[i] * d * d;
  }
  return std::sqrt(std::max(v, 0.0));
}

double StepCdf::quantile(double level) const {
  if (jump_points.empty()) throw ValidationError("quantile of an empty distribution");
  double acc = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    acc += masses[i];
    if (acc >= level && masses[i] > 0.0) return jump_points[i];
  }
  // Rounding left the total a hair below the level: take the last atom.
  for (std::size_t i = masses.size(); i-- > 0;)
    if (masses[i] > 0.0) return jump_points[i];
  return jump_points.back();
}

double nonnull_prob(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid) {
  if (params.pi >= 1.0) return 0.0;
  return posterior_nonnull(params.pi, log_f1(block, grid, params.probs) - log_f0(block));
}

Eigen::MatrixXd knot_posteriors(const RegionBlock& block, const MixtureParams& params,
                                const KnotGrid& grid) {
  const std::size_t L = grid.size();
  Eigen::MatrixXd gam(static_cast<Eigen::Index>(block.size()), static_cast<Eigen::Index>(L));
  std::vector<double> logw(L);
  for (std::size_t k = 0; k < block.size(); ++k) {
    for (std::size_t l = 0; l < L; ++l)
      logw[l] = params.probs[l] > 0.0 ? std::log(params.probs[l]) +
                                            math::log_normal_pdf(block.beta_hat[k], grid[l],
                                                                 block.se[k])
                                      : math::kNegInf;
    const double lse = math::logsumexp(logw);
    if (lse == math::kNegInf) throw DegenerateWeights("all knot densities vanish");
    for (std::size_t l = 0; l < L; ++l)
      gam(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
          logw[l] == math::kNegInf ? 0.0 : std::exp(logw[l] - lse);
  }
  return gam;
}

double variant_posterior_mean(const RegionBlock& block, std::size_t k,
                              const MixtureParams& params, const KnotGrid& grid) {
  if (k >= block.size()) throw ValidationError("variant index out of range");
  const double xi = nonnull_prob(block, params, grid);
  if (xi == 0.0) return 0.0;
  const Eigen::MatrixXd gam = knot_posteriors(block, params, grid);
  double m = 0.0;
  for (std::size_t l = 0; l < grid.size(); ++l)
    m += grid[l] * gam(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
  return xi * m;
}

StepCdf effect_cdf(double xi, const Eigen::MatrixXd& gamma, const KnotGrid& grid) {
  const std::size_t L = grid.size();
  const auto M = static_cast<double>(gamma.rows());
  StepCdf cdf;
  bool placed_null = false;
  for (std::size_t l = 0; l < L; ++l) {
    const double a = grid[l];
    if (!placed_null && a > 0.0) {
      cdf.jump_points.push_back(0.0);
      cdf.masses.push_back(1.0 - xi);
      placed_null = true;
    }
    double col = 0.0;
    for (Eigen::Index k = 0; k < gamma.rows(); ++k) col += gamma(k, static_cast<Eigen::Index>(l));
    const double mass = xi * col / M;
    if (a == 0.0) {
      cdf.jump_points.push_back(0.0);
      cdf.masses.push_back(1.0 - xi + mass);
      placed_null = true;
    } else {
      cdf.jump_points.push_back(a);
      cdf.masses.push_back(mass);
    }
  }
  if (!placed_null) {
    cdf.jump_points.push_back(0.0);
    cdf.masses.push_back(1.0 - xi);
  }
  return cdf;
}

StepCdf effect_cdf(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid) {
  const double xi = nonnull_prob(block, params, grid);
  if (xi == 0.0) {
    const Eigen::MatrixXd zero =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(block.size()),
                              static_cast<Eigen::Index>(grid.size()));
    return effect_cdf(0.0, zero, grid);
  }
  return effect_cdf(xi, knot_posteriors(block, params, grid), grid);
}

RegionEffectSummary region_summary(const StepCdf& cdf, double nonnull_prob,
                                   const std::string& region_id, int n_variants) {
  RegionEffectSummary s;
  s.region_id = region_id;
  s.n_variants = n_variants;
  s.nonnull_prob = nonnull_prob;
  s.mean = cdf.mean();
  s.sd = cdf.sd();
  for (std::size_t i = 0; i < kSummaryLevels.size(); ++i)
    s.quantiles[i] = cdf.quantile(kSummaryLevels[i]);
  return s;
}

NonnullHistogram nonnull_histogram(std::span<const RegionBlock> blocks,
                                   const MixtureParams& params, const KnotGrid& grid,
                                   double bin_width) {
  if (!(bin_width > 0.0)) throw ValidationError("histogram bin width must be positive");
  params.validate(grid.size());
  NonnullHistogram out;
  out.knots.assign(grid.knots().begin(), grid.knots().end());
  out.masses = params.probs;

  std::map<long long, std::size_t> counts;
  for (const auto& b : blocks)
    for (std::size_t k = 0; k < b.size(); ++k)
      ++counts[static_cast<long long>(std::floor(b.beta_hat[k] / b.se[k] / bin_width))];
  if (!counts.empty()) {
    for (long long i = counts.begin()->first; i <= counts.rbegin()->first; ++i) {
      const auto it = counts.find(i);
      out.z_bins.push_back({static_cast<double>(i) * bin_width,
                            static_cast<double>(i + 1) * bin_width,
                            it == counts.end() ? 0 : it->second});
    }
  }
  return out;
}

}  // namespace setscreen
