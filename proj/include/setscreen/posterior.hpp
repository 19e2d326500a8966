#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "setscreen/mixture.hpp"

namespace setscreen {

/// Discrete distribution function with jumps at increasing points.
struct StepCdf {
  std::vector<double> jump_points;
  std::vector<double> masses;

  /// H(t) = total mass at jump points <= t.
  double operator()(double t) const;
  double mean() const;
  /// Population standard deviation of the discrete distribution.
  double sd() const;
  /// inf{t : H(t) >= level}.
  double quantile(double level) const;
};

inline constexpr std::array<double, 5> kSummaryLevels{0.05, 0.25, 0.50, 0.75, 0.95};

struct RegionEffectSummary {
  std::string region_id;
  int n_variants = 0;
  double nonnull_prob = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  std::array<double, 5> quantiles{};  // at kSummaryLevels
};

/// P(z_r = 1 | D; Theta).
double nonnull_prob(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid);

/// gamma_rkl for every variant of the block (rows) and knot (columns).
Eigen::MatrixXd knot_posteriors(const RegionBlock& block, const MixtureParams& params,
                                const KnotGrid& grid);

/// E[beta_rk | D; Theta] = xi_r * sum_l a_l gamma_rkl. These are heavily
/// shrunken for rare variants; prefer the region-level distribution.
double variant_posterior_mean(const RegionBlock& block, std::size_t k,
                              const MixtureParams& params, const KnotGrid& grid);

/// Posterior-expected empirical distribution of the region's true effects:
/// an atom P(z_r = 0 | D) at zero plus xi_r / M_r * sum_k gamma_rkl at a_l.
StepCdf effect_cdf(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid);

/// Same as effect_cdf but from precomputed responsibilities.
StepCdf effect_cdf(double xi, const Eigen::MatrixXd& gamma, const KnotGrid& grid);

RegionEffectSummary region_summary(const StepCdf& cdf, double nonnull_prob,
                                   const std::string& region_id, int n_variants);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
};

struct NonnullHistogram {
  std::vector<double> knots;
  std::vector<double> masses;  // fitted knot weights, a simplex
  std::vector<HistogramBin> z_bins;
};

/// Fitted non-null knot weights plus a histogram of all z = beta_hat / se
/// with bins of width bin_width aligned to multiples of it.
NonnullHistogram nonnull_histogram(std::span<const RegionBlock> blocks,
                                   const MixtureParams& params, const KnotGrid& grid,
                                   double bin_width = 0.5);

}  // namespace setscreen
