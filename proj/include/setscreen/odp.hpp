#pragma once

#include <span>
#include <string>
#include <vector>

#include "setscreen/mixture.hpp"

namespace setscreen {

/// Regions ranked by the model-based optimal discovery statistic with the
/// model-based FDR of each nested top-m set. All vectors except `ordering`
/// are in rank order.
struct ScreeningResult {
  std::vector<std::size_t> ordering;  // block indices, best first
  std::vector<std::string> region_ids;
  std::vector<std::size_t> n_variants;
  std::vector<double> log_odp;
  std::vector<double> xi;
  std::vector<double> nested_fdr;    // FDR(m), m = 1..R
  std::vector<double> model_qvalue;  // smallest nested FDR at which the region is admitted
  std::size_t selected_count = 0;
  double alpha = 0.0;

  /// Selection at another level without re-ranking.
  std::size_t selected_at(double level) const;
};

/// log ODP_r = log f1(beta_hat_r; P) - log f0(beta_hat_r).
double odp_statistic(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid);

/// Running mean of the posterior null probabilities 1 - xi along the ranking.
std::vector<double> nested_fdr(std::span<const double> xi_in_rank_order);

/// Largest m such that FDR(m) <= alpha and m closes a group of tied log ODP
/// values; 0 if none (and always 0 for alpha <= 0).
std::size_t select_rejections(std::span<const double> nested_fdr,
                              std::span<const double> log_odp_in_rank_order, double alpha);

/// Ranks by log ODP descending, ties by region id ascending.
ScreeningResult screen_regions(std::span<const RegionBlock> blocks, const MixtureParams& params,
                               const KnotGrid& grid, double alpha);

}  // namespace setscreen
