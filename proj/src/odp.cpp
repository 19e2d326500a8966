#include "setscreen/odp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "setscreen/error.hpp"

namespace setscreen {

double odp_statistic(const RegionBlock& block, const MixtureParams& params, const KnotGrid& grid) {
  return log_f1(block, grid, params.probs) - log_f0(block);
}

std::vector<double> nested_fdr(std::span<const double> xi_in_rank_order) {
  std::vector<double> out(xi_in_rank_order.size());
  double null_sum = 0.0;
  for (std::size_t m = 0; m < out.size(); ++m) {
    null_sum += 1.0 - xi_in_rank_order[m];
    out[m] = std::clamp(null_sum / static_cast<double>(m + 1), 0.0, 1.0);
  }
  return out;
}

std::size_t select_rejections(std::span<const double> fdr, std::span<const double> log_odp,
                              double alpha) {
  if (fdr.size() != log_odp.size())
    throw ValidationError("select_rejections: FDR and statistic lengths differ");
  if (!(alpha > 0.0)) return 0;
  std::size_t best = 0;
  for (std::size_t m = 1; m <= fdr.size(); ++m) {
    const bool closes_group = m == fdr.size() || log_odp[m] != log_odp[m - 1];
    if (closes_group && fdr[m - 1] <= alpha) best = m;
  }
  return best;
}

std::size_t ScreeningResult::selected_at(double level) const {
  return select_rejections(nested_fdr, log_odp, level);
}

ScreeningResult screen_regions(std::span<const RegionBlock> blocks, const MixtureParams& params,
                               const KnotGrid& grid, double alpha) {
  params.validate(grid.size());
  if (!(params.pi > 0.0 && params.pi < 1.0))
    std::cerr << "warning: fitted pi = " << params.pi
              << " lies on the boundary; the ODP ranking is degenerate\n";

  const std::size_t R = blocks.size();
  std::vector<double> stat(R);
  for (std::size_t r = 0; r < R; ++r) stat[r] = odp_statistic(blocks[r], params, grid);

  ScreeningResult res;
  res.alpha = alpha;
  res.ordering.resize(R);
  std::iota(res.ordering.begin(), res.ordering.end(), std::size_t{0});
  std::sort(res.ordering.begin(), res.ordering.end(), [&](std::size_t a, std::size_t b) {
    if (stat[a] != stat[b]) return stat[a] > stat[b];
    return blocks[a].region_id < blocks[b].region_id;
  });

  for (std::size_t idx : res.ordering) {
    res.region_ids.push_back(blocks[idx].region_id);
    res.n_variants.push_back(blocks[idx].size());
    res.log_odp.push_back(stat[idx]);
    res.xi.push_back(posterior_nonnull(params.pi, stat[idx]));
  }
  res.nested_fdr = nested_fdr(res.xi);

  // q at rank m: the smallest FDR over tie-group ends at or below m.
  res.model_qvalue.assign(R, 1.0);
  double running = 1.0;
  for (std::size_t m = R; m-- > 0;) {
    const bool closes_group = m + 1 == R || res.log_odp[m + 1] != res.log_odp[m];
    if (closes_group) running = std::min(running, res.nested_fdr[m]);
    res.model_qvalue[m] = running;
  }
  res.selected_count = select_rejections(res.nested_fdr, res.log_odp, alpha);
  return res;
}

}  // namespace setscreen
