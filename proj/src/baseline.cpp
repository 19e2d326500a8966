#include "setscreen/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "setscreen/error.hpp"
#include "setscreen/math.hpp"

namespace setscreen {

double region_pvalue_stouffer(const RegionBlock& block) {
  block.validate();
  double zsum = 0.0;
  for (std::size_t k = 0; k < block.size(); ++k) zsum += block.beta_hat[k] / block.se[k];
  const double z = zsum / std::sqrt(static_cast<double>(block.size()));
  return std::min(1.0, 2.0 * math::normal_sf(std::abs(z)));
}

namespace {

void check_pvalues(std::span<const double> pvals) {
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
}

}  // namespace

double storey_pi0(std::span<const double> pvals, double lambda, bool* degenerate) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [0, 1)");
  check_pvalues(pvals);
  if (degenerate) *degenerate = false;
  const auto above = std::count_if(pvals.begin(), pvals.end(), [&](double p) { return p > lambda; });
  if (above == 0) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  const double pi0 =
      static_cast<double>(above) / ((1.0 - lambda) * static_cast<double>(pvals.size()));
  return std::min(pi0, 1.0);
}

std::vector<double> qvalues_with_pi0(std::span<const double> pvals, double pi0) {
  check_pvalues(pvals);
  if (!(pi0 > 0.0 && pi0 <= 1.0)) throw ValidationError("pi0 must lie in (0, 1]");
  const std::size_t m = pvals.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<double> q(m);
  double running = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    const double v = pi0 * static_cast<double>(m) * pvals[order[i]] / static_cast<double>(i + 1);
    running = std::min(running, v);
    q[order[i]] = running;
  }
  return q;
}

QvalueResult storey_qvalues(std::span<const double> pvals, double lambda) {
  QvalueResult res;
  res.pi0 = storey_pi0(pvals, lambda, &res.degenerate_lambda);
  if (res.degenerate_lambda && !pvals.empty())
    std::cerr << "warning: no p-value exceeds lambda = " << lambda << "; using pi0 = 1\n";
  res.q = qvalues_with_pi0(pvals, res.pi0);
  return res;
}

std::vector<double> bh_adjust(std::span<const double> pvals) { return qvalues_with_pi0(pvals, 1.0); }

std::vector<PvalueRecord> baseline_records(std::span<const RegionBlock> blocks, double lambda) {
  std::vector<PvalueRecord> out(blocks.size());
  std::vector<double> p(blocks.size());
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    out[r].region_id = blocks[r].region_id;
    p[r] = out[r].p = region_pvalue_stouffer(blocks[r]);
  }
  const auto q = storey_qvalues(p, lambda).q;
  for (std::size_t r = 0; r < blocks.size(); ++r) out[r].q = q[r];
  return out;
}

}  // namespace setscreen
