#pragma once

#include <span>
#include <string>
#include <vector>

#include "setscreen/mixture.hpp"

namespace setscreen {

/// Comparator pipeline: a Stouffer combination p-value per region followed by
/// Storey q-values.
struct PvalueRecord {
  std::string region_id;
  double p = 1.0;
  double q = 1.0;
};

/// Two-sided p-value of Z = sum_k (beta_hat_k / se_k) / sqrt(M_r).
double region_pvalue_stouffer(const RegionBlock& block);

struct QvalueResult {
  std::vector<double> q;  // aligned with the input
  double pi0 = 1.0;
  bool degenerate_lambda = false;  // no p-value exceeded lambda; pi0 fell back to 1
};

/// pi0 = #{p > lambda} / ((1 - lambda) m), capped at 1. Sets *degenerate and
/// returns 1 when no p-value exceeds lambda.
double storey_pi0(std::span<const double> pvals, double lambda, bool* degenerate = nullptr);

/// Step-up q-values pi0 * m * p_(i) / i with a running minimum from the
/// largest p-value down.
std::vector<double> qvalues_with_pi0(std::span<const double> pvals, double pi0);

QvalueResult storey_qvalues(std::span<const double> pvals, double lambda = 0.5);

/// Benjamini-Hochberg adjusted p-values (pi0 = 1).
std::vector<double> bh_adjust(std::span<const double> pvals);

std::vector<PvalueRecord> baseline_records(std::span<const RegionBlock> blocks,
                                           double lambda = 0.5);

}  // namespace setscreen
