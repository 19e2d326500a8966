#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "setscreen/glm.hpp"

namespace setscreen {

/// Fixed support points a_1 < ... < a_L of the non-null effect distribution.
class KnotGrid {
 public:
  explicit KnotGrid(std::vector<double> knots);

  /// Evenly spaced knots min, min + step, ..., max. When min is a multiple
  /// of step the knots are generated as integer multiples of step, so a grid
  /// spanning zero contains an exact 0.
  static KnotGrid from_range(double min, double max, double step);

  std::span<const double> knots() const noexcept { return knots_; }
  std::size_t size() const noexcept { return knots_.size(); }
  double operator[](std::size_t i) const { return knots_[i]; }
  bool has_zero() const;
  KnotGrid without_zero() const;

  bool operator==(const KnotGrid&) const = default;

 private:
  std::vector<double> knots_;
};

/// How a KnotGrid was specified; serialized into fitted-model files.
struct GridSpec {
  std::optional<std::vector<double>> explicit_knots;
  double min = -1.0;
  double max = 1.0;
  double step = 0.01;
  bool drop_zero = false;

  KnotGrid build() const;
  /// Canonical text form, e.g. "range(-1,1,0.01)" or "list(-0.5,0.5);drop_zero".
  std::string describe() const;
  static GridSpec parse(const std::string& text);
};

/// Theta = (pi, p_1..p_L): null probability and knot weights.
struct MixtureParams {
  double pi = 0.5;
  std::vector<double> probs;

  static MixtureParams uniform(std::size_t n_knots, double pi = 0.5);
  /// Throws ValidationError unless pi is in [0,1] and probs is a simplex of
  /// length n_knots.
  void validate(std::size_t n_knots) const;
};

/// Summaries (beta_hat, se) of the variants of one region.
struct RegionBlock {
  std::string region_id;
  std::vector<double> beta_hat;
  std::vector<double> se;

  std::size_t size() const noexcept { return beta_hat.size(); }
  void validate() const;
};

/// Groups ok-status summaries into blocks, regions in order of first
/// appearance; excluded variants are dropped.
std::vector<RegionBlock> blocks_from_summaries(std::span<const VariantSummary> summaries);

/// E-step output: xi_r = P(z_r = 1 | D) and gamma[r](k, l) = P(w_rk = l | z_r = 1, D).
struct Responsibilities {
  std::vector<double> xi;
  std::vector<Eigen::MatrixXd> gamma;
};

struct FitTrace {
  std::vector<double> loglik;  // entry 0 is the initial value
  int n_iter = 0;
  bool converged = false;
};

struct EmOptions {
  double tol = 1e-8;
  int max_iter = 10000;
  int starts = 1;  // start 0 is the given init; the rest are seeded jitter
  std::uint64_t seed = 0;
};

struct EmResult {
  MixtureParams params;
  FitTrace trace;
  int best_start = 0;
};

/// Sum over variants of log N(beta_hat; 0, se^2).
double log_f0(const RegionBlock& block);

/// Sum over variants of log sum_l p_l N(beta_hat; a_l, se^2).
double log_f1(const RegionBlock& block, const KnotGrid& grid, std::span<const double> probs);

/// P(z_r = 1 | D) from pi and log f1 - log f0, computed as a logistic of the
/// posterior log-odds. pi = 1 gives exactly 0 and pi = 0 exactly 1.
double posterior_nonnull(double pi, double log_ratio);

double marginal_loglik(std::span<const RegionBlock> blocks, const MixtureParams& params,
                       const KnotGrid& grid);

Responsibilities e_step(std::span<const RegionBlock> blocks, const MixtureParams& params,
                        const KnotGrid& grid);

/// Closed-form maximizer of the expected complete log-likelihood. When the
/// non-null weight sum_r M_r xi_r is zero the knot weights of `previous` are
/// kept.
MixtureParams m_step(std::span<const RegionBlock> blocks, const Responsibilities& resp,
                     const MixtureParams& previous);

/// EM from `init` until the relative log-likelihood change drops below tol or
/// max_iter iterations have run. Throws NoData for an empty block list.
EmResult fit_em(std::span<const RegionBlock> blocks, const KnotGrid& grid,
                const MixtureParams& init, double tol, int max_iter);

/// Multi-start EM; returns the start with the highest final log-likelihood
/// (lowest start index on ties).
EmResult fit_em(std::span<const RegionBlock> blocks, const KnotGrid& grid,
                const MixtureParams& init, const EmOptions& options);

}  // namespace setscreen
