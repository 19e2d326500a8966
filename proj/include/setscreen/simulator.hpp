#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "setscreen/glm.hpp"
#include "setscreen/mixture.hpp"

namespace setscreen {

using Rng = std::mt19937_64;

/// Independent stream for replicate `index` of a study seeded with `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t index);

struct NormalComponent {
  double weight = 1.0;
  double mean = 0.0;
  double sd = 1.0;
};

struct SimConfig {
  std::size_t n = 2000;
  std::size_t regions = 500;
  double pi = 0.7;
  double rho = 0.1;
  double maf_min = 0.005;
  double maf_max = 0.01;
  std::vector<NormalComponent> effect_mixture{{0.9, 0.5, 0.2}, {0.1, -0.3, 0.1}};
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  /// Use beta * (g - 2 maf) in the linear predictor so the genetic score has
  /// mean zero. Without it the binary outcome is almost always 1.
  bool center_genetic_score = true;
  OutcomeFamily family = OutcomeFamily::Continuous;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimTruth {
  std::vector<std::uint8_t> nonnull_region;  // one flag per region
  std::vector<double> true_betas;           // one per variant, regions concatenated
};

/// 1 + round(draw): region size from a Gamma(5, 1) draw.
int region_size_from_gamma(double draw);

std::vector<int> gen_region_sizes(std::size_t regions, Rng& rng);

/// Genotype = a1 + a2 where each a is a dichotomized AR(1) Gaussian vector
/// (latent correlation rho^|i-j|) thresholded at its MAF's upper quantile;
/// both vectors are redrawn for every individual.
GenotypeMatrix gen_genotypes(std::span<const double> mafs, std::size_t n, double rho, Rng& rng);

/// Null regions (probability pi) get all-zero effects; otherwise each effect
/// is drawn independently from the normal mixture.
SimTruth gen_effects(std::span<const int> region_sizes, double pi,
                     std::span<const NormalComponent> mixture, Rng& rng);

/// n x 3 matrix [1, X1 ~ N(0,1), X2 ~ Bernoulli(0.5)].
Eigen::MatrixXd gen_covariates(std::size_t n, Rng& rng);

/// eta = gamma1 X1 + gamma2 X2 + sum beta (g - offset); Gaussian noise or a
/// Bernoulli draw on the logistic scale. `covariates` is the matrix of
/// gen_covariates; `offsets` is empty (no centering) or one value per variant.
Eigen::VectorXd gen_outcome(const Eigen::MatrixXd& covariates, const GenotypeMatrix& genotypes,
                            const SimTruth& truth, double gamma1, double gamma2,
                            OutcomeFamily family, Rng& rng,
                            std::span<const double> offsets = {});

struct SimulatedStudy {
  GenotypeDataset data;
  SimTruth truth;
  std::vector<int> region_sizes;
  std::vector<std::string> region_names;
  std::vector<double> mafs;
};

std::string region_name(std::size_t r);
std::string variant_name(std::size_t j);

SimulatedStudy simulate_study(const SimConfig& config, std::uint64_t replicate = 0);

// ---------------------------------------------------------------------------
// Replicate study

struct StudyConfig {
  SimConfig sim;
  std::size_t replicates = 50;
  std::vector<double> fdr_levels{0.05, 0.10, 0.15, 0.20};
  GridSpec grid;  // default range(-1, 1, 0.01)
  EmOptions em;
  GlmOptions glm;
  double lambda = 0.5;

  void validate() const;
};

inline constexpr const char* kMethodOdp = "odp";
inline constexpr const char* kMethodBaseline = "stouffer_qvalue";

struct DetectionCount {
  std::string method;
  double fdr_level = 0.0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
};

struct ReplicateResult {
  std::uint64_t replicate = 0;
  std::vector<DetectionCount> counts;  // methods x levels
  double pi_hat = 0.0;
  int em_iterations = 0;
  std::size_t n_variants = 0;
  std::size_t n_nonnull_regions = 0;
};

/// Simulate -> summarize -> fit -> ODP screen and baseline, scored against
/// the truth. Deterministic in (config, replicate).
ReplicateResult run_replicate(const StudyConfig& config, std::uint64_t replicate,
                              int glm_threads = 1);

/// Same pipeline applied to an existing study and its summaries.
ReplicateResult score_study(const StudyConfig& config, const SimulatedStudy& study,
                            std::span<const VariantSummary> summaries);

struct StudyRow {
  OutcomeFamily family = OutcomeFamily::Continuous;
  double pi = 0.0;
  std::string method;
  double fdr_level = 0.0;
  double mean_detections = 0.0;
  double mean_true_positives = 0.0;
  double realized_fdr = 0.0;  // mean per-replicate false discovery proportion
  std::size_t n_replicates = 0;
};

std::vector<ReplicateResult> run_replicates(const StudyConfig& config, int threads = 1);
std::vector<StudyRow> aggregate(const StudyConfig& config,
                                std::span<const ReplicateResult> results);

}  // namespace setscreen
