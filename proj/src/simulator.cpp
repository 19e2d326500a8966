#include "setscreen/simulator.hpp"

#include <cmath>
#include <unordered_map>

#include <boost/math/distributions/normal.hpp>

#include "setscreen/baseline.hpp"
#include "setscreen/error.hpp"
#include "setscreen/math.hpp"
#include "setscreen/odp.hpp"
#include "setscreen/parallel.hpp"

namespace setscreen {

Rng make_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5e75c4u};
  return Rng(seq);
}

void SimConfig::validate() const {
  if (n < 1 || regions < 1) throw ValidationError("n and regions must be at least 1");
  if (!(pi >= 0.0 && pi <= 1.0)) throw ValidationError("pi must lie in [0, 1]");
  if (!(std::abs(rho) < 1.0)) throw ValidationError("|rho| must be below 1");
  if (!(maf_min > 0.0 && maf_max < 0.5 && maf_min <= maf_max))
    throw ValidationError("MAF bounds must satisfy 0 < min <= max < 0.5");
  if (effect_mixture.empty()) throw ValidationError("effect mixture needs a component");
  double total = 0.0;
  for (const auto& c : effect_mixture) {
    if (!(c.weight >= 0.0) || !(c.sd >= 0.0))
      throw ValidationError("mixture weights and sds must be nonnegative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("mixture weights must sum to 1");
}

int region_size_from_gamma(double draw) { return 1 + static_cast<int>(std::lround(draw)); }

std::vector<int> gen_region_sizes(std::size_t regions, Rng& rng) {
  std::gamma_distribution<double> gamma(5.0, 1.0);
  std::vector<int> sizes(regions);
  for (auto& m : sizes) m = region_size_from_gamma(gamma(rng));
  return sizes;
}

GenotypeMatrix gen_genotypes(std::span<const double> mafs, std::size_t n, double rho, Rng& rng) {
  const std::size_t m = mafs.size();
  std::vector<double> threshold(m);
  const boost::math::normal_distribution<double> std_normal;
  for (std::size_t j = 0; j < m; ++j) {
    if (!(mafs[j] > 0.0 && mafs[j] < 0.5)) throw ValidationError("MAF must lie in (0, 0.5)");
    threshold[j] = boost::math::quantile(boost::math::complement(std_normal, mafs[j]));
  }
  const double innov = std::sqrt(1.0 - rho * rho);
  std::normal_distribution<double> normal(0.0, 1.0);
  GenotypeMatrix g(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (int copy = 0; copy < 2; ++copy) {
      double z = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double e = normal(rng);
        z = j == 0 ? e : rho * z + innov * e;
        if (z > threshold[j]) ++g(i, j);
      }
    }
  }
  return g;
}

SimTruth gen_effects(std::span<const int> region_sizes, double pi,
                     std::span<const NormalComponent> mixture, Rng& rng) {
  std::vector<double> weights;
  for (const auto& c : mixture) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::bernoulli_distribution is_null(pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimTruth truth;
  for (int size : region_sizes) {
    const bool null = is_null(rng);
    truth.nonnull_region.push_back(null ? 0 : 1);
    for (int k = 0; k < size; ++k) {
      if (null) {
        truth.true_betas.push_back(0.0);
      } else {
        const auto& c = mixture[pick(rng)];
        truth.true_betas.push_back(c.mean + c.sd * normal(rng));
      }
    }
  }
  return truth;
}

Eigen::MatrixXd gen_covariates(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = normal(rng);
    X(i, 2) = coin(rng) ? 1.0 : 0.0;
  }
  return X;
}

Eigen::VectorXd gen_outcome(const Eigen::MatrixXd& covariates, const GenotypeMatrix& genotypes,
                            const SimTruth& truth, double gamma1, double gamma2,
                            OutcomeFamily family, Rng& rng, std::span<const double> offsets) {
  const auto n = covariates.rows();
  if (static_cast<std::size_t>(n) != genotypes.n_individuals() || covariates.cols() != 3 ||
      truth.true_betas.size() != genotypes.n_variants() ||
      (!offsets.empty() && offsets.size() != genotypes.n_variants()))
    throw ValidationError("gen_outcome: dimension mismatch");
  Eigen::VectorXd eta = gamma1 * covariates.col(1) + gamma2 * covariates.col(2);
  double shift = 0.0;
  for (std::size_t j = 0; j < genotypes.n_variants(); ++j) {
    const double b = truth.true_betas[j];
    if (b == 0.0) continue;
    if (!offsets.empty()) shift += b * offsets[j];
    const auto col = genotypes.column(j);
    for (Eigen::Index i = 0; i < n; ++i)
      if (col[static_cast<std::size_t>(i)] > 0) eta(i) += b * col[static_cast<std::size_t>(i)];
  }
  eta.array() -= shift;
  Eigen::VectorXd y(n);
  if (family == OutcomeFamily::Continuous) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = eta(i) + noise(rng);
  } else {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = unif(rng) < math::logistic(eta(i)) ? 1.0 : 0.0;
  }
  return y;
}

std::string region_name(std::size_t r) { return "R" + std::to_string(r + 1); }
std::string variant_name(std::size_t j) { return "V" + std::to_string(j + 1); }

SimulatedStudy simulate_study(const SimConfig& config, std::uint64_t replicate) {
  config.validate();
  Rng rng = make_rng(config.seed, replicate);
  SimulatedStudy s;
  s.region_sizes = gen_region_sizes(config.regions, rng);
  std::size_t m = 0;
  for (int size : s.region_sizes) m += static_cast<std::size_t>(size);

  std::uniform_real_distribution<double> maf(config.maf_min, config.maf_max);
  s.mafs.resize(m);
  for (auto& f : s.mafs) f = config.maf_min == config.maf_max ? config.maf_min : maf(rng);

  s.truth = gen_effects(s.region_sizes, config.pi, config.effect_mixture, rng);
  s.data.family = config.family;
  s.data.covariates = gen_covariates(config.n, rng);
  s.data.covariate_names = {"intercept", "X1", "X2"};
  s.data.genotypes = gen_genotypes(s.mafs, config.n, config.rho, rng);
  std::vector<double> offsets;
  if (config.center_genetic_score)
    for (double f : s.mafs) offsets.push_back(2.0 * f);
  s.data.outcome = gen_outcome(s.data.covariates, s.data.genotypes, s.truth, config.gamma1,
                               config.gamma2, config.family, rng, offsets);

  for (std::size_t r = 0, j = 0; r < s.region_sizes.size(); ++r) {
    s.region_names.push_back(region_name(r));
    for (int k = 0; k < s.region_sizes[r]; ++k, ++j) {
      s.data.variant_ids.push_back(variant_name(j));
      s.data.region_ids.push_back(s.region_names.back());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

void StudyConfig::validate() const {
  sim.validate();
  if (replicates < 1) throw ValidationError("replicates must be at least 1");
  if (fdr_levels.empty()) throw ValidationError("need at least one FDR level");
  for (double a : fdr_levels)
    if (!(a >= 0.0 && a < 1.0)) throw ValidationError("FDR levels must lie in [0, 1)");
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [0, 1)");
  (void)grid.build();
}

ReplicateResult score_study(const StudyConfig& config, const SimulatedStudy& study,
                            std::span<const VariantSummary> summaries) {
  const KnotGrid grid = config.grid.build();
  const auto blocks = blocks_from_summaries(summaries);

  std::unordered_map<std::string, bool> nonnull;
  for (std::size_t r = 0; r < study.region_names.size(); ++r)
    nonnull[study.region_names[r]] = study.truth.nonnull_region[r] != 0;

  ReplicateResult res;
  res.n_variants = summaries.size();
  for (auto f : study.truth.nonnull_region) res.n_nonnull_regions += f;

  const auto fit = fit_em(blocks, grid, MixtureParams::uniform(grid.size(), 0.5), config.em);
  res.pi_hat = fit.params.pi;
  res.em_iterations = fit.trace.n_iter;

  const auto screen = screen_regions(blocks, fit.params, grid, config.fdr_levels.front());
  for (double level : config.fdr_levels) {
    DetectionCount c{kMethodOdp, level, screen.selected_at(level), 0};
    for (std::size_t i = 0; i < c.detections; ++i) c.true_positives += nonnull.at(screen.region_ids[i]);
    res.counts.push_back(c);
  }

  const auto base = baseline_records(blocks, config.lambda);
  for (double level : config.fdr_levels) {
    DetectionCount c{kMethodBaseline, level, 0, 0};
    for (const auto& rec : base) {
      if (level > 0.0 && rec.q <= level) {
        ++c.detections;
        c.true_positives += nonnull.at(rec.region_id);
      }
    }
    res.counts.push_back(c);
  }
  return res;
}

ReplicateResult run_replicate(const StudyConfig& config, std::uint64_t replicate,
                              int glm_threads) {
  config.validate();
  try {
    const auto study = simulate_study(config.sim, replicate);
    const auto summaries = summarize_dataset(study.data, config.glm, glm_threads);
    auto res = score_study(config, study, summaries);
    res.replicate = replicate;
    return res;
  } catch (const Error& e) {
    throw Error(e.error_class(), e.name(),
                "replicate " + std::to_string(replicate) + ": " + e.what());
  }
}

std::vector<ReplicateResult> run_replicates(const StudyConfig& config, int threads) {
  config.validate();
  std::vector<ReplicateResult> out(config.replicates);
  parallel_for(config.replicates, threads,
               [&](std::size_t r) { out[r] = run_replicate(config, r, 1); });
  return out;
}

std::vector<StudyRow> aggregate(const StudyConfig& config,
                                std::span<const ReplicateResult> results) {
  std::vector<StudyRow> rows;
  if (results.empty()) return rows;
  const std::size_t n_counts = results.front().counts.size();
  const auto R = static_cast<double>(results.size());
  for (std::size_t c = 0; c < n_counts; ++c) {
    StudyRow row;
    row.family = config.sim.family;
    row.pi = config.sim.pi;
    row.method = results.front().counts[c].method;
    row.fdr_level = results.front().counts[c].fdr_level;
    row.n_replicates = results.size();
    for (const auto& rep : results) {
      const auto& dc = rep.counts[c];
      row.mean_detections += static_cast<double>(dc.detections);
      row.mean_true_positives += static_cast<double>(dc.true_positives);
      if (dc.detections > 0)
        row.realized_fdr += static_cast<double>(dc.detections - dc.true_positives) /
                            static_cast<double>(dc.detections);
    }
    row.mean_detections /= R;
    row.mean_true_positives /= R;
    row.realized_fdr /= R;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace setscreen
