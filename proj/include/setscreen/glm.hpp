#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace setscreen {

enum class OutcomeFamily {
  Continuous,  // identity link, Gaussian errors
  Binary,      // logit link, Bernoulli outcome
};

std::string_view to_string(OutcomeFamily family);
OutcomeFamily parse_family(std::string_view text);

/// Individuals x variants minor-allele counts, stored variant-major so each
/// variant's column is contiguous. Missing calls are kMissing.
class GenotypeMatrix {
 public:
  static constexpr std::int8_t kMissing = -1;

  GenotypeMatrix() = default;
  GenotypeMatrix(std::size_t n_individuals, std::size_t n_variants)
      : n_(n_individuals), m_(n_variants), data_(n_individuals * n_variants, 0) {}

  std::size_t n_individuals() const noexcept { return n_; }
  std::size_t n_variants() const noexcept { return m_; }

  std::int8_t operator()(std::size_t i, std::size_t j) const { return data_[j * n_ + i]; }
  std::int8_t& operator()(std::size_t i, std::size_t j) { return data_[j * n_ + i]; }

  std::span<const std::int8_t> column(std::size_t j) const {
    return {data_.data() + j * n_, n_};
  }
  std::span<std::int8_t> column(std::size_t j) { return {data_.data() + j * n_, n_}; }

  bool operator==(const GenotypeMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::int8_t> data_;
};

/// Outcome, covariates (column 0 must be the intercept), genotypes and the
/// variant-to-region assignment for one study.
struct GenotypeDataset {
  Eigen::VectorXd outcome;
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;
  GenotypeMatrix genotypes;
  std::vector<std::string> variant_ids;
  std::vector<std::string> region_ids;  // region of each variant, parallel to variant_ids
  OutcomeFamily family = OutcomeFamily::Continuous;
};

/// Throws ValidationError describing the first violated invariant.
void validate(const GenotypeDataset& data);

enum class VariantStatus { Ok, ExcludedMonomorphic, ExcludedUnstable };

std::string_view to_string(VariantStatus status);
VariantStatus parse_status(std::string_view text);

struct VariantSummary {
  std::string region_id;
  std::string variant_id;
  double beta_hat = 0.0;
  double se = 0.0;
  int n_used = 0;
  VariantStatus status = VariantStatus::Ok;
  std::string reason;  // empty when status is Ok; not serialized

  bool operator==(const VariantSummary&) const = default;
};

struct GlmOptions {
  int max_iter = 100;
  double tol = 1e-10;  // relative deviance change
  int max_halvings = 10;
  double se_cap = 10.0;
  double beta_cap = 15.0;
};

struct GlmFit {
  double beta_hat = 0.0;
  double se = 0.0;
  /// Gaussian family only: maximum-likelihood residual variance RSS / n.
  double residual_variance = 0.0;
  int iterations = 0;
};

/// Fits psi(E[y]) = X alpha + beta g and returns the genotype coefficient with
/// its inverse-information standard error. X must carry its own intercept.
/// Throws RankDeficient, NonConvergence or Separation.
GlmFit fit_variant_glm(const Eigen::Ref<const Eigen::VectorXd>& y,
                       const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::VectorXd>& g, OutcomeFamily family,
                       const GlmOptions& options = {});

/// One summary per variant in input order. Variants with missing calls are
/// fit on their complete cases; per-variant failures become statuses.
std::vector<VariantSummary> summarize_dataset(const GenotypeDataset& data,
                                              const GlmOptions& options = {}, int threads = 1);

}  // namespace setscreen
