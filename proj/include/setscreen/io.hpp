#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "setscreen/baseline.hpp"
#include "setscreen/glm.hpp"
#include "setscreen/mixture.hpp"
#include "setscreen/odp.hpp"
#include "setscreen/posterior.hpp"
#include "setscreen/simulator.hpp"

namespace setscreen::io {

namespace fs = std::filesystem;

/// %.17g: exact round trip for doubles.
std::string fmt_exact(double x);
/// %.6g: display precision for reports.
std::string fmt_short(double x);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string stable_hash(std::string_view text);
std::string file_hash(const fs::path& path);

/// Tab-separated table. Leading lines starting with '#' are kept verbatim as
/// comments; the first other line is the header.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws ValidationError
};

Table read_table(const fs::path& path);
std::string format_table(const Table& table);
void write_text(const fs::path& path, const std::string& text);
void write_table(const fs::path& path, const Table& table);

// ---------------------------------------------------------------------------
// Study inputs

/// Phenotype TSV: column "outcome", then covariate columns; the first
/// covariate column must be "intercept" and hold ones.
struct Phenotypes {
  Eigen::VectorXd outcome;
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;
};

Phenotypes read_phenotypes(const fs::path& path);

/// Genotype TSV: header of variant ids, one row per individual, entries
/// 0/1/2 or NA.
struct Genotypes {
  std::vector<std::string> variant_ids;
  GenotypeMatrix matrix;
};

Genotypes read_genotypes(const fs::path& path);

/// Region map TSV with header "variant_id<TAB>region_id".
std::vector<std::pair<std::string, std::string>> read_region_map(const fs::path& path);

GenotypeDataset load_dataset(const fs::path& phenotypes, const fs::path& genotypes,
                             const fs::path& region_map, OutcomeFamily family);

struct DatasetPaths {
  fs::path phenotypes;
  fs::path genotypes;
  fs::path region_map;
};

DatasetPaths dataset_paths(const fs::path& dir);
void write_dataset(const DatasetPaths& paths, const GenotypeDataset& data,
                   const std::string& comment);
/// Truth TSV: region_id, nonnull, n_variants.
void write_truth(const fs::path& path, const SimulatedStudy& study, const std::string& comment);

// ---------------------------------------------------------------------------
// Variant summaries

Table summaries_table(std::span<const VariantSummary> summaries, const std::string& comment);
std::vector<VariantSummary> parse_summaries(const Table& table);
std::vector<VariantSummary> read_summaries(const fs::path& path);

// ---------------------------------------------------------------------------
// Fitted model

struct FittedModel {
  MixtureParams params;
  GridSpec grid_spec;
  std::vector<double> knots;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::string config_hash;
  std::string data_hash;  // hash of the summaries the model was fit to

  KnotGrid grid() const { return KnotGrid(knots); }
};

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);
FittedModel read_model(const fs::path& path);

// ---------------------------------------------------------------------------
// Reports

/// rank, region_id, n_variants, log_odp, nonnull_prob, model_qvalue and one
/// selected_<level> column per FDR level.
Table screening_table(const ScreeningResult& result, std::span<const double> levels,
                      const std::string& comment);

/// region_id, p, q and one selected_<level> column per FDR level.
Table baseline_table(std::span<const PvalueRecord> records, std::span<const double> levels,
                     const std::string& comment);

Table region_report_table(std::span<const RegionEffectSummary> rows, const std::string& comment);
Table cdf_table(std::span<const std::string> region_ids, std::span<const StepCdf> cdfs,
                const std::string& comment);
/// Two sections stacked with a "section" column: "zscore" rows use
/// (bin_left, bin_right, count); "knot" rows use (knot, mass).
Table histogram_table(const NonnullHistogram& hist, const std::string& comment);

Table study_table(std::span<const StudyRow> rows, const std::string& comment);
Table replicate_table(std::span<const ReplicateResult> results, const std::string& comment);

std::string level_column(double level);

}  // namespace setscreen::io
