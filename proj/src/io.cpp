#include "setscreen/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "setscreen/error.hpp"

namespace setscreen::io {

namespace {

std::string fmt(const char* spec, double x) {
  if (x == 0.0) x = 0.0;  // no "-0"
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double parse_double(const std::string& text, const std::string& context) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end)
    throw ValidationError(context + ": '" + text + "' is not a number");
  return v;
}

long long parse_int(const std::string& text, const std::string& context) {
  long long v = 0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end)
    throw ValidationError(context + ": '" + text + "' is not an integer");
  return v;
}

std::string comment_line(const std::string& comment) { return "# " + comment; }

Table with_comment(const std::string& comment, std::vector<std::string> header) {
  Table t;
  if (!comment.empty()) t.comments.push_back(comment_line(comment));
  t.header = std::move(header);
  return t;
}

}  // namespace

std::string fmt_exact(double x) { return fmt("%.17g", x); }
std::string fmt_short(double x) { return fmt("%.6g", x); }

std::string stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return stable_hash(ss.str());
}

// ---------------------------------------------------------------------------

std::size_t Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw ValidationError("missing column '" + std::string(name) + "'");
}

Table read_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.starts_with("#")) {
        t.comments.push_back(line);
        continue;
      }
      if (line.empty()) continue;
      t.header = split_tabs(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != t.header.size())
      throw ValidationError(where(path, lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (in.bad()) throw IOError("read error on " + path.string());
  if (!have_header) throw ValidationError(path.string() + ": no header line", "NoData");
  return t;
}

std::string format_table(const Table& table) {
  std::string out;
  for (const auto& c : table.comments) out += c + '\n';
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += '\t';
      out += fields[i];
    }
    out += '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IOError("write failed on " + path.string());
}

void write_table(const fs::path& path, const Table& table) {
  write_text(path, format_table(table));
}

// ---------------------------------------------------------------------------

Phenotypes read_phenotypes(const fs::path& path) {
  const Table t = read_table(path);
  if (t.header.size() < 2 || t.header[0] != "outcome")
    throw ValidationError(path.string() +
                          ": header must be 'outcome' followed by covariate columns");
  Phenotypes p;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto q = static_cast<Eigen::Index>(t.header.size() - 1);
  p.covariate_names.assign(t.header.begin() + 1, t.header.end());
  p.outcome.resize(n);
  p.covariates.resize(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string ctx = path.string() + " row " + std::to_string(i + 1) + ", column '" +
                              t.header[c] + "'";
      const double v = parse_double(row[c], ctx);
      if (!std::isfinite(v)) throw ValidationError(ctx + ": value must be finite");
      if (c == 0)
        p.outcome(i) = v;
      else
        p.covariates(i, static_cast<Eigen::Index>(c - 1)) = v;
    }
  }
  return p;
}

Genotypes read_genotypes(const fs::path& path) {
  const Table t = read_table(path);
  Genotypes g;
  g.variant_ids = t.header;
  g.matrix = GenotypeMatrix(t.rows.size(), t.header.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      const auto& v = t.rows[i][j];
      std::int8_t count;
      if (v == "0")
        count = 0;
      else if (v == "1")
        count = 1;
      else if (v == "2")
        count = 2;
      else if (v == "NA")
        count = GenotypeMatrix::kMissing;
      else
        throw ValidationError(path.string() + " row " + std::to_string(i + 1) + ", column '" +
                              t.header[j] + "': genotype value '" + v +
                              "' is not 0, 1, 2 or NA");
      g.matrix(i, j) = count;
    }
  }
  return g;
}

std::vector<std::pair<std::string, std::string>> read_region_map(const fs::path& path) {
  const Table t = read_table(path);
  const auto vc = t.column("variant_id");
  const auto rc = t.column("region_id");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& row : t.rows) out.emplace_back(row[vc], row[rc]);
  return out;
}

GenotypeDataset load_dataset(const fs::path& phenotypes, const fs::path& genotypes,
                             const fs::path& region_map, OutcomeFamily family) {
  auto pheno = read_phenotypes(phenotypes);
  auto geno = read_genotypes(genotypes);
  const auto map = read_region_map(region_map);

  std::unordered_map<std::string, std::string> region_of;
  for (const auto& [variant, region] : map) {
    if (variant.empty() || region.empty())
      throw ValidationError(region_map.string() + ": empty variant or region id");
    if (!region_of.emplace(variant, region).second)
      throw ValidationError(region_map.string() + ": variant '" + variant +
                            "' is mapped more than once");
  }
  GenotypeDataset d;
  std::string unmapped;
  std::size_t n_unmapped = 0;
  for (const auto& v : geno.variant_ids) {
    const auto it = region_of.find(v);
    if (it == region_of.end()) {
      unmapped += (n_unmapped++ ? ", " : "") + v;
      continue;
    }
    d.region_ids.push_back(it->second);
  }
  if (n_unmapped)
    throw ValidationError(std::to_string(n_unmapped) +
                          " variant(s) missing from the region map: " + unmapped);
  if (static_cast<std::size_t>(pheno.outcome.size()) != geno.matrix.n_individuals())
    throw ValidationError("phenotype file has " + std::to_string(pheno.outcome.size()) +
                          " rows but genotype file has " +
                          std::to_string(geno.matrix.n_individuals()));
  d.outcome = std::move(pheno.outcome);
  d.covariates = std::move(pheno.covariates);
  d.covariate_names = std::move(pheno.covariate_names);
  d.genotypes = std::move(geno.matrix);
  d.variant_ids = std::move(geno.variant_ids);
  d.family = family;
  validate(d);
  return d;
}

DatasetPaths dataset_paths(const fs::path& dir) {
  return {dir / "phenotypes.tsv", dir / "genotypes.tsv", dir / "regions.tsv"};
}

void write_dataset(const DatasetPaths& paths, const GenotypeDataset& data,
                   const std::string& comment) {
  {
    std::vector<std::string> header{"outcome"};
    header.insert(header.end(), data.covariate_names.begin(), data.covariate_names.end());
    Table t = with_comment(comment, header);
    for (Eigen::Index i = 0; i < data.outcome.size(); ++i) {
      std::vector<std::string> row{fmt_exact(data.outcome(i))};
      for (Eigen::Index c = 0; c < data.covariates.cols(); ++c)
        row.push_back(fmt_exact(data.covariates(i, c)));
      t.rows.push_back(std::move(row));
    }
    write_table(paths.phenotypes, t);
  }
  {
    // Written directly: a genotype table can be large.
    std::string out;
    if (!comment.empty()) out += comment_line(comment) + '\n';
    for (std::size_t j = 0; j < data.variant_ids.size(); ++j)
      out += (j ? "\t" : "") + data.variant_ids[j];
    out += '\n';
    const auto& g = data.genotypes;
    out.reserve(out.size() + g.n_individuals() * g.n_variants() * 2);
    for (std::size_t i = 0; i < g.n_individuals(); ++i) {
      for (std::size_t j = 0; j < g.n_variants(); ++j) {
        if (j) out += '\t';
        const auto v = g(i, j);
        if (v == GenotypeMatrix::kMissing)
          out += "NA";
        else
          out += static_cast<char>('0' + v);
      }
      out += '\n';
    }
    write_text(paths.genotypes, out);
  }
  {
    Table t = with_comment(comment, {"variant_id", "region_id"});
    for (std::size_t j = 0; j < data.variant_ids.size(); ++j)
      t.rows.push_back({data.variant_ids[j], data.region_ids[j]});
    write_table(paths.region_map, t);
  }
}

void write_truth(const fs::path& path, const SimulatedStudy& study, const std::string& comment) {
  Table t = with_comment(comment, {"region_id", "nonnull", "n_variants"});
  for (std::size_t r = 0; r < study.region_names.size(); ++r)
    t.rows.push_back({study.region_names[r], std::to_string(study.truth.nonnull_region[r]),
                      std::to_string(study.region_sizes[r])});
  write_table(path, t);
}

// ---------------------------------------------------------------------------

Table summaries_table(std::span<const VariantSummary> summaries, const std::string& comment) {
  Table t = with_comment(comment, {"region_id", "variant_id", "beta_hat", "se", "n_used", "status"});
  for (const auto& s : summaries) {
    const bool ok = s.status == VariantStatus::Ok;
    t.rows.push_back({s.region_id, s.variant_id, ok ? fmt_exact(s.beta_hat) : "NA",
                      ok ? fmt_exact(s.se) : "NA", std::to_string(s.n_used),
                      std::string(to_string(s.status))});
  }
  return t;
}

std::vector<VariantSummary> parse_summaries(const Table& table) {
  const auto rc = table.column("region_id");
  const auto vc = table.column("variant_id");
  const auto bc = table.column("beta_hat");
  const auto sc = table.column("se");
  const auto nc = table.column("n_used");
  const auto stc = table.column("status");
  std::vector<VariantSummary> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string ctx = "summary row " + std::to_string(i + 1);
    VariantSummary s;
    s.region_id = row[rc];
    s.variant_id = row[vc];
    if (!seen.insert(s.variant_id).second)
      throw ValidationError(ctx + ": duplicate variant id '" + s.variant_id + "'");
    s.status = parse_status(row[stc]);
    const auto n_used = parse_int(row[nc], ctx + " n_used");
    if (n_used < 0) throw ValidationError(ctx + ": n_used must be nonnegative");
    s.n_used = static_cast<int>(n_used);
    if (s.status == VariantStatus::Ok) {
      s.beta_hat = parse_double(row[bc], ctx + " beta_hat");
      s.se = parse_double(row[sc], ctx + " se");
      if (!std::isfinite(s.beta_hat) || !(s.se > 0.0) || !std::isfinite(s.se))
        throw ValidationError(ctx + ": ok variant needs finite beta_hat and se > 0");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<VariantSummary> read_summaries(const fs::path& path) {
  return parse_summaries(read_table(path));
}

// ---------------------------------------------------------------------------

std::string model_to_json(const FittedModel& model) {
  nlohmann::json j;
  j["pi"] = model.params.pi;
  j["knots"] = model.knots;
  j["probs"] = model.params.probs;
  j["loglik"] = model.loglik;
  j["n_iter"] = model.n_iter;
  j["converged"] = model.converged;
  j["grid_spec"] = model.grid_spec.describe();
  j["config_hash"] = model.config_hash;
  j["data_hash"] = model.data_hash;
  return j.dump(2) + "\n";
}

FittedModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
  }
  FittedModel m;
  try {
    m.params.pi = j.at("pi").get<double>();
    m.knots = j.at("knots").get<std::vector<double>>();
    m.params.probs = j.at("probs").get<std::vector<double>>();
    m.loglik = j.at("loglik").get<double>();
    m.n_iter = j.at("n_iter").get<int>();
    m.converged = j.at("converged").get<bool>();
    m.grid_spec = GridSpec::parse(j.at("grid_spec").get<std::string>());
    m.config_hash = j.at("config_hash").get<std::string>();
    m.data_hash = j.value("data_hash", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  const KnotGrid grid(m.knots);
  m.params.validate(grid.size());
  return m;
}

FittedModel read_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

// ---------------------------------------------------------------------------

std::string level_column(double level) { return "selected_" + fmt("%g", level); }

Table screening_table(const ScreeningResult& result, std::span<const double> levels,
                      const std::string& comment) {
  std::vector<std::string> header{"rank",         "region_id",   "n_variants",
                                  "log_odp",      "nonnull_prob", "model_qvalue"};
  std::vector<std::size_t> counts;
  for (double a : levels) {
    header.push_back(level_column(a));
    counts.push_back(result.selected_at(a));
  }
  Table t = with_comment(comment, header);
  for (std::size_t i = 0; i < result.region_ids.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1), result.region_ids[i],
                                 std::to_string(result.n_variants[i]),
                                 fmt_short(result.log_odp[i]), fmt_short(result.xi[i]),
                                 fmt_short(result.model_qvalue[i])};
    for (auto c : counts) row.push_back(i < c ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table baseline_table(std::span<const PvalueRecord> records, std::span<const double> levels,
                     const std::string& comment) {
  std::vector<std::string> header{"region_id", "p", "q"};
  for (double a : levels) header.push_back(level_column(a));
  Table t = with_comment(comment, header);
  for (const auto& r : records) {
    std::vector<std::string> row{r.region_id, fmt_short(r.p), fmt_short(r.q)};
    for (double a : levels) row.push_back(a > 0.0 && r.q <= a ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table region_report_table(std::span<const RegionEffectSummary> rows, const std::string& comment) {
  Table t = with_comment(comment, {"region_id", "n_variants", "nonnull_prob", "mean", "sd", "q05",
                                   "q25", "q50", "q75", "q95"});
  for (const auto& s : rows) {
    std::vector<std::string> row{s.region_id, std::to_string(s.n_variants),
                                 fmt_short(s.nonnull_prob), fmt_short(s.mean), fmt_short(s.sd)};
    for (double q : s.quantiles) row.push_back(fmt_short(q));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table cdf_table(std::span<const std::string> region_ids, std::span<const StepCdf> cdfs,
                const std::string& comment) {
  Table t = with_comment(comment, {"region_id", "t", "H"});
  for (std::size_t r = 0; r < cdfs.size(); ++r) {
    double cum = 0.0;
    const auto& c = cdfs[r];
    for (std::size_t i = 0; i < c.jump_points.size(); ++i) {
      cum += c.masses[i];
      const double h = i + 1 == c.jump_points.size() ? 1.0 : std::min(cum, 1.0);
      t.rows.push_back({region_ids[r], fmt_short(c.jump_points[i]), fmt_short(h)});
    }
  }
  return t;
}

Table histogram_table(const NonnullHistogram& hist, const std::string& comment) {
  Table t = with_comment(comment, {"section", "bin_left", "bin_right", "count", "knot", "mass"});
  for (const auto& b : hist.z_bins)
    t.rows.push_back({"zscore", fmt_short(b.left), fmt_short(b.right), std::to_string(b.count),
                      "NA", "NA"});
  for (std::size_t l = 0; l < hist.knots.size(); ++l)
    t.rows.push_back(
        {"knot", "NA", "NA", "NA", fmt_short(hist.knots[l]), fmt_short(hist.masses[l])});
  return t;
}

Table study_table(std::span<const StudyRow> rows, const std::string& comment) {
  Table t = with_comment(comment, {"family", "pi", "method", "fdr_level", "mean_detections",
                                   "mean_true_positives", "realized_fdr", "n_replicates"});
  for (const auto& r : rows)
    t.rows.push_back({std::string(to_string(r.family)), fmt_short(r.pi), r.method,
                      fmt_short(r.fdr_level), fmt_short(r.mean_detections),
                      fmt_short(r.mean_true_positives), fmt_short(r.realized_fdr),
                      std::to_string(r.n_replicates)});
  return t;
}

Table replicate_table(std::span<const ReplicateResult> results, const std::string& comment) {
  Table t = with_comment(comment, {"replicate", "method", "fdr_level", "detections",
                                   "true_positives", "pi_hat", "em_iterations"});
  for (const auto& r : results)
    for (const auto& c : r.counts)
      t.rows.push_back({std::to_string(r.replicate), c.method, fmt_short(c.fdr_level),
                        std::to_string(c.detections), std::to_string(c.true_positives),
                        fmt_short(r.pi_hat), std::to_string(r.em_iterations)});
  return t;
}

}  // namespace setscreen::io
