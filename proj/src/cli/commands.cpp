#include "setscreen/cli.hpp"

#include <algorithm>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>

#include "options.hpp"
#include "setscreen/baseline.hpp"
#include "setscreen/error.hpp"
#include "setscreen/io.hpp"
#include "setscreen/mixture.hpp"
#include "setscreen/odp.hpp"
#include "setscreen/posterior.hpp"
#include "setscreen/simulator.hpp"

namespace setscreen::cli {

namespace {

struct UsageError : ValidationError {
  explicit UsageError(const std::string& what) : ValidationError(what, "UsageError") {}
};

struct ConfigError : ValidationError {
  explicit ConfigError(const std::string& what) : ValidationError(what, "ConfigError") {}
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<NormalComponent> parse_mixture(const std::string& text) {
  std::vector<NormalComponent> out;
  for (const auto& part : split(text, ',')) {
    const auto f = split(part, ':');
    if (f.size() != 3)
      throw ValidationError("effect mixture component '" + part + "' must be weight:mean:sd");
    try {
      out.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2])});
    } catch (const std::exception&) {
      throw ValidationError("effect mixture component '" + part + "' is not numeric");
    }
  }
  return out;
}

void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw ValidationError("need at least one --fdr-level");
  for (double a : levels)
    if (!(a >= 0.0 && a < 1.0)) throw ValidationError("FDR levels must lie in [0, 1)");
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

// ---------------------------------------------------------------------------
// Option groups shared by several commands

struct GridParams {
  double min = -1.0;
  double max = 1.0;
  double step = 0.01;
  std::vector<double> knots;
  bool drop_zero = false;

  void add(OptionSet& o) {
    o.real("grid-min", min, "smallest knot");
    o.real("grid-max", max, "largest knot");
    o.real("grid-step", step, "knot spacing");
    o.reals("knots", knots, "explicit knot list (overrides the range)");
    o.boolean("drop-zero", drop_zero, "remove the knot at 0");
  }
  bool given(const OptionSet& o) const {
    for (const char* name : {"grid-min", "grid-max", "grid-step", "knots", "drop-zero"})
      if (o.given(name)) return true;
    return false;
  }
  GridSpec spec() const {
    GridSpec s;
    if (!knots.empty()) s.explicit_knots = knots;
    s.min = min;
    s.max = max;
    s.step = step;
    s.drop_zero = drop_zero;
    return s;
  }
};

struct EmParams {
  EmOptions em;
  double init_pi = 0.5;

  void add(OptionSet& o, bool with_init = true) {
    o.real("tol", em.tol, "relative log-likelihood change for convergence")
        ->check(CLI::PositiveNumber);
    o.integer("max-iter", em.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    o.integer("starts", em.starts, "EM starts (extra starts are seeded jitter)")
        ->check(CLI::PositiveNumber);
    o.seed("em-seed", em.seed, "seed for multi-start jitter");
    if (with_init)
      o.real("init-pi", init_pi, "initial null probability")->check(CLI::Range(0.0, 1.0));
  }
};

struct GlmParams {
  GlmOptions glm;

  void add(OptionSet& o) {
    o.integer("irls-max-iter", glm.max_iter, "IRLS iteration cap")->check(CLI::PositiveNumber);
    o.real("irls-tol", glm.tol, "IRLS relative deviance tolerance")->check(CLI::PositiveNumber);
    o.integer("max-halvings", glm.max_halvings, "IRLS step-halving cap")
        ->check(CLI::NonNegativeNumber);
    o.real("se-cap", glm.se_cap, "exclude binary fits with se above this")
        ->check(CLI::PositiveNumber);
    o.real("beta-cap", glm.beta_cap, "exclude binary fits with |beta| above this")
        ->check(CLI::PositiveNumber);
  }
};

struct SimParams {
  SimConfig sim;
  std::string family = "continuous";
  std::string mixture = "0.9:0.5:0.2,0.1:-0.3:0.1";

  void add(OptionSet& o) {
    o.text("family", family, "continuous or binary");
    o.count("n", sim.n, "individuals");
    o.count("regions", sim.regions, "regions");
    o.real("pi", sim.pi, "null probability of a region");
    o.real("rho", sim.rho, "latent AR(1) correlation");
    o.real("maf-min", sim.maf_min, "lower MAF bound");
    o.real("maf-max", sim.maf_max, "upper MAF bound");
    o.text("effect-mixture", mixture, "non-null effect mixture as weight:mean:sd,...");
    o.real("gamma1", sim.gamma1, "coefficient of the Gaussian covariate");
    o.real("gamma2", sim.gamma2, "coefficient of the binary covariate");
    o.boolean("center-genetic-score", sim.center_genetic_score,
              "use beta * (g - 2 maf) in the linear predictor");
    o.seed("seed", sim.seed, "random seed");
  }
  SimConfig config() const {
    SimConfig c = sim;
    c.family = parse_family(family);
    c.effect_mixture = parse_mixture(mixture);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& desc)
      : sub_(app.add_subcommand(name, desc)), opts_(sub_, name) {
    sub_->add_option("--config", config_path_, "flat 'key = value' config file");
    opts_.threads(threads_);
  }
  virtual ~Command() = default;

  OptionSet& options() { return opts_; }
  CLI::App* app() const { return sub_; }
  virtual void execute(std::ostream& out, std::ostream& err) = 0;

 protected:
  std::string config_hash() const { return io::stable_hash(opts_.canonical()); }
  std::string header() const {
    return "setscreen " + opts_.command() + " config_hash=" + config_hash();
  }
  CLI::Option* required_path(const std::string& name, fs::path& target, const std::string& desc) {
    return opts_.path(name, target, desc)->required();
  }

  CLI::App* sub_;
  OptionSet opts_;
  fs::path config_path_;
  int threads_ = 1;
};

/// Loads a fitted model and checks its knots against its own grid spec and,
/// when grid options were given, against the requested grid.
struct LoadedModel {
  io::FittedModel model;
  KnotGrid grid;
};

LoadedModel load_model(const fs::path& model_path, const fs::path& summaries_path,
                       const GridParams& grid, const OptionSet& opts, std::ostream& err) {
  auto model = io::read_model(model_path);
  const KnotGrid stored(model.knots);
  const auto knot_hash = [](const KnotGrid& g) {
    std::string s;
    for (double a : g.knots()) s += io::fmt_exact(a) + ",";
    return io::stable_hash(s);
  };
  if (model.grid_spec.build() != stored)
    throw ConfigError("model knots do not match the model's grid spec " +
                      model.grid_spec.describe());
  if (grid.given(opts)) {
    const KnotGrid requested = grid.spec().build();
    if (requested != stored)
      throw ConfigError("knot grid mismatch: model " + model.grid_spec.describe() + " (hash " +
                        knot_hash(stored) + ") vs requested " + grid.spec().describe() +
                        " (hash " + knot_hash(requested) + ")");
  }
  if (!model.data_hash.empty() && model.data_hash != io::file_hash(summaries_path))
    err << "warning: " << summaries_path.string()
        << " differs from the summaries the model was fit to\n";
  return {std::move(model), stored};
}

// ---------------------------------------------------------------------------

class SimulateCommand : public Command {
 public:
  explicit SimulateCommand(CLI::App& app)
      : Command(app, "simulate", "generate a synthetic study (phenotypes, genotypes, regions)") {
    required_path("out-dir", out_dir_, "output directory");
    sim_.add(opts_);
    opts_.seed("replicate", replicate_, "replicate index (selects the random stream)");
  }

  void execute(std::ostream& out, std::ostream&) override {
    const auto study = simulate_study(sim_.config(), replicate_);
    io::write_dataset(io::dataset_paths(out_dir_), study.data, header());
    io::write_truth(out_dir_ / "truth.tsv", study, header());
    std::size_t nonnull = 0;
    for (auto f : study.truth.nonnull_region) nonnull += f;
    out << "simulate: " << study.data.outcome.size() << " individuals, "
        << study.data.variant_ids.size() << " variants, " << study.region_names.size()
        << " regions (" << nonnull << " non-null) -> " << out_dir_.string() << "\n";
  }

 private:
  fs::path out_dir_;
  SimParams sim_;
  std::uint64_t replicate_ = 0;
};

class SummariesCommand : public Command {
 public:
  explicit SummariesCommand(CLI::App& app)
      : Command(app, "summaries", "fit the per-variant GLMs and write variant summaries") {
    required_path("phenotypes", phenotypes_, "phenotype TSV (outcome, intercept, covariates)");
    required_path("genotypes", genotypes_, "genotype TSV (0/1/2/NA)");
    required_path("region-map", region_map_, "variant_id -> region_id TSV");
    required_path("out", out_path_, "summary TSV to write");
    opts_.path("excluded-log", excluded_log_, "excluded-variant log (default <out>.excluded.tsv)");
    opts_.text("family", family_, "continuous or binary");
    glm_.add(opts_);
  }

  void execute(std::ostream& out, std::ostream&) override {
    const auto family = parse_family(family_);
    const auto data = io::load_dataset(phenotypes_, genotypes_, region_map_, family);
    const auto sums = summarize_dataset(data, glm_.glm, threads_);
    io::write_table(out_path_, io::summaries_table(sums, header()));

    io::Table log;
    log.comments.push_back("# " + header());
    log.header = {"variant_id", "region_id", "status", "reason"};
    for (const auto& s : sums)
      if (s.status != VariantStatus::Ok)
        log.rows.push_back({s.variant_id, s.region_id, std::string(to_string(s.status)),
                            s.reason.empty() ? "NA" : s.reason});
    const fs::path log_path =
        excluded_log_.empty() ? sibling(out_path_, ".excluded.tsv") : excluded_log_;
    io::write_table(log_path, log);
    out << "summaries: " << sums.size() << " variants, " << log.rows.size() << " excluded -> "
        << out_path_.string() << "\n";
  }

 private:
  fs::path phenotypes_, genotypes_, region_map_, out_path_, excluded_log_;
  std::string family_ = "continuous";
  GlmParams glm_;
};

class FitCommand : public Command {
 public:
  explicit FitCommand(CLI::App& app)
      : Command(app, "fit", "fit the two-level mixture by EM and write the model JSON") {
    required_path("summaries", summaries_, "variant summary TSV");
    required_path("out", out_path_, "model JSON to write");
    opts_.path("log", log_path_, "per-iteration log-likelihood trace (default <out>.trace.tsv)");
    grid_.add(opts_);
    em_.add(opts_);
  }

  void execute(std::ostream& out, std::ostream&) override {
    const auto sums = io::read_summaries(summaries_);
    const auto blocks = blocks_from_summaries(sums);
    const GridSpec spec = grid_.spec();
    const KnotGrid grid = spec.build();
    const auto fit = fit_em(blocks, grid, MixtureParams::uniform(grid.size(), em_.init_pi), em_.em);

    io::FittedModel model;
    model.params = fit.params;
    model.grid_spec = spec;
    model.knots.assign(grid.knots().begin(), grid.knots().end());
    model.loglik = fit.trace.loglik.back();
    model.n_iter = fit.trace.n_iter;
    model.converged = fit.trace.converged;
    model.config_hash = config_hash();
    model.data_hash = io::file_hash(summaries_);
    io::write_text(out_path_, io::model_to_json(model));

    io::Table trace;
    trace.comments.push_back("# " + header());
    trace.header = {"iteration", "loglik"};
    for (std::size_t t = 0; t < fit.trace.loglik.size(); ++t)
      trace.rows.push_back({std::to_string(t), io::fmt_exact(fit.trace.loglik[t])});
    io::write_table(log_path_.empty() ? sibling(out_path_, ".trace.tsv") : log_path_, trace);

    out << "fit: " << blocks.size() << " regions, pi=" << io::fmt_short(model.params.pi)
        << " loglik=" << io::fmt_exact(model.loglik) << " iterations=" << model.n_iter
        << " converged=" << (model.converged ? "yes" : "no") << " -> " << out_path_.string()
        << "\n";
    if (!model.converged)
      throw NonConvergence("EM stopped at the iteration cap (" + std::to_string(model.n_iter) +
                           "); model and trace were written");
  }

 private:
  fs::path summaries_, out_path_, log_path_;
  GridParams grid_;
  EmParams em_;
};

class ScreenCommand : public Command {
 public:
  explicit ScreenCommand(CLI::App& app)
      : Command(app, "screen", "rank regions by the ODP statistic and select under model FDR") {
    required_path("summaries", summaries_, "variant summary TSV");
    required_path("model", model_path_, "model JSON from fit");
    required_path("out", out_path_, "screening TSV to write");
    opts_.path("baseline-out", baseline_path_, "also run the Stouffer + q-value baseline");
    opts_.reals("fdr-level", levels_, "FDR levels, comma separated");
    opts_.real("lambda", lambda_, "Storey pi0 tuning parameter")->check(CLI::Range(0.0, 0.999999));
    grid_.add(opts_);
  }

  void execute(std::ostream& out, std::ostream& err) override {
    check_levels(levels_);
    const auto loaded = load_model(model_path_, summaries_, grid_, opts_, err);
    const auto blocks = blocks_from_summaries(io::read_summaries(summaries_));
    const auto res = screen_regions(blocks, loaded.model.params, loaded.grid, levels_.front());
    io::write_table(out_path_, io::screening_table(res, levels_, header()));

    out << "screen: " << blocks.size() << " regions; odp selected";
    for (double a : levels_) out << " " << a << ":" << res.selected_at(a);
    if (!baseline_path_.empty()) {
      const auto records = baseline_records(blocks, lambda_);
      io::write_table(baseline_path_, io::baseline_table(records, levels_, header()));
      out << "; baseline selected";
      for (double a : levels_)
        out << " " << a << ":"
            << std::count_if(records.begin(), records.end(),
                             [&](const PvalueRecord& r) { return a > 0.0 && r.q <= a; });
    }
    out << "\n";
  }

 private:
  fs::path summaries_, model_path_, out_path_, baseline_path_;
  std::vector<double> levels_{0.05, 0.10, 0.15, 0.20};
  double lambda_ = 0.5;
  GridParams grid_;
};

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"region_id", "n_variants", "nonnull_prob", "mean",
                                             "sd",        "q05",        "q25",          "q50",
                                             "q75",       "q95"};
  return cols;
}

double sort_key(const RegionEffectSummary& s, const std::string& column) {
  if (column == "n_variants") return s.n_variants;
  if (column == "nonnull_prob") return s.nonnull_prob;
  if (column == "mean") return s.mean;
  if (column == "sd") return s.sd;
  const auto& cols = report_columns();
  const auto it = std::find(cols.begin() + 5, cols.end(), column);
  return s.quantiles[static_cast<std::size_t>(it - (cols.begin() + 5))];
}

class RegionReportCommand : public Command {
 public:
  explicit RegionReportCommand(CLI::App& app)
      : Command(app, "region-report", "per-region posterior effect summaries, CDFs, histogram") {
    required_path("summaries", summaries_, "variant summary TSV");
    required_path("model", model_path_, "model JSON from fit");
    required_path("out", out_path_, "region summary TSV to write");
    opts_.path("cdf-out", cdf_path_, "per-region step CDF TSV");
    opts_.path("histogram-out", hist_path_, "z-score histogram and fitted knot masses TSV");
    opts_.text("sort-by", sort_by_, "sort by this report column (default: input order)");
    opts_.boolean("descending", descending_, "sort largest first");
    opts_.count("top", top_, "keep the first N rows after sorting (0 = all)");
    opts_.text("regions", regions_, "comma-separated region ids to report (default: all)");
    opts_.real("bin-width", bin_width_, "z-score histogram bin width")->check(CLI::PositiveNumber);
    grid_.add(opts_);
  }

  void execute(std::ostream& out, std::ostream& err) override {
    const auto& cols = report_columns();
    if (!sort_by_.empty() && std::find(cols.begin(), cols.end(), sort_by_) == cols.end())
      throw UsageError("unknown sort column '" + sort_by_ + "'");
    const auto loaded = load_model(model_path_, summaries_, grid_, opts_, err);
    const auto& params = loaded.model.params;
    const auto blocks = blocks_from_summaries(io::read_summaries(summaries_));

    std::vector<std::size_t> chosen;
    if (regions_.empty()) {
      for (std::size_t r = 0; r < blocks.size(); ++r) chosen.push_back(r);
    } else {
      std::unordered_map<std::string, std::size_t> index;
      for (std::size_t r = 0; r < blocks.size(); ++r) index.emplace(blocks[r].region_id, r);
      for (const auto& id : split(regions_, ',')) {
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError("unknown region '" + id + "'");
        chosen.push_back(it->second);
      }
    }

    struct Row {
      RegionEffectSummary summary;
      StepCdf cdf;
    };
    std::vector<Row> rows;
    for (auto r : chosen) {
      auto cdf = effect_cdf(blocks[r], params, loaded.grid);
      const double xi = nonnull_prob(blocks[r], params, loaded.grid);
      rows.push_back({region_summary(cdf, xi, blocks[r].region_id,
                                     static_cast<int>(blocks[r].size())),
                      std::move(cdf)});
    }
    if (!sort_by_.empty()) {
      std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        if (sort_by_ == "region_id")
          return descending_ ? a.summary.region_id > b.summary.region_id
                             : a.summary.region_id < b.summary.region_id;
        const double ka = sort_key(a.summary, sort_by_);
        const double kb = sort_key(b.summary, sort_by_);
        if (ka != kb) return descending_ ? ka > kb : ka < kb;
        return a.summary.region_id < b.summary.region_id;
      });
    }
    if (top_ > 0 && rows.size() > top_) rows.resize(top_);

    std::vector<RegionEffectSummary> summaries;
    std::vector<StepCdf> cdfs;
    std::vector<std::string> ids;
    for (auto& row : rows) {
      ids.push_back(row.summary.region_id);
      summaries.push_back(row.summary);
      cdfs.push_back(std::move(row.cdf));
    }
    io::write_table(out_path_, io::region_report_table(summaries, header()));
    if (!cdf_path_.empty()) io::write_table(cdf_path_, io::cdf_table(ids, cdfs, header()));
    if (!hist_path_.empty())
      io::write_table(hist_path_,
                      io::histogram_table(nonnull_histogram(blocks, params, loaded.grid, bin_width_),
                                          header()));
    out << "region-report: " << summaries.size() << " regions -> " << out_path_.string() << "\n";
  }

 private:
  fs::path summaries_, model_path_, out_path_, cdf_path_, hist_path_;
  std::string sort_by_;
  bool descending_ = false;
  std::size_t top_ = 0;
  std::string regions_;
  double bin_width_ = 0.5;
  GridParams grid_;
};

class ReplicateStudyCommand : public Command {
 public:
  explicit ReplicateStudyCommand(CLI::App& app)
      : Command(app, "replicate-study", "simulate, screen and score many replicates") {
    required_path("out", out_path_, "aggregate TSV to write");
    opts_.path("replicates-out", per_rep_path_, "per-replicate counts TSV");
    sim_.add(opts_);
    opts_.count("replicates", study_.replicates, "number of replicates")->check(CLI::PositiveNumber);
    opts_.reals("fdr-level", study_.fdr_levels, "FDR levels, comma separated");
    opts_.real("lambda", study_.lambda, "Storey pi0 tuning parameter");
    grid_.add(opts_);
    em_.add(opts_, false);
    glm_.add(opts_);
  }

  void execute(std::ostream& out, std::ostream&) override {
    StudyConfig cfg = study_;
    cfg.sim = sim_.config();
    cfg.grid = grid_.spec();
    cfg.em = em_.em;
    cfg.glm = glm_.glm;
    check_levels(cfg.fdr_levels);
    cfg.validate();
    const auto results = run_replicates(cfg, threads_);
    const auto rows = aggregate(cfg, results);
    const auto table = io::study_table(rows, header());
    io::write_table(out_path_, table);
    if (!per_rep_path_.empty())
      io::write_table(per_rep_path_, io::replicate_table(results, header()));
    out << io::format_table(table);
  }

 private:
  fs::path out_path_, per_rep_path_;
  StudyConfig study_;
  SimParams sim_;
  GridParams grid_;
  EmParams em_;
  GlmParams glm_;
};

int report(std::ostream& err, const std::string& name, const std::string& what, int code) {
  std::string msg = what;
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  err << "error: " << name << ": " << msg << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Set-based screening of grouped association signals", "setscreen"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  commands.push_back(std::make_unique<SimulateCommand>(app));
  commands.push_back(std::make_unique<SummariesCommand>(app));
  commands.push_back(std::make_unique<FitCommand>(app));
  commands.push_back(std::make_unique<ScreenCommand>(app));
  commands.push_back(std::make_unique<RegionReportCommand>(app));
  commands.push_back(std::make_unique<ReplicateStudyCommand>(app));

  try {
    std::vector<std::string> full{"setscreen"};
    Command* chosen = nullptr;
    if (!args.empty())
      for (auto& c : commands)
        if (c->options().command() == args.front()) chosen = c.get();
    if (chosen) {
      full.push_back(args.front());
      const auto merged =
          merge_sources(chosen->options(), std::span(args).subspan(1));
      full.insert(full.end(), merged.begin(), merged.end());
    } else {
      full.insert(full.end(), args.begin(), args.end());
    }
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e, out, err);
      return report(err, "UsageError", e.what(), static_cast<int>(ErrorClass::Validation));
    }
    for (auto& c : commands)
      if (c->app()->parsed()) c->execute(out, err);
    return 0;
  } catch (const Error& e) {
    return report(err, e.name(), e.what(), static_cast<int>(e.error_class()));
  } catch (const std::exception& e) {
    return report(err, "InternalError", e.what(), static_cast<int>(ErrorClass::Numerical));
  }
}

}  // namespace setscreen::cli
