#include "setscreen/mixture.hpp"

#include <cfloat>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <unordered_map>

#include "setscreen/error.hpp"
#include "setscreen/math.hpp"

namespace setscreen {

using math::kNegInf;
using math::log_normal_pdf;

// ---------------------------------------------------------------------------
// Knot grids

KnotGrid::KnotGrid(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw ValidationError("knot grid must contain at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i])) throw ValidationError("knot values must be finite");
    if (i > 0 && !(knots_[i] > knots_[i - 1]))
      throw ValidationError("knots must be strictly increasing");
  }
}

KnotGrid KnotGrid::from_range(double min, double max, double step) {
  if (!(step > 0) || !std::isfinite(step)) throw ValidationError("grid step must be positive");
  if (!std::isfinite(min) || !std::isfinite(max) || max < min)
    throw ValidationError("grid needs finite min <= max");
  const double span = (max - min) / step;
  const auto count = static_cast<long long>(std::floor(span + 1e-9)) + 1;
  if (count > 10'000'000) throw ValidationError("knot grid too large");
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(count));
  const double start_index = min / step;
  const double rounded = std::round(start_index);
  const bool aligned = std::abs(start_index - rounded) < 1e-9;
  // Steps like 0.01 are not exact in binary; k / 100 rounds correctly where
  // k * 0.01 may not.
  const double per_unit = std::round(1.0 / step);
  const bool reciprocal = per_unit >= 1.0 && std::abs(1.0 / step - per_unit) < 1e-9 * per_unit;
  for (long long i = 0; i < count; ++i) {
    const double k = rounded + static_cast<double>(i);
    if (!aligned)
      knots.push_back(min + static_cast<double>(i) * step);
    else
      knots.push_back(reciprocal ? k / per_unit : k * step);
  }
  return KnotGrid(std::move(knots));
}

bool KnotGrid::has_zero() const {
  for (double a : knots_)
    if (a == 0.0) return true;
  return false;
}

KnotGrid KnotGrid::without_zero() const {
  std::vector<double> kept;
  for (double a : knots_)
    if (a != 0.0) kept.push_back(a);
  return KnotGrid(std::move(kept));
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x == 0.0 ? 0.0 : x);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_number_list(const std::string& body) {
  std::vector<double> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError("bad number '" + item + "' in grid spec");
    }
  }
  return out;
}

}  // namespace

KnotGrid GridSpec::build() const {
  KnotGrid grid = explicit_knots ? KnotGrid(*explicit_knots) : KnotGrid::from_range(min, max, step);
  return drop_zero && grid.has_zero() ? grid.without_zero() : grid;
}

std::string GridSpec::describe() const {
  std::string out;
  if (explicit_knots) {
    out = "list(";
    for (std::size_t i = 0; i < explicit_knots->size(); ++i) {
      if (i) out += ',';
      out += shortest((*explicit_knots)[i]);
    }
    out += ')';
  } else {
    out = "range(" + shortest(min) + ',' + shortest(max) + ',' + shortest(step) + ')';
  }
  if (drop_zero) out += ";drop_zero";
  return out;
}

GridSpec GridSpec::parse(const std::string& text) {
  GridSpec spec;
  std::string body = text;
  const std::string suffix = ";drop_zero";
  if (body.size() >= suffix.size() && body.ends_with(suffix)) {
    spec.drop_zero = true;
    body.resize(body.size() - suffix.size());
  }
  auto inner = [&](const std::string& head) {
    if (!body.starts_with(head) || !body.ends_with(")"))
      throw ValidationError("bad grid spec '" + text + "'");
    return body.substr(head.size(), body.size() - head.size() - 1);
  };
  if (body.starts_with("range(")) {
    const auto v = parse_number_list(inner("range("));
    if (v.size() != 3) throw ValidationError("range grid spec needs (min,max,step)");
    spec.min = v[0];
    spec.max = v[1];
    spec.step = v[2];
  } else if (body.starts_with("list(")) {
    spec.explicit_knots = parse_number_list(inner("list("));
  } else {
    throw ValidationError("bad grid spec '" + text + "'");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Parameters and blocks

MixtureParams MixtureParams::uniform(std::size_t n_knots, double pi) {
  MixtureParams p;
  p.pi = pi;
  p.probs.assign(n_knots, 1.0 / static_cast<double>(n_knots));
  return p;
}

void MixtureParams::validate(std::size_t n_knots) const {
  if (!(pi >= 0.0 && pi <= 1.0)) throw ValidationError("pi must lie in [0, 1]");
  if (probs.size() != n_knots)
    throw ValidationError("knot weights have length " + std::to_string(probs.size()) +
                          ", grid has " + std::to_string(n_knots));
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ValidationError("knot weights must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("knot weights must sum to 1");
}

void RegionBlock::validate() const {
  if (beta_hat.empty()) throw ValidationError("region '" + region_id + "' has no variants");
  if (se.size() != beta_hat.size())
    throw ValidationError("region '" + region_id + "': beta_hat/se length mismatch");
  for (std::size_t k = 0; k < se.size(); ++k) {
    if (!(se[k] > 0.0) || !std::isfinite(se[k]) || !std::isfinite(beta_hat[k]))
      throw ValidationError("region '" + region_id + "': se must be positive and finite");
  }
}

std::vector<RegionBlock> blocks_from_summaries(std::span<const VariantSummary> summaries) {
  std::vector<RegionBlock> blocks;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& s : summaries) {
    if (s.status != VariantStatus::Ok) continue;
    auto [it, inserted] = index.try_emplace(s.region_id, blocks.size());
    if (inserted) blocks.push_back(RegionBlock{s.region_id, {}, {}});
    auto& b = blocks[it->second];
    b.beta_hat.push_back(s.beta_hat);
    b.se.push_back(s.se);
  }
  for (const auto& b : blocks) b.validate();
  return blocks;
}

// ---------------------------------------------------------------------------
// Densities

double log_f0(const RegionBlock& block) {
  double acc = 0.0;
  for (std::size_t k = 0; k < block.size(); ++k)
    acc += log_normal_pdf(block.beta_hat[k], 0.0, block.se[k]);
  return acc;
}

namespace {

// log sum_l p_l N(b; a_l, s^2); terms with p_l = 0 are skipped.
double log_knot_mixture(double b, double s, const KnotGrid& grid, std::span<const double> probs,
                        std::vector<double>& scratch) {
  scratch.clear();
  for (std::size_t l = 0; l < grid.size(); ++l) {
    if (probs[l] > 0.0) scratch.push_back(std::log(probs[l]) + log_normal_pdf(b, grid[l], s));
  }
  return math::logsumexp(scratch);
}

double mix_two(double pi, double lf0, double lf1) {
  if (pi >= 1.0) return lf0;
  if (pi <= 0.0) return lf1;
  return math::logsumexp(std::log(pi) + lf0, std::log1p(-pi) + lf1);
}

}  // namespace

double posterior_nonnull(double pi, double log_ratio) {
  if (pi >= 1.0) return 0.0;
  if (pi <= 0.0) return 1.0;
  const double pc = std::clamp(pi, 1e-12, 1.0 - 1e-12);
  return math::logistic(std::log1p(-pc) - std::log(pc) + log_ratio);
}

double log_f1(const RegionBlock& block, const KnotGrid& grid, std::span<const double> probs) {
  if (probs.size() != grid.size()) throw ValidationError("log_f1: weight/grid length mismatch");
  std::vector<double> scratch;
  scratch.reserve(grid.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < block.size(); ++k) {
    const double term = log_knot_mixture(block.beta_hat[k], block.se[k], grid, probs, scratch);
    if (term == kNegInf)
      throw DegenerateWeights("every weighted knot has zero density for region '" +
                              block.region_id + "'");
    acc += term;
  }
  return acc;
}

double marginal_loglik(std::span<const RegionBlock> blocks, const MixtureParams& params,
                       const KnotGrid& grid) {
  double total = 0.0;
  for (const auto& b : blocks) {
    const double lf0 = log_f0(b);
    const double lf1 = params.pi >= 1.0 ? 0.0 : log_f1(b, grid, params.probs);
    total += mix_two(params.pi, lf0, lf1);
  }
  return total;
}

Responsibilities e_step(std::span<const RegionBlock> blocks, const MixtureParams& params,
                        const KnotGrid& grid) {
  const std::size_t L = grid.size();
  Responsibilities out;
  out.xi.resize(blocks.size());
  out.gamma.resize(blocks.size());
  std::vector<double> logw(L);
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const auto& b = blocks[r];
    Eigen::MatrixXd& gam = out.gamma[r];
    gam.resize(static_cast<Eigen::Index>(b.size()), static_cast<Eigen::Index>(L));
    double lf0 = 0.0;
    double lf1 = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      lf0 += log_normal_pdf(b.beta_hat[k], 0.0, b.se[k]);
      for (std::size_t l = 0; l < L; ++l) {
        logw[l] = params.probs[l] > 0.0
                      ? std::log(params.probs[l]) + log_normal_pdf(b.beta_hat[k], grid[l], b.se[k])
                      : kNegInf;
      }
      const double lse = math::logsumexp(logw);
      if (lse == kNegInf) throw DegenerateWeights("e_step: all knot densities vanish");
      lf1 += lse;
      double total = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double v = logw[l] == kNegInf ? 0.0 : std::exp(logw[l] - lse);
        gam(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = v;
        total += v;
      }
      gam.row(static_cast<Eigen::Index>(k)) /= total;
    }
    out.xi[r] = posterior_nonnull(params.pi, lf1 - lf0);
  }
  return out;
}

MixtureParams m_step(std::span<const RegionBlock> blocks, const Responsibilities& resp,
                     const MixtureParams& previous) {
  if (resp.xi.size() != blocks.size() || resp.gamma.size() != blocks.size())
    throw ValidationError("m_step: responsibilities do not match the blocks");
  const std::size_t R = blocks.size();
  MixtureParams next;
  double null_mass = 0.0;
  for (double x : resp.xi) null_mass += 1.0 - x;
  next.pi = std::clamp(null_mass / static_cast<double>(R), 0.0, 1.0);

  const std::size_t L = previous.probs.size();
  std::vector<double> numer(L, 0.0);
  double denom = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    const double xi = resp.xi[r];
    denom += static_cast<double>(blocks[r].size()) * xi;
    const auto& gam = resp.gamma[r];
    if (gam.cols() != static_cast<Eigen::Index>(L))
      throw ValidationError("m_step: gamma width differs from the knot count");
    for (Eigen::Index k = 0; k < gam.rows(); ++k)
      for (std::size_t l = 0; l < L; ++l) numer[l] += xi * gam(k, static_cast<Eigen::Index>(l));
  }
  double total = 0.0;
  for (double v : numer) total += v;
  if (!(denom > 0.0) || !(total > 0.0)) {
    next.probs = previous.probs;
    return next;
  }
  next.probs.resize(L);
  double kept = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double v = numer[l] / total;
    next.probs[l] = v < DBL_MIN ? 0.0 : v;
    kept += next.probs[l];
  }
  for (auto& p : next.probs) p /= kept;
  return next;
}

// ---------------------------------------------------------------------------
// EM driver

namespace {

// Precomputed kernel for the EM loop. Row v holds
// exp(log N(b_v; a_l, s_v^2) - shift_v) with shift_v the row maximum, so
// log f1 for a variant is shift_v + log(row . p): a log-sum-exp with a fixed
// offset. Rows whose weighted sum underflows are recomputed in log space.
class EmKernel {
 public:
  EmKernel(std::span<const RegionBlock> blocks, const KnotGrid& grid)
      : blocks_(blocks), grid_(grid) {
    for (const auto& b : blocks) n_var_ += b.size();
    const auto V = static_cast<Eigen::Index>(n_var_);
    const auto L = static_cast<Eigen::Index>(grid.size());
    phi_.resize(V, L);
    shift_.resize(V);
    region_lf0_.resize(blocks.size());
    Eigen::Index v = 0;
    for (std::size_t r = 0; r < blocks.size(); ++r) {
      const auto& b = blocks[r];
      double lf0 = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k, ++v) {
        lf0 += log_normal_pdf(b.beta_hat[k], 0.0, b.se[k]);
        double mx = kNegInf;
        for (Eigen::Index l = 0; l < L; ++l) {
          const double lp = log_normal_pdf(b.beta_hat[k], grid[static_cast<std::size_t>(l)], b.se[k]);
          phi_(v, l) = lp;
          mx = std::max(mx, lp);
        }
        shift_(v) = mx;
        for (Eigen::Index l = 0; l < L; ++l) phi_(v, l) = std::exp(phi_(v, l) - mx);
      }
      region_lf0_[r] = lf0;
    }
  }

  struct Pass {
    double loglik = 0.0;
    MixtureParams next;
  };

  // One E-step at `params` (evaluating the log-likelihood there) followed by
  // the M-step.
  Pass step(const MixtureParams& params) {
    const auto L = static_cast<Eigen::Index>(grid_.size());
    const Eigen::Map<const Eigen::VectorXd> p(params.probs.data(), L);
    const Eigen::VectorXd dot = phi_ * p;
    Eigen::VectorXd u(phi_.rows());
    Eigen::VectorXd extra = Eigen::VectorXd::Zero(L);
    std::vector<double> scratch(static_cast<std::size_t>(L));

    Pass out;
    double null_mass = 0.0;
    double denom = 0.0;
    Eigen::Index v = 0;
    for (std::size_t r = 0; r < blocks_.size(); ++r) {
      const auto& b = blocks_[r];
      const Eigen::Index first = v;
      double lf1 = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k, ++v) {
        if (dot(v) > DBL_MIN) {
          lf1 += shift_(v) + std::log(dot(v));
        } else {
          lf1 += fallback_log_f1(b.beta_hat[k], b.se[k], params.probs, scratch);
        }
      }
      const double lf0 = region_lf0_[r];
      const double xi = params.pi >= 1.0 ? 0.0 : posterior_nonnull(params.pi, lf1 - lf0);
      out.loglik += mix_two(params.pi, lf0, params.pi >= 1.0 ? 0.0 : lf1);
      null_mass += 1.0 - xi;
      denom += static_cast<double>(b.size()) * xi;
      for (Eigen::Index w = first; w < v; ++w) {
        if (dot(w) > DBL_MIN) {
          u(w) = xi / dot(w);
        } else {
          u(w) = 0.0;
          const std::size_t k = static_cast<std::size_t>(w - first);
          add_fallback_gamma(b.beta_hat[k], b.se[k], params.probs, xi, scratch, extra);
        }
      }
    }
    out.next.pi = std::clamp(null_mass / static_cast<double>(blocks_.size()), 0.0, 1.0);
    Eigen::VectorXd numer = (phi_.transpose() * u).cwiseProduct(p) + extra;
    const double total = numer.sum();
    if (!(denom > 0.0) || !(total > 0.0)) {
      out.next.probs = params.probs;
    } else {
      // Weights decaying geometrically toward zero would otherwise go
      // subnormal, which is numerically meaningless and very slow.
      numer /= total;
      for (Eigen::Index l = 0; l < L; ++l)
        if (numer(l) < DBL_MIN) numer(l) = 0.0;
      numer /= numer.sum();
      out.next.probs.assign(numer.data(), numer.data() + L);
    }
    return out;
  }

 private:
  double fallback_log_f1(double b, double s, std::span<const double> probs,
                         std::vector<double>& scratch) const {
    const double lse = log_knot_mixture(b, s, grid_, probs, scratch);
    if (lse == kNegInf) throw DegenerateWeights("EM: all weighted knot densities vanish");
    return lse;
  }

  void add_fallback_gamma(double b, double s, std::span<const double> probs, double xi,
                          std::vector<double>& scratch, Eigen::VectorXd& extra) const {
    const std::size_t L = grid_.size();
    scratch.resize(L);
    for (std::size_t l = 0; l < L; ++l)
      scratch[l] = probs[l] > 0.0 ? std::log(probs[l]) + log_normal_pdf(b, grid_[l], s) : kNegInf;
    const double lse = math::logsumexp(scratch);
    for (std::size_t l = 0; l < L; ++l)
      if (scratch[l] != kNegInf)
        extra(static_cast<Eigen::Index>(l)) += xi * std::exp(scratch[l] - lse);
  }

  std::span<const RegionBlock> blocks_;
  const KnotGrid& grid_;
  std::size_t n_var_ = 0;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd shift_;
  std::vector<double> region_lf0_;
};

EmResult run_em(EmKernel& kernel, const MixtureParams& init, double tol, int max_iter) {
  EmResult res;
  res.params = init;
  auto pass = kernel.step(res.params);
  res.trace.loglik.push_back(pass.loglik);
  for (int it = 1; it <= max_iter; ++it) {
    const double prev = pass.loglik;
    res.params = std::move(pass.next);
    pass = kernel.step(res.params);
    res.trace.loglik.push_back(pass.loglik);
    res.trace.n_iter = it;
    const double change = std::abs(pass.loglik - prev) / std::max(std::abs(prev), 1e-300);
    if (change < tol) {
      res.trace.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace

EmResult fit_em(std::span<const RegionBlock> blocks, const KnotGrid& grid,
                const MixtureParams& init, double tol, int max_iter) {
  EmOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return fit_em(blocks, grid, init, opt);
}

EmResult fit_em(std::span<const RegionBlock> blocks, const KnotGrid& grid,
                const MixtureParams& init, const EmOptions& options) {
  if (blocks.empty()) throw NoData("no regions to fit");
  if (!(options.tol > 0.0)) throw ValidationError("EM tolerance must be positive");
  if (options.max_iter < 1) throw ValidationError("EM max_iter must be at least 1");
  if (options.starts < 1) throw ValidationError("EM needs at least one start");
  init.validate(grid.size());
  for (const auto& b : blocks) b.validate();

  EmKernel kernel(blocks, grid);
  EmResult best = run_em(kernel, init, options.tol, options.max_iter);
  for (int s = 1; s < options.starts; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                      static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    std::exponential_distribution<double> expo(1.0);
    MixtureParams start;
    start.pi = unif(rng);
    start.probs.resize(grid.size());
    double total = 0.0;
    for (auto& p : start.probs) total += (p = expo(rng));
    for (auto& p : start.probs) p /= total;
    EmResult cand = run_em(kernel, start, options.tol, options.max_iter);
    if (cand.trace.loglik.back() > best.trace.loglik.back()) {
      best = std::move(cand);
      best.best_start = s;
    }
  }
  return best;
}

}  // namespace setscreen
