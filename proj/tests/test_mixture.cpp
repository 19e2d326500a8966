#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "setscreen/error.hpp"
#include "setscreen/mixture.hpp"

using namespace setscreen;

namespace {

constexpr double kLogRoot2Pi = 0.91893853320467274178;

RegionBlock block(std::vector<double> b, std::vector<double> s, std::string id = "r") {
  return {std::move(id), std::move(b), std::move(s)};
}

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogRoot2Pi;
}

std::vector<double> knot_vec(const KnotGrid& g) { return {g.knots().begin(), g.knots().end()}; }

KnotGrid random_grid(std::mt19937_64& rng, std::size_t L) {
  if (L == 1) return KnotGrid({0.25});
  std::uniform_real_distribution<double> width(0.5, 2.0);
  const double w = width(rng);
  std::vector<double> k(L);
  for (std::size_t l = 0; l < L; ++l) k[l] = -w + 2 * w * static_cast<double>(l) / (L - 1);
  return KnotGrid(k);
}

}  // namespace

TEST_CASE("knot grids") {
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.01);
  CHECK(g.size() == 201);
  CHECK(g.has_zero());
  CHECK(g[100] == 0.0);
  CHECK(g[105] == 0.05);
  CHECK(g[5] == -0.95);
  CHECK(g.without_zero().size() == 200);
  CHECK_FALSE(g.without_zero().has_zero());
  CHECK(KnotGrid::from_range(-1.0, 1.0, 0.005).size() == 401);
  CHECK_THROWS_AS(KnotGrid({0.1, 0.1}), ValidationError);
  CHECK_THROWS_AS(KnotGrid({0.2, 0.1}), ValidationError);
  CHECK_THROWS_AS(KnotGrid(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(KnotGrid({0.0, NAN}), ValidationError);
  CHECK_THROWS_AS(KnotGrid::from_range(0.0, 1.0, 0.0), ValidationError);
}

TEST_CASE("grid specs round-trip through their text form") {
  GridSpec a;
  CHECK(a.describe() == "range(-1,1,0.01)");
  GridSpec b;
  b.explicit_knots = std::vector<double>{-0.5, 0.1, 0.5};
  b.drop_zero = true;
  for (const auto& spec : {a, b}) {
    const auto back = GridSpec::parse(spec.describe());
    CHECK(back.describe() == spec.describe());
    CHECK(back.build() == spec.build());
  }
  CHECK_THROWS_AS(GridSpec::parse("range(1,2)"), ValidationError);
  CHECK_THROWS_AS(GridSpec::parse("grid(1,2,3)"), ValidationError);
}

TEST_CASE("log_f0 examples") {
  CHECK(log_f0(block({0.0}, {1.0})) == doctest::Approx(-kLogRoot2Pi).epsilon(1e-15));
  CHECK(log_f0(block({0.0, 0.0}, {1.0, 1.0})) == doctest::Approx(-2 * kLogRoot2Pi).epsilon(1e-15));
  CHECK(std::abs(log_f0(block({0.0}, {1.0})) + 0.9189385) < 1e-7);
}

TEST_CASE("log_f0 matches the direct product in extended precision") {
  std::mt19937_64 rng(31);
  for (const auto& b : oracle::random_blocks(rng, 50, 12)) {
    const double direct = static_cast<double>(std::log(oracle::f0(b)));
    CHECK(std::abs(log_f0(b) - direct) <= 1e-10 * std::max(1.0, std::abs(direct)));
  }
}

TEST_CASE("log_f1 with one knot is the normal log density") {
  const KnotGrid g({-0.3});
  const auto b = block({0.1, -0.5, 0.7}, {0.2, 0.3, 0.4});
  double expect = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) expect += log_normal(b.beta_hat[k], -0.3, b.se[k]);
  CHECK(log_f1(b, g, std::vector<double>{1.0}) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("log_f1 symmetric two-knot example") {
  const double a = 0.4, s = 0.3;
  const KnotGrid g({-a, a});
  const auto b = block({0.0}, {s});
  const double expect = std::log(0.5 * std::exp(log_normal(0.0, -a, s)) +
                                 0.5 * std::exp(log_normal(0.0, a, s)));
  CHECK(log_f1(b, g, std::vector<double>{0.5, 0.5}) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("log_f1 is bounded by the nearest-knot concentration") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const KnotGrid g({-0.6, 0.0, 0.7});
  for (int rep = 0; rep < 10; ++rep) {
    const auto b = block({u(rng)}, {0.2 + 0.3 * (u(rng) + 1)});
    std::size_t nearest = 0;
    for (std::size_t l = 1; l < g.size(); ++l)
      if (std::abs(b.beta_hat[0] - g[l]) < std::abs(b.beta_hat[0] - g[nearest])) nearest = l;
    std::vector<double> conc(3, 0.0);
    conc[nearest] = 1.0;
    const double bound = log_f1(b, g, conc);
    double best = -INFINITY;
    for (int i = 0; i <= 100; ++i)
      for (int j = 0; i + j <= 100; ++j) {
        const std::vector<double> p{i / 100.0, j / 100.0, (100 - i - j) / 100.0};
        const double v = log_f1(b, g, p);
        CHECK(v <= bound + 1e-12);
        best = std::max(best, v);
      }
    CHECK(best == doctest::Approx(bound).epsilon(1e-12));
  }
}

TEST_CASE("log_f1 guards against weights with no density") {
  const KnotGrid g({-0.5, 0.5});
  CHECK_THROWS_AS(log_f1(block({0.1}, {0.2}), g, std::vector<double>{0.0, 0.0}), DegenerateWeights);
}

TEST_CASE("marginal log-likelihood edges and direct evaluation") {
  std::mt19937_64 rng(33);
  const auto blocks = oracle::random_blocks(rng, 8, 4);
  const KnotGrid g({-0.5, 0.2, 0.9});
  const std::vector<double> probs{0.2, 0.5, 0.3};
  double sum0 = 0.0, sum1 = 0.0;
  for (const auto& b : blocks) {
    sum0 += log_f0(b);
    sum1 += log_f1(b, g, probs);
  }
  CHECK(marginal_loglik(blocks, {1.0, probs}, g) == doctest::Approx(sum0).epsilon(1e-14));
  CHECK(marginal_loglik(blocks, {0.0, probs}, g) == doctest::Approx(sum1).epsilon(1e-14));

  // R = 3, M_r = 1, L = 2
  const std::vector<RegionBlock> tiny{block({0.3}, {0.2}), block({-0.1}, {0.25}),
                                      block({0.8}, {0.3})};
  const KnotGrid g2({-0.4, 0.6});
  for (double pi : {0.1, 0.5, 0.83}) {
    const std::vector<double> p{0.35, 0.65};
    const double direct = static_cast<double>(oracle::loglik(tiny, pi, knot_vec(g2), p));
    CHECK(std::abs(marginal_loglik(tiny, {pi, p}, g2) - direct) < 1e-12);
  }
}

TEST_CASE("e_step examples") {
  const std::vector<RegionBlock> blocks{block({0.3, -0.2}, {0.2, 0.3}), block({1.1}, {0.2})};
  const KnotGrid g({-0.5, 0.0, 0.5});
  const auto r1 = e_step(blocks, {1.0, {0.2, 0.3, 0.5}}, g);
  for (double xi : r1.xi) CHECK(xi == 0.0);

  const KnotGrid zero({0.0});
  const auto r2 = e_step(blocks, {0.5, {1.0}}, zero);
  for (double xi : r2.xi) CHECK(xi == doctest::Approx(0.5).epsilon(1e-14));
  for (const auto& gam : r2.gamma) CHECK((gam.array() == 1.0).all());

  const auto r3 = e_step(blocks, {0.3, {0.2, 0.3, 0.5}}, g);
  for (const auto& gam : r3.gamma)
    for (Eigen::Index k = 0; k < gam.rows(); ++k) CHECK(std::abs(gam.row(k).sum() - 1.0) < 1e-12);
  for (double xi : r3.xi) CHECK((xi >= 0.0 && xi <= 1.0));
}

TEST_CASE("m_step examples") {
  const std::vector<RegionBlock> blocks{block({0.3, -0.2}, {0.2, 0.3}), block({1.1}, {0.2})};
  Responsibilities resp;
  resp.xi = {1.0, 1.0};
  resp.gamma = {Eigen::MatrixXd::Constant(2, 4, 0.25), Eigen::MatrixXd::Constant(1, 4, 0.25)};
  const MixtureParams prev{0.4, {0.1, 0.2, 0.3, 0.4}};
  const auto a = m_step(blocks, resp, prev);
  CHECK(a.pi == 0.0);
  for (double p : a.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  resp.xi = {0.0, 0.0};
  const auto b = m_step(blocks, resp, prev);
  CHECK(b.pi == 1.0);
  CHECK(b.probs == prev.probs);

  // Hand arithmetic: xi = (0.6, 0.2); gamma rows (0.5, 0.5), (0.1, 0.9) for
  // region 0 and (1, 0) for region 1.
  resp.xi = {0.6, 0.2};
  resp.gamma = {Eigen::MatrixXd(2, 2), Eigen::MatrixXd(1, 2)};
  resp.gamma[0] << 0.5, 0.5, 0.1, 0.9;
  resp.gamma[1] << 1.0, 0.0;
  const auto c = m_step(blocks, resp, MixtureParams::uniform(2));
  CHECK(c.pi == doctest::Approx((0.4 + 0.8) / 2).epsilon(1e-15));
  const double denom = 2 * 0.6 + 1 * 0.2;
  CHECK(c.probs[0] == doctest::Approx((0.6 * 0.6 + 0.2 * 1.0) / denom).epsilon(1e-14));
  CHECK(c.probs[1] == doctest::Approx((0.6 * 1.4) / denom).epsilon(1e-14));
}

TEST_CASE("m_step output is always a valid parameter") {
  std::mt19937_64 rng(34);
  for (int rep = 0; rep < 50; ++rep) {
    const auto blocks = oracle::random_blocks(rng, 20, 6);
    const auto g = random_grid(rng, 2 + rep % 20);
    MixtureParams p{0.2 + 0.6 * (rep % 7) / 7.0, oracle::random_simplex(rng, g.size())};
    const auto next = m_step(blocks, e_step(blocks, p, g), p);
    CHECK((next.pi >= 0.0 && next.pi <= 1.0));
    double s = 0.0;
    for (double v : next.probs) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("fit_em rejects empty input") {
  CHECK_THROWS_AS(fit_em({}, KnotGrid({0.0}), MixtureParams::uniform(1), 1e-8, 100), NoData);
}

TEST_CASE("fit_em recovers a global null") {
  std::mt19937_64 rng(35);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> se(0.2, 0.5);
  std::vector<RegionBlock> blocks;
  for (int r = 0; r < 200; ++r) {
    RegionBlock b{"r" + std::to_string(r), {}, {}};
    for (int k = 0; k < 1 + r % 8; ++k) {
      b.se.push_back(se(rng));
      b.beta_hat.push_back(b.se.back() * normal(rng));
    }
    blocks.push_back(b);
  }
  // With no knots near zero pi is identified.
  const auto coarse = KnotGrid::from_range(-1.0, 1.0, 0.25).without_zero();
  const auto fit = fit_em(blocks, coarse, MixtureParams::uniform(coarse.size()), 1e-8, 10000);
  CHECK(fit.params.pi >= 0.9);

  // On the default grid knots next to zero mimic the null; only the total
  // null-like mass is identified.
  const auto full = KnotGrid::from_range(-1.0, 1.0, 0.01);
  const auto both = fit_em(blocks, full, MixtureParams::uniform(full.size()), 1e-8, 10000);
  double near_zero = 0.0;
  for (std::size_t l = 0; l < full.size(); ++l)
    if (std::abs(full[l]) <= 0.1 + 1e-12) near_zero += both.params.probs[l];
  CHECK(both.params.pi + (1 - both.params.pi) * near_zero >= 0.9);
}

TEST_CASE("fit_em matches a grid search on tiny instances") {
  std::mt19937_64 rng(36);
  std::normal_distribution<double> normal(0.0, 1.0);
  const KnotGrid g({-0.5, 0.5});
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<RegionBlock> blocks;
    for (int r = 0; r < 6; ++r) {
      const double mean = r < 3 ? 0.0 : (r % 2 ? 0.5 : -0.5);
      blocks.push_back(block({mean + 0.2 * normal(rng)}, {0.2}, "r" + std::to_string(r)));
    }
    const auto fit = fit_em(blocks, g, MixtureParams::uniform(2), 1e-12, 100000);
    double best = -INFINITY, best_pi = 0, best_p = 0;
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 1000; ++j) {
        const double v = marginal_loglik(blocks, {i / 1000.0, {j / 1000.0, 1 - j / 1000.0}}, g);
        if (v > best) best = v, best_pi = i / 1000.0, best_p = j / 1000.0;
      }
    CHECK(std::abs(fit.params.pi - best_pi) < 1e-2);
    CHECK(std::abs(fit.params.probs[0] - best_p) < 1e-2);
  }
}

TEST_CASE("EM log-likelihood never decreases") {
  std::mt19937_64 rng(37);
  for (int rep = 0; rep < 30; ++rep) {
    const auto blocks = oracle::random_blocks(rng, 5 + rep, 8);
    const auto g = random_grid(rng, 1 + rep % 41);
    const auto fit = fit_em(blocks, g, MixtureParams::uniform(g.size()), 1e-10, 2000);
    const auto& ll = fit.trace.loglik;
    for (std::size_t t = 1; t < ll.size(); ++t)
      CHECK(ll[t] >= ll[t - 1] - 1e-9 * std::abs(ll[t - 1]));
  }
}

TEST_CASE("trace log-likelihood agrees with marginal_loglik") {
  std::mt19937_64 rng(38);
  const auto blocks = oracle::random_blocks(rng, 30, 6);
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.1);
  const auto fit = fit_em(blocks, g, MixtureParams::uniform(g.size()), 1e-8, 500);
  CHECK(fit.trace.loglik.back() ==
        doctest::Approx(marginal_loglik(blocks, fit.params, g)).epsilon(1e-10));
  CHECK(fit.trace.n_iter + 1 == static_cast<int>(fit.trace.loglik.size()));
}

TEST_CASE("a fixed point converges in one iteration") {
  std::mt19937_64 rng(39);
  const auto blocks = oracle::random_blocks(rng, 25, 5);
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.25);
  const auto first = fit_em(blocks, g, MixtureParams::uniform(g.size()), 1e-15, 200000);
  const auto again = m_step(blocks, e_step(blocks, first.params, g), first.params);
  CHECK(std::abs(again.pi - first.params.pi) < 1e-8);
  const auto second = fit_em(blocks, g, first.params, 1e-8, 100);
  CHECK(second.trace.n_iter == 1);
  CHECK(second.trace.converged);
}

TEST_CASE("responsibilities are invariant to a common rescaling") {
  std::mt19937_64 rng(40);
  const auto blocks = oracle::random_blocks(rng, 15, 6);
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.2);
  const MixtureParams p{0.6, oracle::random_simplex(rng, g.size())};
  for (double c : {0.01, 3.0, 250.0}) {
    auto scaled = blocks;
    for (auto& b : scaled) {
      for (auto& v : b.beta_hat) v *= c;
      for (auto& v : b.se) v *= c;
    }
    std::vector<double> k = knot_vec(g);
    for (auto& v : k) v *= c;
    const auto a = e_step(blocks, p, g);
    const auto b = e_step(scaled, p, KnotGrid(k));
    for (std::size_t r = 0; r < blocks.size(); ++r) {
      CHECK(std::abs(a.xi[r] - b.xi[r]) < 1e-10);
      CHECK((a.gamma[r] - b.gamma[r]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("permuting regions permutes xi and leaves the fit unchanged") {
  std::mt19937_64 rng(41);
  const auto blocks = oracle::random_blocks(rng, 40, 6);
  std::vector<std::size_t> perm(blocks.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<RegionBlock> shuffled;
  for (auto i : perm) shuffled.push_back(blocks[i]);
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.1);
  const auto a = fit_em(blocks, g, MixtureParams::uniform(g.size()), 1e-10, 5000);
  const auto b = fit_em(shuffled, g, MixtureParams::uniform(g.size()), 1e-10, 5000);
  CHECK(std::abs(a.params.pi - b.params.pi) < 1e-10);
  for (std::size_t l = 0; l < g.size(); ++l)
    CHECK(std::abs(a.params.probs[l] - b.params.probs[l]) < 1e-10);
  const auto ra = e_step(blocks, a.params, g);
  const auto rb = e_step(shuffled, a.params, g);
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(rb.xi[i] == ra.xi[perm[i]]);
}

TEST_CASE("multi-start keeps the best start and is deterministic") {
  std::mt19937_64 rng(42);
  const auto blocks = oracle::random_blocks(rng, 30, 5);
  const auto g = KnotGrid::from_range(-1.0, 1.0, 0.1);
  EmOptions one;
  EmOptions many;
  many.starts = 4;
  many.seed = 9;
  const auto a = fit_em(blocks, g, MixtureParams::uniform(g.size()), one);
  const auto b = fit_em(blocks, g, MixtureParams::uniform(g.size()), many);
  const auto c = fit_em(blocks, g, MixtureParams::uniform(g.size()), many);
  CHECK(b.trace.loglik.back() >= a.trace.loglik.back());
  CHECK(b.params.probs == c.params.probs);
  CHECK(b.best_start == c.best_start);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS((MixtureParams{1.5, {1.0}}.validate(1)), ValidationError);
  CHECK_THROWS_AS((MixtureParams{0.5, {0.5, 0.6}}.validate(2)), ValidationError);
  CHECK_THROWS_AS((MixtureParams{0.5, {1.0}}.validate(2)), ValidationError);
  CHECK_NOTHROW((MixtureParams{0.5, {0.25, 0.75}}.validate(2)));
  CHECK_THROWS_AS(block({0.1}, {0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(block({}, {}).validate(), ValidationError);
}
