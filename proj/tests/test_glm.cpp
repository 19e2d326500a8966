#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "datasets.hpp"
#include "oracles.hpp"
#include "setscreen/error.hpp"
#include "setscreen/glm.hpp"
#include "setscreen/mixture.hpp"
#include "setscreen/simulator.hpp"

using namespace setscreen;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using datasets::random_linear;
using datasets::random_logistic;
using datasets::Small;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

GenotypeDataset tiny_dataset() {
  GenotypeDataset d;
  const int n = 6;
  d.outcome = VectorXd(n);
  d.outcome << 1.0, 2.5, 0.3, 1.7, 2.2, 0.9;
  d.covariates = MatrixXd::Ones(n, 1);
  d.covariate_names = {"intercept"};
  d.genotypes = GenotypeMatrix(n, 3);
  const int g1[] = {0, 1, 2, 0, 1, 0};
  const int g3[] = {1, 0, 0, 2, 1, 1};
  for (int i = 0; i < n; ++i) {
    d.genotypes(i, 0) = static_cast<std::int8_t>(g1[i]);
    d.genotypes(i, 2) = static_cast<std::int8_t>(g3[i]);
  }
  d.variant_ids = {"a", "b", "c"};
  d.region_ids = {"R1", "R1", "R2"};
  return d;
}

}  // namespace

TEST_CASE("constant outcome gives zero slope and zero residual variance") {
  VectorXd y = VectorXd::Constant(10, 3.0);
  MatrixXd X = MatrixXd::Ones(10, 1);
  VectorXd g(10);
  g << 0, 1, 0, 2, 1, 0, 0, 1, 0, 1;
  const auto fit = fit_variant_glm(y, X, g, OutcomeFamily::Continuous);
  CHECK(std::abs(fit.beta_hat) < 1e-14);
  CHECK(fit.residual_variance < 1e-28);
}

TEST_CASE("monomorphic genotype is rank deficient") {
  std::mt19937_64 rng(1);
  auto d = random_linear(rng, 30);
  d.g.setZero();
  CHECK_THROWS_AS(fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Continuous), RankDeficient);
  CHECK_THROWS_AS(fit_variant_glm(d.y.cwiseMin(1.0).cwiseMax(0.0).array().round().matrix(), d.X,
                                  d.g, OutcomeFamily::Binary),
                  RankDeficient);
}

TEST_CASE("genotype collinear with a covariate is rank deficient") {
  std::mt19937_64 rng(2);
  auto d = random_linear(rng, 30);
  d.X.col(2) = d.g;
  CHECK_THROWS_AS(fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Continuous), RankDeficient);
}

TEST_CASE("hand-built logistic dataset matches the Newton oracle") {
  VectorXd y(8), g(8);
  MatrixXd X(8, 2);
  y << 0, 1, 0, 1, 1, 0, 1, 0;
  g << 0, 1, 1, 0, 2, 0, 1, 1;
  X.col(0).setOnes();
  X.col(1) << 0.5, -1.2, 0.3, 0.8, -0.4, 1.5, 0.1, -0.7;
  const auto fit = fit_variant_glm(y, X, g, OutcomeFamily::Binary);
  const auto ref = oracle::logistic_fit(y, X, g);
  CHECK(std::abs(fit.beta_hat - static_cast<double>(ref.beta)) < 1e-8);
  CHECK(std::abs(fit.se - static_cast<double>(ref.se)) < 1e-8);
}

TEST_CASE("linear fits match closed-form least squares") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_linear(rng, 40 + rep);
    const auto fit = fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Continuous);
    const auto ref = oracle::linear_fit(d.y, d.X, d.g);
    CHECK(rel(fit.beta_hat, static_cast<double>(ref.beta)) < 1e-10);
    CHECK(rel(fit.se, static_cast<double>(ref.se)) < 1e-10);
  }
}

TEST_CASE("logistic fits match the Newton oracle on random datasets") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_logistic(rng, 80);
    const auto fit = fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Binary);
    const auto ref = oracle::logistic_fit(d.y, d.X, d.g);
    CHECK(std::abs(fit.beta_hat - static_cast<double>(ref.beta)) < 1e-8);
    CHECK(std::abs(fit.se - static_cast<double>(ref.se)) < 1e-8);
  }
}

TEST_CASE("duplicating the data divides the linear se by sqrt(2)") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = random_linear(rng, 35);
    const auto n = d.y.size();
    VectorXd y2(2 * n), g2(2 * n);
    MatrixXd X2(2 * n, d.X.cols());
    y2 << d.y, d.y;
    g2 << d.g, d.g;
    X2 << d.X, d.X;
    const auto once = fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Continuous);
    const auto twice = fit_variant_glm(y2, X2, g2, OutcomeFamily::Continuous);
    CHECK(rel(twice.beta_hat, once.beta_hat) < 1e-12);
    CHECK(rel(twice.se * std::sqrt(2.0), once.se) < 1e-12);
  }
}

TEST_CASE("jointly permuting rows leaves the fit unchanged") {
  std::mt19937_64 rng(6);
  for (auto family : {OutcomeFamily::Continuous, OutcomeFamily::Binary}) {
    const auto d = family == OutcomeFamily::Continuous ? random_linear(rng, 50)
                                                       : random_logistic(rng, 80);
    std::vector<int> perm(static_cast<std::size_t>(d.y.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Small p{VectorXd(d.y.size()), MatrixXd(d.X.rows(), d.X.cols()), VectorXd(d.g.size())};
    for (std::size_t i = 0; i < perm.size(); ++i) {
      p.y(i) = d.y(perm[i]);
      p.X.row(i) = d.X.row(perm[i]);
      p.g(i) = d.g(perm[i]);
    }
    const auto a = fit_variant_glm(d.y, d.X, d.g, family);
    const auto b = fit_variant_glm(p.y, p.X, p.g, family);
    CHECK(rel(b.beta_hat, a.beta_hat) < 1e-12);
    CHECK(rel(b.se, a.se) < 1e-12);
  }
}

TEST_CASE("perfectly separated binary fit is reported as Separation") {
  VectorXd y(40), g(40);
  MatrixXd X = MatrixXd::Ones(40, 1);
  for (int i = 0; i < 40; ++i) {
    g(i) = i < 3 ? 1 : 0;
    y(i) = i < 3 ? 1 : (i % 2);
  }
  CHECK_THROWS_AS(fit_variant_glm(y, X, g, OutcomeFamily::Binary), Separation);
}

TEST_CASE("non-binary outcome is rejected for the binary family") {
  std::mt19937_64 rng(7);
  auto d = random_logistic(rng, 30);
  d.y(3) = 0.5;
  CHECK_THROWS_AS(fit_variant_glm(d.y, d.X, d.g, OutcomeFamily::Binary), ValidationError);
}

TEST_CASE("summarize_dataset marks monomorphic variants and keeps order") {
  const auto d = tiny_dataset();
  const auto s = summarize_dataset(d);
  REQUIRE(s.size() == 3);
  CHECK(s[0].variant_id == "a");
  CHECK(s[1].variant_id == "b");
  CHECK(s[2].variant_id == "c");
  CHECK(s[0].status == VariantStatus::Ok);
  CHECK(s[1].status == VariantStatus::ExcludedMonomorphic);
  CHECK(s[2].status == VariantStatus::Ok);
  for (const auto& v : s) CHECK(v.n_used == 6);
  CHECK(s[0].se > 0.0);
}

TEST_CASE("missing genotypes are fit on complete cases") {
  std::mt19937_64 rng(8);
  const auto base = random_linear(rng, 40);
  GenotypeDataset d;
  d.outcome = base.y;
  d.covariates = base.X;
  d.covariate_names = {"intercept", "x1", "x2"};
  d.genotypes = GenotypeMatrix(40, 1);
  for (int i = 0; i < 40; ++i) d.genotypes(i, 0) = static_cast<std::int8_t>(base.g(i));
  d.genotypes(5, 0) = GenotypeMatrix::kMissing;
  d.genotypes(17, 0) = GenotypeMatrix::kMissing;
  d.variant_ids = {"v"};
  d.region_ids = {"R"};
  const auto s = summarize_dataset(d);
  REQUIRE(s[0].status == VariantStatus::Ok);
  CHECK(s[0].n_used == 38);

  VectorXd y(38), g(38);
  MatrixXd X(38, 3);
  for (int i = 0, k = 0; i < 40; ++i) {
    if (i == 5 || i == 17) continue;
    y(k) = base.y(i);
    g(k) = base.g(i);
    X.row(k) = base.X.row(i);
    ++k;
  }
  const auto ref = fit_variant_glm(y, X, g, OutcomeFamily::Continuous);
  CHECK(s[0].beta_hat == ref.beta_hat);
  CHECK(s[0].se == ref.se);
}

TEST_CASE("summaries do not depend on the thread count") {
  SimConfig cfg;
  cfg.n = 300;
  cfg.regions = 40;
  cfg.seed = 11;
  const auto study = simulate_study(cfg);
  const auto one = summarize_dataset(study.data, {}, 1);
  const auto three = summarize_dataset(study.data, {}, 3);
  CHECK(one == three);
}

TEST_CASE("excluded variants never reach region blocks") {
  const auto d = tiny_dataset();
  const auto blocks = blocks_from_summaries(summarize_dataset(d));
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0].region_id == "R1");
  CHECK(blocks[0].size() == 1);
  CHECK(blocks[1].size() == 1);
}

TEST_CASE("dataset validation names the problem") {
  auto d = tiny_dataset();
  d.genotypes(2, 1) = 3;
  CHECK_THROWS_AS(validate(d), ValidationError);

  d = tiny_dataset();
  d.covariates(1, 0) = 0.5;
  CHECK_THROWS_AS(validate(d), ValidationError);

  d = tiny_dataset();
  d.variant_ids[2] = "a";
  CHECK_THROWS_AS(validate(d), ValidationError);

  d = tiny_dataset();
  d.family = OutcomeFamily::Binary;
  CHECK_THROWS_WITH_AS(validate(d), doctest::Contains("row 2"), ValidationError);

  d = tiny_dataset();
  d.covariates = MatrixXd::Ones(6, 5);
  CHECK_THROWS_AS(validate(d), ValidationError);
}

TEST_CASE("null z-scores of a simulated continuous study are standard normal") {
  SimConfig cfg;
  cfg.seed = 21;
  const auto study = simulate_study(cfg);
  const auto s = summarize_dataset(study.data);
  std::vector<double> z;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (study.truth.true_betas[j] == 0.0 && s[j].status == VariantStatus::Ok)
      z.push_back(s[j].beta_hat / s[j].se);
  REQUIRE(z.size() > 1500);
  std::sort(z.begin(), z.end());
  double ks = 0.0;
  const double m = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double F = 0.5 * std::erfc(-z[i] / std::sqrt(2.0));
    ks = std::max({ks, std::abs(F - i / m), std::abs((i + 1) / m - F)});
  }
  CHECK(ks < 0.05);
}
