#pragma once

// Small random regression problems shared by the GLM tests and the
// acceptance run.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace datasets {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Small {
  VectorXd y;
  MatrixXd X;
  VectorXd g;
};

Small random_linear(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::binomial_distribution<int> geno(2, 0.3);
  Small d{VectorXd(n), MatrixXd(n, 3), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = normal(rng);
    d.X(i, 2) = normal(rng) > 0 ? 1.0 : 0.0;
    d.g(i) = geno(rng);
    d.y(i) = 0.3 + 0.5 * d.X(i, 1) - 0.2 * d.X(i, 2) + 0.4 * d.g(i) + normal(rng);
  }
  return d;
}

Small random_logistic(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::binomial_distribution<int> geno(2, 0.3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Small d{VectorXd(n), MatrixXd(n, 2), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = normal(rng);
    d.g(i) = geno(rng);
    const double eta = -0.2 + 0.5 * d.X(i, 1) + 0.4 * d.g(i);
    d.y(i) = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

}  // namespace datasets
