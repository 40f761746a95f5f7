#pragma once

// Conversions between the plain oracle containers and library types, plus
// random instance generators shared by the test binaries.

#include "mlta/model.hpp"
#include "mlta/simulation.hpp"
#include "oracles.hpp"

#include <random>
#include <vector>

namespace fixture {

inline mlta::ModelParams to_params(const oracle::Instance& m, mlta::Index J = 1) {
  mlta::ModelParams p;
  const auto G = static_cast<mlta::Index>(m.b.size());
  const auto D = static_cast<mlta::Index>(m.mu.size());
  const auto R = m.A.empty() ? mlta::Index{0} : static_cast<mlta::Index>(m.A[0].size());
  p.b.resize(G);
  p.mu.resize(D);
  p.A.resize(G, R);
  p.beta = Eigen::MatrixXd::Zero(G - 1, J);
  for (mlta::Index g = 0; g < G; ++g) {
    p.b(g) = m.b[static_cast<std::size_t>(g)];
    for (mlta::Index k = 0; k < R; ++k) p.A(g, k) = m.A[static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
  }
  for (mlta::Index d = 0; d < D; ++d) p.mu(d) = m.mu[static_cast<std::size_t>(d)];
  for (std::size_t g = 0; g < m.beta.size(); ++g)
    for (std::size_t j = 0; j < m.beta[g].size(); ++j)
      p.beta(static_cast<mlta::Index>(g), static_cast<mlta::Index>(j)) = m.beta[g][j];
  return p;
}

/// Random instance with entries of b and mu in [-scale, scale], beta ~ N(0, 0.5^2).
inline oracle::Instance random_instance(std::mt19937_64& rng, int G, int D, int R, int J, double scale = 2.0) {
  std::uniform_real_distribution<double> unif(-scale, scale);
  std::normal_distribution<double> normal(0.0, 0.5);
  oracle::Instance m;
  for (int g = 0; g < G; ++g) m.b.push_back(unif(rng));
  for (int d = 0; d < D; ++d) m.mu.push_back(unif(rng));
  m.A.assign(static_cast<std::size_t>(G), std::vector<int>(static_cast<std::size_t>(R)));
  for (auto& row : m.A)
    for (auto& a : row) a = static_cast<int>(rng() % static_cast<unsigned>(D));
  m.beta.assign(static_cast<std::size_t>(G - 1), std::vector<double>(static_cast<std::size_t>(J)));
  for (auto& row : m.beta)
    for (auto& v : row) v = normal(rng);
  return m;
}

inline std::vector<int> random_row(std::mt19937_64& rng, int R) {
  std::vector<int> y(static_cast<std::size_t>(R));
  for (auto& v : y) v = static_cast<int>(rng() % 2);
  return y;
}

inline Eigen::VectorXd to_vector(const std::vector<int>& y) {
  Eigen::VectorXd v(static_cast<mlta::Index>(y.size()));
  for (std::size_t k = 0; k < y.size(); ++k) v(static_cast<mlta::Index>(k)) = y[k];
  return v;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& y) {
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<mlta::Index>(y.size()));
}

/// Generic design: evenly spaced b and mu, one N(1, 1) covariate.
inline mlta::Scenario scenario(int G, int D, mlta::Index N, mlta::Index R, std::uint64_t seed = 1) {
  mlta::Scenario s;
  s.N = N;
  s.R = R;
  s.G = G;
  s.D = D;
  s.b_true = G == 1 ? Eigen::VectorXd(Eigen::VectorXd::Zero(1)) : Eigen::VectorXd(Eigen::VectorXd::LinSpaced(G, -1.5, 1.5));
  s.mu_true =
      D == 1 ? Eigen::VectorXd(Eigen::VectorXd::Constant(1, -0.5)) : Eigen::VectorXd(Eigen::VectorXd::LinSpaced(D, -2.0, 1.0));
  s.beta_true = Eigen::MatrixXd(G - 1, 2);
  for (int g = 0; g + 1 < G; ++g) s.beta_true.row(g) << 0.5 + 0.5 * g, -0.3 - 0.2 * g;
  s.seed = seed;
  s.n_replicates = 1;
  return s;
}

}  // namespace fixture
