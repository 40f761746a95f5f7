#include "mlta/quadrature.hpp"

#include "mlta/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>

namespace mlta {

namespace {

// Orthonormal Hermite recurrence at x: returns p_{Q-1}(x) and p_Q(x) where
// p_j = H_j / sqrt(2^j j! sqrt(pi)).
std::pair<double, double> orthonormal_hermite(int Q, double x) {
  double p_prev = 0.0;
  double p = 1.0 / std::pow(std::numbers::pi, 0.25);
  for (int j = 1; j <= Q; ++j) {
    const double next = x * std::sqrt(2.0 / j) * p - std::sqrt((j - 1.0) / j) * p_prev;
    p_prev = p;
    p = next;
  }
  return {p_prev, p};
}

}  // namespace

HermiteRule hermite_rule(int Q) {
  if (Q < 1) throw std::invalid_argument("hermite_rule: Q must be >= 1");
  HermiteRule rule;
  rule.roots.resize(Q);
  rule.weights.resize(Q);
  if (Q == 1) {
    rule.roots(0) = 0.0;
    rule.weights(0) = std::sqrt(std::numbers::pi);
    return rule;
  }

  // Golub-Welsch: eigenvalues of the symmetric Jacobi matrix, then Newton polish.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(Q, Q);
  for (int j = 1; j < Q; ++j) jacobi(j, j - 1) = jacobi(j - 1, j) = std::sqrt(j / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);
  Eigen::VectorXd x = solver.eigenvalues();

  for (int q = 0; q < Q; ++q) {
    for (int it = 0; it < 10; ++it) {
      const auto [pm1, p] = orthonormal_hermite(Q, x(q));
      const double dp = std::sqrt(2.0 * Q) * pm1;
      const double step = p / dp;
      x(q) -= step;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x(q)))) break;
    }
    const auto [pm1, p] = orthonormal_hermite(Q, x(q));
    (void)p;
    const double dp = std::sqrt(2.0 * Q) * pm1;
    rule.weights(q) = 2.0 / (dp * dp);
  }

  // Enforce exact symmetry about zero.
  for (int q = 0; q < Q / 2; ++q) {
    const int m = Q - 1 - q;
    const double r = 0.5 * (x(m) - x(q));
    const double w = 0.5 * (rule.weights(q) + rule.weights(m));
    x(q) = -r;
    x(m) = r;
    rule.weights(q) = rule.weights(m) = w;
  }
  if (Q % 2 == 1) x(Q / 2) = 0.0;
  rule.roots = x;
  return rule;
}

int QuadratureGrid::coordinate(Index n, int d) const noexcept {
  for (int l = 0; l < d; ++l) n /= Q;
  return static_cast<int>(n % Q);
}

QuadratureGrid build_grid(int Q, int D, std::size_t cap) {
  if (Q < 1) throw std::invalid_argument("build_grid: Q must be >= 1");
  if (D < 1) throw std::invalid_argument("build_grid: D must be >= 1");
  double count = std::pow(static_cast<double>(Q), D);
  if (count > static_cast<double>(cap))
    throw ResourceError("build_grid: Q^D = " + std::to_string(Q) + "^" + std::to_string(D) +
                        " exceeds the grid cap of " + std::to_string(cap) + " nodes");

  const HermiteRule rule = hermite_rule(Q);
  QuadratureGrid grid;
  grid.Q = Q;
  grid.D = D;
  grid.abscissas = std::numbers::sqrt2 * rule.roots;
  grid.weights = rule.weights / std::sqrt(std::numbers::pi);

  const auto n_nodes = static_cast<Index>(count);
  grid.nodes.resize(n_nodes, D);
  grid.norm_weights.resize(n_nodes);
  for (Index n = 0; n < n_nodes; ++n) {
    double w = 1.0;
    Index rest = n;
    for (int d = 0; d < D; ++d) {
      const auto q = static_cast<int>(rest % Q);
      rest /= Q;
      grid.nodes(n, d) = grid.abscissas(q);
      w *= grid.weights(q);
    }
    grid.norm_weights(n) = w;
  }
  return grid;
}

namespace {

Eigen::VectorXd log_density_over_grid(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                      Index g, const QuadratureGrid& grid) {
  if (grid.D != params.D()) throw std::invalid_argument("quadrature grid dimension does not match D");
  Eigen::VectorXd log_density(grid.size());
  for (Index n = 0; n < grid.size(); ++n)
    log_density(n) = log_conditional_density(y_row, params, g, grid.nodes.row(n));
  return log_density;
}

Eigen::VectorXd log_joint_over_grid(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                    Index g, const QuadratureGrid& grid) {
  return grid.norm_weights.array().log() + log_density_over_grid(y_row, params, g, grid).array();
}

}  // namespace

double log_marginal_component_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                         Index g, const QuadratureGrid& grid) {
  return log_sum_exp(log_joint_over_grid(y_row, params, g, grid));
}

double marginal_component_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                     Index g, const QuadratureGrid& grid) {
  return std::exp(log_marginal_component_likelihood(y_row, params, g, grid));
}

Eigen::VectorXd posterior_node_weights(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                       Index g, const QuadratureGrid& grid) {
  const Eigen::VectorXd log_density = log_density_over_grid(y_row, params, g, grid);
  // A flat likelihood leaves the prior weights untouched.
  if (log_density.size() > 0 && log_density.maxCoeff() == log_density.minCoeff()) return grid.norm_weights;
  const Eigen::VectorXd log_terms = grid.norm_weights.array().log() + log_density.array();
  const double lse = log_sum_exp(log_terms);
  if (!std::isfinite(lse)) throw std::runtime_error("posterior_node_weights: unnormalizable node weights");
  Eigen::VectorXd w = (log_terms.array() - lse).exp();
  return w / w.sum();
}

}  // namespace mlta
