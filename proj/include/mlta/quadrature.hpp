#pragma once

// Gauss-Hermite rules and tensor grids for standard-normal expectations.

#include "mlta/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>

namespace mlta {

/// Nodes and weights for integrals against exp(-x^2).
struct HermiteRule {
  Eigen::VectorXd roots;
  Eigen::VectorXd weights;
};

/// Q-point Gauss-Hermite rule (physicists' convention). Roots ascending,
/// exactly antisymmetric; weights symmetric and summing to sqrt(pi).
HermiteRule hermite_rule(int Q);

/// Tensor-product grid for E[h(u)], u ~ N(0, I_D).
///
/// Node n corresponds to the index tuple (q_0, ..., q_{D-1}) with
/// n = q_0 + Q q_1 + Q^2 q_2 + ..., i.e. the first dimension varies fastest.
struct QuadratureGrid {
  int Q = 0;
  int D = 0;
  Eigen::MatrixXd nodes;         ///< Q^D x D scaled abscissas sqrt(2) * root tuple
  Eigen::VectorXd norm_weights;  ///< Q^D, product weights divided by pi^(D/2)
  Eigen::VectorXd abscissas;     ///< the Q one-dimensional scaled abscissas
  Eigen::VectorXd weights;       ///< the Q one-dimensional normalized weights (sum to 1)

  Index size() const noexcept { return norm_weights.size(); }
  /// Per-dimension index of node n along dimension d.
  int coordinate(Index n, int d) const noexcept;
};

/// Throws ResourceError when Q^D exceeds `cap`.
QuadratureGrid build_grid(int Q, int D, std::size_t cap = 1'000'000);

/// log(sum(exp(v))) with max-subtraction; -inf for an empty or all -inf input.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.derived().array() - top).exp().sum());
}

/// log zeta_ig: the quadrature approximation of log of the integral of
/// f(y_i | u, g) against the standard normal, evaluated over the full grid.
double log_marginal_component_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                         Index g, const QuadratureGrid& grid);

double marginal_component_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                     Index g, const QuadratureGrid& grid);

/// Discrete posterior of u_i given y_i and z_ig = 1 over the grid nodes.
Eigen::VectorXd posterior_node_weights(const Eigen::Ref<const Eigen::VectorXd>& y_row, const ModelParams& params,
                                       Index g, const QuadratureGrid& grid);

}  // namespace mlta
