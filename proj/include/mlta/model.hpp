#pragma once

// Domain types and pointwise model equations.
//
// Index conventions: components g, segments d, sending nodes i and receiving
// nodes k are all 0-based in the C++ API. Files and reports use 1-based labels.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlta {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// G x R matrix of segment labels in [0, D).
using LabelMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
using LabelVector = Eigen::VectorXi;

/// N x R binary incidence matrix of a bipartite network, with node labels.
class IncidenceMatrix {
 public:
  IncidenceMatrix() = default;
  explicit IncidenceMatrix(Eigen::MatrixXd data);
  IncidenceMatrix(Eigen::MatrixXd data, std::vector<std::string> sending_labels,
                  std::vector<std::string> receiving_labels);

  Index n_sending() const noexcept { return data_.rows(); }
  Index n_receiving() const noexcept { return data_.cols(); }
  const Eigen::MatrixXd& data() const noexcept { return data_; }
  const std::vector<std::string>& sending_labels() const noexcept { return sending_; }
  const std::vector<std::string>& receiving_labels() const noexcept { return receiving_; }

 private:
  Eigen::MatrixXd data_;
  std::vector<std::string> sending_;
  std::vector<std::string> receiving_;
};

/// N x J covariates. Column 0 is always the intercept.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;
  /// `data` must already carry the intercept column.
  CovariateMatrix(Eigen::MatrixXd data, std::vector<std::string> names);

  static CovariateMatrix intercept_only(Index n);
  /// Prepends the intercept column to `raw` (N x (J-1)).
  static CovariateMatrix with_intercept(const Eigen::MatrixXd& raw, std::vector<std::string> names);

  Index rows() const noexcept { return data_.rows(); }
  Index n_covariates() const noexcept { return data_.cols(); }
  const Eigen::MatrixXd& data() const noexcept { return data_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  Eigen::MatrixXd data_;
  std::vector<std::string> names_;
};

template <typename Scalar>
struct BasicModelParams {
  VectorX<Scalar> b;     ///< component intercepts, length G
  VectorX<Scalar> mu;    ///< segment fixed effects, length D
  LabelMatrix A;         ///< G x R segment labels
  MatrixX<Scalar> beta;  ///< (G-1) x J multinomial-logit coefficients; component 0 is the reference

  Index G() const noexcept { return b.size(); }
  Index D() const noexcept { return mu.size(); }
  Index R() const noexcept { return A.cols(); }
  Index J() const noexcept { return beta.cols(); }

  void validate() const {
    if (G() < 1 || D() < 1) throw std::invalid_argument("ModelParams: G and D must be >= 1");
    if (A.rows() != G()) throw std::invalid_argument("ModelParams: A must have G rows");
    if (beta.rows() != G() - 1) throw std::invalid_argument("ModelParams: beta must have G-1 rows");
    if ((A.array() < 0).any() || (A.array() >= static_cast<int>(D())).any())
      throw std::invalid_argument("ModelParams: segment labels must lie in [0, D)");
  }
};

using ModelParams = BasicModelParams<double>;

struct ModelConfig {
  int G = 1;
  int D = 1;
  int Q = 0;  ///< nodes per dimension; 0 selects default_nodes(D)
  double tol = 1e-4;
  int max_iter = 500;
  int n_starts = 100;
  std::uint64_t seed = 1;
  double inner_tol = 1e-8;
  int inner_max_iter = 25;
  int max_halvings = 20;
  int threads = 1;
  std::size_t grid_cap = 1'000'000;
  bool penalize_assignments = false;
  bool polish_assignments = true;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate(Index n_receiving) const;
  int nodes_per_dimension() const;
};

/// Gauss-Hermite nodes per dimension used when the configuration leaves Q unset.
int default_nodes(int D);

template <typename Scalar>
Scalar logistic(Scalar eta) {
  using std::exp;
  if (eta >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-eta));
  const Scalar e = exp(eta);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(t)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar t) {
  using std::exp;
  using std::log1p;
  return t > Scalar(0) ? t + log1p(exp(-t)) : log1p(exp(t));
}

/// log logistic(eta); log(1 - logistic(eta)) is log_logistic(-eta).
template <typename Scalar>
Scalar log_logistic(Scalar eta) {
  return -softplus(-eta);
}

namespace detail {
template <typename Scalar>
void check_component(const BasicModelParams<Scalar>& p, Index g) {
  if (g < 0 || g >= p.G()) throw std::out_of_range("component index out of range");
}
}  // namespace detail

/// b_g + mu_d + u_d with d = A(g, k).
template <typename Scalar, typename Derived>
Scalar linear_predictor(const BasicModelParams<Scalar>& p, Index g, Index k,
                        const Eigen::MatrixBase<Derived>& u) {
  detail::check_component(p, g);
  if (k < 0 || k >= p.R()) throw std::out_of_range("receiving index out of range");
  if (u.size() != p.D()) throw std::invalid_argument("latent trait must have length D");
  const int d = p.A(g, k);
  return p.b(g) + p.mu(d) + Scalar(u(d));
}

template <typename Scalar, typename Derived>
Scalar connection_probability(const BasicModelParams<Scalar>& p, Index g, Index k,
                              const Eigen::MatrixBase<Derived>& u) {
  return logistic(linear_predictor(p, g, k, u));
}

/// log f(y_i | u, z_ig = 1) as a sum of Bernoulli log-masses.
template <typename Scalar, typename DerivedY, typename DerivedU>
Scalar log_conditional_density(const Eigen::MatrixBase<DerivedY>& y_row, const BasicModelParams<Scalar>& p,
                               Index g, const Eigen::MatrixBase<DerivedU>& u) {
  detail::check_component(p, g);
  if (y_row.size() != p.R()) throw std::invalid_argument("response row must have length R");
  Scalar total(0);
  for (Index k = 0; k < p.R(); ++k) {
    const Scalar eta = linear_predictor(p, g, k, u);
    total += y_row(k) != 0 ? log_logistic(eta) : log_logistic(Scalar(-eta));
  }
  return total;
}

/// Linear-space accessor; underflows for long rows, prefer the log form.
template <typename Scalar, typename DerivedY, typename DerivedU>
Scalar conditional_density(const Eigen::MatrixBase<DerivedY>& y_row, const BasicModelParams<Scalar>& p,
                           Index g, const Eigen::MatrixBase<DerivedU>& u) {
  using std::exp;
  return exp(log_conditional_density(y_row, p, g, u));
}

/// log eta(x; beta_g) for every component, reference component first.
template <typename DerivedB, typename DerivedX>
VectorX<typename DerivedB::Scalar> log_mixing_weights(const Eigen::MatrixBase<DerivedB>& beta,
                                                      const Eigen::MatrixBase<DerivedX>& x_row) {
  using Scalar = typename DerivedB::Scalar;
  const Index G = beta.rows() + 1;
  VectorX<Scalar> eta(G);
  eta(0) = Scalar(0);
  if (G > 1) {
    if (x_row.size() != beta.cols()) throw std::invalid_argument("covariate row must have length J");
    eta.tail(G - 1) = beta * x_row.derived().template cast<Scalar>().reshaped(beta.cols(), 1);
  }
  const Scalar top = eta.maxCoeff();
  const Scalar lse = top + std::log((eta.array() - top).exp().sum());
  return eta.array() - lse;
}

template <typename DerivedB, typename DerivedX>
VectorX<typename DerivedB::Scalar> mixing_weights(const Eigen::MatrixBase<DerivedB>& beta,
                                                  const Eigen::MatrixBase<DerivedX>& x_row) {
  return log_mixing_weights(beta, x_row).array().exp();
}

/// nu = G + D + (G-1) J; with `penalize_assignments` the G*R labels are added.
Index count_free_parameters(const ModelConfig& config, Index J, Index R = 0);

}  // namespace mlta
