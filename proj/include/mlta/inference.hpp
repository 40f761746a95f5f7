#pragma once

// Post-fit inference: per-unit scores, sandwich covariance, BIC/ICL and
// (G, D) model-selection grids.
//
// Continuous parameters are laid out as (b_1..b_G, mu_1..mu_D, vec(beta))
// with beta flattened row by row (component-major). The assignment matrix A
// is held fixed throughout.

#include "mlta/em.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace mlta {

Eigen::VectorXd flatten_parameters(const ModelParams& params);
/// Copies A and dimensions from `like`, values from `theta`.
ModelParams unflatten_parameters(const ModelParams& like, const Eigen::VectorXd& theta);

/// N x nu matrix of per-unit score vectors S_i = d log L_i / d theta.
Eigen::MatrixXd score_matrix(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                             const QuadratureGrid& grid);

/// Score contribution of a single sending node. `x_row` includes the intercept.
Eigen::VectorXd unit_score(const Eigen::Ref<const Eigen::VectorXd>& y_row,
                           const Eigen::Ref<const Eigen::VectorXd>& x_row, const ModelParams& params,
                           const QuadratureGrid& grid);

struct SandwichResult {
  Eigen::MatrixXd covariance;   ///< J^+ K J^+
  Eigen::MatrixXd information;  ///< J, symmetrized central differences of the total score
  Eigen::MatrixXd meat;         ///< K = sum_i S_i S_i'
  /// J is singular beyond the b/mu location direction (which is always
  /// projected out); a pseudo-inverse was used.
  bool information_singular = false;
};

SandwichResult sandwich_covariance(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                                   const QuadratureGrid& grid);

struct InferenceReport {
  Eigen::VectorXd estimates;
  Eigen::VectorXd std_errors;  ///< NaN where the variance came out negative
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  Index nu = 0;
  double bic = 0.0;
  double icl = 0.0;
  bool information_singular = false;
  bool negative_variance = false;
};

InferenceReport infer(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit);

/// -2 l + nu log N
double bic(double log_likelihood, Index nu, Index n);
/// -sum z log z with 0 log 0 = 0.
double classification_entropy(const Eigen::MatrixXd& z_hat);
/// BIC - sum z log z, i.e. BIC plus the classification entropy.
double icl(double bic_value, const Eigen::MatrixXd& z_hat);

struct SelectionRow {
  int G = 0;
  int D = 0;
  double log_likelihood = 0.0;
  Index nu = 0;
  double bic = 0.0;
  double icl = 0.0;
  bool converged = false;
  bool failed = false;
  std::string message;
};

struct SelectionGrid {
  std::vector<SelectionRow> rows;  ///< ordered by (G, D)
  std::pair<int, int> best_bic{0, 0};
  std::pair<int, int> best_icl{0, 0};  ///< minimum ICL
};

/// Fits every (G, D) cell with the multi-start protocol of `config`. Each cell
/// uses the same seed, so the grid does not depend on evaluation order.
SelectionGrid select_model(const IncidenceMatrix& y, const CovariateMatrix& x, const std::vector<int>& G_range,
                           const std::vector<int>& D_range, const ModelConfig& config);

}  // namespace mlta
