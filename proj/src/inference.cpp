#include "mlta/inference.hpp"

#include "mlta/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlta {

namespace {

constexpr double kZ95 = 1.96;

}  // namespace

Eigen::VectorXd flatten_parameters(const ModelParams& params) {
  const Index G = params.G();
  const Index D = params.D();
  const Index J = params.J();
  Eigen::VectorXd theta(G + D + (G - 1) * J);
  theta.head(G) = params.b;
  theta.segment(G, D) = params.mu;
  for (Index g = 0; g + 1 < G; ++g) theta.segment(G + D + g * J, J) = params.beta.row(g).transpose();
  return theta;
}

ModelParams unflatten_parameters(const ModelParams& like, const Eigen::VectorXd& theta) {
  const Index G = like.G();
  const Index D = like.D();
  const Index J = like.J();
  if (theta.size() != G + D + (G - 1) * J) throw std::invalid_argument("parameter vector has wrong length");
  ModelParams out = like;
  out.b = theta.head(G);
  out.mu = theta.segment(G, D);
  for (Index g = 0; g + 1 < G; ++g) out.beta.row(g) = theta.segment(G + D + g * J, J).transpose();
  return out;
}

Eigen::MatrixXd score_matrix(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                             const QuadratureGrid& grid) {
  const Posterior post = e_step(y, x, params, grid);
  const Index N = y.n_sending();
  const Index G = params.G();
  const Index D = params.D();
  const Index J = params.J();
  const SegmentCounts counts = segment_counts(y.data(), params.A, static_cast<int>(D));

  // Expected residual s - n pi for every (g, d, abscissa).
  Eigen::MatrixXd prob(G * D, grid.Q);
  for (Index g = 0; g < G; ++g)
    for (Index d = 0; d < D; ++d)
      for (Index q = 0; q < grid.Q; ++q) prob(g * D + d, q) = logistic(params.b(g) + params.mu(d) + grid.abscissas(q));

  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(N, G + D + (G - 1) * J);
  for (Index i = 0; i < N; ++i) {
    const Eigen::VectorXd eta = post.log_eta.row(i).array().exp();
    for (Index g = 0; g < G; ++g) {
      const double z = post.z_hat(i, g);
      for (Index d = 0; d < D; ++d) {
        const double s = counts.successes[static_cast<std::size_t>(g)](i, d);
        const double n = counts.sizes(g, d);
        const double residual = s - n * post.marginal(i, g, d).dot(prob.row(g * D + d));
        scores(i, g) += z * residual;
        scores(i, G + d) += z * residual;
      }
      if (g > 0) scores.row(i).segment(G + D + (g - 1) * J, J) = (z - eta(g)) * x.data().row(i);
    }
  }
  return scores;
}

Eigen::VectorXd unit_score(const Eigen::Ref<const Eigen::VectorXd>& y_row,
                           const Eigen::Ref<const Eigen::VectorXd>& x_row, const ModelParams& params,
                           const QuadratureGrid& grid) {
  std::vector<std::string> names(static_cast<std::size_t>(x_row.size()), "x");
  const IncidenceMatrix y(y_row.transpose(), {"unit"}, std::vector<std::string>(y_row.size(), "r"));
  const CovariateMatrix x(x_row.transpose(), names);
  return score_matrix(y, x, params, grid).row(0).transpose();
}

SandwichResult sandwich_covariance(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                                   const QuadratureGrid& grid) {
  const Eigen::VectorXd theta = flatten_parameters(params);
  const Index nu = theta.size();
  const Index G = params.G();
  const Index D = params.D();

  SandwichResult out;
  const Eigen::MatrixXd scores = score_matrix(y, x, params, grid);
  out.meat = scores.transpose() * scores;

  auto total_score = [&](const Eigen::VectorXd& t) {
    return Eigen::VectorXd(score_matrix(y, x, unflatten_parameters(params, t), grid).colwise().sum().transpose());
  };
  out.information.resize(nu, nu);
  for (Index j = 0; j < nu; ++j) {
    const double h = std::max(1e-5, 1e-5 * std::abs(theta(j)));
    Eigen::VectorXd up = theta;
    Eigen::VectorXd down = theta;
    up(j) += h;
    down(j) -= h;
    out.information.col(j) = -(total_score(up) - total_score(down)) / (2.0 * h);
  }
  out.information = 0.5 * (out.information + out.information.transpose()).eval();

  // Shifting every b_g up and every mu_d down by the same amount leaves the
  // likelihood unchanged; that direction is removed before inverting.
  Eigen::VectorXd location = Eigen::VectorXd::Zero(nu);
  location.head(G).setOnes();
  location.segment(G, D).setConstant(-1.0);
  location.normalize();
  const Eigen::MatrixXd projector = Eigen::MatrixXd::Identity(nu, nu) - location * location.transpose();
  const Eigen::MatrixXd projected = projector * out.information * projector;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projected);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = 1e-8 * std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv_lambda(nu);
  int dropped = 0;
  for (Index j = 0; j < nu; ++j) {
    if (std::abs(lambda(j)) > cutoff) {
      inv_lambda(j) = 1.0 / lambda(j);
    } else {
      inv_lambda(j) = 0.0;
      ++dropped;
    }
  }
  out.information_singular = dropped > 1;
  const Eigen::MatrixXd inverse = eig.eigenvectors() * inv_lambda.asDiagonal() * eig.eigenvectors().transpose();
  out.covariance = inverse * out.meat * inverse;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

double bic(double log_likelihood, Index nu, Index n) {
  if (n < 1) throw std::invalid_argument("bic: N must be >= 1");
  return -2.0 * log_likelihood + static_cast<double>(nu) * std::log(static_cast<double>(n));
}

double classification_entropy(const Eigen::MatrixXd& z_hat) {
  double h = 0.0;
  for (Index i = 0; i < z_hat.rows(); ++i)
    for (Index g = 0; g < z_hat.cols(); ++g)
      if (z_hat(i, g) > 0.0) h -= z_hat(i, g) * std::log(z_hat(i, g));
  return h;
}

double icl(double bic_value, const Eigen::MatrixXd& z_hat) { return bic_value + classification_entropy(z_hat); }

InferenceReport infer(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit) {
  const QuadratureGrid grid = build_grid(fit.config.nodes_per_dimension(), static_cast<int>(fit.params.D()),
                                         fit.config.grid_cap);
  const SandwichResult sandwich = sandwich_covariance(y, x, fit.params, grid);

  InferenceReport report;
  report.estimates = flatten_parameters(fit.params);
  report.covariance = sandwich.covariance;
  report.information_singular = sandwich.information_singular;
  const Index nu = report.estimates.size();
  report.std_errors.resize(nu);
  for (Index j = 0; j < nu; ++j) {
    const double v = sandwich.covariance(j, j);
    if (v < 0.0 || !std::isfinite(v)) {
      report.negative_variance = true;
      report.std_errors(j) = std::numeric_limits<double>::quiet_NaN();
    } else {
      report.std_errors(j) = std::sqrt(v);
    }
  }
  report.ci_lower = report.estimates - kZ95 * report.std_errors;
  report.ci_upper = report.estimates + kZ95 * report.std_errors;
  report.log_likelihood = fit.log_likelihood;
  ModelConfig cfg = fit.config;
  cfg.G = static_cast<int>(fit.params.G());
  cfg.D = static_cast<int>(fit.params.D());
  report.nu = count_free_parameters(cfg, x.n_covariates(), y.n_receiving());
  report.bic = bic(fit.log_likelihood, report.nu, y.n_sending());
  report.icl = icl(report.bic, fit.z_hat);
  return report;
}

SelectionGrid select_model(const IncidenceMatrix& y, const CovariateMatrix& x, const std::vector<int>& G_range,
                           const std::vector<int>& D_range, const ModelConfig& config) {
  if (G_range.empty() || D_range.empty()) throw std::invalid_argument("select_model: empty G or D range");
  SelectionGrid grid;
  for (int G : G_range)
    for (int D : D_range) {
      SelectionRow row;
      row.G = G;
      row.D = D;
      ModelConfig cell = config;
      cell.G = G;
      cell.D = D;
      try {
        const FitResult f = fit(y, x, cell);
        row.log_likelihood = f.log_likelihood;
        row.nu = count_free_parameters(cell, x.n_covariates(), y.n_receiving());
        row.bic = bic(f.log_likelihood, row.nu, y.n_sending());
        row.icl = icl(row.bic, f.z_hat);
        row.converged = f.converged;
      } catch (const std::exception& e) {
        row.failed = true;
        row.message = e.what();
      }
      grid.rows.push_back(row);
    }

  std::sort(grid.rows.begin(), grid.rows.end(),
            [](const SelectionRow& a, const SelectionRow& b) { return std::pair(a.G, a.D) < std::pair(b.G, b.D); });
  const SelectionRow* best_bic = nullptr;
  const SelectionRow* best_icl = nullptr;
  for (const auto& row : grid.rows) {
    if (row.failed) continue;
    if (!best_bic || row.bic < best_bic->bic) best_bic = &row;
    if (!best_icl || row.icl < best_icl->icl) best_icl = &row;
  }
  if (!best_bic) throw EstimationError("select_model: every (G, D) cell failed");
  grid.best_bic = {best_bic->G, best_bic->D};
  grid.best_icl = {best_icl->G, best_icl->D};
  return grid;
}

}  // namespace mlta
