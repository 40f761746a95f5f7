#pragma once

// EM estimation: initialization, E-step, the three conditional M-steps,
// multi-start orchestration and MAP classification.
//
// Each receiving node loads on a single coordinate of the latent trait and the
// trait has identity covariance, so f(y_i | u, g) factorizes over segments and
// every grid expectation reduces to D one-dimensional sums. The engine works
// with those per-dimension posterior marginals; the tensor-grid view is
// available through Posterior::node_weights.

#include "mlta/model.hpp"
#include "mlta/parallel.hpp"
#include "mlta/quadrature.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mlta {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Posterior {
  Index N = 0;
  int G = 0;
  int D = 0;
  int Q = 0;
  Eigen::MatrixXd z_hat;     ///< N x G posterior component probabilities
  Eigen::MatrixXd log_zeta;  ///< N x G log marginal component likelihoods
  Eigen::MatrixXd log_eta;   ///< N x G log prior mixing weights
  /// Posterior marginal of u_id given (y_i, z_ig = 1) over the Q abscissas;
  /// row (i * G + g) * D + d.
  RowMatrixXd dim_weights;
  Eigen::MatrixXd u_hat;  ///< N x D posterior mean latent traits
  Eigen::VectorXd unit_log_likelihood;
  double log_likelihood = 0.0;

  Index row(Index i, Index g, Index d) const noexcept { return (i * G + g) * D + d; }
  auto marginal(Index i, Index g, Index d) const { return dim_weights.row(row(i, g, d)); }
  /// Full posterior over the Q^D tensor grid nodes (ordering as in QuadratureGrid).
  Eigen::VectorXd node_weights(Index i, Index g) const;
};

/// s_igd = number of links from i to segment d of component g, and segment sizes n_gd.
struct SegmentCounts {
  std::vector<Eigen::MatrixXd> successes;  ///< G entries, each N x D
  Eigen::MatrixXd sizes;                   ///< G x D
};

SegmentCounts segment_counts(const Eigen::MatrixXd& y, const LabelMatrix& A, int D);

struct FitDiagnostics {
  bool frozen_parameter = false;  ///< an intercept or segment effect had no information
  bool quasi_separation = false;  ///< some |beta| exceeded 30
  bool degenerate = false;        ///< a component lost all posterior mass
};

struct StartSummary {
  int start = 0;
  double log_likelihood = 0.0;
  int n_iter = 0;
  bool converged = false;
  bool degenerate = false;
  bool failed = false;
  std::string message;
};

struct FitResult {
  ModelParams params;
  double log_likelihood = 0.0;
  int n_iter = 0;
  bool converged = false;
  Eigen::MatrixXd z_hat;
  LabelVector sending_assignment;
  LabelMatrix receiving_assignment;
  Eigen::MatrixXd u_hat;
  std::vector<double> trace;
  std::uint64_t seed_used = 0;
  int start_index = 0;
  FitDiagnostics diagnostics;
  std::vector<StartSummary> starts;
  ModelConfig config;
};

/// Column-wise Lloyd k-means on the rows of `points`. Initial centroids are k
/// distinct random rows; empty clusters are reseeded to the farthest point.
LabelVector kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter = 50);

/// Starting values for one EM run: beta = 0, b warm-started from row k-means,
/// mu standard normal. A comes from column k-means, replicated over components
/// on even starts and run within each row cluster on odd starts.
ModelParams initialize(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelConfig& config, Rng& rng,
                       int start_index = 0);

Posterior e_step(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                 const QuadratureGrid& grid);

double observed_log_likelihood(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                               const QuadratureGrid& grid);

/// The part of Q(theta | theta_t) that depends on (b, mu, A): the expected
/// Bernoulli log-density under the posterior held in `posterior`.
double expected_log_density(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                            const QuadratureGrid& grid);

/// Gradient of expected_log_density with respect to (b, mu).
Eigen::VectorXd expected_score_b_mu(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                                    const QuadratureGrid& grid);

struct InterceptUpdate {
  Eigen::VectorXd b;
  Eigen::VectorXd mu;
  int iterations = 0;
  bool frozen = false;
};

InterceptUpdate m_step_b_mu(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                            const QuadratureGrid& grid, const ModelConfig& config);

LabelMatrix m_step_assignments(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                               const QuadratureGrid& grid);

/// sum_i sum_g z_ig log eta(x_i; beta_g)
double beta_objective(const CovariateMatrix& x, const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& beta);
/// (G-1) x J gradient of beta_objective.
Eigen::MatrixXd beta_gradient(const CovariateMatrix& x, const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& beta);

struct BetaUpdate {
  Eigen::MatrixXd beta;
  int iterations = 0;
  bool quasi_separation = false;
};

BetaUpdate m_step_beta(const CovariateMatrix& x, const Posterior& posterior, const ModelParams& params,
                       const ModelConfig& config);

/// Relabels components: new component c is old component perm[c]. beta is
/// re-expressed against the new reference component.
ModelParams permute_components(const ModelParams& params, const std::vector<int>& perm);
/// Relabels segments: new segment e is old segment perm[e].
ModelParams permute_segments(const ModelParams& params, const std::vector<int>& perm);

/// Shifts the b/mu split so that mean(b) = 0; the likelihood is unchanged.
ModelParams normalize_location(const ModelParams& params);

/// Components by ascending b, segments by ascending mu, location normalized.
ModelParams canonicalize(const ModelParams& params);

struct RunOutcome {
  ModelParams params;
  std::vector<double> trace;
  int n_iter = 0;
  bool converged = false;
  FitDiagnostics diagnostics;
};

/// One EM run from the given starting point.
RunOutcome run_em(const IncidenceMatrix& y, const CovariateMatrix& x, ModelParams start, const QuadratureGrid& grid,
                  const ModelConfig& config);

/// Greedy local search on A after EM. Single-entry changes are tried first;
/// the best one that raises the observed log-likelihood by more than
/// config.tol is applied and EM is rerun. When none helps, whole rows of A
/// are proposed per component: every relabeling of its segments (D <= 4) and
/// the row obtained by 1-D k-means on the column densities of the
/// component's members, ranked against mu. Each row candidate is judged after
/// its own EM run. The search repeats until no move helps. The returned trace
/// extends the input trace and stays non-decreasing.
RunOutcome polish_assignments(const IncidenceMatrix& y, const CovariateMatrix& x, RunOutcome run,
                              const QuadratureGrid& grid, const ModelConfig& config);

/// Multi-start EM. The best start is passed through polish_assignments when
/// config.polish_assignments is set. Throws EstimationError when no start yields a finite likelihood.
FitResult fit(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelConfig& config);

struct Classification {
  LabelVector sending;
  LabelMatrix receiving;
};

/// argmax_g z_ig with ties to the lowest index, rows of a probability matrix.
LabelVector map_labels(const Eigen::MatrixXd& z_hat);

Classification classify(const FitResult& fit);

}  // namespace mlta
