#include "mlta/em.hpp"

#include "mlta/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace mlta {

namespace {

constexpr double kDegenerateMass = 1e-6;
constexpr double kSeparationBound = 30.0;
constexpr double kRidge = 1e-8;

// log pi and log(1 - pi) for every (component, segment, abscissa).
struct LinkTable {
  int G = 0;
  int D = 0;
  int Q = 0;
  std::vector<double> log_p;
  std::vector<double> log_q;
  std::vector<double> p;

  std::size_t at(Index g, Index d, Index q) const noexcept {
    return static_cast<std::size_t>((g * D + d) * Q + q);
  }
};

LinkTable link_table(const Eigen::VectorXd& b, const Eigen::VectorXd& mu, const Eigen::VectorXd& abscissas) {
  LinkTable t;
  t.G = static_cast<int>(b.size());
  t.D = static_cast<int>(mu.size());
  t.Q = static_cast<int>(abscissas.size());
  const auto n = static_cast<std::size_t>(t.G * t.D * t.Q);
  t.log_p.resize(n);
  t.log_q.resize(n);
  t.p.resize(n);
  for (Index g = 0; g < t.G; ++g)
    for (Index d = 0; d < t.D; ++d)
      for (Index q = 0; q < t.Q; ++q) {
        const double eta = b(g) + mu(d) + abscissas(q);
        const auto j = t.at(g, d, q);
        t.log_p[j] = log_logistic(eta);
        t.log_q[j] = log_logistic(-eta);
        t.p[j] = logistic(eta);
      }
  return t;
}

// Posterior-weighted link and non-link counts per (component, segment, abscissa).
struct ExpectedCounts {
  int G = 0;
  int D = 0;
  int Q = 0;
  std::vector<double> hits;
  std::vector<double> misses;
};

ExpectedCounts expected_counts(const SegmentCounts& counts, const Posterior& post) {
  ExpectedCounts e;
  e.G = post.G;
  e.D = post.D;
  e.Q = post.Q;
  const auto n = static_cast<std::size_t>(e.G * e.D * e.Q);
  e.hits.assign(n, 0.0);
  e.misses.assign(n, 0.0);
  for (Index i = 0; i < post.N; ++i)
    for (Index g = 0; g < e.G; ++g) {
      const double z = post.z_hat(i, g);
      for (Index d = 0; d < e.D; ++d) {
        const double s = counts.successes[g](i, d);
        const double f = counts.sizes(g, d) - s;
        const auto w = post.marginal(i, g, d);
        for (Index q = 0; q < e.Q; ++q) {
          const auto j = static_cast<std::size_t>((g * e.D + d) * e.Q + q);
          e.hits[j] += z * w(q) * s;
          e.misses[j] += z * w(q) * f;
        }
      }
    }
  return e;
}

double objective(const ExpectedCounts& e, const LinkTable& t) {
  double total = 0.0;
  for (std::size_t j = 0; j < e.hits.size(); ++j) total += e.hits[j] * t.log_p[j] + e.misses[j] * t.log_q[j];
  return total;
}

// Gradient of the expected log-density in (b, mu) and the expected information.
void score_and_information(const ExpectedCounts& e, const LinkTable& t, Eigen::VectorXd& grad,
                           Eigen::MatrixXd* info) {
  const int G = e.G;
  const int D = e.D;
  grad.setZero(G + D);
  if (info) info->setZero(G + D, G + D);
  for (Index g = 0; g < G; ++g)
    for (Index d = 0; d < D; ++d)
      for (Index q = 0; q < e.Q; ++q) {
        const auto j = t.at(g, d, q);
        const double total = e.hits[j] + e.misses[j];
        const double r = e.hits[j] - total * t.p[j];
        grad(g) += r;
        grad(G + d) += r;
        if (info) {
          const double h = total * t.p[j] * (1.0 - t.p[j]);
          (*info)(g, g) += h;
          (*info)(G + d, G + d) += h;
          (*info)(g, G + d) += h;
          (*info)(G + d, g) += h;
        }
      }
}

// Minimum-norm solution of info * step = grad. The (b, mu) information always
// has the null direction (1_G, -1_D); unused segments add further null rows.
Eigen::VectorXd pseudo_solve(const Eigen::MatrixXd& info, const Eigen::VectorXd& grad) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = 1e-10 * std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd coef = eig.eigenvectors().transpose() * grad;
  for (Index j = 0; j < coef.size(); ++j) coef(j) = lambda(j) > cutoff ? coef(j) / lambda(j) : 0.0;
  return eig.eigenvectors() * coef;
}

void check_dimensions(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                      const QuadratureGrid& grid) {
  params.validate();
  if (y.n_receiving() != params.R())
    throw std::invalid_argument("incidence matrix has " + std::to_string(y.n_receiving()) +
                                " receiving nodes but A has " + std::to_string(params.R()) + " columns");
  if (x.rows() != y.n_sending()) throw std::invalid_argument("covariate rows do not match sending nodes");
  if (params.G() > 1 && x.n_covariates() != params.J())
    throw std::invalid_argument("covariate columns do not match beta");
  if (grid.D != params.D()) throw std::invalid_argument("quadrature grid dimension does not match D");
}

}  // namespace

Eigen::VectorXd Posterior::node_weights(Index i, Index g) const {
  Index n_nodes = 1;
  for (int d = 0; d < D; ++d) n_nodes *= Q;
  Eigen::VectorXd w(n_nodes);
  for (Index n = 0; n < n_nodes; ++n) {
    double p = 1.0;
    Index rest = n;
    for (int d = 0; d < D; ++d) {
      p *= dim_weights(row(i, g, d), rest % Q);
      rest /= Q;
    }
    w(n) = p;
  }
  return w;
}

SegmentCounts segment_counts(const Eigen::MatrixXd& y, const LabelMatrix& A, int D) {
  SegmentCounts counts;
  const Index G = A.rows();
  const Index R = A.cols();
  counts.sizes = Eigen::MatrixXd::Zero(G, D);
  counts.successes.reserve(static_cast<std::size_t>(G));
  for (Index g = 0; g < G; ++g) {
    Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(R, D);
    for (Index k = 0; k < R; ++k) one_hot(k, A(g, k)) = 1.0;
    counts.sizes.row(g) = one_hot.colwise().sum();
    counts.successes.push_back(y * one_hot);
  }
  return counts;
}

LabelVector kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: cluster count must lie in [1, number of points]");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index j = 0; j < k; ++j) {
    std::uniform_int_distribution<Index> pick(j, n - 1);
    std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(pick(rng))]);
  }
  Eigen::MatrixXd centroids(k, points.cols());
  for (Index c = 0; c < k; ++c) centroids.row(c) = points.row(order[static_cast<std::size_t>(c)]);

  LabelVector labels = LabelVector::Constant(n, -1);
  Eigen::VectorXd distance(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double dist = (points.row(i) - centroids.row(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      distance(i) = best_d;
      if (labels(i) != best) {
        labels(i) = best;
        changed = true;
      }
    }
    if (!changed) break;

    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(k);
    centroids.setZero();
    for (Index i = 0; i < n; ++i) {
      centroids.row(labels(i)) += points.row(i);
      sizes(labels(i)) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (sizes(c) > 0.0) {
        centroids.row(c) /= sizes(c);
        continue;
      }
      Index far = 0;
      distance.maxCoeff(&far);
      centroids.row(c) = points.row(far);
      labels(far) = c;
      distance(far) = -1.0;
    }
  }
  return labels;
}

ModelParams initialize(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelConfig& config, Rng& rng,
                       int start_index) {
  config.validate(y.n_receiving());
  if (x.rows() != y.n_sending()) throw std::invalid_argument("covariate rows do not match sending nodes");
  if (config.G > y.n_sending()) throw std::invalid_argument("G exceeds the number of sending nodes");
  const Eigen::MatrixXd& Y = y.data();
  const int G = config.G;
  const int D = config.D;

  const LabelVector columns = kmeans(Y.transpose(), D, rng);
  const LabelVector rows = kmeans(Y, G, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd jitter(G);
  for (int g = 0; g < G; ++g) jitter(g) = normal(rng);
  Eigen::VectorXd mu(D);
  for (int d = 0; d < D; ++d) mu(d) = normal(rng);

  ModelParams p;
  p.mu = mu;
  p.b.resize(G);
  for (int g = 0; g < G; ++g) {
    double links = 0.0;
    double cells = 0.0;
    for (Index i = 0; i < Y.rows(); ++i)
      if (rows(i) == g) {
        links += Y.row(i).sum();
        cells += static_cast<double>(Y.cols());
      }
    const double density = std::clamp(cells > 0.0 ? links / cells : 0.5, 0.02, 0.98);
    p.b(g) = std::log(density / (1.0 - density)) - mu.mean() + (start_index > 0 ? 0.1 * jitter(g) : 0.0);
  }
  p.A.resize(G, y.n_receiving());
  for (int g = 0; g < G; ++g) {
    const Index members = (rows.array() == g).count();
    if (members == 0 || start_index % 2 == 0) {
      p.A.row(g) = columns.transpose();
      continue;
    }
    Eigen::MatrixXd block(y.n_receiving(), members);
    for (Index i = 0, c = 0; i < Y.rows(); ++i)
      if (rows(i) == g) block.col(c++) = Y.row(i).transpose();
    p.A.row(g) = kmeans(block, D, rng).transpose();
  }
  p.beta = Eigen::MatrixXd::Zero(G - 1, x.n_covariates());
  return p;
}

namespace {

// Row-wise log-softmax of X beta' with the reference column fixed at zero.
Eigen::MatrixXd log_mixing_matrix(const Eigen::MatrixXd& X, const Eigen::MatrixXd& beta) {
  const Index N = X.rows();
  const Index G = beta.rows() + 1;
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(N, G);
  if (G > 1) logits.rightCols(G - 1) = X * beta.transpose();
  for (Index i = 0; i < N; ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

}  // namespace

Posterior e_step(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                 const QuadratureGrid& grid) {
  check_dimensions(y, x, params, grid);
  const Index N = y.n_sending();
  const int G = static_cast<int>(params.G());
  const int D = static_cast<int>(params.D());
  const int Q = grid.Q;

  const SegmentCounts counts = segment_counts(y.data(), params.A, D);
  const LinkTable table = link_table(params.b, params.mu, grid.abscissas);
  const Eigen::VectorXd log_w = grid.weights.array().log();

  // The segment-d factor of f(y_i | u, g) depends on i only through the link
  // count s_igd, so posteriors are tabulated per (g, d, s).
  std::vector<RowMatrixXd> table_weights(static_cast<std::size_t>(G * D));
  std::vector<Eigen::VectorXd> table_lse(static_cast<std::size_t>(G * D));
  Eigen::VectorXd terms(Q);
  for (Index g = 0; g < G; ++g)
    for (Index d = 0; d < D; ++d) {
      const auto n = static_cast<Index>(counts.sizes(g, d));
      auto& weights = table_weights[static_cast<std::size_t>(g * D + d)];
      auto& lse = table_lse[static_cast<std::size_t>(g * D + d)];
      weights.resize(n + 1, Q);
      lse.resize(n + 1);
      for (Index s = 0; s <= n; ++s) {
        for (Index q = 0; q < Q; ++q) {
          const auto j = table.at(g, d, q);
          terms(q) = log_w(q) + static_cast<double>(s) * table.log_p[j] + static_cast<double>(n - s) * table.log_q[j];
        }
        const double top = terms.maxCoeff();
        Eigen::RowVectorXd e = (terms.array() - top).exp().transpose();
        const double total = e.sum();
        weights.row(s) = e / total;
        lse(s) = top + std::log(total);
      }
    }

  Posterior post;
  post.N = N;
  post.G = G;
  post.D = D;
  post.Q = Q;
  post.z_hat.resize(N, G);
  post.log_zeta.resize(N, G);
  post.log_eta = log_mixing_matrix(x.data(), params.beta);
  post.dim_weights.resize(N * G * D, Q);
  post.u_hat = Eigen::MatrixXd::Zero(N, D);
  post.unit_log_likelihood.resize(N);

  std::vector<Eigen::VectorXd> table_mean(table_weights.size());
  for (std::size_t t = 0; t < table_weights.size(); ++t) table_mean[t] = table_weights[t] * grid.abscissas;

  Eigen::VectorXd joint(G);
  for (Index i = 0; i < N; ++i) {
    for (Index g = 0; g < G; ++g) {
      double log_zeta = 0.0;
      for (Index d = 0; d < D; ++d) {
        const auto s = static_cast<Index>(counts.successes[static_cast<std::size_t>(g)](i, d));
        const auto t = static_cast<std::size_t>(g * D + d);
        post.dim_weights.row(post.row(i, g, d)) = table_weights[t].row(s);
        log_zeta += table_lse[t](s);
      }
      post.log_zeta(i, g) = log_zeta;
    }
    joint = post.log_eta.row(i).transpose() + post.log_zeta.row(i).transpose();
    const double li = log_sum_exp(joint);
    post.unit_log_likelihood(i) = li;
    Eigen::VectorXd z = (joint.array() - li).exp();
    z /= z.sum();
    post.z_hat.row(i) = z.transpose();
    for (Index g = 0; g < G; ++g)
      for (Index d = 0; d < D; ++d) {
        const auto s = static_cast<Index>(counts.successes[static_cast<std::size_t>(g)](i, d));
        post.u_hat(i, d) += z(g) * table_mean[static_cast<std::size_t>(g * D + d)](s);
      }
  }
  post.log_likelihood = post.unit_log_likelihood.sum();
  return post;
}

double observed_log_likelihood(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelParams& params,
                               const QuadratureGrid& grid) {
  return e_step(y, x, params, grid).log_likelihood;
}

double expected_log_density(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                            const QuadratureGrid& grid) {
  const SegmentCounts counts = segment_counts(y.data(), params.A, static_cast<int>(params.D()));
  return objective(expected_counts(counts, posterior), link_table(params.b, params.mu, grid.abscissas));
}

Eigen::VectorXd expected_score_b_mu(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                                    const QuadratureGrid& grid) {
  const SegmentCounts counts = segment_counts(y.data(), params.A, static_cast<int>(params.D()));
  Eigen::VectorXd grad;
  score_and_information(expected_counts(counts, posterior), link_table(params.b, params.mu, grid.abscissas), grad,
                        nullptr);
  return grad;
}

InterceptUpdate m_step_b_mu(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                            const QuadratureGrid& grid, const ModelConfig& config) {
  const int G = static_cast<int>(params.G());
  const int D = static_cast<int>(params.D());
  const SegmentCounts counts = segment_counts(y.data(), params.A, D);
  const ExpectedCounts expected = expected_counts(counts, posterior);

  Eigen::VectorXd theta(G + D);
  theta << params.b, params.mu;
  auto value_at = [&](const Eigen::VectorXd& t) {
    return objective(expected, link_table(t.head(G), t.tail(D), grid.abscissas));
  };

  InterceptUpdate out;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
  double current = value_at(theta);
  for (int it = 0; it < config.inner_max_iter; ++it) {
    score_and_information(expected, link_table(theta.head(G), theta.tail(D), grid.abscissas), grad, &info);
    if (it == 0) out.frozen = (info.diagonal().array() <= 0.0).any();
    if (grad.norm() < config.inner_tol) break;
    const Eigen::VectorXd step = pseudo_solve(info, grad);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h, scale *= 0.5) {
      const Eigen::VectorXd candidate = theta + scale * step;
      const double value = value_at(candidate);
      if (std::isfinite(value) && value >= current) {
        theta = candidate;
        current = value;
        accepted = true;
        break;
      }
    }
    out.iterations = it + 1;
    if (!accepted) break;
  }
  out.b = theta.head(G);
  out.mu = theta.tail(D);
  return out;
}

LabelMatrix m_step_assignments(const IncidenceMatrix& y, const Posterior& posterior, const ModelParams& params,
                               const QuadratureGrid& grid) {
  const Index N = y.n_sending();
  const Index R = y.n_receiving();
  const int G = static_cast<int>(params.G());
  const int D = static_cast<int>(params.D());
  const int Q = grid.Q;
  const LinkTable table = link_table(params.b, params.mu, grid.abscissas);

  LabelMatrix A(G, R);
  Eigen::MatrixXd weighted(N, Q);
  for (Index g = 0; g < G; ++g) {
    Eigen::MatrixXd score(R, D);
    for (Index d = 0; d < D; ++d) {
      for (Index i = 0; i < N; ++i) weighted.row(i) = posterior.z_hat(i, g) * posterior.marginal(i, g, d);
      const Eigen::MatrixXd hits = y.data().transpose() * weighted;  // R x Q
      const Eigen::RowVectorXd mass = weighted.colwise().sum();
      for (Index k = 0; k < R; ++k) {
        double s = 0.0;
        for (Index q = 0; q < Q; ++q) {
          const auto j = table.at(g, d, q);
          s += hits(k, q) * table.log_p[j] + (mass(q) - hits(k, q)) * table.log_q[j];
        }
        score(k, d) = s;
      }
    }
    for (Index k = 0; k < R; ++k) {
      int best = 0;
      for (int d = 1; d < D; ++d)
        if (score(k, d) > score(k, best)) best = d;
      A(g, k) = best;
    }
  }
  return A;
}

double beta_objective(const CovariateMatrix& x, const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& beta) {
  return z_hat.cwiseProduct(log_mixing_matrix(x.data(), beta)).sum();
}

Eigen::MatrixXd beta_gradient(const CovariateMatrix& x, const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& beta) {
  const Index G1 = beta.rows();
  const Eigen::MatrixXd eta = log_mixing_matrix(x.data(), beta).array().exp();
  return (z_hat - eta).rightCols(G1).transpose() * x.data();
}

BetaUpdate m_step_beta(const CovariateMatrix& x, const Posterior& posterior, const ModelParams& params,
                       const ModelConfig& config) {
  BetaUpdate out;
  out.beta = params.beta;
  const Index G1 = params.beta.rows();
  const Index J = params.beta.cols();
  if (G1 == 0) return out;
  if (!x.data().allFinite()) throw std::invalid_argument("m_step_beta: non-finite covariates");
  if (x.n_covariates() != J) throw std::invalid_argument("m_step_beta: covariate columns do not match beta");

  const Eigen::MatrixXd& X = x.data();
  const Index P = G1 * J;
  auto flat = [&](const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(P);
    for (Index g = 0; g < G1; ++g) v.segment(g * J, J) = m.row(g).transpose();
    return v;
  };
  auto unflat = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd m(G1, J);
    for (Index g = 0; g < G1; ++g) m.row(g) = v.segment(g * J, J).transpose();
    return m;
  };

  Eigen::MatrixXd beta = params.beta;
  double current = beta_objective(x, posterior.z_hat, beta);
  for (int it = 0; it < config.inner_max_iter; ++it) {
    const Eigen::MatrixXd eta = log_mixing_matrix(X, beta).array().exp();
    const Eigen::VectorXd grad = flat((posterior.z_hat - eta).rightCols(G1).transpose() * X);
    if (grad.norm() < config.inner_tol) break;

    Eigen::MatrixXd info(P, P);
    for (Index g = 0; g < G1; ++g)
      for (Index h = g; h < G1; ++h) {
        Eigen::VectorXd c = -eta.col(g + 1).cwiseProduct(eta.col(h + 1));
        if (g == h) c += eta.col(g + 1);
        info.block(g * J, h * J, J, J) = X.transpose() * c.asDiagonal() * X;
        if (h != g) info.block(h * J, g * J, J, J) = info.block(g * J, h * J, J, J).transpose();
      }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12)
      ldlt.compute(info + kRidge * Eigen::MatrixXd::Identity(P, P));
    const Eigen::VectorXd step = ldlt.solve(grad);

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h, scale *= 0.5) {
      const Eigen::MatrixXd candidate = unflat(flat(beta) + scale * step);
      const double value = beta_objective(x, posterior.z_hat, candidate);
      if (std::isfinite(value) && value >= current) {
        beta = candidate;
        current = value;
        accepted = true;
        break;
      }
    }
    out.iterations = it + 1;
    if (!accepted) break;
  }
  out.beta = beta;
  out.quasi_separation = (beta.array().abs() > kSeparationBound).any();
  return out;
}

ModelParams permute_components(const ModelParams& params, const std::vector<int>& perm) {
  const Index G = params.G();
  if (static_cast<Index>(perm.size()) != G) throw std::invalid_argument("component permutation has wrong length");
  const Index J = params.J();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(G, J);
  if (G > 1) full.bottomRows(G - 1) = params.beta;

  ModelParams out = params;
  Eigen::MatrixXd moved(G, J);
  for (Index c = 0; c < G; ++c) {
    const int from = perm[static_cast<std::size_t>(c)];
    out.b(c) = params.b(from);
    out.A.row(c) = params.A.row(from);
    moved.row(c) = full.row(from);
  }
  moved.rowwise() -= Eigen::RowVectorXd(moved.row(0));
  out.beta = moved.bottomRows(G - 1);
  return out;
}

ModelParams permute_segments(const ModelParams& params, const std::vector<int>& perm) {
  const Index D = params.D();
  if (static_cast<Index>(perm.size()) != D) throw std::invalid_argument("segment permutation has wrong length");
  std::vector<int> inverse(static_cast<std::size_t>(D));
  ModelParams out = params;
  for (Index e = 0; e < D; ++e) {
    const int from = perm[static_cast<std::size_t>(e)];
    out.mu(e) = params.mu(from);
    inverse[static_cast<std::size_t>(from)] = static_cast<int>(e);
  }
  out.A = params.A.unaryExpr([&](int d) { return inverse[static_cast<std::size_t>(d)]; });
  return out;
}

ModelParams normalize_location(const ModelParams& params) {
  ModelParams out = params;
  const double shift = params.b.mean();
  out.b.array() -= shift;
  out.mu.array() += shift;
  return out;
}

namespace {

std::vector<int> ascending_order(const Eigen::VectorXd& v) {
  std::vector<int> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int c) { return v(a) < v(c); });
  return order;
}

}  // namespace

ModelParams canonicalize(const ModelParams& params) {
  ModelParams out = normalize_location(params);
  out = permute_components(out, ascending_order(out.b));
  return permute_segments(out, ascending_order(out.mu));
}

RunOutcome run_em(const IncidenceMatrix& y, const CovariateMatrix& x, ModelParams start, const QuadratureGrid& grid,
                  const ModelConfig& config) {
  RunOutcome out;
  out.params = std::move(start);
  Posterior post = e_step(y, x, out.params, grid);
  out.trace.push_back(post.log_likelihood);
  if (!std::isfinite(post.log_likelihood)) return out;

  for (int it = 1; it <= config.max_iter; ++it) {
    const InterceptUpdate level = m_step_b_mu(y, post, out.params, grid, config);
    out.params.b = level.b;
    out.params.mu = level.mu;
    out.params.A = m_step_assignments(y, post, out.params, grid);
    const BetaUpdate mix = m_step_beta(x, post, out.params, config);
    out.params.beta = mix.beta;
    out.diagnostics.frozen_parameter = level.frozen;
    out.diagnostics.quasi_separation = mix.quasi_separation;

    const double previous = post.log_likelihood;
    post = e_step(y, x, out.params, grid);
    out.trace.push_back(post.log_likelihood);
    out.n_iter = it;
    if (!std::isfinite(post.log_likelihood)) return out;
    if (std::abs(post.log_likelihood - previous) < config.tol) {
      out.converged = true;
      break;
    }
  }
  out.diagnostics.degenerate = (post.z_hat.colwise().maxCoeff().array() < kDegenerateMass).any();
  return out;
}

RunOutcome polish_assignments(const IncidenceMatrix& y, const CovariateMatrix& x, RunOutcome run,
                              const QuadratureGrid& grid, const ModelConfig& config) {
  const Index G = run.params.G();
  const Index R = run.params.R();
  const int D = static_cast<int>(run.params.D());
  if (D < 2 || run.trace.empty() || !std::isfinite(run.trace.back())) return run;

  std::vector<std::vector<int>> relabelings;
  if (D <= 4) {
    std::vector<int> perm(static_cast<std::size_t>(D));
    std::iota(perm.begin(), perm.end(), 0);
    while (std::next_permutation(perm.begin(), perm.end())) relabelings.push_back(perm);
  }

  auto adopt = [&run](RunOutcome next) {
    run.trace.insert(run.trace.end(), next.trace.begin(), next.trace.end());
    run.params = std::move(next.params);
    run.n_iter += next.n_iter;
    run.converged = next.converged;
    run.diagnostics = next.diagnostics;
  };

  for (Index round = 0; round < G * R; ++round) {
    double best = run.trace.back() + config.tol;
    std::optional<LabelMatrix> best_A;
    ModelParams candidate = run.params;
    for (Index g = 0; g < G; ++g)
      for (Index k = 0; k < R; ++k) {
        const int keep = run.params.A(g, k);
        for (int d = 0; d < D; ++d) {
          if (d == keep) continue;
          candidate.A(g, k) = d;
          const double l = observed_log_likelihood(y, x, candidate, grid);
          if (l > best) {
            best = l;
            best_A = candidate.A;
          }
        }
        candidate.A(g, k) = keep;
      }
    if (best_A) {
      candidate.A = *best_A;
      adopt(run_em(y, x, candidate, grid, config));
      continue;
    }

    // Whole-row moves only pay off once b and mu have adjusted, so each
    // candidate is judged after its own EM run. Candidates per component: every
    // relabeling of its segments, and a fresh row from k-means on the column
    // densities among its MAP members.
    std::vector<ModelParams> candidates;
    const LabelVector members = map_labels(e_step(y, x, run.params, grid).z_hat);
    for (Index g = 0; g < G; ++g) {
      for (const auto& perm : relabelings) {
        candidate = run.params;
        for (Index k = 0; k < R; ++k) candidate.A(g, k) = perm[static_cast<std::size_t>(run.params.A(g, k))];
        candidates.push_back(candidate);
      }
      const Index n_g = (members.array() == g).count();
      if (n_g == 0) continue;
      Eigen::VectorXd column_density = Eigen::VectorXd::Zero(R);
      for (Index i = 0; i < y.n_sending(); ++i)
        if (members(i) == g) column_density += y.data().row(i).transpose();
      column_density /= static_cast<double>(n_g);
      Rng rng = make_stream(config.seed, 0x9e11a5ULL + static_cast<std::uint64_t>(g));
      const LabelVector clusters = kmeans(column_density, D, rng);
      Eigen::VectorXd density = Eigen::VectorXd::Zero(D);
      Eigen::VectorXd size = Eigen::VectorXd::Zero(D);
      for (Index k = 0; k < R; ++k) {
        density(clusters(k)) += column_density(k);
        size(clusters(k)) += 1.0;
      }
      density = density.cwiseQuotient(size.cwiseMax(1.0));
      std::vector<int> by_density(static_cast<std::size_t>(D));
      std::iota(by_density.begin(), by_density.end(), 0);
      std::stable_sort(by_density.begin(), by_density.end(), [&](int a, int b) { return density(a) < density(b); });
      std::vector<int> by_mu(static_cast<std::size_t>(D));
      std::iota(by_mu.begin(), by_mu.end(), 0);
      std::stable_sort(by_mu.begin(), by_mu.end(), [&](int a, int b) { return run.params.mu(a) < run.params.mu(b); });
      std::vector<int> segment_of(static_cast<std::size_t>(D));
      for (int r = 0; r < D; ++r) segment_of[static_cast<std::size_t>(by_density[static_cast<std::size_t>(r)])] =
          by_mu[static_cast<std::size_t>(r)];
      candidate = run.params;
      for (Index k = 0; k < R; ++k) candidate.A(g, k) = segment_of[static_cast<std::size_t>(clusters(k))];
      if (candidate.A.row(g) != run.params.A.row(g)) candidates.push_back(candidate);
    }
    std::optional<RunOutcome> best_run;
    for (auto& start : candidates) {
      RunOutcome trial = run_em(y, x, std::move(start), grid, config);
      if (trial.trace.back() > best) {
        best = trial.trace.back();
        best_run = std::move(trial);
      }
    }
    if (!best_run) break;
    // The trace records the search as a sequence of accepted states, so the
    // part of the trial run below the current value is not appended.
    auto& t = best_run->trace;
    const double current = run.trace.back();
    t.erase(t.begin(), std::find_if(t.begin(), t.end(), [current](double v) { return v >= current; }));
    adopt(std::move(*best_run));
  }
  return run;
}

LabelVector map_labels(const Eigen::MatrixXd& z_hat) {
  LabelVector labels(z_hat.rows());
  for (Index i = 0; i < z_hat.rows(); ++i) {
    int best = 0;
    for (int g = 1; g < z_hat.cols(); ++g)
      if (z_hat(i, g) > z_hat(i, best)) best = g;
    labels(i) = best;
  }
  return labels;
}

FitResult fit(const IncidenceMatrix& y, const CovariateMatrix& x, const ModelConfig& config) {
  config.validate(y.n_receiving());
  if (x.rows() != y.n_sending()) throw std::invalid_argument("covariate rows do not match sending nodes");
  const QuadratureGrid grid = build_grid(config.nodes_per_dimension(), config.D, config.grid_cap);

  const auto n_starts = static_cast<std::size_t>(config.n_starts);
  std::vector<std::optional<RunOutcome>> outcomes(n_starts);
  std::vector<StartSummary> summaries(n_starts);
  parallel_for(config.n_starts, config.threads, [&](std::int64_t s) {
    auto& summary = summaries[static_cast<std::size_t>(s)];
    summary.start = static_cast<int>(s);
    try {
      Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(s));
      RunOutcome run = run_em(y, x, initialize(y, x, config, rng, static_cast<int>(s)), grid, config);
      summary.log_likelihood = run.trace.back();
      summary.n_iter = run.n_iter;
      summary.converged = run.converged;
      summary.degenerate = run.diagnostics.degenerate;
      summary.failed = !std::isfinite(summary.log_likelihood);
      if (summary.failed) summary.message = "non-finite log-likelihood";
      outcomes[static_cast<std::size_t>(s)] = std::move(run);
    } catch (const std::exception& e) {
      summary.failed = true;
      summary.message = e.what();
    }
  });

  std::optional<std::size_t> best;
  bool all_degenerate = true;
  for (const auto& s : summaries)
    if (!s.failed && !s.degenerate) all_degenerate = false;
  for (std::size_t s = 0; s < n_starts; ++s) {
    const auto& summary = summaries[s];
    if (summary.failed || (summary.degenerate && !all_degenerate)) continue;
    if (!best || summary.log_likelihood > summaries[*best].log_likelihood) best = s;
  }
  if (!best) {
    std::vector<std::string> diagnostics;
    for (const auto& s : summaries) diagnostics.push_back("start " + std::to_string(s.start) + ": " + s.message);
    throw EstimationError("all " + std::to_string(n_starts) + " EM starts failed", std::move(diagnostics));
  }

  RunOutcome winner = std::move(*outcomes[*best]);
  if (config.polish_assignments) winner = polish_assignments(y, x, std::move(winner), grid, config);
  FitResult result;
  result.params = canonicalize(winner.params);
  const Posterior post = e_step(y, x, result.params, grid);
  result.log_likelihood = post.log_likelihood;
  result.n_iter = winner.n_iter;
  result.converged = winner.converged;
  result.z_hat = post.z_hat;
  result.sending_assignment = map_labels(post.z_hat);
  result.receiving_assignment = result.params.A;
  result.u_hat = post.u_hat;
  result.trace = std::move(winner.trace);
  result.seed_used = config.seed;
  result.start_index = static_cast<int>(*best);
  result.diagnostics = winner.diagnostics;
  result.starts = std::move(summaries);
  result.config = config;
  return result;
}

Classification classify(const FitResult& fit) { return {map_labels(fit.z_hat), fit.params.A}; }

}  // namespace mlta
