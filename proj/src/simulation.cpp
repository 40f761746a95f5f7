#include "mlta/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace mlta {

void Scenario::validate() const {
  if (N < 2 || R < 1 || G < 1 || D < 1) throw std::invalid_argument("scenario: invalid dimensions");
  if (D > R) throw std::invalid_argument("scenario: D exceeds R");
  if (b_true.size() != G || mu_true.size() != D) throw std::invalid_argument("scenario: b or mu has wrong length");
  if (beta_true.rows() != G - 1 || beta_true.cols() < 1) throw std::invalid_argument("scenario: beta has wrong shape");
  if (n_replicates < 1) throw std::invalid_argument("scenario: n_replicates must be >= 1");
  if (!(covariate_variance >= 0.0)) throw std::invalid_argument("scenario: negative covariate variance");
}

Scenario Scenario::reference(int G, int D, Index N, Index R) {
  Scenario s;
  s.N = N;
  s.R = R;
  s.G = G;
  s.D = D;
  if (G == 3 && D == 2) {
    s.b_true = Eigen::Vector3d(-1.7, 0.0, 1.7);
    s.mu_true = Eigen::Vector2d(-2.0, 0.5);
    s.beta_true.resize(2, 2);
    s.beta_true << 1.0, -0.4, 1.5, -0.9;
  } else if (G == 4 && D == 3) {
    s.b_true = Eigen::Vector4d(-1.7, 0.0, 1.7, 0.7);
    s.mu_true = Eigen::Vector3d(-2.0, 0.5, 1.5);
    s.beta_true.resize(3, 2);
    s.beta_true << 1.0, -0.4, 1.5, -0.9, 2.0, -1.3;
  } else {
    throw std::invalid_argument("reference scenario exists only for (G, D) = (3, 2) or (4, 3)");
  }
  return s;
}

LabelVector balanced_blocks(Index R, int D) {
  LabelVector labels(R);
  const Index base = R / D;
  const Index extra = R % D;
  Index k = 0;
  for (int d = 0; d < D; ++d) {
    const Index len = base + (d < extra ? 1 : 0);
    for (Index j = 0; j < len; ++j) labels(k++) = d;
  }
  return labels;
}

SimulatedData generate(const Scenario& scenario, int replicate) {
  scenario.validate();
  Rng rng = make_stream(scenario.seed, static_cast<std::uint64_t>(replicate));
  const Index N = scenario.N;
  const Index R = scenario.R;
  const int G = scenario.G;
  const int D = scenario.D;
  const Index J = scenario.J();

  ModelParams truth;
  truth.b = scenario.b_true;
  truth.mu = scenario.mu_true;
  truth.beta = scenario.beta_true;
  truth.A.resize(G, R);
  const LabelVector blocks = balanced_blocks(R, D);
  for (int g = 0; g < G; ++g) {
    LabelVector row = blocks;
    if (scenario.layout == SegmentLayout::random_per_component) {
      for (Index k = R - 1; k > 0; --k) {
        std::uniform_int_distribution<Index> pick(0, k);
        std::swap(row(k), row(pick(rng)));
      }
    }
    truth.A.row(g) = row.transpose();
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double sd = std::sqrt(scenario.covariate_variance);

  Eigen::MatrixXd X(N, J);
  Eigen::MatrixXd Y(N, R);
  Eigen::MatrixXd U(N, D);
  LabelVector z(N);
  for (Index i = 0; i < N; ++i) {
    X(i, 0) = 1.0;
    for (Index j = 1; j < J; ++j) X(i, j) = scenario.covariate_mean + sd * normal(rng);
    const Eigen::VectorXd eta = mixing_weights(truth.beta, X.row(i));
    const double draw = uniform(rng);
    int g = 0;
    double cumulative = eta(0);
    while (g + 1 < G && draw >= cumulative) cumulative += eta(++g);
    z(i) = g;
    for (int d = 0; d < D; ++d) U(i, d) = normal(rng);
    for (Index k = 0; k < R; ++k)
      Y(i, k) = uniform(rng) < connection_probability(truth, g, k, U.row(i)) ? 1.0 : 0.0;
  }

  std::vector<std::string> names{"(Intercept)"};
  for (Index j = 1; j < J; ++j) names.push_back("x" + std::to_string(j));
  return {IncidenceMatrix(std::move(Y)), CovariateMatrix(std::move(X), std::move(names)), std::move(z), truth.A,
          std::move(U), truth};
}

double adjusted_rand_index(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: label vectors differ in length");
  if (a.size() < 2) throw std::invalid_argument("adjusted_rand_index: need at least two items");
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (Index i = 0; i < a.size(); ++i) {
    cells[{a(i), b(i)}] += 1.0;
    rows[a(i)] += 1.0;
    cols[b(i)] += 1.0;
  }
  auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, n] : cells) index += pairs(n);
  double sum_rows = 0.0;
  for (const auto& [key, n] : rows) sum_rows += pairs(n);
  double sum_cols = 0.0;
  for (const auto& [key, n] : cols) sum_cols += pairs(n);
  const double expected = sum_rows * sum_cols / pairs(static_cast<double>(a.size()));
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

namespace {

constexpr int kMaxExhaustive = 8;

double centred_sq_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  const Eigen::VectorXd e = estimate.array() - estimate.mean();
  const Eigen::VectorXd t = truth.array() - truth.mean();
  return (e - t).squaredNorm();
}

}  // namespace

Alignment align_labels(const FitResult& fitted, const SimulatedData& truth) {
  const int G = static_cast<int>(truth.truth.G());
  const int D = static_cast<int>(truth.truth.D());
  if (fitted.params.G() != G || fitted.params.D() != D)
    throw std::invalid_argument("align_labels: fitted and true models differ in G or D");
  if (G > kMaxExhaustive || D > kMaxExhaustive)
    throw std::invalid_argument("align_labels: exhaustive alignment is limited to G, D <= 8");

  const LabelVector fitted_z = map_labels(fitted.z_hat);
  Alignment best;
  {
    std::vector<int> perm(static_cast<std::size_t>(G));
    std::iota(perm.begin(), perm.end(), 0);
    long best_hits = -1;
    double best_err = std::numeric_limits<double>::infinity();
    do {
      long hits = 0;
      for (Index i = 0; i < truth.z.size(); ++i)
        if (perm[static_cast<std::size_t>(truth.z(i))] == fitted_z(i)) ++hits;
      Eigen::VectorXd b(G);
      for (int c = 0; c < G; ++c) b(c) = fitted.params.b(perm[static_cast<std::size_t>(c)]);
      const double err = centred_sq_error(b, truth.truth.b);
      if (hits > best_hits || (hits == best_hits && err < best_err)) {
        best_hits = hits;
        best_err = err;
        best.components = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  {
    std::vector<int> perm(static_cast<std::size_t>(D));
    std::iota(perm.begin(), perm.end(), 0);
    long best_hits = -1;
    double best_err = std::numeric_limits<double>::infinity();
    do {
      long hits = 0;
      for (int g = 0; g < G; ++g) {
        const int fg = best.components[static_cast<std::size_t>(g)];
        for (Index k = 0; k < truth.A.cols(); ++k)
          if (perm[static_cast<std::size_t>(truth.A(g, k))] == fitted.params.A(fg, k)) ++hits;
      }
      Eigen::VectorXd mu(D);
      for (int e = 0; e < D; ++e) mu(e) = fitted.params.mu(perm[static_cast<std::size_t>(e)]);
      const double err = centred_sq_error(mu, truth.truth.mu);
      if (hits > best_hits || (hits == best_hits && err < best_err)) {
        best_hits = hits;
        best_err = err;
        best.segments = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return best;
}

ModelParams aligned_parameters(const ModelParams& fitted, const Alignment& alignment, const ModelParams& truth) {
  ModelParams p = permute_segments(permute_components(fitted, alignment.components), alignment.segments);
  const double shift = ((truth.b - p.b).sum() - (truth.mu - p.mu).sum()) / static_cast<double>(p.G() + p.D());
  p.b.array() += shift;
  p.mu.array() -= shift;
  return p;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  for (Index g = 0; g < m.rows(); ++g) v.segment(g * m.cols(), m.cols()) = m.row(g).transpose();
  return v;
}

}  // namespace

StudyReport run_study(const Scenario& scenario, const ModelConfig& fit_config, int threads) {
  scenario.validate();
  StudyReport report;
  report.scenario = scenario;
  report.replicates.resize(static_cast<std::size_t>(scenario.n_replicates));

  parallel_for(scenario.n_replicates, threads, [&](std::int64_t r) {
    ReplicateRecord& rec = report.replicates[static_cast<std::size_t>(r)];
    rec.replicate = static_cast<int>(r);
    try {
      const SimulatedData data = generate(scenario, static_cast<int>(r));
      ModelConfig cfg = fit_config;
      cfg.G = scenario.G;
      cfg.D = scenario.D;
      cfg.threads = 1;
      cfg.seed = derive_seed(fit_config.seed, static_cast<std::uint64_t>(r));
      const FitResult f = fit(data.y, data.x, cfg);
      const Alignment alignment = align_labels(f, data);
      const ModelParams p = aligned_parameters(f.params, alignment, data.truth);

      rec.log_likelihood = f.log_likelihood;
      rec.sending_ari = adjusted_rand_index(f.sending_assignment, data.z);
      double aligned = 0.0;
      double unaligned = 0.0;
      for (int g = 0; g < scenario.G; ++g) {
        const LabelVector true_row = data.A.row(g).transpose();
        aligned += adjusted_rand_index(f.params.A.row(alignment.components[static_cast<std::size_t>(g)]).transpose(),
                                       true_row);
        unaligned += adjusted_rand_index(f.params.A.row(g).transpose(), true_row);
      }
      rec.receiving_ari = aligned / scenario.G;
      rec.receiving_ari_unaligned = unaligned / scenario.G;
      rec.b = p.b;
      rec.mu = p.mu;
      rec.beta = flatten_rows(p.beta);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.message = e.what();
    }
  });

  std::vector<double> sending;
  std::vector<double> receiving;
  report.mse_b = Eigen::VectorXd::Zero(scenario.G);
  report.mse_mu = Eigen::VectorXd::Zero(scenario.D);
  report.mse_beta = Eigen::VectorXd::Zero(scenario.beta_true.size());
  const Eigen::VectorXd beta_true = flatten_rows(scenario.beta_true);
  for (const auto& rec : report.replicates) {
    if (rec.failed) {
      ++report.failures;
      continue;
    }
    sending.push_back(rec.sending_ari);
    receiving.push_back(rec.receiving_ari);
    report.mse_b += (rec.b - scenario.b_true).array().square().matrix();
    report.mse_mu += (rec.mu - scenario.mu_true).array().square().matrix();
    report.mse_beta += (rec.beta - beta_true).array().square().matrix();
  }
  const auto ok = static_cast<double>(sending.size());
  if (ok > 0) {
    report.mse_b /= ok;
    report.mse_mu /= ok;
    report.mse_beta /= ok;
    report.mean_sending_ari = std::accumulate(sending.begin(), sending.end(), 0.0) / ok;
    report.mean_receiving_ari = std::accumulate(receiving.begin(), receiving.end(), 0.0) / ok;
  }
  report.median_sending_ari = median(sending);
  report.median_receiving_ari = median(receiving);
  return report;
}

}  // namespace mlta
