// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit
// status is non-zero if any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include "mlta/inference.hpp"
#include "mlta/io.hpp"
#include "mlta/simulation.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

using namespace mlta;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

StudyReport reference_study(int G, int D, Index N, Index R) {
  Scenario s = Scenario::reference(G, D, N, R);
  s.n_replicates = 20;
  s.seed = 2024;
  ModelConfig c;
  c.n_starts = 25;
  c.seed = 7;
  return run_study(s, c, worker_count());
}

std::string first_study_bytes;

Verdict ari_reproduction() {
  const StudyReport r = reference_study(3, 2, 500, 20);
  first_study_bytes = dump_report(study_report_json(r));
  const bool ok = r.failures == 0 && within(r.mean_sending_ari, 0.75, 0.08) && within(r.mean_receiving_ari, 0.96, 0.08);
  return {ok, "sending ARI " + fmt(r.mean_sending_ari) + " (0.75 +- 0.08), receiving ARI " +
                  fmt(r.mean_receiving_ari) + " (0.96 +- 0.08), failures " + std::to_string(r.failures)};
}

Verdict ari_hard_case() {
  const StudyReport r = reference_study(4, 3, 100, 20);
  double unaligned = 0.0;
  int n = 0;
  for (const auto& rec : r.replicates)
    if (!rec.failed) {
      unaligned += rec.receiving_ari_unaligned;
      ++n;
    }
  const bool ok = r.failures == 0 && within(r.mean_sending_ari, 0.64, 0.10) && within(r.mean_receiving_ari, 0.38, 0.12);
  return {ok, "sending ARI " + fmt(r.mean_sending_ari) + " (0.64 +- 0.10), receiving ARI " +
                  fmt(r.mean_receiving_ari) + " (0.38 +- 0.12); index-paired receiving ARI " +
                  fmt(n ? unaligned / n : 0.0)};
}

Verdict mse_trend() {
  const StudyReport large = reference_study(3, 2, 1000, 30);
  const StudyReport small = reference_study(3, 2, 100, 30);
  bool ok = large.failures == 0 && small.failures == 0;
  std::ostringstream s;
  auto compare = [&](const char* name, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    s << name << " [";
    for (Index j = 0; j < a.size(); ++j) {
      ok = ok && a(j) <= b(j);
      s << (j ? " " : "") << fmt(a(j), 3) << (a(j) <= b(j) ? "<=" : ">") << fmt(b(j), 3);
    }
    s << "] ";
  };
  compare("b", large.mse_b, small.mse_b);
  compare("mu", large.mse_mu, small.mse_mu);
  compare("beta", large.mse_beta, small.mse_beta);
  ok = ok && large.mse_b(0) <= 0.05;
  s << "MSE(b1) at N=1000 " << fmt(large.mse_b(0), 3) << " (<= 0.05)";
  return {ok, s.str()};
}

Verdict em_monotonicity() {
  std::mt19937_64 gen(404);
  int bad = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int G = 1 + static_cast<int>(gen() % 3);
    const int D = 1 + static_cast<int>(gen() % 2);
    const Index N = 20 + static_cast<Index>(gen() % 181);
    const Index R = std::max<Index>(D, 2 + static_cast<Index>(gen() % 19));
    const SimulatedData sim = generate(fixture::scenario(G, D, N, R, 500 + rep), 0);
    ModelConfig c;
    c.G = G;
    c.D = D;
    c.n_starts = 1;
    c.seed = static_cast<std::uint64_t>(rep);
    const FitResult f = fit(sim.y, sim.x, c);
    double drop = 0.0;
    for (std::size_t t = 1; t < f.trace.size(); ++t) drop = std::max(drop, f.trace[t - 1] - f.trace[t]);
    worst = std::max(worst, drop);
    if (drop > 1e-8) ++bad;
  }
  return {bad == 0, std::to_string(50 - bad) + "/50 traces non-decreasing, largest step decrease " + fmt(worst, 3)};
}

Verdict oracle_equivalence() {
  std::mt19937_64 gen(505);
  std::normal_distribution<double> normal(1.0, 1.0);
  double worst_ll = 0.0;
  double worst_z = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int N = 2 + rep % 4;
    const int R = 1 + rep % 4;
    const int G = 1 + rep % 2;
    const int D = 1 + (rep / 2) % 2;
    const oracle::Instance m = fixture::random_instance(gen, G, D, R, 2);
    Eigen::MatrixXd y(N, R);
    Eigen::MatrixXd raw(N, 1);
    std::vector<std::vector<int>> rows;
    std::vector<std::vector<double>> covariates;
    for (int i = 0; i < N; ++i) {
      rows.push_back(fixture::random_row(gen, R));
      y.row(i) = fixture::to_vector(rows.back()).transpose();
      raw(i, 0) = normal(gen);
      covariates.push_back({1.0, raw(i, 0)});
    }
    const Posterior post = e_step(IncidenceMatrix(y), CovariateMatrix::with_intercept(raw, {"x1"}),
                                  fixture::to_params(m, 2), build_grid(30, D));
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
      std::vector<double> z;
      total += oracle::unit_log_likelihood(rows[static_cast<std::size_t>(i)], covariates[static_cast<std::size_t>(i)],
                                           m, &z);
      for (int g = 0; g < G; ++g)
        worst_z = std::max(worst_z, std::abs(post.z_hat(i, g) - z[static_cast<std::size_t>(g)]));
    }
    worst_ll = std::max(worst_ll, std::abs(post.log_likelihood - total));
  }
  return {worst_ll <= 1e-6 && worst_z <= 1e-6,
          "max |dLL| " + fmt(worst_ll, 3) + ", max |dz| " + fmt(worst_z, 3) + " (<= 1e-6)"};
}

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

Verdict gradient_checks() {
  std::mt19937_64 gen(606);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  double worst_score = 0.0;
  double worst_beta = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int G = 1 + rep % 3;
    const int D = 1 + rep % 2;
    const SimulatedData sim = generate(fixture::scenario(G, D, 30, 8, 600 + rep), 0);
    const ModelParams p = fixture::to_params(fixture::random_instance(gen, G, D, 8, 2), 2);
    const QuadratureGrid grid = build_grid(default_nodes(D), D);
    const Posterior post = e_step(sim.y, sim.x, p, grid);
    const Eigen::VectorXd analytic = expected_score_b_mu(sim.y, post, p, grid);
    std::vector<double> theta;
    for (Index g = 0; g < G; ++g) theta.push_back(p.b(g));
    for (Index d = 0; d < D; ++d) theta.push_back(p.mu(d));
    const auto numeric = oracle::fd_gradient(
        [&](const std::vector<double>& v) {
          ModelParams q = p;
          for (Index g = 0; g < G; ++g) q.b(g) = v[static_cast<std::size_t>(g)];
          for (Index d = 0; d < D; ++d) q.mu(d) = v[static_cast<std::size_t>(G + d)];
          return expected_log_density(sim.y, post, q, grid);
        },
        theta);
    for (std::size_t j = 0; j < numeric.size(); ++j)
      worst_score = std::max(worst_score, relative_gap(analytic(static_cast<Index>(j)), numeric[j]));

    const int Gb = 2 + rep % 3;
    Eigen::MatrixXd raw(40, 2);
    Eigen::MatrixXd z(40, Gb);
    for (Index i = 0; i < 40; ++i) {
      raw(i, 0) = normal(gen);
      raw(i, 1) = normal(gen);
      for (Index g = 0; g < Gb; ++g) z(i, g) = unif(gen);
      z.row(i) /= z.row(i).sum();
    }
    const CovariateMatrix x = CovariateMatrix::with_intercept(raw, {"a", "c"});
    std::vector<double> point(static_cast<std::size_t>((Gb - 1) * 3));
    for (auto& v : point) v = normal(gen);
    auto as_matrix = [&](const std::vector<double>& v) {
      Eigen::MatrixXd beta(Gb - 1, 3);
      for (Index g = 0; g + 1 < Gb; ++g)
        for (Index j = 0; j < 3; ++j) beta(g, j) = v[static_cast<std::size_t>(g * 3 + j)];
      return beta;
    };
    const Eigen::MatrixXd grad = beta_gradient(x, z, as_matrix(point));
    const auto fd =
        oracle::fd_gradient([&](const std::vector<double>& v) { return beta_objective(x, z, as_matrix(v)); }, point);
    for (std::size_t j = 0; j < fd.size(); ++j)
      worst_beta = std::max(worst_beta, relative_gap(grad(static_cast<Index>(j / 3), static_cast<Index>(j % 3)), fd[j]));
  }
  return {worst_score <= 1e-5 && worst_beta <= 1e-5,
          "max relative gap: b/mu score " + fmt(worst_score, 3) + ", beta gradient " + fmt(worst_beta, 3) +
              " (<= 1e-5)"};
}

Verdict assignment_optimality() {
  struct Shape {
    int G, R, D;
  };
  const std::vector<Shape> shapes{{1, 13, 2}, {2, 6, 2}, {3, 4, 2}, {2, 4, 3}, {1, 8, 3}, {2, 3, 3}, {1, 6, 4}, {2, 2, 4}};
  std::mt19937_64 gen(707);
  int matched = 0;
  int total = 0;
  for (int rep = 0; rep < 16; ++rep) {
    const Shape s = shapes[static_cast<std::size_t>(rep) % shapes.size()];
    const SimulatedData sim = generate(fixture::scenario(s.G, 1, 25, s.R, 700 + rep), 0);
    const ModelParams p = fixture::to_params(fixture::random_instance(gen, s.G, s.D, s.R, 2), 2);
    const QuadratureGrid grid = build_grid(default_nodes(s.D), s.D);
    const Posterior post = e_step(sim.y, sim.x, p, grid);
    const LabelMatrix chosen = m_step_assignments(sim.y, post, p, grid);
    ModelParams q = p;
    const int cells = s.G * s.R;
    long combos = 1;
    for (int c = 0; c < cells; ++c) combos *= s.D;
    double best = -std::numeric_limits<double>::infinity();
    LabelMatrix best_A;
    for (long code = 0; code < combos; ++code) {
      long rest = code;
      for (int c = 0; c < cells; ++c) {
        q.A(c / s.R, c % s.R) = static_cast<int>(rest % s.D);
        rest /= s.D;
      }
      const double value = expected_log_density(sim.y, post, q, grid);
      if (value > best) {
        best = value;
        best_A = q.A;
      }
    }
    ++total;
    if (chosen == best_A) ++matched;
  }
  return {matched == total, std::to_string(matched) + "/" + std::to_string(total) +
                                " instances equal the exhaustive maximizer"};
}

Verdict quadrature_checks() {
  double worst_monomial = 0.0;
  for (int Q = 1; Q <= 20; ++Q) {
    const HermiteRule r = hermite_rule(Q);
    for (int n = 0; n <= 2 * Q - 1; ++n) {
      const double approx = (r.weights.array() * r.roots.array().pow(n)).sum();
      const double exact = oracle::hermite_moment(n);
      const double scale = exact == 0.0 ? oracle::hermite_moment(n + 1) : std::abs(exact);
      worst_monomial = std::max(worst_monomial, std::abs(approx - exact) / scale);
    }
  }
  std::mt19937_64 gen(808);
  double worst_zeta = 0.0;
  double worst_default = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int D = 1 + rep % 2;
    const int R = 3 + rep % 8;
    const ModelParams p = fixture::to_params(fixture::random_instance(gen, 1, D, R, 1));
    const Eigen::VectorXd y = fixture::to_vector(fixture::random_row(gen, R));
    auto zeta = [&](int Q) { return marginal_component_likelihood(y, p, 0, build_grid(Q, D)); };
    const double reference = zeta(30);
    worst_zeta = std::max(worst_zeta, std::abs(zeta(20) - reference) / reference);
    const int Qd = default_nodes(D);
    worst_default = std::max(worst_default, std::abs(zeta(Qd) - zeta(Qd + 10)) / zeta(Qd + 10));
  }
  return {worst_monomial <= 1e-10 && worst_zeta <= 1e-4,
          "monomial relative error " + fmt(worst_monomial, 3) + " (<= 1e-10), zeta Q=20 vs 30 " +
              fmt(worst_zeta, 3) + " (<= 1e-4); default Q vs Q+10 " + fmt(worst_default, 3)};
}

Verdict sandwich_coverage() {
  Scenario s;
  s.G = 2;
  s.D = 2;
  s.N = 1000;
  s.R = 20;
  s.b_true = Eigen::Vector2d(-1.7, 1.7);
  s.mu_true = Eigen::Vector2d(-2.0, 0.5);
  s.beta_true = Eigen::MatrixXd(1, 2);
  s.beta_true << 1.0, -0.4;
  s.seed = 909;
  ModelConfig c;
  c.G = 2;
  c.D = 2;
  c.n_starts = 10;
  c.seed = 9;
  std::array<int, 2> covered{0, 0};
  int singular = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const SimulatedData sim = generate(s, rep);
    const FitResult f = fit(sim.y, sim.x, c);
    const InferenceReport inf = infer(sim.y, sim.x, f);
    if (inf.information_singular) ++singular;
    const ModelParams aligned = aligned_parameters(f.params, align_labels(f, sim), sim.truth);
    for (Index j = 0; j < 2; ++j) {
      const double se = inf.std_errors(4 + j);
      if (std::abs(aligned.beta(0, j) - s.beta_true(0, j)) <= 1.96 * se) ++covered[static_cast<std::size_t>(j)];
    }
  }
  return {covered[0] >= 88 && covered[1] >= 88,
          "coverage beta intercept " + std::to_string(covered[0]) + "/100, slope " + std::to_string(covered[1]) +
              "/100 (>= 88); singular information " + std::to_string(singular)};
}

Verdict selection_consistency() {
  Scenario s;
  s.G = 2;
  s.D = 3;
  s.N = 300;
  s.R = 24;
  s.b_true = Eigen::Vector2d(-1.5, 1.5);
  s.mu_true = Eigen::Vector3d(-2.5, 0.0, 2.5);
  s.beta_true = Eigen::MatrixXd(1, 2);
  s.beta_true << 1.0, -0.4;
  s.seed = 1010;
  ModelConfig c;
  c.n_starts = 10;
  c.seed = 10;
  ModelConfig counted = c;
  counted.penalize_assignments = true;
  int hits = 0;
  int counted_hits = 0;
  std::map<std::pair<int, int>, int> picks;
  for (int rep = 0; rep < 20; ++rep) {
    const SimulatedData sim = generate(s, rep);
    const SelectionGrid grid = select_model(sim.y, sim.x, {1, 2, 3}, {1, 2, 3}, c);
    ++picks[grid.best_bic];
    if (grid.best_bic == std::pair(2, 3)) ++hits;
    if (select_model(sim.y, sim.x, {1, 2, 3}, {1, 2, 3}, counted).best_bic == std::pair(2, 3)) ++counted_hits;
  }
  std::string detail = std::to_string(hits) + "/20 select (2, 3) by BIC (>= 18); picks";
  for (const auto& [cell, n] : picks)
    detail += " (" + std::to_string(cell.first) + "," + std::to_string(cell.second) + ")x" + std::to_string(n);
  detail += "; with A counted in nu " + std::to_string(counted_hits) + "/20";
  return {hits >= 18, detail};
}

Verdict determinism() {
  if (first_study_bytes.empty()) ari_reproduction();
  const std::string first = first_study_bytes;
  const std::string second = dump_report(study_report_json(reference_study(3, 2, 500, 20)));
  return {first == second, std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"ARI reproduction (3, 2, 500, 20)", ari_reproduction},
      {"ARI hard case (4, 3, 100, 20)", ari_hard_case},
      {"MSE decreases from N=100 to N=1000", mse_trend},
      {"EM monotonicity", em_monotonicity},
      {"quadrature path equals trapezoid oracle", oracle_equivalence},
      {"gradient checks", gradient_checks},
      {"assignment optimality", assignment_optimality},
      {"quadrature accuracy", quadrature_checks},
      {"sandwich coverage", sandwich_coverage},
      {"model selection self-consistency", selection_consistency},
      {"determinism", determinism},
  };
  std::set<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.insert(std::atoi(argv[a]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!v.pass) ++failed;
    std::printf("%s criterion %d %s: %s [%.0fs]\n", v.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
