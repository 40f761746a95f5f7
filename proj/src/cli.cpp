#include "mlta/cli.hpp"

#include "mlta/errors.hpp"
#include "mlta/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace mlta {

namespace {

struct Overrides {
  std::string mode;
  std::string config;
  std::optional<int> G;
  std::optional<int> D;
  std::optional<int> Q;
  std::optional<std::uint64_t> seed;
  std::optional<int> starts;
  std::optional<double> tol;
  std::optional<int> threads;
  std::optional<int> replicates;
  std::string out;
  std::string incidence;
  std::string covariates;
  std::string raw;
  std::string rules;
  std::string data_out;
  std::string G_range;
  std::string D_range;
};

// "1..3" or "1,2,4"
std::vector<int> parse_range(const std::string& text) {
  std::vector<int> values;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (hi < lo) throw std::invalid_argument("empty range '" + text + "'");
      for (int v = lo; v <= hi; ++v) values.push_back(v);
    } else {
      std::size_t start = 0;
      while (start <= text.size()) {
        const auto comma = text.find(',', start);
        values.push_back(std::stoi(text.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
  } catch (const std::logic_error&) {
    throw std::invalid_argument("cannot parse range '" + text + "' (use 1..3 or 1,2,3)");
  }
  return values;
}

RunConfig assemble(const Overrides& o) {
  RunConfig rc;
  if (!o.config.empty()) rc = load_run_config(o.config);
  if (!o.mode.empty()) rc.mode = parse_mode(o.mode);
  if (o.G) rc.model.G = *o.G;
  if (o.D) rc.model.D = *o.D;
  if (o.Q) rc.model.Q = *o.Q;
  if (o.seed) rc.model.seed = *o.seed;
  if (o.starts) rc.model.n_starts = *o.starts;
  if (o.tol) rc.model.tol = *o.tol;
  if (o.threads) rc.model.threads = *o.threads;
  if (!o.out.empty()) rc.out = o.out;
  if (!o.incidence.empty()) rc.incidence = o.incidence;
  if (!o.covariates.empty()) rc.covariates = o.covariates;
  if (!o.raw.empty()) rc.raw = o.raw;
  if (!o.rules.empty()) rc.rules = o.rules;
  if (!o.data_out.empty()) rc.data_out = o.data_out;
  if (!o.G_range.empty()) rc.G_range = parse_range(o.G_range);
  if (!o.D_range.empty()) rc.D_range = parse_range(o.D_range);
  if (rc.mode == Mode::simulate) {
    if (!rc.scenario) rc.scenario = Scenario::reference(o.G.value_or(3), o.D.value_or(2), 100, 20);
    if (o.replicates) rc.scenario->n_replicates = *o.replicates;
  }
  rc.validate();
  return rc;
}

void emit(const std::string& text, const RunConfig& rc, std::ostream& out) {
  if (rc.out.empty()) out << text;
  else write_text(text, rc.out);
}

CovariateMatrix covariates_for(const RunConfig& rc, const IncidenceMatrix& y) {
  if (rc.covariates.empty()) return CovariateMatrix::intercept_only(y.n_sending());
  CovariateMatrix x = load_covariates(rc.covariates);
  if (x.rows() != y.n_sending())
    throw ParseError("covariate file has " + std::to_string(x.rows()) + " rows but the incidence matrix has " +
                     std::to_string(y.n_sending()));
  return x;
}

void run_fit(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const IncidenceMatrix y = load_incidence(rc.incidence);
  const CovariateMatrix x = covariates_for(rc, y);
  const FitResult f = fit(y, x, rc.model);
  const InferenceReport inf = infer(y, x, f);
  if (!f.converged) err << "warning: best start did not converge within " << rc.model.max_iter << " iterations\n";
  if (inf.information_singular) err << "warning: information matrix is singular; a pseudo-inverse was used\n";
  emit(dump_report(fit_report_json(y, x, f, inf)), rc, out);
}

void run_select(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const IncidenceMatrix y = load_incidence(rc.incidence);
  const CovariateMatrix x = covariates_for(rc, y);
  const SelectionGrid grid = select_model(y, x, rc.G_range, rc.D_range, rc.model);
  for (const auto& row : grid.rows)
    if (row.failed) err << "warning: (G=" << row.G << ", D=" << row.D << ") failed: " << row.message << "\n";
  emit(dump_report(selection_json(grid)), rc, out);
}

void run_simulate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Scenario& scenario = *rc.scenario;
  if (!rc.data_out.empty()) {
    std::filesystem::create_directories(rc.data_out);
    const SimulatedData data = generate(scenario, 0);
    save_incidence(data.y, rc.data_out / "incidence.csv");
    save_covariates(data.x, data.y.sending_labels(), rc.data_out / "covariates.csv");
  }
  const StudyReport report = run_study(scenario, rc.model, rc.model.threads);
  if (report.failures > 0) err << "warning: " << report.failures << " replicate fits failed\n";
  emit(dump_report(study_report_json(report)), rc, out);
}

void run_binarize(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const RawTable table = read_table(rc.raw);
  const BinarizedTable result = binarize(table, load_rules(rc.rules));
  err << "binarize: kept " << result.y.n_sending() << " of " << table.rows() << " rows, excluded "
      << result.excluded << " with missing values\n";
  for (std::size_t i = 0; i < result.source_rows.size(); ++i)
    err << "  row " << i << " <- input row " << result.source_rows[i] << "\n";
  RawTable t = incidence_table(result.y);
  t.corner = table.corner;
  emit(format_table(t), rc, out);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture of latent trait analyzers for bipartite networks"};
  app.name("mlta");
  Overrides o;
  std::string positional;
  app.add_option("mode_positional", positional, "fit | select | simulate | binarize");
  app.add_option("--mode", o.mode, "fit | select | simulate | binarize");
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--G", o.G, "number of components");
  app.add_option("--D", o.D, "number of segments");
  app.add_option("--Q", o.Q, "quadrature nodes per dimension");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--starts", o.starts, "number of EM starts");
  app.add_option("--tol", o.tol, "convergence tolerance on the log-likelihood");
  app.add_option("--threads", o.threads, "worker threads");
  app.add_option("--replicates", o.replicates, "simulate: number of replicates");
  app.add_option("--out", o.out, "output path (default: standard output)");
  app.add_option("--incidence", o.incidence, "incidence matrix CSV");
  app.add_option("--covariates", o.covariates, "covariate CSV (intercept added)");
  app.add_option("--raw", o.raw, "binarize: raw table CSV");
  app.add_option("--rules", o.rules, "binarize: rules JSON");
  app.add_option("--data-out", o.data_out, "simulate: directory for replicate 0 as CSV");
  app.add_option("--G-range", o.G_range, "select: G values, e.g. 1..3");
  app.add_option("--D-range", o.D_range, "select: D values, e.g. 1..3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  if (o.mode.empty()) o.mode = positional;
  if (o.mode.empty() && o.config.empty()) {
    err << "error: a mode or --config is required\n" << app.help();
    return kExitUsage;
  }

  try {
    const RunConfig rc = assemble(o);
    switch (rc.mode) {
      case Mode::fit: run_fit(rc, out, err); break;
      case Mode::select: run_select(rc, out, err); break;
      case Mode::simulate: run_simulate(rc, out, err); break;
      case Mode::binarize: run_binarize(rc, out, err); break;
    }
    return kExitOk;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << "\n";
    for (const auto& d : e.diagnostics()) err << "  " << d << "\n";
    return kExitEstimation;
  } catch (const ResourceError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace mlta
