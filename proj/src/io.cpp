#include "mlta/io.hpp"

#include "mlta/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace mlta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool parse_real(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(value);
}

json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round_report(v);
}

template <typename Derived>
json vector_json(const Eigen::DenseBase<Derived>& v) {
  json out = json::array();
  for (Index j = 0; j < v.size(); ++j) out.push_back(number(static_cast<double>(v(j))));
  return out;
}

template <typename Derived>
json matrix_json(const Eigen::DenseBase<Derived>& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number(static_cast<double>(m(i, j))));
    out.push_back(std::move(row));
  }
  return out;
}

json int_matrix_json(const LabelMatrix& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = j[k].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + " must be an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const auto cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ParseError(std::string(what) + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

fs::path resolve(const json& doc, const char* key, const fs::path& base) {
  if (!doc.contains(key) || doc[key].is_null()) return {};
  const fs::path p = doc[key].get<std::string>();
  return p.is_absolute() ? p : base / p;
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw std::invalid_argument(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " file not found: " + path.string());
}

}  // namespace

Index RawTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<Index>(it - columns.begin());
}

RawTable parse_table(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty table: a header row is required", 1);

  RawTable table;
  auto header = split_csv_line(lines[0]);
  if (header.size() < 2) throw ParseError("header needs a label column and at least one data column", 1);
  table.corner = header[0];
  table.columns.assign(header.begin() + 1, header.end());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto fields = split_csv_line(lines[r]);
    const long line_no = static_cast<long>(r) + 1;
    if (fields.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(header.size()),
                       line_no, static_cast<long>(std::min(fields.size(), header.size())) + 1);
    table.row_labels.push_back(fields[0]);
    table.cells.emplace_back(fields.begin() + 1, fields.end());
  }
  return table;
}

RawTable read_table(const fs::path& path) { return parse_table(read_file(path)); }

std::string format_table(const RawTable& table) {
  std::ostringstream out;
  out << csv_field(table.corner);
  for (const auto& c : table.columns) out << ',' << csv_field(c);
  out << '\n';
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    out << csv_field(table.row_labels[r]);
    for (const auto& cell : table.cells[r]) out << ',' << csv_field(cell);
    out << '\n';
  }
  return out.str();
}

void write_table(const RawTable& table, const fs::path& path) { write_text(format_table(table), path); }

IncidenceMatrix parse_incidence(const std::string& text) {
  const RawTable table = parse_table(text);
  Eigen::MatrixXd data(table.rows(), static_cast<Index>(table.columns.size()));
  for (Index i = 0; i < data.rows(); ++i)
    for (Index k = 0; k < data.cols(); ++k) {
      const std::string& cell = table.cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (cell != "0" && cell != "1")
        throw ParseError("cell at line " + std::to_string(i + 2) + ", column " + std::to_string(k + 2) + " (" +
                             table.row_labels[static_cast<std::size_t>(i)] + ", " +
                             table.columns[static_cast<std::size_t>(k)] + ") is not 0 or 1: '" + cell + "'",
                         static_cast<long>(i + 2), static_cast<long>(k + 2));
      data(i, k) = cell == "1" ? 1.0 : 0.0;
    }
  return IncidenceMatrix(std::move(data), table.row_labels, table.columns);
}

IncidenceMatrix load_incidence(const fs::path& path) { return parse_incidence(read_file(path)); }

RawTable incidence_table(const IncidenceMatrix& y) {
  RawTable table;
  table.corner = "id";
  table.columns = y.receiving_labels();
  table.row_labels = y.sending_labels();
  for (Index i = 0; i < y.n_sending(); ++i) {
    std::vector<std::string> row;
    for (Index k = 0; k < y.n_receiving(); ++k) row.push_back(y.data()(i, k) > 0.5 ? "1" : "0");
    table.cells.push_back(std::move(row));
  }
  return table;
}

void save_incidence(const IncidenceMatrix& y, const fs::path& path) { write_table(incidence_table(y), path); }

CovariateMatrix load_covariates(const fs::path& path) {
  const RawTable table = read_table(path);
  Eigen::MatrixXd raw(table.rows(), static_cast<Index>(table.columns.size()));
  for (Index i = 0; i < raw.rows(); ++i)
    for (Index j = 0; j < raw.cols(); ++j) {
      const std::string& cell = table.cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      double v = 0.0;
      if (!parse_real(cell, v))
        throw ParseError("covariate at line " + std::to_string(i + 2) + ", column " + std::to_string(j + 2) +
                             " is not a finite number: '" + cell + "'",
                         static_cast<long>(i + 2), static_cast<long>(j + 2));
      raw(i, j) = v;
    }
  return CovariateMatrix::with_intercept(raw, table.columns);
}

void save_covariates(const CovariateMatrix& x, const std::vector<std::string>& row_labels, const fs::path& path) {
  if (static_cast<Index>(row_labels.size()) != x.rows())
    throw std::invalid_argument("save_covariates: one row label per unit is required");
  RawTable table;
  table.corner = "id";
  table.columns.assign(x.names().begin() + 1, x.names().end());
  table.row_labels = row_labels;
  char buf[32];
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<std::string> row;
    for (Index j = 1; j < x.n_covariates(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x.data()(i, j));
      row.emplace_back(buf);
    }
    table.cells.push_back(std::move(row));
  }
  write_table(table, path);
}

void BinarizationRule::validate() const {
  if (column.empty()) throw std::invalid_argument("binarization rule without a column");
  if (kind == RuleKind::outside_range && !(lower < upper))
    throw std::invalid_argument("outside_range rule on '" + column + "' needs lower < upper");
  if (kind != RuleKind::equals_category && !std::isfinite(lower))
    throw std::invalid_argument("rule on '" + column + "' needs a finite threshold");
}

bool BinarizationRule::apply(const std::string& cell) const {
  if (kind == RuleKind::equals_category) return cell == category;
  double v = 0.0;
  if (!parse_real(cell, v)) throw ParseError("'" + cell + "' in column '" + column + "' is not a number");
  switch (kind) {
    case RuleKind::greater_than: return v > lower;
    case RuleKind::greater_equal: return v >= lower;
    case RuleKind::outside_range: return v < lower || v > upper;
    case RuleKind::equals_category: break;
  }
  return false;
}

std::vector<BinarizationRule> parse_rules(const json& doc) {
  const json& list = doc.is_object() && doc.contains("rules") ? doc["rules"] : doc;
  if (!list.is_array()) throw ParseError("rules must be a JSON array");
  std::vector<BinarizationRule> rules;
  for (const auto& item : list) {
    BinarizationRule rule;
    rule.column = item.at("column").get<std::string>();
    const std::string kind = item.at("kind").get<std::string>();
    if (kind == "greater_than" || kind == "greater_equal") {
      rule.kind = kind == "greater_than" ? RuleKind::greater_than : RuleKind::greater_equal;
      rule.lower = item.at("threshold").get<double>();
    } else if (kind == "outside_range") {
      rule.kind = RuleKind::outside_range;
      rule.lower = item.at("lower").get<double>();
      rule.upper = item.at("upper").get<double>();
    } else if (kind == "equals_category") {
      rule.kind = RuleKind::equals_category;
      rule.category = item.at("category").get<std::string>();
    } else {
      throw ParseError("unknown rule kind '" + kind + "'");
    }
    rule.output = item.value("output", rule.column);
    rule.validate();
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<BinarizationRule> load_rules(const fs::path& path) {
  try {
    return parse_rules(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

BinarizedTable binarize(const RawTable& table, const std::vector<BinarizationRule>& rules) {
  if (rules.empty()) throw std::invalid_argument("binarize: no rules");
  std::vector<Index> cols;
  std::set<std::string> outputs;
  std::vector<std::string> names;
  for (const auto& rule : rules) {
    rule.validate();
    const Index c = table.column_index(rule.column);
    if (c < 0) throw ParseError("rule column '" + rule.column + "' is not in the table");
    const std::string name = rule.output.empty() ? rule.column : rule.output;
    if (!outputs.insert(name).second) throw std::invalid_argument("duplicate output column '" + name + "'");
    cols.push_back(c);
    names.push_back(name);
  }

  BinarizedTable out;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < table.rows(); ++i) {
    const auto& cells = table.cells[static_cast<std::size_t>(i)];
    const bool missing = std::any_of(cols.begin(), cols.end(),
                                     [&](Index c) { return is_missing(cells[static_cast<std::size_t>(c)]); });
    if (missing) {
      ++out.excluded;
      continue;
    }
    std::vector<double> row;
    for (std::size_t r = 0; r < rules.size(); ++r) {
      try {
        row.push_back(rules[r].apply(cells[static_cast<std::size_t>(cols[r])]) ? 1.0 : 0.0);
      } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + " at line " + std::to_string(i + 2), static_cast<long>(i + 2),
                         static_cast<long>(cols[r] + 2));
      }
    }
    rows.push_back(std::move(row));
    labels.push_back(table.row_labels[static_cast<std::size_t>(i)]);
    out.source_rows.push_back(i);
  }

  Eigen::MatrixXd data(static_cast<Index>(rows.size()), static_cast<Index>(rules.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rules.size(); ++r) data(static_cast<Index>(i), static_cast<Index>(r)) = rows[i][r];
  out.y = IncidenceMatrix(std::move(data), std::move(labels), std::move(names));
  return out;
}

double round_report(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;
}

Eigen::MatrixXd block_probabilities(const FitResult& fit) {
  const ModelParams& p = fit.params;
  const Index G = p.G();
  const Index D = p.D();
  const Index N = fit.z_hat.rows();
  Eigen::MatrixXd out(G, D);
  for (Index g = 0; g < G; ++g) {
    const double mass = fit.z_hat.col(g).sum();
    for (Index d = 0; d < D; ++d) {
      if (!(mass > 0.0)) {
        out(g, d) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double total = 0.0;
      for (Index i = 0; i < N; ++i) total += fit.z_hat(i, g) * logistic(p.b(g) + p.mu(d) + fit.u_hat(i, d));
      out(g, d) = total / mass;
    }
  }
  return out;
}

json config_json(const ModelConfig& c) {
  json j;
  j["G"] = c.G;
  j["D"] = c.D;
  j["Q"] = c.nodes_per_dimension();
  j["tol"] = number(c.tol);
  j["max_iter"] = c.max_iter;
  j["n_starts"] = c.n_starts;
  j["seed"] = c.seed;
  j["inner_tol"] = number(c.inner_tol);
  j["inner_max_iter"] = c.inner_max_iter;
  j["max_halvings"] = c.max_halvings;
  j["grid_cap"] = c.grid_cap;
  j["penalize_assignments"] = c.penalize_assignments;
  j["polish_assignments"] = c.polish_assignments;
  return j;
}

ModelConfig config_from_json(const json& doc, ModelConfig c) {
  if (!doc.is_object()) throw ParseError("model configuration must be a JSON object");
  c.G = doc.value("G", c.G);
  c.D = doc.value("D", c.D);
  c.Q = doc.value("Q", c.Q);
  c.tol = doc.value("tol", c.tol);
  c.max_iter = doc.value("max_iter", c.max_iter);
  c.n_starts = doc.value("n_starts", c.n_starts);
  c.seed = doc.value("seed", c.seed);
  c.inner_tol = doc.value("inner_tol", c.inner_tol);
  c.inner_max_iter = doc.value("inner_max_iter", c.inner_max_iter);
  c.max_halvings = doc.value("max_halvings", c.max_halvings);
  c.threads = doc.value("threads", c.threads);
  c.grid_cap = doc.value("grid_cap", c.grid_cap);
  c.penalize_assignments = doc.value("penalize_assignments", c.penalize_assignments);
  c.polish_assignments = doc.value("polish_assignments", c.polish_assignments);
  return c;
}

json scenario_json(const Scenario& s) {
  json j;
  j["N"] = s.N;
  j["R"] = s.R;
  j["G"] = s.G;
  j["D"] = s.D;
  j["b"] = vector_json(s.b_true);
  j["mu"] = vector_json(s.mu_true);
  j["beta"] = matrix_json(s.beta_true);
  j["n_replicates"] = s.n_replicates;
  j["seed"] = s.seed;
  j["covariate_mean"] = number(s.covariate_mean);
  j["covariate_variance"] = number(s.covariate_variance);
  j["layout"] = s.layout == SegmentLayout::shared_blocks ? "shared_blocks" : "random_per_component";
  return j;
}

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("scenario must be a JSON object");
  const int G = doc.value("G", 3);
  const int D = doc.value("D", 2);
  const Index N = doc.value("N", Index{100});
  const Index R = doc.value("R", Index{20});
  Scenario s;
  if (!doc.contains("b") && !doc.contains("mu") && !doc.contains("beta")) {
    s = Scenario::reference(G, D, N, R);
  } else {
    s.N = N;
    s.R = R;
    s.G = G;
    s.D = D;
    s.b_true = vector_from_json(doc.at("b"), "scenario.b");
    s.mu_true = vector_from_json(doc.at("mu"), "scenario.mu");
    s.beta_true = matrix_from_json(doc.at("beta"), "scenario.beta");
    if (G == 1) s.beta_true.resize(0, 2);
  }
  s.n_replicates = doc.value("n_replicates", s.n_replicates);
  s.seed = doc.value("seed", s.seed);
  s.covariate_mean = doc.value("covariate_mean", s.covariate_mean);
  s.covariate_variance = doc.value("covariate_variance", s.covariate_variance);
  const std::string layout = doc.value("layout", std::string("random_per_component"));
  if (layout == "shared_blocks") s.layout = SegmentLayout::shared_blocks;
  else if (layout == "random_per_component") s.layout = SegmentLayout::random_per_component;
  else throw ParseError("unknown segment layout '" + layout + "'");
  s.validate();
  return s;
}

json fit_report_json(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit,
                     const InferenceReport& inference) {
  const ModelParams& p = fit.params;
  const Index G = p.G();
  const Index D = p.D();

  json doc;
  doc["schema"] = kFitReportSchema;
  json cfg = config_json(fit.config);
  cfg["G"] = G;
  cfg["D"] = D;
  doc["config"] = cfg;

  doc["data"] = {{"n_sending", y.n_sending()},
                 {"n_receiving", y.n_receiving()},
                 {"sending_labels", y.sending_labels()},
                 {"receiving_labels", y.receiving_labels()},
                 {"covariate_names", x.names()}};

  json starts = json::array();
  for (const auto& s : fit.starts)
    starts.push_back({{"start", s.start},
                      {"log_likelihood", number(s.log_likelihood)},
                      {"n_iter", s.n_iter},
                      {"converged", s.converged},
                      {"degenerate", s.degenerate},
                      {"failed", s.failed}});
  json trace = json::array();
  for (double v : fit.trace) trace.push_back(number(v));
  doc["estimation"] = {{"log_likelihood", number(fit.log_likelihood)},
                       {"n_iter", fit.n_iter},
                       {"converged", fit.converged},
                       {"seed_used", fit.seed_used},
                       {"start_index", fit.start_index},
                       {"trace", trace},
                       {"starts", starts}};

  std::vector<std::string> names;
  for (Index g = 0; g < G; ++g) names.push_back("b[" + std::to_string(g) + "]");
  for (Index d = 0; d < D; ++d) names.push_back("mu[" + std::to_string(d) + "]");
  for (Index g = 1; g < G; ++g)
    for (const auto& c : x.names()) names.push_back("beta[" + std::to_string(g) + "][" + c + "]");
  json params = json::array();
  for (Index j = 0; j < inference.estimates.size(); ++j) {
    const std::string& name = names[static_cast<std::size_t>(j)];
    params.push_back({{"name", name},
                      {"group", name.substr(0, name.find('['))},
                      {"estimate", number(inference.estimates(j))},
                      {"std_error", number(inference.std_errors(j))},
                      {"ci_lower", number(inference.ci_lower(j))},
                      {"ci_upper", number(inference.ci_upper(j))}});
  }
  doc["parameters"] = params;

  doc["criteria"] = {{"nu", inference.nu},
                     {"bic", number(inference.bic)},
                     {"icl", number(inference.icl)},
                     {"entropy", number(classification_entropy(fit.z_hat))},
                     {"icl_best", "minimum"}};

  doc["flags"] = {{"information_singular", inference.information_singular},
                  {"negative_variance", inference.negative_variance},
                  {"frozen_parameter", fit.diagnostics.frozen_parameter},
                  {"quasi_separation", fit.diagnostics.quasi_separation},
                  {"degenerate", fit.diagnostics.degenerate}};

  json sending = json::array();
  for (Index i = 0; i < fit.sending_assignment.size(); ++i) sending.push_back(fit.sending_assignment(i));
  doc["classification"] = {{"sending", sending},
                           {"receiving", int_matrix_json(fit.receiving_assignment)},
                           {"z_hat", matrix_json(fit.z_hat)},
                           {"u_hat", matrix_json(fit.u_hat)},
                           {"block_probabilities", matrix_json(block_probabilities(fit))}};
  return doc;
}

json study_report_json(const StudyReport& report) {
  json doc;
  doc["schema"] = kStudyReportSchema;
  doc["scenario"] = scenario_json(report.scenario);
  json reps = json::array();
  for (const auto& r : report.replicates) {
    json item = {{"replicate", r.replicate}, {"failed", r.failed}};
    if (r.failed) {
      item["message"] = r.message;
    } else {
      item["sending_ari"] = number(r.sending_ari);
      item["receiving_ari"] = number(r.receiving_ari);
      item["receiving_ari_unaligned"] = number(r.receiving_ari_unaligned);
      item["log_likelihood"] = number(r.log_likelihood);
      item["b"] = vector_json(r.b);
      item["mu"] = vector_json(r.mu);
      item["beta"] = vector_json(r.beta);
    }
    reps.push_back(std::move(item));
  }
  doc["replicates"] = reps;
  doc["summary"] = {{"mean_sending_ari", number(report.mean_sending_ari)},
                    {"median_sending_ari", number(report.median_sending_ari)},
                    {"mean_receiving_ari", number(report.mean_receiving_ari)},
                    {"median_receiving_ari", number(report.median_receiving_ari)},
                    {"mse_b", vector_json(report.mse_b)},
                    {"mse_mu", vector_json(report.mse_mu)},
                    {"mse_beta", vector_json(report.mse_beta)},
                    {"failures", report.failures}};
  return doc;
}

json selection_json(const SelectionGrid& grid) {
  json doc;
  doc["schema"] = kSelectionSchema;
  json rows = json::array();
  for (const auto& r : grid.rows) {
    json item = {{"G", r.G}, {"D", r.D}, {"failed", r.failed}};
    if (r.failed) {
      item["message"] = r.message;
    } else {
      item["log_likelihood"] = number(r.log_likelihood);
      item["nu"] = r.nu;
      item["bic"] = number(r.bic);
      item["icl"] = number(r.icl);
      item["converged"] = r.converged;
    }
    rows.push_back(std::move(item));
  }
  doc["rows"] = rows;
  doc["best_bic"] = {{"G", grid.best_bic.first}, {"D", grid.best_bic.second}};
  doc["best_icl"] = {{"G", grid.best_icl.first}, {"D", grid.best_icl.second}};
  return doc;
}

std::string dump_report(const json& doc) { return doc.dump(2) + "\n"; }

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("error while writing " + path.string());
}

void emit_fit_report(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit,
                     const InferenceReport& inference, const fs::path& path) {
  write_text(dump_report(fit_report_json(y, x, fit, inference)), path);
}

Mode parse_mode(const std::string& name) {
  if (name == "fit") return Mode::fit;
  if (name == "select") return Mode::select;
  if (name == "simulate") return Mode::simulate;
  if (name == "binarize") return Mode::binarize;
  throw std::invalid_argument("unknown mode '" + name + "' (fit, select, simulate, binarize)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::fit: return "fit";
    case Mode::select: return "select";
    case Mode::simulate: return "simulate";
    case Mode::binarize: return "binarize";
  }
  return "";
}

void RunConfig::validate() const {
  switch (mode) {
    case Mode::fit:
      require_file(incidence, "incidence");
      if (!covariates.empty()) require_file(covariates, "covariates");
      break;
    case Mode::select:
      require_file(incidence, "incidence");
      if (!covariates.empty()) require_file(covariates, "covariates");
      if (G_range.empty() || D_range.empty()) throw std::invalid_argument("select needs non-empty G_range and D_range");
      for (int v : G_range)
        if (v < 1) throw std::invalid_argument("G_range entries must be >= 1");
      for (int v : D_range)
        if (v < 1) throw std::invalid_argument("D_range entries must be >= 1");
      break;
    case Mode::simulate:
      if (!scenario) throw std::invalid_argument("simulate needs a scenario");
      break;
    case Mode::binarize:
      require_file(raw, "raw table");
      require_file(rules, "rules");
      break;
  }
}

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ParseError("run configuration must be a JSON object");
  RunConfig rc;
  if (doc.contains("mode")) rc.mode = parse_mode(doc["mode"].get<std::string>());
  rc.incidence = resolve(doc, "incidence", base_dir);
  rc.covariates = resolve(doc, "covariates", base_dir);
  rc.raw = resolve(doc, "raw", base_dir);
  rc.rules = resolve(doc, "rules", base_dir);
  rc.out = resolve(doc, "out", base_dir);
  rc.data_out = resolve(doc, "data_out", base_dir);
  if (doc.contains("model")) rc.model = config_from_json(doc["model"]);
  if (doc.contains("G_range")) rc.G_range = doc["G_range"].get<std::vector<int>>();
  if (doc.contains("D_range")) rc.D_range = doc["D_range"].get<std::vector<int>>();
  if (doc.contains("scenario")) rc.scenario = scenario_from_json(doc["scenario"]);
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return run_config_from_json(json::parse(text), path.parent_path());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace mlta
