#pragma once

// File formats: CSV matrices, binarization rules, run configurations and
// JSON reports. Reports round every number to 10 significant digits and use a
// fixed key order, so identical inputs give identical bytes.

#include "mlta/inference.hpp"
#include "mlta/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mlta {

inline constexpr const char* kFitReportSchema = "mlta-fit-report/1";
inline constexpr const char* kStudyReportSchema = "mlta-study-report/1";
inline constexpr const char* kSelectionSchema = "mlta-selection/1";

/// A CSV file with a header row and a leading label column, cells kept as text.
struct RawTable {
  std::string corner;                     ///< header of the label column
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;
  std::vector<std::vector<std::string>> cells;

  Index rows() const noexcept { return static_cast<Index>(row_labels.size()); }
  Index column_index(const std::string& name) const;  ///< -1 when absent
};

RawTable read_table(const std::filesystem::path& path);
RawTable parse_table(const std::string& text);
std::string format_table(const RawTable& table);
void write_table(const RawTable& table, const std::filesystem::path& path);

IncidenceMatrix load_incidence(const std::filesystem::path& path);
IncidenceMatrix parse_incidence(const std::string& text);
RawTable incidence_table(const IncidenceMatrix& y);
void save_incidence(const IncidenceMatrix& y, const std::filesystem::path& path);

/// Real-valued covariates; the intercept column is prepended.
CovariateMatrix load_covariates(const std::filesystem::path& path);
void save_covariates(const CovariateMatrix& x, const std::vector<std::string>& row_labels,
                     const std::filesystem::path& path);

enum class RuleKind { greater_than, greater_equal, outside_range, equals_category };

struct BinarizationRule {
  std::string column;
  RuleKind kind = RuleKind::greater_than;
  double lower = 0.0;  ///< threshold, or the lower bound of outside_range
  double upper = 0.0;
  std::string category;
  std::string output;  ///< output column name; defaults to `column`

  void validate() const;
  /// Applies the rule to one non-missing cell.
  bool apply(const std::string& cell) const;
};

std::vector<BinarizationRule> parse_rules(const nlohmann::json& doc);
std::vector<BinarizationRule> load_rules(const std::filesystem::path& path);

/// Empty cells and "NA" are missing.
bool is_missing(const std::string& cell);

struct BinarizedTable {
  IncidenceMatrix y;
  std::vector<Index> source_rows;  ///< output row i came from input row source_rows[i]
  Index excluded = 0;              ///< rows dropped for a missing value in a rule column
};

BinarizedTable binarize(const RawTable& table, const std::vector<BinarizationRule>& rules);

/// Rounds to 10 significant digits; non-finite values pass through.
double round_report(double v);

/// Mean of pi_gk(u_hat_i) over the receiving nodes of block (g, d), weighted by
/// z_hat_ig. G x D; NaN where component g has no posterior mass.
Eigen::MatrixXd block_probabilities(const FitResult& fit);

nlohmann::json config_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& doc, ModelConfig base = {});
nlohmann::json scenario_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);

nlohmann::json fit_report_json(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit,
                               const InferenceReport& inference);
nlohmann::json study_report_json(const StudyReport& report);
nlohmann::json selection_json(const SelectionGrid& grid);

std::string dump_report(const nlohmann::json& doc);
/// Throws IoError when the path cannot be written.
void write_text(const std::string& text, const std::filesystem::path& path);
void emit_fit_report(const IncidenceMatrix& y, const CovariateMatrix& x, const FitResult& fit,
                     const InferenceReport& inference, const std::filesystem::path& path);

enum class Mode { fit, select, simulate, binarize };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct RunConfig {
  Mode mode = Mode::fit;
  std::filesystem::path incidence;
  std::filesystem::path covariates;  ///< empty: intercept only
  std::filesystem::path raw;         ///< binarize input table
  std::filesystem::path rules;
  std::filesystem::path out;         ///< empty: standard output
  std::filesystem::path data_out;    ///< simulate: optional directory for replicate 0 as CSV
  ModelConfig model;
  std::vector<int> G_range;
  std::vector<int> D_range;
  std::optional<Scenario> scenario;

  /// Checks ranges and that the input files for `mode` exist.
  void validate() const;
};

/// Relative paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mlta
