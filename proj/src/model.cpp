#include "mlta/model.hpp"

namespace mlta {

namespace {

std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

}  // namespace

IncidenceMatrix::IncidenceMatrix(Eigen::MatrixXd data)
    : IncidenceMatrix(data, numbered("s", data.rows()), numbered("r", data.cols())) {}

IncidenceMatrix::IncidenceMatrix(Eigen::MatrixXd data, std::vector<std::string> sending_labels,
                                 std::vector<std::string> receiving_labels)
    : data_(std::move(data)), sending_(std::move(sending_labels)), receiving_(std::move(receiving_labels)) {
  if (static_cast<Index>(sending_.size()) != data_.rows())
    throw std::invalid_argument("IncidenceMatrix: sending label count does not match rows");
  if (static_cast<Index>(receiving_.size()) != data_.cols())
    throw std::invalid_argument("IncidenceMatrix: receiving label count does not match columns");
  for (Index i = 0; i < data_.rows(); ++i)
    for (Index k = 0; k < data_.cols(); ++k)
      if (data_(i, k) != 0.0 && data_(i, k) != 1.0)
        throw std::invalid_argument("IncidenceMatrix: entry (" + std::to_string(i + 1) + ", " +
                                    std::to_string(k + 1) + ") is not 0 or 1");
}

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd data, std::vector<std::string> names)
    : data_(std::move(data)), names_(std::move(names)) {
  if (data_.cols() < 1) throw std::invalid_argument("CovariateMatrix: intercept column required");
  if (static_cast<Index>(names_.size()) != data_.cols())
    throw std::invalid_argument("CovariateMatrix: name count does not match columns");
  if (!(data_.col(0).array() == 1.0).all())
    throw std::invalid_argument("CovariateMatrix: column 0 must be identically 1");
  if (!data_.allFinite()) throw std::invalid_argument("CovariateMatrix: non-finite covariate value");
}

CovariateMatrix CovariateMatrix::intercept_only(Index n) {
  return CovariateMatrix(Eigen::MatrixXd::Ones(n, 1), {"(Intercept)"});
}

CovariateMatrix CovariateMatrix::with_intercept(const Eigen::MatrixXd& raw, std::vector<std::string> names) {
  Eigen::MatrixXd data(raw.rows(), raw.cols() + 1);
  data.col(0).setOnes();
  data.rightCols(raw.cols()) = raw;
  names.insert(names.begin(), "(Intercept)");
  return CovariateMatrix(std::move(data), std::move(names));
}

int default_nodes(int D) {
  if (D <= 2) return 15;
  if (D == 3) return 9;
  if (D == 4) return 7;
  return 5;
}

int ModelConfig::nodes_per_dimension() const { return Q > 0 ? Q : default_nodes(D); }

void ModelConfig::validate(Index n_receiving) const {
  if (G < 1) throw std::invalid_argument("G must be >= 1");
  if (D < 1) throw std::invalid_argument("D must be >= 1");
  if (D > n_receiving)
    throw std::invalid_argument("D = " + std::to_string(D) + " exceeds the number of receiving nodes R = " +
                                std::to_string(n_receiving));
  if (Q < 0) throw std::invalid_argument("Q must be >= 1 (or 0 for the default)");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
  if (!(inner_tol > 0.0) || inner_max_iter < 1) throw std::invalid_argument("invalid inner Newton settings");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

Index count_free_parameters(const ModelConfig& config, Index J, Index R) {
  Index nu = config.G + config.D + (config.G - 1) * J;
  if (config.penalize_assignments) nu += config.G * R;
  return nu;
}

}  // namespace mlta
