#pragma once

// Cox proportional hazards regression by Newton-Raphson on the partial
// likelihood, with Efron (default) or Breslow handling of tied event times.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polyp/dataset.hpp"

namespace polyp {

enum class Ties { Efron, Breslow };

// One column of the reference-coded design matrix. Continuous variables map
// to one column named after the variable; each non-reference level of a
// factor maps to an indicator column named "variable:Level".
struct CodedColumn {
  std::string name;
  std::string variable;
  std::optional<std::string> level;
};

struct DesignMatrix {
  std::vector<CodedColumn> columns;
  Eigen::MatrixXd x;  // cases x columns
};

// Reference level is the first declared level that occurs in the data;
// levels absent from the data get no column.
DesignMatrix build_design(const SurvivalDataset& dataset, const std::vector<std::string>& covariates);

struct CoxDerivatives {
  double log_likelihood = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // second derivative (negative semi-definite)
};

// Partial likelihood machinery over a fixed design. Rows are sorted by time
// once; evaluation is deterministic.
class PartialLikelihood {
 public:
  PartialLikelihood(const Eigen::MatrixXd& x, const std::vector<double>& time,
                    const std::vector<bool>& event, Ties ties = Ties::Efron);

  double value(const Eigen::VectorXd& beta) const;
  CoxDerivatives derivatives(const Eigen::VectorXd& beta) const;
  Eigen::Index num_columns() const { return x_.cols(); }

 private:
  CoxDerivatives evaluate(const Eigen::VectorXd& beta, bool with_derivatives) const;

  Eigen::MatrixXd x_;  // time-descending, column-centred
  Eigen::VectorXd centre_;
  std::vector<double> time_;
  std::vector<bool> event_;
  Ties ties_;
};

// Throws Error(InvalidArgument) on non-finite beta or a size mismatch.
double partial_log_likelihood(const Eigen::VectorXd& beta, const SurvivalDataset& dataset,
                              const std::vector<std::string>& covariates, Ties ties = Ties::Efron);

struct CoxConfig {
  Ties ties = Ties::Efron;
  double tol = 1e-9;
  int max_iter = 25;
  double beta_bound = 20.0;
  int max_step_halvings = 30;
};

struct RiskRatio {
  std::string covariate;
  double rr = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double p_value = 1.0;
};

struct CoxFit {
  std::vector<CodedColumn> columns;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  std::vector<RiskRatio> risk_ratios;
  double log_likelihood_fit = 0.0;
  double log_likelihood_null = 0.0;
  double global_chi_square = 0.0;
  int global_df = 0;
  double global_p_value = 1.0;
  int iterations_used = 0;
  bool converged = false;
  bool monotone_likelihood = false;
  std::vector<double> log_likelihood_trace;  // one entry per accepted iterate, from beta = 0

  double standard_error(Eigen::Index j) const { return std::sqrt(covariance(j, j)); }
  double z_statistic(Eigen::Index j) const { return coefficients(j) / standard_error(j); }
  // Index of a coded column by name; throws Error(InvalidArgument) if absent.
  Eigen::Index column_index(const std::string& name) const;
};

// Throws Error(NoEvents) or Error(SingularHessian).
CoxFit fit_cox(const SurvivalDataset& dataset, const std::vector<std::string>& covariates,
               const CoxConfig& config = {});

// exp(beta' x) for a row coded like the training data.
// Throws Error(MissingCovariate) when a fitted variable is absent.
double predict_relative_risk(const CoxFit& fit, const CovariateRow& row);

}  // namespace polyp
