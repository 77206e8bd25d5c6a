#include "polyp/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "polyp/error.hpp"
#include "polyp/stats.hpp"

namespace polyp {

namespace {

constexpr double kZ975 = 1.959963984540054;

}  // namespace

DesignMatrix build_design(const SurvivalDataset& dataset, const std::vector<std::string>& covariates) {
  DesignMatrix design;
  std::vector<std::vector<double>> cols;
  for (const std::string& name : covariates) {
    const std::size_t v = dataset.variable_index(name);
    const Variable& var = dataset.schema[v];
    const auto& values = dataset.columns[v];
    if (!var.is_factor()) {
      design.columns.push_back({name, name, std::nullopt});
      cols.push_back(values);
      continue;
    }
    std::vector<bool> present(var.levels.size(), false);
    for (double x : values) present[static_cast<std::size_t>(x)] = true;
    bool reference_taken = false;
    for (std::size_t l = 0; l < var.levels.size(); ++l) {
      if (!present[l]) continue;
      if (!reference_taken) {
        reference_taken = true;
        continue;
      }
      design.columns.push_back({name + ":" + var.levels[l], name, var.levels[l]});
      std::vector<double> indicator(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        indicator[i] = static_cast<std::size_t>(values[i]) == l ? 1.0 : 0.0;
      }
      cols.push_back(std::move(indicator));
    }
  }
  design.x.resize(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      design.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
    }
  }
  return design;
}

PartialLikelihood::PartialLikelihood(const Eigen::MatrixXd& x, const std::vector<double>& time,
                                     const std::vector<bool>& event, Ties ties)
    : ties_(ties) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (time.size() != n || event.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "design and outcome sizes differ");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });

  centre_ = n > 0 ? Eigen::VectorXd(x.colwise().mean().transpose()) : Eigen::VectorXd::Zero(x.cols());
  x_.resize(x.rows(), x.cols());
  time_.resize(n);
  event_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(order[r]);
    x_.row(static_cast<Eigen::Index>(r)) = x.row(src) - centre_.transpose();
    time_[r] = time[order[r]];
    event_[r] = event[order[r]];
  }
}

double PartialLikelihood::value(const Eigen::VectorXd& beta) const {
  return evaluate(beta, false).log_likelihood;
}

CoxDerivatives PartialLikelihood::derivatives(const Eigen::VectorXd& beta) const {
  return evaluate(beta, true);
}

CoxDerivatives PartialLikelihood::evaluate(const Eigen::VectorXd& beta, bool with_derivatives) const {
  if (beta.size() != x_.cols()) {
    throw Error(ErrorCode::InvalidArgument, "coefficient vector has the wrong length");
  }
  if (!beta.allFinite()) throw Error(ErrorCode::InvalidArgument, "coefficients must be finite");

  const Eigen::Index p = x_.cols();
  const auto n = static_cast<std::size_t>(x_.rows());
  const Eigen::VectorXd eta = x_ * beta;
  const double offset = n > 0 ? eta.maxCoeff() : 0.0;

  CoxDerivatives out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd d1(p);
  Eigen::MatrixXd d2(p, p);

  std::size_t i = 0;
  while (i < n) {
    const double t = time_[i];
    double d0 = 0.0;
    int deaths = 0;
    d1.setZero();
    if (with_derivatives) d2.setZero();
    for (; i < n && time_[i] == t; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double w = std::exp(eta(r) - offset);
      s0 += w;
      if (with_derivatives) {
        s1.noalias() += w * x_.row(r).transpose();
        s2.noalias() += w * x_.row(r).transpose() * x_.row(r);
      }
      if (event_[i]) {
        ++deaths;
        d0 += w;
        out.log_likelihood += eta(r);
        if (with_derivatives) {
          d1.noalias() += w * x_.row(r).transpose();
          d2.noalias() += w * x_.row(r).transpose() * x_.row(r);
          out.gradient.noalias() += x_.row(r).transpose();
        }
      }
    }
    for (int l = 0; l < deaths; ++l) {
      const double frac = ties_ == Ties::Efron ? static_cast<double>(l) / deaths : 0.0;
      const double a0 = s0 - frac * d0;
      out.log_likelihood -= std::log(a0) + offset;
      if (with_derivatives) {
        const Eigen::VectorXd a1 = s1 - frac * d1;
        const Eigen::VectorXd mean = a1 / a0;
        out.gradient -= mean;
        out.hessian -= (s2 - frac * d2) / a0 - mean * mean.transpose();
      }
    }
  }
  return out;
}

double partial_log_likelihood(const Eigen::VectorXd& beta, const SurvivalDataset& dataset,
                              const std::vector<std::string>& covariates, Ties ties) {
  const DesignMatrix design = build_design(dataset, covariates);
  return PartialLikelihood(design.x, dataset.time, dataset.event, ties).value(beta);
}

Eigen::Index CoxFit::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name == name) return static_cast<Eigen::Index>(j);
  }
  throw Error(ErrorCode::InvalidArgument, "no coded column '" + name + "'");
}

CoxFit fit_cox(const SurvivalDataset& dataset, const std::vector<std::string>& covariates,
               const CoxConfig& config) {
  if (dataset.num_events() == 0) throw Error(ErrorCode::NoEvents, "Cox fit needs at least one event");
  const DesignMatrix design = build_design(dataset, covariates);
  const Eigen::Index p = design.x.cols();
  if (p == 0) throw Error(ErrorCode::InvalidArgument, "Cox fit needs at least one coded column");
  const PartialLikelihood lik(design.x, dataset.time, dataset.event, config.ties);

  CoxFit fit;
  fit.columns = design.columns;

  auto information_solver = [&](const Eigen::MatrixXd& hessian) {
    const Eigen::MatrixXd info = -hessian;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 1e-10 * std::max(largest, 1.0))) {
      throw Error(ErrorCode::SingularHessian,
                  "information matrix is singular; covariates are collinear or constant");
    }
    return Eigen::LDLT<Eigen::MatrixXd>(info);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxDerivatives current = lik.derivatives(beta);
  fit.log_likelihood_null = current.log_likelihood;
  fit.log_likelihood_trace.push_back(current.log_likelihood);

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    fit.iterations_used = iter;
    Eigen::VectorXd step = information_solver(current.hessian).solve(current.gradient);
    Eigen::VectorXd candidate = beta + step;
    double ll_new = lik.value(candidate);
    for (int h = 0; h < config.max_step_halvings && !(ll_new >= current.log_likelihood); ++h) {
      step /= 2.0;
      candidate = beta + step;
      ll_new = lik.value(candidate);
    }
    if (!(ll_new >= current.log_likelihood)) {
      // No ascent direction left at working precision.
      fit.converged = true;
      break;
    }
    const double improvement = ll_new - current.log_likelihood;
    beta = candidate;
    current = lik.derivatives(beta);
    fit.log_likelihood_trace.push_back(current.log_likelihood);

    if (beta.cwiseAbs().maxCoeff() > config.beta_bound) {
      fit.monotone_likelihood = true;
      break;
    }
    if (improvement < config.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.coefficients = beta;
  fit.log_likelihood_fit = current.log_likelihood;
  fit.covariance = information_solver(current.hessian).solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = (fit.covariance + fit.covariance.transpose()) / 2.0;
  fit.global_df = static_cast<int>(p);
  fit.global_chi_square = std::max(0.0, 2.0 * (fit.log_likelihood_fit - fit.log_likelihood_null));
  fit.global_p_value = stats::chi_square_sf(fit.global_chi_square, fit.global_df);

  for (Eigen::Index j = 0; j < p; ++j) {
    const double b = beta(j);
    const double se = fit.standard_error(j);
    fit.risk_ratios.push_back({fit.columns[static_cast<std::size_t>(j)].name, std::exp(b),
                               std::exp(b - kZ975 * se), std::exp(b + kZ975 * se),
                               stats::normal_two_sided_p(b / se)});
  }
  return fit;
}

double predict_relative_risk(const CoxFit& fit, const CovariateRow& row) {
  double eta = 0.0;
  for (std::size_t j = 0; j < fit.columns.size(); ++j) {
    const CodedColumn& col = fit.columns[j];
    auto it = row.find(col.variable);
    if (it == row.end()) {
      throw Error(ErrorCode::MissingCovariate, "row lacks covariate '" + col.variable + "'");
    }
    double x = 0.0;
    if (col.level) {
      const auto* level = std::get_if<std::string>(&it->second);
      if (level == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "covariate '" + col.variable + "' must be a level");
      }
      x = *level == *col.level ? 1.0 : 0.0;
    } else {
      const auto* value = std::get_if<double>(&it->second);
      if (value == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "covariate '" + col.variable + "' must be numeric");
      }
      x = *value;
    }
    eta += fit.coefficients(static_cast<Eigen::Index>(j)) * x;
  }
  return std::exp(eta);
}

}  // namespace polyp
