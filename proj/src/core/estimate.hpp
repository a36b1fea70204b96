#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "core/design.hpp"
#include "core/triangle.hpp"

namespace delaycast {

double digamma(double x);
double trigamma(double x);

// NB2 log mass with mean mu and variance mu + theta*mu^2 (size 1/theta).
// Stable in the Poisson limit theta -> 0.
double nb2_logpmf(double y, double mu, double theta);
double nb_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

// Per-observation dl/deta under the log link: (y - mu) / (1 + theta*mu).
Eigen::VectorXd nb_score_eta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

// Profile derivatives in log(theta) at fixed means.
double nb_dloglik_dlogtheta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);
double nb_d2loglik_dlogtheta2(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

double nb_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

struct FitOptions {
  double theta_init = 0.1;
  double theta_fixed = -1.0;  // > 0: do not estimate
  int max_outer = 50;
  int max_irls = 200;
  double tol_irls = 1e-8;
  double tol_outer = 1e-6;
  std::vector<double> lambda_fixed;  // pins smoothing parameters (tests)
};

struct FitDiagnostics {
  int outer_iterations = 0;
  int irls_iterations = 0;
  double final_grad_norm = 0;
  bool converged = false;
  bool theta_at_boundary = false;
  double deviance = 0;
  double edf = 0;
};

struct FitResult {
  Eigen::VectorXd beta;
  std::vector<double> lambda;  // aligned with design.penalties()
  double theta = 0;
  Eigen::MatrixXd covariance;  // inverse penalized information at convergence
  FitDiagnostics diag;
};

// Penalized IRLS with Fellner-Schall smoothing-parameter updates and a
// profile Newton step on log(theta), alternating to joint convergence.
FitResult fit(const DesignMatrix& design, const FitOptions& opts = {});

// Effective degrees of freedom per penalty block plus the unpenalized count,
// computed from the penalized information at the given lambdas.
std::vector<double> block_edf(const DesignMatrix& design, const Eigen::VectorXd& beta,
                              double theta, const std::vector<double>& lambda);

// A fit packaged with everything prediction needs: the window geometry,
// constrained bases, stratum offsets and the coefficient vector.
struct FittedModel {
  ModelSpec spec;
  Date anchor_date;
  std::vector<std::string> district_ids;
  std::vector<std::string> district_names;
  std::vector<Stratum> groups;
  Eigen::MatrixXd log_offsets;  // R x G
  RowAssembler assembler;
  Eigen::VectorXd beta;
  std::vector<double> lambda;
  double theta = 0;
  FitDiagnostics diag;
  Eigen::MatrixXd covariance;  // diagnostics only; not serialized

  int n_districts() const { return static_cast<int>(district_ids.size()); }
  int n_groups() const { return static_cast<int>(groups.size()); }
};

// eta = x(row) . beta + offset; mu = exp(eta).
double linear_predictor(const FittedModel& model, const DesignRow& row);

// Windows the triangle, builds the design and runs the estimator. The seed is
// part of the signature for reproducibility bookkeeping; the fit itself is
// deterministic.
FittedModel fit_model(const CaseTriangle& tri, const StratumFrame& frame, const ModelSpec& spec,
                      std::uint64_t seed, const FitOptions* overrides = nullptr);

// Versioned JSON round trip.
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);
void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

}  // namespace delaycast
