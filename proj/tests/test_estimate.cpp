#include <doctest.h>

#include <cmath>
#include <random>

#include "core/design.hpp"
#include "core/error.hpp"
#include "core/estimate.hpp"
#include "core/evaluate.hpp"
#include "core/rng.hpp"
#include "core/synth.hpp"
#include "helpers.hpp"

using namespace delaycast;
using testutil::small_frame;

namespace {

// Independent oracle: plain Newton iterations for an unpenalized Poisson GLM
// with log link and offsets, using dense Eigen algebra only.
Eigen::VectorXd poisson_newton_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& offset) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  beta[0] = std::log(y.mean() / offset.array().exp().mean());
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd mu = (x * beta + offset).array().exp();
    Eigen::MatrixXd h = x.transpose() * mu.asDiagonal() * x;
    Eigen::VectorXd g = x.transpose() * (y - mu);
    Eigen::VectorXd step = h.ldlt().solve(g);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  return beta;
}

double poisson_logpmf(double y, double mu) {
  return y * std::log(mu) - mu - std::lgamma(y + 1.0);
}

// High-precision reference path in long double.
long double nb2_logpmf_ld(long double y, long double mu, long double theta) {
  long double a = 1.0L / theta;
  return lgammal(y + a) - lgammal(a) - lgammal(y + 1.0L) + a * logl(a / (a + mu)) +
         y * logl(mu / (a + mu));
}

}  // namespace

TEST_CASE("intercept-only fit returns the log mean") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd y(3);
  y << 2, 4, 6;
  DenseDesign design(x, y, Eigen::VectorXd::Zero(3));
  FitOptions opts;
  opts.theta_fixed = 1e-8;
  FitResult res = fit(design, opts);
  CHECK(res.beta[0] == doctest::Approx(std::log(4.0)).epsilon(1e-8));
}

TEST_CASE("Poisson limit matches the independent Newton oracle on a 50-row design") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01(0, 1);
  const int n = 50, p = 4;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd offset(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = 0.5 * n01(rng);
    offset[i] = 0.3 * n01(rng);
  }
  Eigen::VectorXd beta_true(p);
  beta_true << 1.1, 0.4, -0.6, 0.2;
  Eigen::VectorXd y(n);
  std::mt19937_64 yrng(7);
  for (int i = 0; i < n; ++i) {
    double mu = std::exp(x.row(i).dot(beta_true) + offset[i]);
    std::poisson_distribution<long> pois(mu);
    y[i] = static_cast<double>(pois(yrng));
  }
  if (!(y.sum() > 0)) y[0] = 1;

  DenseDesign design(x, y, offset);
  FitOptions opts;
  opts.theta_fixed = 1e-8;
  FitResult res = fit(design, opts);
  Eigen::VectorXd oracle = poisson_newton_oracle(x, y, offset);
  CHECK((res.beta - oracle).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("nb2_logpmf") {
  SUBCASE("mass at zero with mu=1, theta=1 is 1/2") {
    CHECK(nb2_logpmf(0, 1.0, 1.0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("theta -> 0 approaches the Poisson mass") {
    for (int y = 0; y <= 10; ++y) {
      for (double mu : {0.3, 1.0, 2.5, 5.0}) {
        CHECK(std::abs(nb2_logpmf(y, mu, 1e-10) - poisson_logpmf(y, mu)) < 1e-6);
      }
    }
  }
  SUBCASE("random grid matches the long-double reference to 1e-10") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> umu(0.1, 20.0);
    std::uniform_real_distribution<double> uth(0.01, 10.0);
    std::uniform_int_distribution<int> uy(0, 50);
    for (int rep = 0; rep < 500; ++rep) {
      double y = uy(rng), mu = umu(rng), theta = uth(rng);
      long double ref = nb2_logpmf_ld(y, mu, theta);
      CHECK(std::abs(nb2_logpmf(y, mu, theta) - static_cast<double>(ref)) < 1e-10);
    }
  }
  SUBCASE("probabilities sum to one") {
    double total = 0;
    for (int y = 0; y < 400; ++y) total += std::exp(nb2_logpmf(y, 3.0, 0.7));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("analytic scores match central finite differences") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01(0, 1);
  std::uniform_real_distribution<double> uth(0.05, 2.0);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 30, p = 3;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd offset(n), beta(p);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (int j = 1; j < p; ++j) x(i, j) = 0.7 * n01(rng);
      offset[i] = 0.2 * n01(rng);
    }
    for (int j = 0; j < p; ++j) beta[j] = 0.4 * n01(rng);
    beta[0] += 0.8;
    double theta = uth(rng);
    Eigen::VectorXd mu = (x * beta + offset).array().exp();
    Eigen::VectorXd y(n);
    std::mt19937_64 yrng(1000 + static_cast<unsigned>(rep));
    for (int i = 0; i < n; ++i) y[i] = static_cast<double>(sample_nb2(yrng, mu[i], theta));

    // d loglik / d beta = X' u.
    Eigen::VectorXd analytic = x.transpose() * nb_score_eta(y, mu, theta);
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd bp = beta, bm = beta;
      bp[j] += h;
      bm[j] -= h;
      double fp = nb_loglik(y, (x * bp + offset).array().exp(), theta);
      double fm = nb_loglik(y, (x * bm + offset).array().exp(), theta);
      double fd = (fp - fm) / (2 * h);
      CHECK(std::abs(analytic[j] - fd) <= 1e-4 * (1.0 + std::abs(fd)));
    }

    // d loglik / d log theta.
    double analytic_th = nb_dloglik_dlogtheta(y, mu, theta);
    double fp = nb_loglik(y, mu, std::exp(std::log(theta) + h));
    double fm = nb_loglik(y, mu, std::exp(std::log(theta) - h));
    double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(analytic_th - fd) <= 1e-4 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("fit on a synthetic window leaves a near-zero penalized score") {
  ScenarioSpec scen;
  scen.n_districts = 16;
  scen.days = 40;
  SynthResult synth = generate(scen, 5, false);
  CaseTriangle tri = synth.truth.as_of(synth.truth.start_date() + 34);
  ModelSpec spec = default_variant().spec;
  FittedModel model = fit_model(tri, synth.frame, spec, 1);
  CHECK(model.diag.converged);
  CHECK(model.theta > 0);
  for (double l : model.lambda) CHECK(l > 0);

  // Score tolerance is relative to the information scale.
  CaseTriangle wtri = tri.window(spec.window_days);
  CumTriangle wcum = cumulate(wtri);
  TriangleDesign design = build_design(wtri, wcum, synth.frame, spec);
  Eigen::MatrixXd x = design.dense();
  Eigen::VectorXd eta(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    eta[i] = x.row(i).dot(model.beta) + design.offset(i);
  }
  Eigen::VectorXd mu = eta.array().exp();
  Eigen::VectorXd y(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) y[i] = design.y(i);
  Eigen::VectorXd grad = x.transpose() * nb_score_eta(y, mu, model.theta);
  Eigen::MatrixXd h = x.transpose() *
                      (mu.array() / (1.0 + model.theta * mu.array())).matrix().asDiagonal() * x;
  const auto& pens = design.penalties();
  for (std::size_t j = 0; j < pens.size(); ++j) {
    grad.segment(pens[j].offset, pens[j].size) -=
        model.lambda[j] * (pens[j].penalty * model.beta.segment(pens[j].offset, pens[j].size));
    h.block(pens[j].offset, pens[j].offset, pens[j].size, pens[j].size) +=
        model.lambda[j] * pens[j].penalty;
  }
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-6 * (1.0 + h.diagonal().cwiseAbs().maxCoeff()));

  SUBCASE("fitted means are positive everywhere") {
    CHECK(mu.minCoeff() > 0);
  }

  SUBCASE("EDF per block never grows when its lambda is increased tenfold") {
    std::vector<double> edf0 = block_edf(design, model.beta, model.theta, model.lambda);
    for (std::size_t j = 0; j < model.lambda.size(); ++j) {
      std::vector<double> bumped = model.lambda;
      bumped[j] *= 10.0;
      std::vector<double> edf1 = block_edf(design, model.beta, model.theta, bumped);
      CHECK(edf1[j] <= edf0[j] + 1e-9);
    }
  }
}

TEST_CASE("theta and coefficients are recovered from simulated NB data") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01(0, 1);
  const int n = 5000, p = 5;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = 0.5 * n01(rng);
  }
  Eigen::VectorXd beta_true(p);
  beta_true << 1.2, 0.5, -0.4, 0.3, -0.2;
  const double theta_true = 0.5;
  Eigen::VectorXd y(n);
  std::mt19937_64 yrng(123);
  for (int i = 0; i < n; ++i) {
    double mu = std::exp(x.row(i).dot(beta_true));
    y[i] = static_cast<double>(sample_nb2(yrng, mu, theta_true));
  }
  DenseDesign design(x, y, offset);
  FitResult res = fit(design, FitOptions{});
  CHECK(res.theta > 0.35);
  CHECK(res.theta < 0.70);
  double rmse = std::sqrt((res.beta - beta_true).squaredNorm() / p);
  CHECK(rmse < 0.1);
  CHECK_FALSE(res.diag.theta_at_boundary);
}

TEST_CASE("equidispersed data pins theta at the lower boundary and reports it") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(200, 1);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) y[i] = 5.0;  // zero variance
  DenseDesign design(x, y, Eigen::VectorXd::Zero(200));
  FitResult res = fit(design, FitOptions{});
  CHECK(res.diag.theta_at_boundary);
  CHECK(res.theta == doctest::Approx(1e-8));
  CHECK(res.beta[0] == doctest::Approx(std::log(5.0)).epsilon(1e-6));
}

TEST_CASE("all-zero responses are rejected as an empty window") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
  DenseDesign design(x, y, Eigen::VectorXd::Zero(5));
  CHECK_THROWS_WITH_AS(fit(design, FitOptions{}), doctest::Contains("EmptyWindow"), Error);
}

TEST_CASE("fit_model needs a full window of history") {
  ScenarioSpec scen;
  scen.n_districts = 4;
  scen.days = 15;
  SynthResult synth = generate(scen, 2, false);
  CaseTriangle tri = synth.truth.as_of(synth.truth.start_date() + 9);  // only 10 rows
  CHECK_THROWS_WITH_AS(fit_model(tri, synth.frame, default_variant().spec, 1),
                       doctest::Contains("EmptyWindow"), Error);
}

TEST_CASE("random-effect shrinkage nests the no-RE variant") {
  ScenarioSpec scen;
  scen.n_districts = 16;
  scen.days = 40;
  scen.sigma_u_long = 0.4;
  SynthResult synth = generate(scen, 21, false);
  CaseTriangle tri = synth.truth.as_of(synth.truth.start_date() + 34);
  CaseTriangle wtri = tri.window(21);
  CumTriangle wcum = cumulate(wtri);

  ModelSpec no_re = variant_by_name("no_re").spec;
  TriangleDesign d_nore = build_design(wtri, wcum, synth.frame, no_re);
  FitOptions opts;
  opts.theta_fixed = 0.4;
  FitResult r_nore = fit(d_nore, opts);

  ModelSpec full = variant_by_name("full").spec;
  TriangleDesign d_full = build_design(wtri, wcum, synth.frame, full);
  FitOptions opts_full;
  opts_full.theta_fixed = 0.4;
  // Smooth lambdas pinned at the no-RE estimates, RE lambdas at 1e8.
  for (std::size_t j = 0; j < d_full.penalties().size(); ++j) {
    const std::string& name = d_full.penalties()[j].name;
    if (name == "re_long" || name == "re_short") {
      opts_full.lambda_fixed.push_back(1e8);
    } else {
      for (std::size_t i = 0; i < d_nore.penalties().size(); ++i) {
        if (d_nore.penalties()[i].name == name) opts_full.lambda_fixed.push_back(r_nore.lambda[i]);
      }
    }
  }
  FitResult r_full = fit(d_full, opts_full);

  Eigen::MatrixXd x_full = d_full.dense();
  Eigen::MatrixXd x_nore = d_nore.dense();
  double rel_sum = 0;
  for (Eigen::Index i = 0; i < d_full.rows(); ++i) {
    double mu_full = std::exp(x_full.row(i).dot(r_full.beta) + d_full.offset(i));
    double mu_nore = std::exp(x_nore.row(i).dot(r_nore.beta) + d_nore.offset(i));
    rel_sum += std::abs(mu_full - mu_nore) / (std::abs(mu_nore) + 1e-12);
  }
  CHECK(rel_sum / static_cast<double>(d_full.rows()) < 1e-3);
}

TEST_CASE("linear predictor") {
  ScenarioSpec scen;
  scen.n_districts = 16;
  scen.days = 40;
  SynthResult synth = generate(scen, 8, false);
  CaseTriangle tri = synth.truth.as_of(synth.truth.start_date() + 34);
  FittedModel model = fit_model(tri, synth.frame, default_variant().spec, 1);

  SUBCASE("zero coefficients leave only the offset") {
    FittedModel zero = model;
    zero.beta.setZero();
    DesignRow row;
    row.t = 10;
    row.d = 2;
    row.r = 3;
    row.g = 1;
    row.offset = model.log_offsets(3, 1);
    double eta = linear_predictor(zero, row);
    CHECK(eta == doctest::Approx(model.log_offsets(3, 1)));
    CHECK(std::exp(eta) == doctest::Approx(synth.frame.population(3, 1)));
  }
  SUBCASE("doubling the population shifts eta by log 2") {
    DesignRow row;
    row.t = 10;
    row.d = 2;
    row.r = 3;
    row.g = 1;
    row.offset = model.log_offsets(3, 1);
    double eta1 = linear_predictor(model, row);
    row.offset += std::log(2.0);
    CHECK(linear_predictor(model, row) == doctest::Approx(eta1 + std::log(2.0)));
  }
  SUBCASE("matches an explicit dot-product oracle") {
    CaseTriangle wtri = tri.window(21);
    CumTriangle wcum = cumulate(wtri);
    TriangleDesign design = build_design(wtri, wcum, synth.frame, model.spec);
    Eigen::MatrixXd x = design.dense();
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(design.rows(), 200); ++i) {
      double oracle = x.row(i).dot(model.beta) + design.offset(i);
      CHECK(linear_predictor(model, design.design_rows()[static_cast<std::size_t>(i)]) ==
            doctest::Approx(oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("model JSON round trip is exact and deterministic") {
  ScenarioSpec scen;
  scen.n_districts = 16;
  scen.days = 40;
  SynthResult synth = generate(scen, 13, false);
  CaseTriangle tri = synth.truth.as_of(synth.truth.start_date() + 34);
  FittedModel model = fit_model(tri, synth.frame, default_variant().spec, 1);

  std::string j1 = model_to_json(model);
  FittedModel back = model_from_json(j1);
  std::string j2 = model_to_json(back);
  CHECK(j1 == j2);
  CHECK(back.theta == model.theta);
  CHECK(back.beta.isApprox(model.beta, 0.0));
  CHECK(back.anchor_date == model.anchor_date);
  CHECK(back.assembler.layout.p == model.assembler.layout.p);

  DesignRow row;
  row.t = 23;  // past the window: exercises the clamped time basis
  row.d = 3;
  row.r = 5;
  row.g = 2;
  row.offset = model.log_offsets(5, 2);
  row.ar_time = 0.7;
  row.ar_delay = 1.1;
  row.wd_reg = 4;
  row.wd_rep = 6;
  CHECK(linear_predictor(back, row) == linear_predictor(model, row));
}
