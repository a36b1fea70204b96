#include "core/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/error.hpp"

#include <nlohmann/json.hpp>

namespace delaycast {

namespace {

constexpr double kThetaLo = 1e-8;
constexpr double kThetaHi = 1e4;
constexpr double kEtaCap = 40.0;  // exp(40) is far above any plausible count

bool is_small_count(double y) { return y >= 0 && y < 1e6 && y == std::floor(y); }

}  // namespace

double digamma(double x) {
  // Recurrence up to x >= 6, then the asymptotic series.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 / 240)));
  return result;
}

double trigamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 / 30))));
  return result;
}

double nb2_logpmf(double y, double mu, double theta) {
  if (!(mu > 0) || !(theta > 0)) {
    throw Error(Errc::usage, "BadArgument", "nb2_logpmf needs mu > 0 and theta > 0");
  }
  double a = 1.0 / theta;
  double lg_ratio;  // lgamma(y + a) - lgamma(a)
  if (a > 1e7 && is_small_count(y)) {
    // Exact product form; the lgamma difference loses precision when a is huge.
    lg_ratio = 0.0;
    for (long i = 0; i < static_cast<long>(y); ++i) {
      lg_ratio += std::log(a + static_cast<double>(i));
    }
  } else {
    lg_ratio = std::lgamma(y + a) - std::lgamma(a);
  }
  // a*log(a/(a+mu)) = -a*log1p(mu/a), stable for both limits of theta.
  return lg_ratio - std::lgamma(y + 1.0) - a * std::log1p(mu / a) +
         y * (std::log(mu) - std::log(a + mu));
}

double nb_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) total += nb2_logpmf(y[i], mu[i], theta);
  return total;
}

Eigen::VectorXd nb_score_eta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  return (y - mu).array() / (1.0 + theta * mu.array());
}

double nb_dloglik_dlogtheta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double a = 1.0 / theta;
  double dl_da = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double yi = y[i], m = mu[i];
    double psi_diff;
    if (a > 1e7 && is_small_count(yi)) {
      psi_diff = 0.0;
      for (long j = 0; j < static_cast<long>(yi); ++j) psi_diff += 1.0 / (a + static_cast<double>(j));
    } else {
      psi_diff = digamma(yi + a) - digamma(a);
    }
    dl_da += psi_diff - std::log1p(m / a) + 1.0 - (a + yi) / (a + m);
  }
  return -a * dl_da;
}

double nb_d2loglik_dlogtheta2(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double a = 1.0 / theta;
  double dl_da = 0.0, d2l_da2 = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double yi = y[i], m = mu[i];
    double psi_diff, psi1_diff;
    if (a > 1e7 && is_small_count(yi)) {
      psi_diff = 0.0;
      psi1_diff = 0.0;
      for (long j = 0; j < static_cast<long>(yi); ++j) {
        double q = a + static_cast<double>(j);
        psi_diff += 1.0 / q;
        psi1_diff -= 1.0 / (q * q);
      }
    } else {
      psi_diff = digamma(yi + a) - digamma(a);
      psi1_diff = trigamma(yi + a) - trigamma(a);
    }
    dl_da += psi_diff - std::log1p(m / a) + 1.0 - (a + yi) / (a + m);
    d2l_da2 += psi1_diff + 1.0 / a - 1.0 / (a + m) - (m - yi) / ((a + m) * (a + m));
  }
  return a * dl_da + a * a * d2l_da2;
}

double nb_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  double a = 1.0 / theta;
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double yi = y[i], m = mu[i];
    double term = 0.0;
    if (yi > 0) term += yi * std::log(yi / m);
    term -= (yi + a) * std::log1p((yi - m) / (a + m));
    dev += 2.0 * term;
  }
  return dev;
}

namespace {

struct Scratch {
  std::vector<std::pair<int, double>> buf;
  explicit Scratch(const DesignMatrix& d) : buf(static_cast<std::size_t>(d.max_row_entries())) {}
};

Eigen::VectorXd compute_eta(const DesignMatrix& design, const Eigen::VectorXd& beta,
                            Scratch& scratch) {
  Eigen::VectorXd eta(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    int n = design.row_entries(i, scratch.buf.data());
    double v = design.offset(i);
    for (int k = 0; k < n; ++k) v += beta[scratch.buf[static_cast<std::size_t>(k)].first] *
                                     scratch.buf[static_cast<std::size_t>(k)].second;
    eta[i] = std::min(v, kEtaCap);
  }
  return eta;
}

void add_penalty(Eigen::MatrixXd& h, const std::vector<PenaltyBlock>& blocks,
                 const std::vector<double>& lambda) {
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const PenaltyBlock& b = blocks[j];
    h.block(b.offset, b.offset, b.size, b.size) += lambda[j] * b.penalty;
  }
}

// Pinned columns are held at exactly zero: unit diagonal, zero row/column and
// zero right-hand side make the solve return beta_j = 0.
void apply_pinning(Eigen::MatrixXd& h, Eigen::VectorXd* rhs, const std::vector<int>& pinned) {
  for (int j : pinned) {
    h.row(j).setZero();
    h.col(j).setZero();
    h(j, j) = 1.0;
    if (rhs) (*rhs)[j] = 0.0;
  }
}

double penalty_quadform(const Eigen::VectorXd& beta, const std::vector<PenaltyBlock>& blocks,
                        const std::vector<double>& lambda) {
  double q = 0.0;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const PenaltyBlock& b = blocks[j];
    Eigen::VectorXd bj = beta.segment(b.offset, b.size);
    q += lambda[j] * bj.dot(b.penalty * bj);
  }
  return q;
}

// X'WX and X'(W*z) in one sweep over the rows.
void accumulate_normal_equations(const DesignMatrix& design, const Eigen::VectorXd& w,
                                 const Eigen::VectorXd& z, Scratch& scratch, Eigen::MatrixXd& xtwx,
                                 Eigen::VectorXd& xtwz) {
  xtwx.setZero();
  xtwz.setZero();
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    int n = design.row_entries(i, scratch.buf.data());
    double wi = w[i];
    double wz = wi * z[i];
    for (int kA = 0; kA < n; ++kA) {
      auto [ca, va] = scratch.buf[static_cast<std::size_t>(kA)];
      xtwz[ca] += va * wz;
      double wva = wi * va;
      for (int kB = kA; kB < n; ++kB) {
        auto [cb, vb] = scratch.buf[static_cast<std::size_t>(kB)];
        if (ca <= cb) xtwx(ca, cb) += wva * vb;
        else xtwx(cb, ca) += wva * vb;
      }
    }
  }
  xtwx.triangularView<Eigen::StrictlyLower>() = xtwx.transpose();
}

double newton_logtheta(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta,
                       bool& at_boundary) {
  double x = std::log(theta);
  const double xlo = std::log(kThetaLo), xhi = std::log(kThetaHi);
  for (int it = 0; it < 40; ++it) {
    double g = nb_dloglik_dlogtheta(y, mu, std::exp(x));
    double h = nb_d2loglik_dlogtheta2(y, mu, std::exp(x));
    double step;
    if (h < -1e-12) {
      step = -g / h;
    } else {
      step = g > 0 ? 0.5 : -0.5;  // walk uphill when curvature is unhelpful
    }
    step = std::clamp(step, -2.0, 2.0);
    x = std::clamp(x + step, xlo, xhi);
    if (std::abs(step) < 1e-10 || (x == xlo && step < 0) || (x == xhi && step > 0)) break;
  }
  at_boundary = (x <= xlo + 1e-12) || (x >= xhi - 1e-12);
  return std::exp(x);
}

}  // namespace

FitResult fit(const DesignMatrix& design, const FitOptions& opts) {
  const Eigen::Index n = design.rows();
  const int p = design.cols();
  if (n < 1) throw Error(Errc::data, "EmptyWindow", "design has no rows");

  Eigen::VectorXd y(n), off(n);
  double ysum = 0.0, esum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = design.y(i);
    off[i] = design.offset(i);
    ysum += y[i];
    esum += std::exp(off[i]);
  }
  if (!(ysum > 0)) {
    throw Error(Errc::data, "EmptyWindow", "all responses are zero; nothing to fit");
  }

  const auto& blocks = design.penalties();
  std::vector<double> lambda(blocks.size(), 1.0);
  if (!opts.lambda_fixed.empty()) {
    if (opts.lambda_fixed.size() != blocks.size()) {
      throw Error(Errc::usage, "BadArgument", "lambda_fixed size does not match penalty blocks");
    }
    lambda = opts.lambda_fixed;
  }
  bool estimate_lambda = opts.lambda_fixed.empty() && !blocks.empty();
  bool estimate_theta = !(opts.theta_fixed > 0);
  double theta = estimate_theta ? opts.theta_init : opts.theta_fixed;
  if (!(theta > 0)) throw Error(Errc::usage, "BadArgument", "theta must be positive");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta[0] = std::log(ysum / esum);  // intercept start: matched marginal rate

  Scratch scratch(design);
  Eigen::MatrixXd xtwx(p, p), h(p, p);
  Eigen::VectorXd xtwz(p);

  FitDiagnostics diag;
  Eigen::VectorXd eta = compute_eta(design, beta, scratch);
  Eigen::VectorXd mu = eta.array().exp();

  auto pen_deviance = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& b) {
    return nb_deviance(y, m, theta) + penalty_quadform(b, blocks, lambda);
  };

  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  double dev = pen_deviance(mu, beta);
  int bad_streak = 0;

  auto irls = [&]() {
    for (int it = 0; it < opts.max_irls; ++it) {
      ++diag.irls_iterations;
      Eigen::VectorXd w = mu.array() / (1.0 + theta * mu.array());
      w = w.cwiseMax(1e-12);
      // Working response never needs mu in the denominator thanks to the log
      // link: W*z = W*(eta - off) + (y - mu)/(1 + theta*mu).
      Eigen::VectorXd z = (eta - off) + ((y - mu).array() / mu.array()).matrix();
      accumulate_normal_equations(design, w, z, scratch, xtwx, xtwz);
      h = xtwx;
      add_penalty(h, blocks, lambda);
      apply_pinning(h, &xtwz, design.pinned_cols());
      ldlt.compute(h);
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0)) {
        throw Error(Errc::numeric, "RankDeficient",
                    "penalized information is singular; check design identifiability");
      }
      Eigen::VectorXd beta_new = ldlt.solve(xtwz);
      Eigen::VectorXd step = beta_new - beta;

      double best_dev = std::numeric_limits<double>::infinity();
      Eigen::VectorXd best_beta = beta, best_eta = eta, best_mu = mu;
      double scale = 1.0;
      for (int half = 0; half <= 5; ++half) {
        Eigen::VectorXd cand = beta + scale * step;
        Eigen::VectorXd ce = compute_eta(design, cand, scratch);
        Eigen::VectorXd cm = ce.array().exp();
        double cd = pen_deviance(cm, cand);
        if (std::isfinite(cd) && cd < best_dev) {
          best_dev = cd;
          best_beta = cand;
          best_eta = ce;
          best_mu = cm;
        }
        if (std::isfinite(cd) && cd <= dev + 1e-12) break;
        scale *= 0.5;
      }
      if (!(best_dev <= dev + 1e-12)) {
        if (++bad_streak >= 5) {
          throw Error(Errc::numeric, "Diverged",
                      "deviance increased on 5 consecutive damped IRLS steps");
        }
      } else {
        bad_streak = 0;
      }
      double prev = dev;
      beta = best_beta;
      eta = best_eta;
      mu = best_mu;
      dev = best_dev;
      if (std::abs(prev - dev) < opts.tol_irls * (std::abs(dev) + 0.1)) break;
    }
  };

  double prev_theta = theta;
  Eigen::VectorXd prev_beta = beta;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    ++diag.outer_iterations;
    irls();

    if (estimate_lambda) {
      // Fellner-Schall multiplicative update. With non-overlapping blocks the
      // total-penalty pseudoinverse trace reduces to rank_j / lambda_j.
      Eigen::MatrixXd hinv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
      for (std::size_t j = 0; j < blocks.size(); ++j) {
        const PenaltyBlock& b = blocks[j];
        if (b.rank == 0) continue;
        double tr = (hinv.block(b.offset, b.offset, b.size, b.size).array() *
                     b.penalty.array()).sum();
        double num = static_cast<double>(b.rank) / lambda[j] - tr;
        Eigen::VectorXd bj = beta.segment(b.offset, b.size);
        double den = bj.dot(b.penalty * bj);
        num = std::max(num, 1e-12);
        den = std::max(den, 1e-12);
        double mult = std::clamp(num / den, 1e-3, 1e3);
        lambda[j] = std::clamp(lambda[j] * mult, 1e-8, 1e10);
      }
    }

    if (estimate_theta) {
      bool at_boundary = false;
      theta = newton_logtheta(y, mu, theta, at_boundary);
      diag.theta_at_boundary = at_boundary;
    }

    // Joint change over coefficients and theta. Lambda is excluded: blocks
    // whose signal is flat drift multiplicatively toward the cap without
    // moving the fit, and that drift should not block convergence.
    double change = (beta - prev_beta).cwiseAbs().maxCoeff() /
                    (1.0 + beta.cwiseAbs().maxCoeff());
    change = std::max(change, std::abs(std::log(theta / prev_theta)));
    prev_beta = beta;
    prev_theta = theta;
    dev = pen_deviance(mu, beta);  // theta/lambda moved; rebase the reference
    if (change < opts.tol_outer) {
      diag.converged = true;
      break;
    }
  }
  // Final polish at the converged hyperparameters.
  irls();

  // Score at the optimum: X'u - S*beta.
  Eigen::VectorXd u = nb_score_eta(y, mu, theta);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    int cnt = design.row_entries(i, scratch.buf.data());
    for (int k = 0; k < cnt; ++k) grad[scratch.buf[static_cast<std::size_t>(k)].first] +=
        scratch.buf[static_cast<std::size_t>(k)].second * u[i];
  }
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const PenaltyBlock& b = blocks[j];
    grad.segment(b.offset, b.size) -= lambda[j] * (b.penalty * beta.segment(b.offset, b.size));
  }
  for (int j : design.pinned_cols()) grad[j] = 0.0;
  diag.final_grad_norm = grad.cwiseAbs().maxCoeff();
  diag.deviance = nb_deviance(y, mu, theta);

  FitResult res;
  res.beta = beta;
  res.lambda = lambda;
  res.theta = theta;
  res.diag = diag;

  // Covariance and EDF from the final penalized information.
  Eigen::VectorXd w = (mu.array() / (1.0 + theta * mu.array())).cwiseMax(1e-12);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  accumulate_normal_equations(design, w, z, scratch, xtwx, xtwz);
  h = xtwx;
  add_penalty(h, blocks, lambda);
  apply_pinning(h, nullptr, design.pinned_cols());
  ldlt.compute(h);
  res.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  res.covariance = 0.5 * (res.covariance + res.covariance.transpose()).eval();
  res.diag.edf = (res.covariance * xtwx).trace();
  return res;
}

std::vector<double> block_edf(const DesignMatrix& design, const Eigen::VectorXd& beta,
                              double theta, const std::vector<double>& lambda) {
  const Eigen::Index n = design.rows();
  const int p = design.cols();
  Scratch scratch(design);
  Eigen::VectorXd eta = compute_eta(design, beta, scratch);
  Eigen::VectorXd mu = eta.array().exp();
  Eigen::VectorXd w = (mu.array() / (1.0 + theta * mu.array())).cwiseMax(1e-12);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd xtwx(p, p);
  Eigen::VectorXd xtwz(p);
  accumulate_normal_equations(design, w, z, scratch, xtwx, xtwz);
  Eigen::MatrixXd h = xtwx;
  add_penalty(h, design.penalties(), lambda);
  apply_pinning(h, nullptr, design.pinned_cols());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  Eigen::MatrixXd hat = ldlt.solve(xtwx);  // H^{-1} X'WX
  std::vector<double> out;
  double pen_total = 0.0;
  for (const auto& b : design.penalties()) {
    double e = hat.block(b.offset, b.offset, b.size, b.size).trace();
    out.push_back(e);
    pen_total += e;
  }
  out.push_back(hat.trace() - pen_total);  // unpenalized EDF last
  return out;
}

double linear_predictor(const FittedModel& model, const DesignRow& row) {
  std::vector<std::pair<int, double>> buf(
      static_cast<std::size_t>(model.assembler.max_entries()));
  int n = model.assembler.assemble(row, buf.data());
  double v = row.offset;
  for (int k = 0; k < n; ++k) v += model.beta[buf[static_cast<std::size_t>(k)].first] *
                                   buf[static_cast<std::size_t>(k)].second;
  return v;
}

FittedModel fit_model(const CaseTriangle& tri, const StratumFrame& frame, const ModelSpec& spec,
                      std::uint64_t /*seed*/, const FitOptions* overrides) {
  spec.validate();
  if (tri.anchor_index() < spec.window_days) {
    throw Error(Errc::data, "EmptyWindow",
                "triangle has fewer rows than the fitting window before the anchor");
  }
  CaseTriangle wtri = tri.window(spec.window_days);
  CumTriangle wcum = cumulate(wtri);
  TriangleDesign design = build_design(wtri, wcum, frame, spec);

  FitOptions opts = overrides ? *overrides : FitOptions{};
  if (spec.theta_fixed > 0) opts.theta_fixed = spec.theta_fixed;
  FitResult res = fit(design, opts);

  FittedModel model;
  model.spec = spec;
  model.anchor_date = wtri.anchor_date();
  for (const auto& d : frame.districts()) {
    model.district_ids.push_back(d.id);
    model.district_names.push_back(d.name);
  }
  model.groups = frame.groups();
  model.log_offsets.resize(frame.n_districts(), frame.n_groups());
  for (int r = 0; r < frame.n_districts(); ++r) {
    for (int g = 0; g < frame.n_groups(); ++g) {
      model.log_offsets(r, g) = std::log(frame.population(r, g));
    }
  }
  model.assembler = design.assembler();
  model.beta = res.beta;
  model.lambda = res.lambda;
  model.theta = res.theta;
  model.diag = res.diag;
  model.covariance = res.covariance;
  return model;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return ordered_json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const ordered_json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(i, c) = data.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

ordered_json spec_to_json(const ModelSpec& s) {
  return ordered_json{{"d_max", s.d_max},
                      {"window_days", s.window_days},
                      {"k_short", s.k_short},
                      {"include_ar_time", s.include_ar_time},
                      {"include_ar_delay", s.include_ar_delay},
                      {"include_re", s.include_re},
                      {"include_re_short", s.include_re_short},
                      {"time_basis_dim", s.time_basis_dim},
                      {"spatial_basis_dim", s.spatial_basis_dim},
                      {"penalty_order", s.penalty_order},
                      {"bootstrap_n", s.bootstrap_n},
                      {"interval_level", s.interval_level},
                      {"theta_fixed", s.theta_fixed}};
}

ModelSpec spec_from_json(const ordered_json& j) {
  ModelSpec s;
  s.d_max = j.at("d_max").get<int>();
  s.window_days = j.at("window_days").get<int>();
  s.k_short = j.at("k_short").get<int>();
  s.include_ar_time = j.at("include_ar_time").get<bool>();
  s.include_ar_delay = j.at("include_ar_delay").get<bool>();
  s.include_re = j.at("include_re").get<bool>();
  s.include_re_short = j.at("include_re_short").get<bool>();
  s.time_basis_dim = j.at("time_basis_dim").get<int>();
  s.spatial_basis_dim = j.at("spatial_basis_dim").get<int>();
  s.penalty_order = j.at("penalty_order").get<int>();
  s.bootstrap_n = j.at("bootstrap_n").get<int>();
  s.interval_level = j.at("interval_level").get<double>();
  s.theta_fixed = j.at("theta_fixed").get<double>();
  return s;
}

ordered_json layout_to_json(const DesignLayout& l) {
  ordered_json pens = ordered_json::array();
  for (const auto& b : l.penalties) {
    pens.push_back(ordered_json{{"name", b.name}, {"offset", b.offset}, {"size", b.size},
                                {"rank", b.rank}});
  }
  return ordered_json{{"p", l.p},
                      {"col_intercept", l.col_intercept},
                      {"off_delay", l.off_delay},
                      {"n_delay", l.n_delay},
                      {"off_wd_reg", l.off_wd_reg},
                      {"off_wd_rep", l.off_wd_rep},
                      {"off_age", l.off_age},
                      {"n_age", l.n_age},
                      {"off_gender", l.off_gender},
                      {"n_gender", l.n_gender},
                      {"col_ar_time", l.col_ar_time},
                      {"col_ar_delay", l.col_ar_delay},
                      {"off_time", l.off_time},
                      {"n_time", l.n_time},
                      {"off_space", l.off_space},
                      {"n_space", l.n_space},
                      {"off_re_long", l.off_re_long},
                      {"off_re_short", l.off_re_short},
                      {"n_districts", l.n_districts},
                      {"penalties", std::move(pens)},
                      {"col_names", l.col_names},
                      {"pinned", l.pinned}};
}

DesignLayout layout_from_json(const ordered_json& j) {
  DesignLayout l;
  l.p = j.at("p").get<int>();
  l.col_intercept = j.at("col_intercept").get<int>();
  l.off_delay = j.at("off_delay").get<int>();
  l.n_delay = j.at("n_delay").get<int>();
  l.off_wd_reg = j.at("off_wd_reg").get<int>();
  l.off_wd_rep = j.at("off_wd_rep").get<int>();
  l.off_age = j.at("off_age").get<int>();
  l.n_age = j.at("n_age").get<int>();
  l.off_gender = j.at("off_gender").get<int>();
  l.n_gender = j.at("n_gender").get<int>();
  l.col_ar_time = j.at("col_ar_time").get<int>();
  l.col_ar_delay = j.at("col_ar_delay").get<int>();
  l.off_time = j.at("off_time").get<int>();
  l.n_time = j.at("n_time").get<int>();
  l.off_space = j.at("off_space").get<int>();
  l.n_space = j.at("n_space").get<int>();
  l.off_re_long = j.at("off_re_long").get<int>();
  l.off_re_short = j.at("off_re_short").get<int>();
  l.n_districts = j.at("n_districts").get<int>();
  for (const auto& pj : j.at("penalties")) {
    PenaltyBlock b;
    b.name = pj.at("name").get<std::string>();
    b.offset = pj.at("offset").get<int>();
    b.size = pj.at("size").get<int>();
    b.rank = pj.at("rank").get<int>();
    l.penalties.push_back(std::move(b));
  }
  l.col_names = j.at("col_names").get<std::vector<std::string>>();
  l.pinned = j.at("pinned").get<std::vector<int>>();
  return l;
}

}  // namespace

std::string model_to_json(const FittedModel& model) {
  ordered_json j;
  j["format"] = "delaycast-model";
  j["version"] = 1;
  j["anchor_date"] = model.anchor_date.iso();
  j["spec"] = spec_to_json(model.spec);
  j["district_ids"] = model.district_ids;
  j["district_names"] = model.district_names;
  ordered_json groups = ordered_json::array();
  for (const auto& g : model.groups) {
    groups.push_back(ordered_json{{"age_group", g.age_group}, {"gender", g.gender}});
  }
  j["groups"] = std::move(groups);
  j["log_offsets"] = matrix_to_json(model.log_offsets);
  j["layout"] = layout_to_json(model.assembler.layout);
  j["window_days"] = model.assembler.window_days;
  j["time_rows"] = matrix_to_json(model.assembler.time_rows);
  j["spatial_rows"] = matrix_to_json(model.assembler.spatial_rows);
  j["age_col"] = model.assembler.age_col;
  j["gender_col"] = model.assembler.gender_col;
  j["beta"] = std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size());
  j["lambda"] = model.lambda;
  j["theta"] = model.theta;
  j["diagnostics"] = ordered_json{{"outer_iterations", model.diag.outer_iterations},
                                  {"irls_iterations", model.diag.irls_iterations},
                                  {"final_grad_norm", model.diag.final_grad_norm},
                                  {"converged", model.diag.converged},
                                  {"theta_at_boundary", model.diag.theta_at_boundary},
                                  {"deviance", model.diag.deviance},
                                  {"edf", model.diag.edf}};
  return j.dump(1);
}

FittedModel model_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  if (j.at("format").get<std::string>() != "delaycast-model" || j.at("version").get<int>() != 1) {
    throw Error(Errc::data, "BadModelFile", "unrecognized model format/version");
  }
  FittedModel m;
  m.anchor_date = Date::parse(j.at("anchor_date").get<std::string>());
  m.spec = spec_from_json(j.at("spec"));
  m.district_ids = j.at("district_ids").get<std::vector<std::string>>();
  m.district_names = j.at("district_names").get<std::vector<std::string>>();
  for (const auto& gj : j.at("groups")) {
    m.groups.push_back(Stratum{gj.at("age_group").get<std::string>(),
                               gj.at("gender").get<std::string>()});
  }
  m.log_offsets = matrix_from_json(j.at("log_offsets"));
  m.assembler.layout = layout_from_json(j.at("layout"));
  m.assembler.spec = m.spec;
  m.assembler.window_days = j.at("window_days").get<int>();
  m.assembler.time_rows = matrix_from_json(j.at("time_rows"));
  m.assembler.spatial_rows = matrix_from_json(j.at("spatial_rows"));
  m.assembler.age_col = j.at("age_col").get<std::vector<int>>();
  m.assembler.gender_col = j.at("gender_col").get<std::vector<int>>();
  auto beta = j.at("beta").get<std::vector<double>>();
  m.beta = Eigen::Map<Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  m.lambda = j.at("lambda").get<std::vector<double>>();
  m.theta = j.at("theta").get<double>();
  const auto& dj = j.at("diagnostics");
  m.diag.outer_iterations = dj.at("outer_iterations").get<int>();
  m.diag.irls_iterations = dj.at("irls_iterations").get<int>();
  m.diag.final_grad_norm = dj.at("final_grad_norm").get<double>();
  m.diag.converged = dj.at("converged").get<bool>();
  m.diag.theta_at_boundary = dj.at("theta_at_boundary").get<bool>();
  m.diag.deviance = dj.at("deviance").get<double>();
  m.diag.edf = dj.at("edf").get<double>();
  return m;
}

void save_model(const FittedModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << model_to_json(model) << '\n';
}

FittedModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace delaycast
