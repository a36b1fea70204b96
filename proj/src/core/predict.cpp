#include "core/predict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

#include <nlohmann/json.hpp>

namespace delaycast {

namespace {

constexpr double kEtaCap = 40.0;

void check_model_triangle(const FittedModel& model, const CaseTriangle& tri) {
  if (tri.anchor_date() != model.anchor_date) {
    throw Error(Errc::usage, "ModelMismatch",
                "model anchored at " + model.anchor_date.iso() + " but triangle anchor is " +
                    tri.anchor_date().iso());
  }
  if (tri.n_districts() != model.n_districts() || tri.n_groups() != model.n_groups()) {
    throw Error(Errc::usage, "ModelMismatch", "triangle universe differs from the model's");
  }
  if (tri.d_max() != model.spec.d_max) {
    throw Error(Errc::usage, "ModelMismatch", "triangle d_max differs from the model's");
  }
  if (tri.anchor_index() < model.spec.window_days) {
    throw Error(Errc::usage, "ModelMismatch", "triangle is shorter than the model window");
  }
  if (tri.n_rows() != tri.anchor_index()) {
    throw Error(Errc::usage, "ModelMismatch", "triangle already extended past its anchor");
  }
}

}  // namespace

FillPlan::FillPlan(const FittedModel& model, const CaseTriangle& tri, int horizon_k)
    : model_(&model),
      tri_(&tri),
      horizon_(horizon_k),
      d_max_(tri.d_max()),
      r_(tri.n_districts()),
      g_(tri.n_groups()),
      anchor_(tri.anchor_index()),
      theta_(model.theta) {
  check_model_triangle(model, tri);
  if (horizon_k < 0) throw Error(Errc::usage, "BadArgument", "horizon must be >= 0");
  rows_out_ = anchor_ + std::max(0, horizon_k - 1);

  const DesignLayout& l = model.assembler.layout;
  if (l.col_ar_time >= 0) phi_ = model.beta[l.col_ar_time];
  if (l.col_ar_delay >= 0) delta_ = model.beta[l.col_ar_delay];

  // Window-relative t for the model: the anchor row sits at t = window_days.
  const int shift = anchor_ - model.spec.window_days;
  const std::size_t strata = static_cast<std::size_t>(r_) * static_cast<std::size_t>(g_);

  for (int s = anchor_ + 1; s <= rows_out_ + d_max_; ++s) {
    for (int d = 1; d <= d_max_; ++d) {
      int t = s - d;
      if (t < 1 || t > rows_out_) continue;
      if (t + d <= anchor_) continue;  // observed
      Cell cell{t, d, eta0_.size()};
      eta0_.resize(eta0_.size() + strata);
      int wd_reg = (tri.start_date() + (t - 1)).weekday();
      int wd_rep = (tri.start_date() + (t - 1) + d).weekday();
      for (int r = 0; r < r_; ++r) {
        for (int g = 0; g < g_; ++g) {
          DesignRow row;
          row.t = t - shift;
          row.d = d;
          row.r = r;
          row.g = g;
          row.offset = model.log_offsets(r, g);
          row.ar_time = 0.0;
          row.ar_delay = 0.0;
          row.wd_reg = wd_reg;
          row.wd_rep = wd_rep;
          eta0_[cell.eta0_offset + static_cast<std::size_t>(r) * static_cast<std::size_t>(g_) +
                static_cast<std::size_t>(g)] = linear_predictor(model, row);
        }
      }
      cells_.push_back(cell);
    }
  }
}

void FillPlan::run(FillMode mode, std::mt19937_64* rng, std::vector<double>& work_n,
                   std::vector<double>& work_c) const {
  work_n.assign(work_size(), 0.0);
  work_c.assign(work_size(), 0.0);
  const CaseTriangle& tri = *tri_;

  // Seed the work arrays with the observed wedge and its row cumulations.
  for (int t = 1; t <= tri.n_rows(); ++t) {
    for (int r = 0; r < r_; ++r) {
      for (int g = 0; g < g_; ++g) {
        double run_c = 0;
        for (int d = 1; d <= d_max_ && t + d <= anchor_; ++d) {
          double v = tri.at(t, d, r, g);
          run_c += v;
          work_n[widx(t, d, r, g)] = v;
          work_c[widx(t, d, r, g)] = run_c;
        }
      }
    }
  }

  for (const Cell& cell : cells_) {
    const int t = cell.t, d = cell.d;
    for (int r = 0; r < r_; ++r) {
      for (int g = 0; g < g_; ++g) {
        double eta = eta0_[cell.eta0_offset + static_cast<std::size_t>(r) * static_cast<std::size_t>(g_) +
                           static_cast<std::size_t>(g)];
        if (phi_ != 0.0 && t >= 2) {
          eta += phi_ * std::log1p(work_c[widx(t - 1, d, r, g)]);
        }
        if (delta_ != 0.0 && d >= 2) {
          eta += delta_ * std::log1p(work_c[widx(t, d - 1, r, g)]);
        }
        double mu = std::exp(std::min(eta, kEtaCap));
        double value = mu;
        if (mode == FillMode::sampled) {
          value = static_cast<double>(sample_nb2(*rng, mu, theta_));
        }
        work_n[widx(t, d, r, g)] = value;
        work_c[widx(t, d, r, g)] =
            (d >= 2 ? work_c[widx(t, d - 1, r, g)] : 0.0) + value;
      }
    }
  }
}

double FillPlan::aggregate(const std::vector<double>& work_n, const std::vector<double>& work_c,
                           TargetKind kind, int k, int r) const {
  const int T = anchor_;
  double total = 0;
  switch (kind) {
    case TargetKind::nowcast:
      for (int t = T - k; t <= T - 1; ++t) {
        for (int g = 0; g < g_; ++g) total += work_c[widx(t, d_max_, r, g)];
      }
      break;
    case TargetKind::forecast:
      for (int i = 1; i <= k; ++i) {
        for (int d = 1; d <= d_max_; ++d) {
          int t = T + i - d;
          if (t < 1 || t > rows_out_) {
            throw Error(Errc::usage, "MissingCells", "forecast horizon exceeds the filled rows");
          }
          for (int g = 0; g < g_; ++g) total += work_n[widx(t, d, r, g)];
        }
      }
      break;
    case TargetKind::forenowcast:
      for (int t = T; t <= T + k - 1; ++t) {
        if (t > rows_out_) {
          throw Error(Errc::usage, "MissingCells", "forenowcast horizon exceeds the filled rows");
        }
        for (int g = 0; g < g_; ++g) total += work_c[widx(t, d_max_, r, g)];
      }
      break;
  }
  return total;
}

CaseTriangle fill_cells(const FittedModel& model, const CaseTriangle& tri, const CumTriangle& cum,
                        int horizon_k, FillMode mode, std::uint64_t seed) {
  (void)cum;  // row cumulations are rebuilt alongside the fill
  FillPlan plan(model, tri, horizon_k);
  std::vector<double> work_n, work_c;
  std::mt19937_64 rng = substream(seed, 0);
  plan.run(mode, mode == FillMode::sampled ? &rng : nullptr, work_n, work_c);

  CaseTriangle out = tri;
  out.extend_rows(plan.rows_out() - tri.n_rows());
  for (int t = 1; t <= plan.rows_out(); ++t) {
    for (int d = 1; d <= tri.d_max(); ++d) {
      if (t + d <= tri.anchor_index()) continue;
      for (int r = 0; r < tri.n_districts(); ++r) {
        for (int g = 0; g < tri.n_groups(); ++g) {
          out.set_cell(t, d, r, g, work_n[plan.widx(t, d, r, g)], CellState::predicted);
        }
      }
    }
  }
  return out;
}

namespace {

struct BootstrapResult {
  // [kind][district][replicate]; national nowcast appended as district R.
  std::vector<std::vector<std::vector<double>>> draws;
};

void run_replicates(const FillPlan& plan, const std::vector<TargetKind>& kinds, int k, int n,
                    std::uint64_t seed, int threads, BootstrapResult& out) {
  const int R = plan.base().n_districts();
  out.draws.assign(kinds.size(), std::vector<std::vector<double>>(
                                     static_cast<std::size_t>(R) + 1,
                                     std::vector<double>(static_cast<std::size_t>(n), 0.0)));
  threads = std::max(1, std::min(threads, n));

  auto worker = [&](int first, int last) {
    std::vector<double> work_n, work_c;
    for (int rep = first; rep < last; ++rep) {
      std::mt19937_64 rng = substream(seed, static_cast<std::uint64_t>(rep) + 1);
      plan.run(FillMode::sampled, &rng, work_n, work_c);
      for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        double national = 0;
        for (int r = 0; r < R; ++r) {
          double v = plan.aggregate(work_n, work_c, kinds[ki], k, r);
          out.draws[ki][static_cast<std::size_t>(r)][static_cast<std::size_t>(rep)] = v;
          national += v;
        }
        out.draws[ki][static_cast<std::size_t>(R)][static_cast<std::size_t>(rep)] = national;
      }
    }
  };

  if (threads == 1) {
    worker(0, n);
    return;
  }
  std::vector<std::thread> pool;
  int chunk = (n + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    int first = w * chunk;
    int last = std::min(n, first + chunk);
    if (first >= last) break;
    pool.emplace_back(worker, first, last);
  }
  for (auto& th : pool) th.join();
}

}  // namespace

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw Error(Errc::usage, "BadArgument", "quantile of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  double h = static_cast<double>(n - 1) * p;
  double lo = std::floor(h);
  std::size_t i = static_cast<std::size_t>(std::clamp(lo, 0.0, static_cast<double>(n - 1)));
  std::size_t j = std::min(i + 1, n - 1);
  double frac = h - static_cast<double>(i);
  return values[i] + frac * (values[j] - values[i]);
}

PredictionSet predict_targets(const FittedModel& model, const CaseTriangle& tri,
                              const StratumFrame& frame, unsigned kinds_mask, int k, int n_boot,
                              double level, std::uint64_t seed, int threads) {
  if (kinds_mask == 0) throw Error(Errc::usage, "BadArgument", "no prediction kinds requested");
  if (k < 1) throw Error(Errc::usage, "BadArgument", "k must be >= 1");
  if (n_boot < 2) throw Error(Errc::usage, "BadArgument", "bootstrap needs n >= 2");
  if (!(level > 0 && level < 1)) throw Error(Errc::usage, "BadArgument", "level must be in (0,1)");
  if (frame.n_districts() != tri.n_districts() || frame.n_groups() != tri.n_groups()) {
    throw Error(Errc::usage, "BadFrame", "frame does not match the triangle universe");
  }
  if (k > tri.anchor_index() - 1) {
    throw Error(Errc::usage, "BadArgument", "k exceeds the rows before the anchor");
  }

  const bool need_future = kinds_mask & (kKindForecast | kKindForenowcast);
  const int horizon = need_future ? k : 0;
  FillPlan plan(model, tri, horizon);

  std::vector<double> mean_n, mean_c;
  plan.run(FillMode::mean, nullptr, mean_n, mean_c);

  std::vector<TargetKind> kinds;
  if (kinds_mask & (kKindNowcast | kKindIncidence)) kinds.push_back(TargetKind::nowcast);
  if (kinds_mask & kKindForecast) kinds.push_back(TargetKind::forecast);
  if (kinds_mask & kKindForenowcast) kinds.push_back(TargetKind::forenowcast);

  BootstrapResult boot;
  run_replicates(plan, kinds, k, n_boot, seed, threads, boot);

  PredictionSet set;
  set.anchor_date = tri.anchor_date();
  set.k = k;
  set.level = level;
  set.bootstrap_n = n_boot;
  set.seed = seed;
  {
    CaseTriangle filled = tri;
    filled.extend_rows(plan.rows_out() - tri.n_rows());
    for (int t = 1; t <= plan.rows_out(); ++t) {
      for (int d = 1; d <= tri.d_max(); ++d) {
        if (t + d <= tri.anchor_index()) continue;
        for (int r = 0; r < tri.n_districts(); ++r) {
          for (int g = 0; g < tri.n_groups(); ++g) {
            filled.set_cell(t, d, r, g, mean_n[plan.widx(t, d, r, g)], CellState::predicted);
          }
        }
      }
    }
    set.filled = std::move(filled);
  }

  const double p_lo = (1.0 - level) / 2.0;
  const double p_hi = 1.0 - p_lo;
  const int R = tri.n_districts();

  auto kind_slot = [&](TargetKind kind) {
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (kinds[i] == kind) return i;
    }
    throw Error(Errc::usage, "BadArgument", "kind not sampled");
  };

  auto emit_kind = [&](TargetKind kind, unsigned bit) {
    if (!(kinds_mask & bit)) return;
    std::size_t slot = kind_slot(kind);
    for (int r = 0; r < R; ++r) {
      PredictionRow row;
      row.district_id = tri.district_ids()[static_cast<std::size_t>(r)];
      row.district_name = frame.district(r).name;
      row.kind = target_kind_name(kind);
      row.point = plan.aggregate(mean_n, mean_c, kind, k, r);
      row.lower = quantile_type7(boot.draws[slot][static_cast<std::size_t>(r)], p_lo);
      row.upper = quantile_type7(boot.draws[slot][static_cast<std::size_t>(r)], p_hi);
      set.rows.push_back(std::move(row));
    }
  };
  emit_kind(TargetKind::nowcast, kKindNowcast);
  emit_kind(TargetKind::forecast, kKindForecast);
  emit_kind(TargetKind::forenowcast, kKindForenowcast);

  if (kinds_mask & kKindIncidence) {
    std::size_t slot = kind_slot(TargetKind::nowcast);
    double national_point = 0;
    for (int r = 0; r < R; ++r) {
      double pop = frame.district_population(r);
      PredictionRow row;
      row.district_id = tri.district_ids()[static_cast<std::size_t>(r)];
      row.district_name = frame.district(r).name;
      row.kind = "incidence";
      double point = plan.aggregate(mean_n, mean_c, TargetKind::nowcast, k, r);
      national_point += point;
      row.point = 100000.0 * point / pop;
      row.lower = 100000.0 * quantile_type7(boot.draws[slot][static_cast<std::size_t>(r)], p_lo) / pop;
      row.upper = 100000.0 * quantile_type7(boot.draws[slot][static_cast<std::size_t>(r)], p_hi) / pop;
      set.rows.push_back(std::move(row));
    }
    double total_pop = frame.total_population();
    PredictionRow nat;
    nat.district_id = "ALL";
    nat.district_name = "National";
    nat.kind = "incidence";
    nat.point = 100000.0 * national_point / total_pop;
    nat.lower = 100000.0 * quantile_type7(boot.draws[slot][static_cast<std::size_t>(R)], p_lo) / total_pop;
    nat.upper = 100000.0 * quantile_type7(boot.draws[slot][static_cast<std::size_t>(R)], p_hi) / total_pop;
    set.rows.push_back(std::move(nat));
  }
  return set;
}

PredictionSet nowcast(const FittedModel& model, const CaseTriangle& tri, const StratumFrame& frame,
                      int n_boot, double level, std::uint64_t seed, int threads, int k) {
  return predict_targets(model, tri, frame, kKindNowcast, k, n_boot, level, seed, threads);
}

PredictionSet forecast(const FittedModel& model, const CaseTriangle& tri,
                       const StratumFrame& frame, int k, int n_boot, double level,
                       std::uint64_t seed, int threads) {
  return predict_targets(model, tri, frame, kKindForecast, k, n_boot, level, seed, threads);
}

PredictionSet forenowcast(const FittedModel& model, const CaseTriangle& tri,
                          const StratumFrame& frame, int k, int n_boot, double level,
                          std::uint64_t seed, int threads) {
  return predict_targets(model, tri, frame, kKindForenowcast, k, n_boot, level, seed, threads);
}

std::vector<Interval> bootstrap_intervals(const FittedModel& model, const CaseTriangle& tri,
                                          TargetKind kind, int k, int n, double level,
                                          std::uint64_t seed, int threads) {
  if (n < 2) throw Error(Errc::usage, "BadArgument", "bootstrap needs n >= 2");
  if (!(level > 0 && level < 1)) throw Error(Errc::usage, "BadArgument", "level must be in (0,1)");
  const int horizon = kind == TargetKind::nowcast ? 0 : k;
  FillPlan plan(model, tri, horizon);
  BootstrapResult boot;
  run_replicates(plan, {kind}, k, n, seed, threads, boot);
  const double p_lo = (1.0 - level) / 2.0;
  std::vector<Interval> out;
  for (int r = 0; r < tri.n_districts(); ++r) {
    Interval iv;
    iv.lower = quantile_type7(boot.draws[0][static_cast<std::size_t>(r)], p_lo);
    iv.upper = quantile_type7(boot.draws[0][static_cast<std::size_t>(r)], 1.0 - p_lo);
    out.push_back(iv);
  }
  return out;
}

std::vector<double> seven_day_incidence(const FittedModel& model, const CaseTriangle& tri,
                                        const StratumFrame& frame) {
  FillPlan plan(model, tri, 0);
  std::vector<double> work_n, work_c;
  plan.run(FillMode::mean, nullptr, work_n, work_c);
  std::vector<double> out;
  double national_cases = 0;
  for (int r = 0; r < tri.n_districts(); ++r) {
    double cases = plan.aggregate(work_n, work_c, TargetKind::nowcast, 7, r);
    national_cases += cases;
    out.push_back(100000.0 * cases / frame.district_population(r));
  }
  out.push_back(100000.0 * national_cases / frame.total_population());
  return out;
}

std::vector<double> uncorrected_incidence(const CaseTriangle& tri, const StratumFrame& frame,
                                          int k) {
  const int T = tri.anchor_index();
  std::vector<double> out;
  double national = 0;
  for (int r = 0; r < tri.n_districts(); ++r) {
    double cases = 0;
    for (int t = T - k; t <= T - 1; ++t) {
      for (int d = 1; d <= tri.d_max() && t + d <= T; ++d) {
        for (int g = 0; g < tri.n_groups(); ++g) cases += tri.at(t, d, r, g);
      }
    }
    national += cases;
    out.push_back(100000.0 * cases / frame.district_population(r));
  }
  out.push_back(100000.0 * national / frame.total_population());
  return out;
}

void write_predictions_csv(const PredictionSet& set, const std::string& path) {
  std::string out = "district_id,district_name,kind,point,lower,upper,level,anchor_date,k\n";
  char buf[160];
  for (const auto& row : set.rows) {
    std::snprintf(buf, sizeof(buf), ",%s,%.2f,%.2f,%.2f,%.2f,%s,%d", row.kind.c_str(), row.point,
                  row.lower, row.upper, set.level, set.anchor_date.iso().c_str(), set.k);
    std::string line;
    line += csv::escape(row.district_id);
    line += ',';
    line += csv::escape(row.district_name);
    line += buf;
    out += line + "\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

void write_predictions_geojson(const PredictionSet& set, const StratumFrame& frame,
                               const std::string& path) {
  using ordered_json = nlohmann::ordered_json;
  ordered_json features = ordered_json::array();
  for (int r = 0; r < frame.n_districts(); ++r) {
    const District& d = frame.district(r);
    ordered_json props{{"district_id", d.id}, {"district_name", d.name}};
    for (const auto& row : set.rows) {
      if (row.district_id != d.id) continue;
      props[row.kind + "_point"] = row.point;
      props[row.kind + "_lower"] = row.lower;
      props[row.kind + "_upper"] = row.upper;
    }
    props["anchor_date"] = set.anchor_date.iso();
    props["level"] = set.level;
    features.push_back(ordered_json{
        {"type", "Feature"},
        {"geometry", ordered_json{{"type", "Point"},
                                  {"coordinates", ordered_json::array({d.lon, d.lat})}}},
        {"properties", std::move(props)}});
  }
  ordered_json doc{{"type", "FeatureCollection"}, {"features", std::move(features)}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << doc.dump(1) << '\n';
}

}  // namespace delaycast
