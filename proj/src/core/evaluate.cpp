#include "core/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "core/error.hpp"
#include "core/estimate.hpp"
#include "core/predict.hpp"
#include "core/rng.hpp"

namespace delaycast {

double rpe(double realized, double predicted, double pop) {
  if (!(pop > 0)) throw Error(Errc::data, "ZeroPopulation", "RPE needs population > 0");
  return 100000.0 * (realized - predicted) / pop;
}

double marpe(const std::vector<double>& rpes) {
  if (rpes.empty()) throw Error(Errc::usage, "BadArgument", "MARPE of empty vector");
  double s = 0;
  for (double v : rpes) s += std::abs(v);
  return s / static_cast<double>(rpes.size());
}

double mrpe(const std::vector<double>& rpes) {
  if (rpes.empty()) throw Error(Errc::usage, "BadArgument", "MRPE of empty vector");
  double s = 0;
  for (double v : rpes) s += v;
  return s / static_cast<double>(rpes.size());
}

const std::vector<VariantDef>& variant_registry() {
  static const std::vector<VariantDef> registry = [] {
    std::vector<VariantDef> v;
    auto add = [&](const char* name, bool ar_time, bool ar_delay, bool re, bool re_short,
                   bool is_default = false) {
      VariantDef def;
      def.name = name;
      def.spec.include_ar_time = ar_time;
      def.spec.include_ar_delay = ar_delay;
      def.spec.include_re = re;
      def.spec.include_re_short = re_short;
      def.is_default = is_default;
      v.push_back(std::move(def));
    };
    add("full", true, true, true, true);
    add("no_time_ar", false, true, true, true, true);
    add("no_delay_ar", true, false, true, true);
    add("no_ar", false, false, true, true);
    add("no_short_re", true, true, true, false);
    add("no_re", true, true, false, false);
    add("no_short_re_no_ar", false, false, true, false);
    add("no_re_no_ar", false, false, false, false);
    return v;
  }();
  return registry;
}

const VariantDef& default_variant() {
  for (const auto& v : variant_registry()) {
    if (v.is_default) return v;
  }
  return variant_registry().front();
}

const VariantDef& variant_by_name(const std::string& name) {
  for (const auto& v : variant_registry()) {
    if (v.name == name) return v;
  }
  throw Error(Errc::usage, "UnknownVariant", "no model variant named '" + name + "'");
}

namespace {

using TriangleAt = std::function<CaseTriangle(Date)>;

EvaluationReport run_evaluation(const TriangleAt& triangle_at, Date archive_end,
                                const StratumFrame& frame,
                                const std::vector<VariantDef>& variants,
                                const std::vector<Date>& anchors, const EvalOptions& opts) {
  EvaluationReport report;
  const std::vector<TargetKind> kinds = {TargetKind::nowcast, TargetKind::forecast,
                                         TargetKind::forenowcast};
  for (const Date& anchor : anchors) {
    CaseTriangle tri = triangle_at(anchor);
    // Realized triangles are shared across variants at this anchor.
    std::map<long, CaseTriangle> realized;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const VariantDef& variant = variants[vi];
      std::uint64_t cell_seed =
          splitmix64(opts.seed ^ splitmix64(static_cast<std::uint64_t>(anchor.days()) * 8u +
                                            static_cast<std::uint64_t>(vi)));
      FittedModel model = fit_model(tri, frame, variant.spec, cell_seed);
      PredictionSet pred =
          predict_targets(model, tri, frame, kKindNowcast | kKindForecast | kKindForenowcast,
                          opts.k, opts.n_boot, opts.level, cell_seed, opts.threads);

      for (TargetKind kind : kinds) {
        EvalCell cell;
        cell.anchor = anchor;
        cell.variant = variant.name;
        cell.kind = kind;
        long wait = kind == TargetKind::forenowcast ? opts.k + model.spec.d_max
                                                    : std::max(opts.k, model.spec.d_max);
        cell.realized_available = anchor + wait;
        if (cell.realized_available > archive_end) {
          cell.skipped = true;
          cell.skip_reason = "InsufficientRealization: realized counts appear on " +
                             cell.realized_available.iso() + " but the archive ends " +
                             archive_end.iso();
          report.cells.push_back(std::move(cell));
          continue;
        }
        auto it = realized.find(wait);
        if (it == realized.end()) {
          it = realized.emplace(wait, triangle_at(cell.realized_available)).first;
        }
        const CaseTriangle& real_tri = it->second;
        int T_real = real_tri.row_of_date(anchor);

        std::vector<double> rpes;
        int covered_count = 0;
        for (int r = 0; r < frame.n_districts(); ++r) {
          DistrictScore score;
          score.district_id = frame.district(r).id;
          score.realized = aggregate_target(real_tri, T_real, r, kind, opts.k);
          score.predicted = 0.0;
          for (const auto& row : pred.rows) {
            if (row.kind == target_kind_name(kind) && row.district_id == score.district_id) {
              score.predicted = row.point;
              score.lower = row.lower;
              score.upper = row.upper;
              break;
            }
          }
          score.rpe = rpe(score.realized, score.predicted, frame.district_population(r));
          score.covered = score.realized >= score.lower && score.realized <= score.upper;
          score.outbreak_signal = score.realized > score.upper;
          score.intervention_signal = score.realized < score.lower;
          if (score.covered) ++covered_count;
          rpes.push_back(score.rpe);
          cell.districts.push_back(std::move(score));
        }
        cell.marpe = marpe(rpes);
        cell.mrpe = mrpe(rpes);
        cell.coverage = static_cast<double>(covered_count) / static_cast<double>(rpes.size());
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

}  // namespace

EvaluationReport rolling_evaluation(const std::vector<SnapshotBatch>& archive,
                                    const StratumFrame& frame,
                                    const std::vector<VariantDef>& variants,
                                    const std::vector<Date>& anchors, const EvalOptions& opts) {
  if (archive.empty()) throw Error(Errc::data, "EmptySnapshots", "empty snapshot archive");
  Date archive_end = archive.back().report_date;
  auto triangle_at = [&](Date date) {
    std::vector<SnapshotBatch> upto;
    for (const auto& b : archive) {
      if (b.report_date <= date) upto.push_back(b);
    }
    if (upto.empty() || upto.back().report_date != date) {
      throw Error(Errc::data, "InsufficientRealization",
                  "archive has no snapshot for " + date.iso());
    }
    return merge_snapshots(upto, frame, opts.d_max);
  };
  return run_evaluation(triangle_at, archive_end, frame, variants, anchors, opts);
}

EvaluationReport rolling_evaluation_truth(const CaseTriangle& truth, const StratumFrame& frame,
                                          const std::vector<VariantDef>& variants,
                                          const std::vector<Date>& anchors,
                                          const EvalOptions& opts) {
  Date archive_end = truth.date_of_row(truth.n_rows()) + truth.d_max();
  auto triangle_at = [&](Date date) { return truth.as_of(date); };
  return run_evaluation(triangle_at, archive_end, frame, variants, anchors, opts);
}

std::vector<SignalFlag> retrospective_flags(const EvalCell& cell, const FlagPolicy& policy) {
  std::vector<SignalFlag> flags;
  for (const auto& d : cell.districts) {
    SignalFlag f = SignalFlag::none;
    if (policy.use_intervals) {
      if (d.outbreak_signal) f = SignalFlag::outbreak;
      else if (d.intervention_signal) f = SignalFlag::intervention;
    } else {
      if (d.rpe > policy.rpe_upper) f = SignalFlag::outbreak;
      else if (d.rpe < policy.rpe_lower) f = SignalFlag::intervention;
    }
    flags.push_back(f);
  }
  return flags;
}

void write_report_metrics_csv(const EvaluationReport& report, const std::string& path) {
  std::string out = "anchor,variant,kind,metric,value\n";
  char buf[256];
  for (const auto& cell : report.cells) {
    auto emit = [&](const char* metric, double value) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.4f\n", cell.anchor.iso().c_str(),
                    cell.variant.c_str(), target_kind_name(cell.kind), metric, value);
      out += buf;
    };
    if (cell.skipped) {
      emit("skipped", 1.0);
      continue;
    }
    emit("marpe", cell.marpe);
    emit("mrpe", cell.mrpe);
    emit("coverage", cell.coverage);
    emit("districts", static_cast<double>(cell.districts.size()));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

void write_report_rpe_csv(const EvaluationReport& report, const std::string& path) {
  std::string out =
      "anchor,variant,kind,district_id,realized,predicted,rpe,lower,upper,covered,"
      "outbreak_signal,intervention_signal\n";
  char buf[320];
  for (const auto& cell : report.cells) {
    if (cell.skipped) continue;
    for (const auto& d : cell.districts) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.2f,%.2f,%.4f,%.2f,%.2f,%d,%d,%d\n",
                    cell.anchor.iso().c_str(), cell.variant.c_str(), target_kind_name(cell.kind),
                    d.district_id.c_str(), d.realized, d.predicted, d.rpe, d.lower, d.upper,
                    d.covered ? 1 : 0, d.outbreak_signal ? 1 : 0, d.intervention_signal ? 1 : 0);
      out += buf;
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

}  // namespace delaycast
