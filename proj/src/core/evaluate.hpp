#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/design.hpp"
#include "core/triangle.hpp"

namespace delaycast {

// Relative prediction error per 100k inhabitants; positive when the model
// underpredicts.
double rpe(double realized, double predicted, double pop);
double marpe(const std::vector<double>& rpes);  // mean absolute
double mrpe(const std::vector<double>& rpes);   // signed mean

// The eight model variants: {both AR terms, drop time AR, drop delay AR,
// drop both} x {full random effects} plus {drop short RE, drop all RE} each
// with and without the AR pair. The production default drops the time AR.
struct VariantDef {
  std::string name;
  ModelSpec spec;
  bool is_default = false;
};
const std::vector<VariantDef>& variant_registry();
const VariantDef& default_variant();
const VariantDef& variant_by_name(const std::string& name);

struct DistrictScore {
  std::string district_id;
  double realized = 0;
  double predicted = 0;
  double rpe = 0;
  double lower = 0;
  double upper = 0;
  bool covered = false;
  bool outbreak_signal = false;      // realized above the interval
  bool intervention_signal = false;  // realized below the interval
};

struct EvalCell {
  Date anchor;
  std::string variant;
  TargetKind kind = TargetKind::nowcast;
  Date realized_available;  // anchor+7 for nowcast/forecast, anchor+14 for forenowcast
  bool skipped = false;
  std::string skip_reason;
  std::vector<DistrictScore> districts;
  double marpe = 0;
  double mrpe = 0;
  double coverage = 0;
};

struct EvaluationReport {
  std::vector<EvalCell> cells;
};

struct EvalOptions {
  int k = 7;
  int d_max = 7;  // folding horizon for triangles rebuilt from snapshots
  int n_boot = 200;
  double level = 0.90;
  std::uint64_t seed = 1;
  int threads = 1;
};

// Fits every variant at every anchor on the data available then, predicts all
// three targets, and scores them against the triangles rebuilt from snapshots
// at anchor+7 / anchor+14. Anchors whose realization lies past the archive
// end are skipped with a report entry.
EvaluationReport rolling_evaluation(const std::vector<SnapshotBatch>& archive,
                                    const StratumFrame& frame,
                                    const std::vector<VariantDef>& variants,
                                    const std::vector<Date>& anchors, const EvalOptions& opts);

// Synthetic-suite variant: data as of any date comes from re-masking a
// complete ground-truth triangle instead of replaying snapshots.
EvaluationReport rolling_evaluation_truth(const CaseTriangle& truth, const StratumFrame& frame,
                                          const std::vector<VariantDef>& variants,
                                          const std::vector<Date>& anchors,
                                          const EvalOptions& opts);

enum class SignalFlag : unsigned char { none, outbreak, intervention };

struct FlagPolicy {
  bool use_intervals = true;  // flag on interval exceedance
  double rpe_upper = 0;       // used instead when use_intervals is false
  double rpe_lower = 0;
};

std::vector<SignalFlag> retrospective_flags(const EvalCell& cell, const FlagPolicy& policy = {});

// Long-format metrics (anchor, variant, kind, metric, value) and the
// per-district score table.
void write_report_metrics_csv(const EvaluationReport& report, const std::string& path);
void write_report_rpe_csv(const EvaluationReport& report, const std::string& path);

}  // namespace delaycast
