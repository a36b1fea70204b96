#include <doctest.h>

#include <cmath>
#include <random>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/estimate.hpp"
#include "core/evaluate.hpp"
#include "core/predict.hpp"
#include "core/synth.hpp"

using namespace delaycast;

TEST_CASE("rpe") {
  CHECK(rpe(50, 40, 100000) == doctest::Approx(10.0));
  CHECK(rpe(7, 7, 12345) == doctest::Approx(0.0));
  CHECK(rpe(10, 25, 50000) == doctest::Approx(-30.0));
  CHECK_THROWS_WITH_AS(rpe(1, 1, 0), doctest::Contains("ZeroPopulation"), Error);
}

TEST_CASE("marpe and mrpe") {
  CHECK(marpe({10, -10}) == doctest::Approx(10.0));
  CHECK(mrpe({10, -10}) == doctest::Approx(0.0));
  std::vector<double> constant(17, -3.5);
  CHECK(marpe(constant) == doctest::Approx(3.5));
  CHECK(mrpe(constant) == doctest::Approx(-3.5));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01(0, 5);
  std::vector<double> values;
  for (int i = 0; i < 101; ++i) values.push_back(n01(rng));
  double abs_sum = 0, sum = 0;
  for (double v : values) {
    abs_sum += std::abs(v);
    sum += v;
  }
  CHECK(marpe(values) == doctest::Approx(abs_sum / 101));
  CHECK(mrpe(values) == doctest::Approx(sum / 101));
  // Jensen: mean absolute dominates the absolute mean.
  CHECK(marpe(values) >= std::abs(mrpe(values)));
}

TEST_CASE("rolling evaluation emits the expected cells and respects availability") {
  ScenarioSpec scen;
  scen.n_districts = 8;
  scen.days = 60;
  SynthResult synth = generate(scen, 55);
  std::vector<VariantDef> variants = {default_variant()};
  EvalOptions opts;
  opts.n_boot = 30;

  Date a1 = synth.truth.start_date() + 29;
  Date a2 = synth.truth.start_date() + 36;
  EvaluationReport report =
      rolling_evaluation(synth.snapshots, synth.frame, variants, {a1, a2}, opts);
  CHECK(report.cells.size() == 2 * 1 * 3);
  for (const auto& cell : report.cells) {
    CHECK_FALSE(cell.skipped);
    CHECK(cell.districts.size() == 8);
    CHECK(cell.marpe >= std::abs(cell.mrpe));  // Jensen again, on real cells
    long wait = cell.kind == TargetKind::forenowcast ? 14 : 7;
    CHECK(cell.realized_available == cell.anchor + wait);
  }

  SUBCASE("anchor too close to the archive end is skipped with a reason") {
    Date late = synth.truth.start_date() + static_cast<long>(scen.days) + 3;
    EvaluationReport r2 = rolling_evaluation(synth.snapshots, synth.frame, variants, {late}, opts);
    int skipped = 0;
    for (const auto& cell : r2.cells) {
      if (cell.skipped) {
        ++skipped;
        CHECK(cell.skip_reason.find("InsufficientRealization") != std::string::npos);
      }
    }
    CHECK(skipped >= 1);  // at least the forenowcast cell cannot be realized
  }

  SUBCASE("scores use only data available at the realization date") {
    // Truncate the archive right after the realization dates: identical report.
    std::vector<SnapshotBatch> truncated;
    for (const auto& b : synth.snapshots) {
      if (b.report_date <= a2 + 14) truncated.push_back(b);
    }
    EvaluationReport r_full =
        rolling_evaluation(synth.snapshots, synth.frame, variants, {a1, a2}, opts);
    EvaluationReport r_trunc =
        rolling_evaluation(truncated, synth.frame, variants, {a1, a2}, opts);
    REQUIRE(r_full.cells.size() == r_trunc.cells.size());
    for (std::size_t i = 0; i < r_full.cells.size(); ++i) {
      CHECK(r_full.cells[i].marpe == r_trunc.cells[i].marpe);
      CHECK(r_full.cells[i].mrpe == r_trunc.cells[i].mrpe);
      CHECK(r_full.cells[i].coverage == r_trunc.cells[i].coverage);
    }
  }
}

TEST_CASE("truth-backed evaluation matches the snapshot-backed one") {
  ScenarioSpec scen;
  scen.n_districts = 6;
  scen.days = 55;
  SynthResult synth = generate(scen, 91);
  std::vector<VariantDef> variants = {default_variant()};
  EvalOptions opts;
  opts.n_boot = 25;
  Date anchor = synth.truth.start_date() + 30;
  EvaluationReport via_snapshots =
      rolling_evaluation(synth.snapshots, synth.frame, variants, {anchor}, opts);
  EvaluationReport via_truth =
      rolling_evaluation_truth(synth.truth, synth.frame, variants, {anchor}, opts);
  REQUIRE(via_snapshots.cells.size() == via_truth.cells.size());
  for (std::size_t i = 0; i < via_truth.cells.size(); ++i) {
    CHECK(via_snapshots.cells[i].marpe ==
          doctest::Approx(via_truth.cells[i].marpe).epsilon(1e-12));
    CHECK(via_snapshots.cells[i].mrpe == doctest::Approx(via_truth.cells[i].mrpe).epsilon(1e-12));
  }
}

TEST_CASE("retrospective flags") {
  ScenarioSpec scen;
  scen.n_districts = 10;
  scen.days = 60;
  SynthResult synth = generate(scen, 123);
  std::vector<VariantDef> variants = {default_variant()};
  EvalOptions opts;
  opts.n_boot = 150;
  Date anchor = synth.truth.start_date() + 40;

  SUBCASE("an injected outbreak in the realization week is flagged") {
    // 6x rate in district 4 during the forecast week only.
    ScenarioSpec boom = scen;
    boom.injections.push_back({4, 42, 60, 6.0});
    int flagged = 0, trials = 8;
    for (int trial = 0; trial < trials; ++trial) {
      SynthResult s = generate(boom, 7000 + static_cast<std::uint64_t>(trial));
      EvaluationReport report =
          rolling_evaluation_truth(s.truth, s.frame, variants, {anchor}, opts);
      for (const auto& cell : report.cells) {
        if (cell.kind != TargetKind::forenowcast) continue;
        auto flags = retrospective_flags(cell);
        if (flags[4] == SignalFlag::outbreak) ++flagged;
      }
    }
    CHECK(flagged >= trials - 1);
  }

  SUBCASE("globally halved realization flags interventions") {
    SynthResult s = generate(scen, 31);
    CaseTriangle tri = s.truth.as_of(anchor);
    FittedModel model = fit_model(tri, s.frame, default_variant().spec, 3);
    PredictionSet pred = predict_targets(model, tri, s.frame, kKindForenowcast, 7, 150, 0.9, 3, 2);
    EvalCell cell;
    cell.anchor = anchor;
    cell.variant = "no_time_ar";
    cell.kind = TargetKind::forenowcast;
    int T_truth = s.truth.row_of_date(anchor);
    for (int r = 0; r < s.frame.n_districts(); ++r) {
      DistrictScore score;
      score.district_id = s.frame.district(r).id;
      score.realized = 0.5 * aggregate_target(s.truth, T_truth, r, TargetKind::forenowcast, 7);
      score.predicted = pred.rows[static_cast<std::size_t>(r)].point;
      score.lower = pred.rows[static_cast<std::size_t>(r)].lower;
      score.upper = pred.rows[static_cast<std::size_t>(r)].upper;
      score.covered = score.realized >= score.lower && score.realized <= score.upper;
      score.outbreak_signal = score.realized > score.upper;
      score.intervention_signal = score.realized < score.lower;
      score.rpe = rpe(score.realized, score.predicted, s.frame.district_population(r));
      cell.districts.push_back(score);
    }
    auto flags = retrospective_flags(cell);
    int interventions = 0;
    for (auto f : flags) {
      if (f == SignalFlag::intervention) ++interventions;
    }
    CHECK(interventions > s.frame.n_districts() / 2);
  }

  SUBCASE("realized inside the interval raises no flags") {
    EvalCell cell;
    DistrictScore in_band;
    in_band.district_id = "X";
    in_band.realized = 10;
    in_band.lower = 5;
    in_band.upper = 15;
    cell.districts.push_back(in_band);
    auto flags = retrospective_flags(cell);
    CHECK(flags[0] == SignalFlag::none);
    FlagPolicy by_rpe;
    by_rpe.use_intervals = false;
    by_rpe.rpe_upper = 20;
    by_rpe.rpe_lower = -20;
    CHECK(retrospective_flags(cell, by_rpe)[0] == SignalFlag::none);
  }
}

TEST_CASE("report CSV writers produce the long format") {
  ScenarioSpec scen;
  scen.n_districts = 5;
  scen.days = 55;
  SynthResult synth = generate(scen, 17);
  EvalOptions opts;
  opts.n_boot = 20;
  Date anchor = synth.truth.start_date() + 30;
  EvaluationReport report = rolling_evaluation_truth(synth.truth, synth.frame,
                                                     {default_variant()}, {anchor}, opts);
  write_report_metrics_csv(report, "metrics_test.csv");
  write_report_rpe_csv(report, "rpe_test.csv");
  csv::Table metrics = csv::read_file("metrics_test.csv");
  CHECK(metrics.header == std::vector<std::string>{"anchor", "variant", "kind", "metric", "value"});
  CHECK(metrics.rows.size() == 3 * 4);  // 3 kinds x {marpe, mrpe, coverage, districts}
  csv::Table rpes = csv::read_file("rpe_test.csv");
  CHECK(rpes.rows.size() == 3 * 5);
  std::remove("metrics_test.csv");
  std::remove("rpe_test.csv");
}
