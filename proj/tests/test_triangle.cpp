#include <doctest.h>

#include <map>
#include <random>

#include "core/error.hpp"
#include "core/triangle.hpp"
#include "helpers.hpp"

using namespace delaycast;
using testutil::empty_triangle;
using testutil::fill_all;
using testutil::small_frame;

namespace {

StratumFrame munich_frame() {
  std::vector<District> districts = {{"09162", "Munich City", 11.57, 48.14}};
  std::vector<Stratum> groups = {{"60-79", "F"}, {"60-79", "M"}};
  std::vector<double> pops = {150000, 140000};
  return StratumFrame(std::move(districts), std::move(groups), std::move(pops));
}

SnapshotRecord rec(const std::string& district, const std::string& age, const std::string& gender,
                   long count, Date reg, Date rep) {
  return SnapshotRecord{district, age, gender, count, reg, rep};
}

}  // namespace

TEST_CASE("two-snapshot differencing recovers the delayed batch") {
  StratumFrame frame = munich_frame();
  Date reg = Date::from_ymd(2020, 9, 22);
  Date rep1 = Date::from_ymd(2020, 9, 25);
  Date rep2 = Date::from_ymd(2020, 9, 26);

  std::vector<SnapshotBatch> batches(2);
  batches[0].report_date = rep1;
  batches[0].records = {rec("09162", "60-79", "F", 3, reg, rep1),
                        rec("09162", "60-79", "M", 5, reg, rep1)};
  batches[1].report_date = rep2;
  batches[1].records = {rec("09162", "60-79", "F", 6, reg, rep2),
                        rec("09162", "60-79", "M", 5, reg, rep2)};

  CaseTriangle tri = merge_snapshots(batches, frame, 7);
  int t = tri.row_of_date(reg);
  int gF = 0, gM = 1;
  // Three new cases appeared in the second download: delay four days.
  CHECK(tri.at(t, 4, 0, gF) == doctest::Approx(3.0));
  // The first download's counts land at their first-appearance delay.
  CHECK(tri.at(t, 3, 0, gF) == doctest::Approx(3.0));
  CHECK(tri.at(t, 3, 0, gM) == doctest::Approx(5.0));
  CHECK(tri.at(t, 4, 0, gM) == doctest::Approx(0.0));
  CHECK(tri.anchor_date() == rep2);
}

TEST_CASE("single batch single record lands at its delay") {
  StratumFrame frame = munich_frame();
  Date reg = Date::from_ymd(2020, 9, 22);
  Date rep = Date::from_ymd(2020, 9, 23);
  std::vector<SnapshotBatch> batches(1);
  batches[0].report_date = rep;
  batches[0].records = {rec("09162", "60-79", "F", 5, reg, rep)};
  CaseTriangle tri = merge_snapshots(batches, frame, 7);
  int t = tri.row_of_date(reg);
  CHECK(tri.at(t, 1, 0, 0) == doctest::Approx(5.0));
  for (int d = 2; d <= 7; ++d) CHECK(tri.at(t, d, 0, 0) == 0.0);
}

TEST_CASE("randomized snapshot stack matches a brute-force differencing oracle") {
  const int n_days = 10, d_max = 4;
  StratumFrame frame = small_frame(3);
  Date start = Date::from_ymd(2020, 8, 1);
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> inc(0, 3);

  // True increments per (registration day, report day, r, g).
  std::map<std::tuple<int, int, int, int>, long> increments;
  for (int t = 1; t <= n_days; ++t) {
    for (int s = t + 1; s <= n_days + 2; ++s) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          long v = inc(rng);
          if (v > 0) increments[{t, s, r, g}] = v;
        }
      }
    }
  }

  // Project into daily cumulative snapshots.
  std::vector<SnapshotBatch> batches;
  for (int s = 2; s <= n_days + 2; ++s) {
    SnapshotBatch batch;
    batch.report_date = start + (s - 1);
    for (int t = 1; t <= n_days; ++t) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          long cum = 0;
          for (int s2 = t + 1; s2 <= s; ++s2) {
            auto it = increments.find({t, s2, r, g});
            if (it != increments.end()) cum += it->second;
          }
          if (cum > 0) {
            batch.records.push_back(rec(frame.district(r).id, frame.group(g).age_group,
                                        frame.group(g).gender, cum, start + (t - 1),
                                        batch.report_date));
          }
        }
      }
    }
    batches.push_back(std::move(batch));
  }

  CaseTriangle tri = merge_snapshots(batches, frame, d_max);

  // Oracle: fold raw increments into delays capped at d_max, cell by cell.
  for (int t = 1; t <= n_days; ++t) {
    int row = tri.row_of_date(start + (t - 1));
    for (int d = 1; d <= d_max; ++d) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          long expected = 0;
          for (int s = t + 1; s <= n_days + 2; ++s) {
            int delay = std::min(s - t, d_max);
            if (delay != d) continue;
            auto it = increments.find({t, s, r, g});
            if (it != increments.end()) expected += it->second;
          }
          if (!tri.observed(row, d)) continue;
          CHECK(tri.at(row, d, r, g) == doctest::Approx(static_cast<double>(expected)));
        }
      }
    }
  }

  SUBCASE("blade shape: observed cells are exactly t + d <= anchor") {
    for (int t = 1; t <= tri.n_rows(); ++t) {
      for (int d = 1; d <= d_max; ++d) {
        CHECK(tri.observed(t, d) == (t + d <= tri.anchor_index()));
        CHECK((tri.state(t, d) == CellState::observed) == tri.observed(t, d));
      }
    }
  }

  SUBCASE("fully observed rows reproduce the final cumulative counts") {
    const SnapshotBatch& last = batches.back();
    std::map<std::tuple<int, int, int>, long> final_cum;
    for (const auto& record : last.records) {
      int t = tri.row_of_date(record.registration_date);
      int r = frame.district_index(record.district_id);
      int g = frame.group_index(record.age_group, record.gender);
      final_cum[{t, r, g}] = record.count;
    }
    for (int t = 1; t + d_max <= tri.anchor_index(); ++t) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          double row_sum = 0;
          for (int d = 1; d <= d_max; ++d) row_sum += tri.at(t, d, r, g);
          auto it = final_cum.find({t, r, g});
          double expected = it == final_cum.end() ? 0.0 : static_cast<double>(it->second);
          CHECK(row_sum == doctest::Approx(expected));
        }
      }
    }
  }
}

TEST_CASE("negative cumulative increments") {
  StratumFrame frame = munich_frame();
  Date reg = Date::from_ymd(2020, 9, 22);
  std::vector<SnapshotBatch> batches(3);
  for (int i = 0; i < 3; ++i) batches[static_cast<std::size_t>(i)].report_date = reg + (i + 1);
  batches[0].records = {rec("09162", "60-79", "F", 5, reg, reg + 1)};
  batches[1].records = {rec("09162", "60-79", "F", 3, reg, reg + 2)};  // correction downwards
  batches[2].records = {rec("09162", "60-79", "F", 6, reg, reg + 3)};

  SUBCASE("default policy clamps and counts") {
    IngestStats stats;
    CaseTriangle tri = merge_snapshots(batches, frame, 7, NegativePolicy::clamp, &stats);
    CHECK(stats.negative_increments == 1);
    int t = tri.row_of_date(reg);
    CHECK(tri.at(t, 1, 0, 0) == doctest::Approx(5.0));
    CHECK(tri.at(t, 2, 0, 0) == doctest::Approx(0.0));
    CHECK(tri.at(t, 3, 0, 0) == doctest::Approx(1.0));  // 6 against the running max of 5
  }
  SUBCASE("reject policy throws NegativeIncrement") {
    CHECK_THROWS_WITH_AS(merge_snapshots(batches, frame, 7, NegativePolicy::reject),
                         doctest::Contains("NegativeIncrement"), Error);
  }
}

TEST_CASE("unknown district is an error, unknown stratum is dropped with a count") {
  StratumFrame frame = munich_frame();
  Date reg = Date::from_ymd(2020, 9, 22);
  std::vector<SnapshotBatch> batches(1);
  batches[0].report_date = reg + 1;
  batches[0].records = {rec("00000", "60-79", "F", 1, reg, reg + 1)};
  CHECK_THROWS_WITH_AS(merge_snapshots(batches, frame, 7), doctest::Contains("UnknownDistrict"),
                       Error);

  batches[0].records = {rec("09162", "unbekannt", "F", 1, reg, reg + 1),
                        rec("09162", "60-79", "F", 2, reg, reg + 1)};
  IngestStats stats;
  CaseTriangle tri = merge_snapshots(batches, frame, 7, NegativePolicy::clamp, &stats);
  CHECK(stats.dropped_unknown_stratum == 1);
  CHECK(tri.at(tri.row_of_date(reg), 1, 0, 0) == doctest::Approx(2.0));
}

TEST_CASE("overflow delays fold into d_max") {
  StratumFrame frame = munich_frame();
  Date reg = Date::from_ymd(2020, 9, 1);
  std::vector<SnapshotBatch> batches(1);
  batches[0].report_date = reg + 12;  // first appearance at delay 12
  batches[0].records = {rec("09162", "60-79", "F", 4, reg, reg + 12)};
  IngestStats stats;
  CaseTriangle tri = merge_snapshots(batches, frame, 7, NegativePolicy::clamp, &stats);
  CHECK(stats.folded_overflow == 1);
  CHECK(tri.at(tri.row_of_date(reg), 7, 0, 0) == doctest::Approx(4.0));
}

TEST_CASE("cumulate") {
  StratumFrame frame = small_frame(1);
  CaseTriangle tri = empty_triangle(frame, Date::from_ymd(2020, 9, 1), 8, 20, 7);

  SUBCASE("prefix sums") {
    double vals[7] = {1, 2, 3, 0, 0, 0, 0};
    for (int d = 1; d <= 7; ++d) tri.set_cell(1, d, 0, 0, vals[d - 1], CellState::observed);
    CumTriangle cum = cumulate(tri);
    double expect[7] = {1, 3, 6, 6, 6, 6, 6};
    for (int d = 1; d <= 7; ++d) CHECK(cum.at(1, d, 0, 0) == doctest::Approx(expect[d - 1]));
    CHECK(cum.at(1, 0, 0, 0) == 0.0);  // AR boundary convention
  }
  SUBCASE("all-zero row stays zero") {
    CumTriangle cum = cumulate(tri);
    for (int d = 1; d <= 7; ++d) CHECK(cum.at(2, d, 0, 0) == 0.0);
  }
  SUBCASE("random rows match the naive loop oracle") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 10);
    fill_all(tri, [&](int, int, int, int) { return std::floor(u(rng)); });
    CumTriangle cum = cumulate(tri);
    for (int t = 1; t <= tri.n_rows(); ++t) {
      for (int d = 1; d <= 7; ++d) {
        double naive = 0;
        for (int j = 1; j <= d; ++j) naive += tri.at(t, j, 0, 0);
        CHECK(cum.at(t, d, 0, 0) == doctest::Approx(naive));
      }
    }
  }
}

TEST_CASE("aggregate_target") {
  StratumFrame frame = small_frame(1);

  SUBCASE("nowcast with k=1, d_max=2 is the single full-delay cumulation") {
    std::vector<District> districts = {{"X", "X", 0, 0}};
    std::vector<Stratum> groups = {{"35-59", "F"}};
    StratumFrame f1(std::move(districts), std::move(groups), {1000});
    CaseTriangle tri = empty_triangle(f1, Date::from_ymd(2020, 9, 1), 10, 10, 2);
    fill_all(tri, [](int, int, int, int) { return 0.0; });
    tri.set_cell(9, 1, 0, 0, 1.0, CellState::observed);
    tri.set_cell(9, 2, 0, 0, 3.0, CellState::predicted);
    CHECK(aggregate_target(tri, 10, 0, TargetKind::nowcast, 1) == doctest::Approx(4.0));
  }

  SUBCASE("forecast equals the hand-enumerated diagonal sum") {
    std::vector<District> districts = {{"X", "X", 0, 0}};
    std::vector<Stratum> groups = {{"35-59", "F"}};
    StratumFrame f1(std::move(districts), std::move(groups), {1000});
    CaseTriangle tri = empty_triangle(f1, Date::from_ymd(2020, 9, 1), 12, 10, 2);
    fill_all(tri, [](int t, int d, int, int) { return 100.0 * t + d; });
    const int T = 10, k = 2;
    // Diagonals T+1 and T+2: cells (T+i-d, d).
    double by_hand = 0;
    by_hand += tri.at(10, 1, 0, 0) + tri.at(9, 2, 0, 0);    // report day 11
    by_hand += tri.at(11, 1, 0, 0) + tri.at(10, 2, 0, 0);   // report day 12
    CHECK(aggregate_target(tri, T, 0, TargetKind::forecast, k) == doctest::Approx(by_hand));
  }

  SUBCASE("forenowcast covers exactly the k x d_max row block starting at T") {
    auto cells = target_cells(10, 7, TargetKind::forenowcast, 7);
    CHECK(cells.size() == 49);
    for (auto [t, d] : cells) {
      CHECK(t >= 10);
      CHECK(t <= 16);
      CHECK(d >= 1);
      CHECK(d <= 7);
    }
    // And the blue block is the nowcast block shifted by k rows.
    auto green = target_cells(10, 7, TargetKind::nowcast, 7);
    std::vector<std::pair<int, int>> shifted;
    for (auto [t, d] : green) shifted.emplace_back(t + 7, d);
    std::sort(shifted.begin(), shifted.end());
    std::sort(cells.begin(), cells.end());
    CHECK(cells == shifted);
  }

  SUBCASE("unique cell tags pin the exact index sets") {
    StratumFrame f = small_frame(2);
    CaseTriangle tri = empty_triangle(f, Date::from_ymd(2020, 9, 1), 27, 21, 7);
    fill_all(tri, [](int t, int d, int r, int g) {
      return (g == 0 && r == 0) ? 10000.0 * t + 100.0 * d : 0.0;
    });
    const int T = 21, k = 7;
    for (TargetKind kind :
         {TargetKind::nowcast, TargetKind::forecast, TargetKind::forenowcast}) {
      double expected = 0;
      for (auto [t, d] : target_cells(T, 7, kind, k)) expected += 10000.0 * t + 100.0 * d;
      CHECK(aggregate_target(tri, T, 0, kind, k) == doctest::Approx(expected));
      CHECK(aggregate_target(tri, T, 1, kind, k) == doctest::Approx(0.0));
    }
  }

  SUBCASE("missing cells raise MissingCells with indices") {
    StratumFrame f = small_frame(1);
    CaseTriangle tri = empty_triangle(f, Date::from_ymd(2020, 9, 1), 21, 21, 7);
    CHECK_THROWS_WITH_AS(aggregate_target(tri, 21, 0, TargetKind::nowcast, 7),
                         doctest::Contains("MissingCells"), Error);
  }
}

TEST_CASE("window re-indexes but preserves observed values") {
  StratumFrame frame = small_frame(2);
  Date start = Date::from_ymd(2020, 9, 1);
  CaseTriangle tri = empty_triangle(frame, start, 30, 30, 7);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 5);
  for (int t = 1; t <= 30; ++t) {
    for (int d = 1; d <= 7 && t + d <= 30; ++d) {
      for (int r = 0; r < 2; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          tri.set_cell(t, d, r, g, u(rng), CellState::observed);
        }
      }
    }
  }
  CaseTriangle w = tri.window(21);
  CHECK(w.n_rows() == 21);
  CHECK(w.anchor_index() == 21);
  CHECK(w.anchor_date() == tri.anchor_date());
  for (int t = 1; t <= 21; ++t) {
    for (int d = 1; d <= 7; ++d) {
      CHECK(w.observed(t, d) == tri.observed(t + 9, d));
      if (w.observed(t, d)) CHECK(w.at(t, d, 1, 2) == tri.at(t + 9, d, 1, 2));
    }
  }
}

TEST_CASE("triangle cache round trip") {
  StratumFrame frame = small_frame(3);
  Date start = Date::from_ymd(2020, 9, 1);
  CaseTriangle tri = empty_triangle(frame, start, 15, 15, 7);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> u(0, 4);
  for (int t = 1; t <= 15; ++t) {
    for (int d = 1; d <= 7 && t + d <= 15; ++d) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          tri.set_cell(t, d, r, g, u(rng), CellState::observed);
        }
      }
    }
  }
  std::string path = "triangle_cache_test.csv";
  save_triangle(tri, path);
  CaseTriangle back = load_triangle(path, frame);
  CHECK(back.n_rows() == tri.n_rows());
  CHECK(back.anchor_index() == tri.anchor_index());
  CHECK(back.start_date() == tri.start_date());
  for (int t = 1; t <= 15; ++t) {
    for (int d = 1; d <= 7; ++d) {
      for (int r = 0; r < 3; ++r) {
        for (int g = 0; g < frame.n_groups(); ++g) {
          CHECK(back.at(t, d, r, g) == tri.at(t, d, r, g));
        }
      }
    }
  }
  std::remove(path.c_str());
}
