#include "core/triangle.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace delaycast {

CaseTriangle::CaseTriangle(Date start_date, int n_rows, int anchor_index, int d_max,
                           std::vector<std::string> district_ids, std::vector<Stratum> groups)
    : start_(start_date),
      n_rows_(n_rows),
      anchor_(anchor_index),
      d_max_(d_max),
      R_(static_cast<int>(district_ids.size())),
      G_(static_cast<int>(groups.size())),
      district_ids_(std::move(district_ids)),
      groups_(std::move(groups)) {
  if (n_rows_ < 1 || d_max_ < 1 || R_ < 1 || G_ < 1) {
    throw Error(Errc::usage, "BadTriangle", "triangle dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(d_max_) *
                     static_cast<std::size_t>(R_) * static_cast<std::size_t>(G_),
                 0.0);
  state_.resize(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(d_max_));
  for (int t = 1; t <= n_rows_; ++t) {
    for (int d = 1; d <= d_max_; ++d) {
      state_[cell(t, d)] = observed(t, d) ? CellState::observed : CellState::missing;
    }
  }
}

double CaseTriangle::cell_total(int t, int d) const {
  double s = 0;
  for (int r = 0; r < R_; ++r) {
    for (int g = 0; g < G_; ++g) s += at(t, d, r, g);
  }
  return s;
}

void CaseTriangle::extend_rows(int extra) {
  if (extra <= 0) return;
  n_rows_ += extra;
  values_.resize(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(d_max_) *
                     static_cast<std::size_t>(R_) * static_cast<std::size_t>(G_),
                 0.0);
  state_.resize(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(d_max_),
                CellState::missing);
}

CaseTriangle CaseTriangle::window(int window_days) const {
  if (window_days < 1 || window_days > anchor_) {
    throw Error(Errc::usage, "BadWindow",
                "window of " + std::to_string(window_days) + " days does not fit before anchor");
  }
  int first = anchor_ - window_days + 1;
  CaseTriangle out(date_of_row(first), window_days, window_days, d_max_, district_ids_, groups_);
  for (int t = first; t <= anchor_; ++t) {
    for (int d = 1; d <= d_max_; ++d) {
      CellState s = state(t, d);
      if (s == CellState::missing) continue;
      for (int r = 0; r < R_; ++r) {
        for (int g = 0; g < G_; ++g) {
          out.set_cell(t - first + 1, d, r, g, at(t, d, r, g), s);
        }
      }
    }
  }
  return out;
}

CaseTriangle CaseTriangle::as_of(Date anchor) const {
  int T = row_of_date(anchor);
  if (T < 1 || T > n_rows_) {
    throw Error(Errc::usage, "BadWindow", "as_of anchor " + anchor.iso() + " outside triangle");
  }
  CaseTriangle out(start_, T, T, d_max_, district_ids_, groups_);
  for (int t = 1; t <= T; ++t) {
    for (int d = 1; d <= d_max_; ++d) {
      if (!out.observed(t, d)) continue;
      for (int r = 0; r < R_; ++r) {
        for (int g = 0; g < G_; ++g) {
          out.set_cell(t, d, r, g, at(t, d, r, g), CellState::observed);
        }
      }
    }
  }
  return out;
}

CumTriangle::CumTriangle(const CaseTriangle& tri)
    : n_rows_(tri.n_rows()), d_max_(tri.d_max()), R_(tri.n_districts()), G_(tri.n_groups()) {
  values_.assign(static_cast<std::size_t>(n_rows_) * static_cast<std::size_t>(d_max_) *
                     static_cast<std::size_t>(R_) * static_cast<std::size_t>(G_),
                 0.0);
  for (int t = 1; t <= n_rows_; ++t) {
    for (int r = 0; r < R_; ++r) {
      for (int g = 0; g < G_; ++g) {
        double run = 0;
        for (int d = 1; d <= d_max_; ++d) {
          run += tri.at(t, d, r, g);
          values_[tri.index(t, d, r, g)] = run;
        }
      }
    }
  }
}

CumTriangle cumulate(const CaseTriangle& tri) { return CumTriangle(tri); }

CaseTriangle merge_snapshots(const std::vector<SnapshotBatch>& batches, const StratumFrame& frame,
                             int d_max, NegativePolicy policy, IngestStats* stats) {
  if (batches.empty()) throw Error(Errc::data, "EmptySnapshots", "no snapshot batches");
  if (d_max < 1) throw Error(Errc::usage, "BadSpec", "d_max must be >= 1");

  for (std::size_t i = 1; i < batches.size(); ++i) {
    if (batches[i].report_date - batches[i - 1].report_date != 1) {
      throw Error(Errc::data, "NonConsecutiveSnapshots",
                  "report dates " + batches[i - 1].report_date.iso() + " and " +
                      batches[i].report_date.iso() + " are not consecutive days");
    }
  }

  Date anchor = batches.back().report_date;
  Date first_reg = anchor;
  for (const auto& b : batches) {
    for (const auto& rec : b.records) {
      if (rec.registration_date < first_reg) first_reg = rec.registration_date;
    }
  }
  Date start = std::min(first_reg, anchor);
  int T = static_cast<int>(anchor - start) + 1;

  CaseTriangle tri(start, T, T, d_max, [&] {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(frame.n_districts()));
    for (const auto& d : frame.districts()) ids.push_back(d.id);
    return ids;
  }(), frame.groups());

  IngestStats local;
  IngestStats& st = stats ? *stats : local;
  st.batches = static_cast<long>(batches.size());
  st.delay_histogram.assign(static_cast<std::size_t>(d_max), 0);

  // Running cumulative count per (registration day, r, g); clamped negatives
  // keep the running maximum so fully-observed rows still sum to the largest
  // cumulative count reported.
  std::unordered_map<std::uint64_t, long> prev;
  prev.reserve(4096);
  auto key = [&](int t, int r, int g) {
    return (static_cast<std::uint64_t>(t) << 40) ^ (static_cast<std::uint64_t>(r) << 16) ^
           static_cast<std::uint64_t>(g);
  };

  for (const auto& batch : batches) {
    for (const auto& rec : batch.records) {
      ++st.records;
      if (rec.count < 0) {
        throw Error(Errc::data, "BadCount", "negative cumulative count for district '" +
                                                rec.district_id + "' on " +
                                                rec.registration_date.iso());
      }
      int r = frame.district_index(rec.district_id);
      if (r < 0) {
        throw Error(Errc::data, "UnknownDistrict",
                    "district_id '" + rec.district_id + "' is absent from the stratum frame");
      }
      auto age = normalize_age_group(rec.age_group);
      auto gender = normalize_gender(rec.gender);
      int g = (age && gender) ? frame.group_index(*age, *gender) : -1;
      if (g < 0) {
        ++st.dropped_unknown_stratum;
        continue;
      }
      long delay = batch.report_date - rec.registration_date;
      if (delay < 1) {
        ++st.dropped_invalid_delay;
        continue;
      }
      int t = tri.row_of_date(rec.registration_date);
      auto k = key(t, r, g);
      auto it = prev.find(k);
      long before = it == prev.end() ? 0 : it->second;
      long delta = rec.count - before;
      if (delta < 0) {
        ++st.negative_increments;
        if (policy == NegativePolicy::reject) {
          throw Error(Errc::data, "NegativeIncrement",
                      "cumulative count decreased from " + std::to_string(before) + " to " +
                          std::to_string(rec.count) + " (district '" + rec.district_id +
                          "', registration " + rec.registration_date.iso() + ", report " +
                          batch.report_date.iso() + ")");
        }
        delta = 0;  // clamp; prev keeps the running maximum
      } else {
        prev[k] = rec.count;
      }
      if (delta == 0) continue;
      int d = static_cast<int>(delay);
      if (d > d_max) {
        d = d_max;
        ++st.folded_overflow;
      }
      tri.set_cell(t, d, r, g, tri.at(t, d, r, g) + static_cast<double>(delta),
                   CellState::observed);
      st.delay_histogram[static_cast<std::size_t>(d - 1)] += delta;
    }
  }
  return tri;
}

const char* target_kind_name(TargetKind k) {
  switch (k) {
    case TargetKind::nowcast: return "nowcast";
    case TargetKind::forecast: return "forecast";
    case TargetKind::forenowcast: return "forenowcast";
  }
  return "?";
}

std::vector<std::pair<int, int>> target_cells(int T, int d_max, TargetKind kind, int k) {
  std::vector<std::pair<int, int>> cells;
  switch (kind) {
    case TargetKind::nowcast:
      for (int t = T - k; t <= T - 1; ++t)
        for (int d = 1; d <= d_max; ++d) cells.emplace_back(t, d);
      break;
    case TargetKind::forecast:
      for (int i = 1; i <= k; ++i)
        for (int d = 1; d <= d_max; ++d) cells.emplace_back(T + i - d, d);
      break;
    case TargetKind::forenowcast:
      for (int t = T; t <= T + k - 1; ++t)
        for (int d = 1; d <= d_max; ++d) cells.emplace_back(t, d);
      break;
  }
  return cells;
}

double aggregate_target(const CaseTriangle& tri, int T, int r, TargetKind kind, int k) {
  if (k < 1) throw Error(Errc::usage, "BadSpec", "aggregation length k must be >= 1");
  auto cells = target_cells(T, tri.d_max(), kind, k);
  std::string missing;
  int n_missing = 0;
  double total = 0;
  for (auto [t, d] : cells) {
    if (t < 1 || t > tri.n_rows() || tri.state(t, d) == CellState::missing) {
      if (++n_missing <= 8) {
        missing += " (t=" + std::to_string(t) + ",d=" + std::to_string(d) + ")";
      }
      continue;
    }
    for (int g = 0; g < tri.n_groups(); ++g) total += tri.at(t, d, r, g);
  }
  if (n_missing > 0) {
    throw Error(Errc::usage, "MissingCells",
                std::to_string(n_missing) + " unfilled cells for " +
                    std::string(target_kind_name(kind)) + " at T=" + std::to_string(T) + ":" +
                    missing);
  }
  return total;
}

namespace {

long parse_count(const std::string& s) {
  // Counts may be exported as "3" or "3.0".
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  long n = static_cast<long>(v >= 0 ? v + 0.5 : v - 0.5);
  return n;
}

}  // namespace

SnapshotBatch read_snapshot_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  auto pick = [&](const char* a, const char* b) {
    int c = t.column(a);
    if (c < 0) c = t.column(b);
    if (c < 0)
      throw Error(Errc::data, "MissingColumn",
                  std::string("snapshot CSV needs column '") + a + "' or '" + b + "' (" + path + ")");
    return c;
  };
  int c_district = pick("IdLandkreis", "district_id");
  int c_age = pick("Altersgruppe", "age_group");
  int c_gender = pick("Geschlecht", "gender");
  int c_count = pick("AnzahlFall", "count");
  int c_reg = pick("Meldedatum", "registration_date");
  int c_rep = pick("Datenstand", "report_date");

  SnapshotBatch batch;
  bool have_date = false;
  for (const auto& row : t.rows) {
    SnapshotRecord rec;
    rec.district_id = row.at(static_cast<std::size_t>(c_district));
    rec.age_group = row.at(static_cast<std::size_t>(c_age));
    rec.gender = row.at(static_cast<std::size_t>(c_gender));
    rec.count = parse_count(row.at(static_cast<std::size_t>(c_count)));
    rec.registration_date = Date::parse(row.at(static_cast<std::size_t>(c_reg)));
    rec.report_date = Date::parse(row.at(static_cast<std::size_t>(c_rep)));
    if (!have_date) {
      batch.report_date = rec.report_date;
      have_date = true;
    } else if (rec.report_date != batch.report_date) {
      throw Error(Errc::data, "MixedReportDates",
                  "snapshot file " + path + " mixes report dates " + batch.report_date.iso() +
                      " and " + rec.report_date.iso());
    }
    batch.records.push_back(std::move(rec));
  }
  if (!have_date) throw Error(Errc::data, "EmptySnapshots", "no rows in " + path);
  return batch;
}

std::vector<SnapshotBatch> read_snapshot_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      paths.push_back(entry.path().string());
    }
  }
  if (ec) throw Error(Errc::data, "FileNotFound", "cannot list snapshot dir '" + dir + "'");
  if (paths.empty()) throw Error(Errc::data, "EmptySnapshots", "no .csv files in '" + dir + "'");
  std::sort(paths.begin(), paths.end());
  std::vector<SnapshotBatch> batches;
  batches.reserve(paths.size());
  for (const auto& p : paths) batches.push_back(read_snapshot_csv(p));
  std::sort(batches.begin(), batches.end(),
            [](const SnapshotBatch& a, const SnapshotBatch& b) {
              return a.report_date < b.report_date;
            });
  return batches;
}

void write_snapshot_csv(const SnapshotBatch& batch, const std::string& path) {
  std::string out;
  csv::write_row(out, {"IdLandkreis", "Altersgruppe", "Geschlecht", "AnzahlFall", "Meldedatum",
                       "Datenstand"});
  for (const auto& rec : batch.records) {
    csv::write_row(out, {rec.district_id, rec.age_group, rec.gender, std::to_string(rec.count),
                         rec.registration_date.iso(), rec.report_date.iso()});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

void save_triangle(const CaseTriangle& tri, const std::string& path) {
  std::string out;
  out += "#format=delaycast-triangle/1\n";
  out += "#start=" + tri.start_date().iso() + "\n";
  out += "#anchor=" + tri.anchor_date().iso() + "\n";
  out += "#d_max=" + std::to_string(tri.d_max()) + "\n";
  csv::write_row(out, {"registration_date", "delay", "district_id", "age_group", "gender",
                       "count"});
  char buf[32];
  for (int t = 1; t <= tri.n_rows(); ++t) {
    for (int d = 1; d <= tri.d_max(); ++d) {
      if (tri.state(t, d) != CellState::observed) continue;
      for (int r = 0; r < tri.n_districts(); ++r) {
        for (int g = 0; g < tri.n_groups(); ++g) {
          double v = tri.at(t, d, r, g);
          if (v == 0) continue;
          std::snprintf(buf, sizeof(buf), "%.0f", v);
          csv::write_row(out, {tri.date_of_row(t).iso(), std::to_string(d),
                               tri.district_ids()[static_cast<std::size_t>(r)],
                               tri.groups()[static_cast<std::size_t>(g)].age_group,
                               tri.groups()[static_cast<std::size_t>(g)].gender, buf});
        }
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

CaseTriangle load_triangle(const std::string& path, const StratumFrame& frame) {
  csv::Table t = csv::read_file(path);
  auto need = [&](const char* k) {
    auto it = t.meta.find(k);
    if (it == t.meta.end())
      throw Error(Errc::data, "BadCache", std::string("triangle cache lacks #") + k + " header");
    return it->second;
  };
  if (need("format") != "delaycast-triangle/1") {
    throw Error(Errc::data, "BadCache", "unrecognized triangle cache format in " + path);
  }
  Date start = Date::parse(need("start"));
  Date anchor = Date::parse(need("anchor"));
  int d_max = std::stoi(need("d_max"));
  int T = static_cast<int>(anchor - start) + 1;

  std::vector<std::string> ids;
  for (const auto& d : frame.districts()) ids.push_back(d.id);
  CaseTriangle tri(start, T, T, d_max, std::move(ids), frame.groups());

  int c_reg = t.require_column("registration_date");
  int c_delay = t.require_column("delay");
  int c_district = t.require_column("district_id");
  int c_age = t.require_column("age_group");
  int c_gender = t.require_column("gender");
  int c_count = t.require_column("count");
  for (const auto& row : t.rows) {
    int tt = tri.row_of_date(Date::parse(row.at(static_cast<std::size_t>(c_reg))));
    int d = std::stoi(row.at(static_cast<std::size_t>(c_delay)));
    int r = frame.district_index(row.at(static_cast<std::size_t>(c_district)));
    if (r < 0)
      throw Error(Errc::data, "UnknownDistrict",
                  "cache references district '" + row.at(static_cast<std::size_t>(c_district)) +
                      "' missing from the frame");
    int g = frame.group_index(row.at(static_cast<std::size_t>(c_age)),
                              row.at(static_cast<std::size_t>(c_gender)));
    if (g < 0)
      throw Error(Errc::data, "BadCache", "cache references an unknown stratum in " + path);
    if (tt < 1 || tt > T || d < 1 || d > d_max || !tri.observed(tt, d)) {
      throw Error(Errc::data, "BadCache", "cache cell outside the observed wedge in " + path);
    }
    tri.set_cell(tt, d, r, g, std::stod(row.at(static_cast<std::size_t>(c_count))),
                 CellState::observed);
  }
  return tri;
}

}  // namespace delaycast
