#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/date.hpp"
#include "core/stratum.hpp"

namespace delaycast {

// One line of a daily register download: the cumulative case count for a
// (registration date, district, stratum) cell as of the batch's report date.
struct SnapshotRecord {
  std::string district_id;
  std::string age_group;
  std::string gender;
  long count = 0;
  Date registration_date;
  Date report_date;
};

struct SnapshotBatch {
  Date report_date;
  std::vector<SnapshotRecord> records;
};

enum class CellState : unsigned char { missing = 0, observed = 1, predicted = 2 };

enum class NegativePolicy { clamp, reject };

struct IngestStats {
  long batches = 0;
  long records = 0;
  long dropped_unknown_stratum = 0;
  long dropped_invalid_delay = 0;    // report_date <= registration_date
  long negative_increments = 0;      // cumulative count decreased
  long folded_overflow = 0;          // first appearance with delay > d_max
  std::vector<long> delay_histogram; // counts by delay 1..d_max (post folding)
};

// Delay-resolved counts N[t,d,r,g]. Rows are registration days (t = 1 is
// start_date), columns are reporting delays 1..d_max. Cells with
// t + d <= anchor_index are observed; the rest form the missing lower-right
// wedge until a prediction pass fills them. Immutable in normal use; the
// fill path in predict writes through set_cell.
class CaseTriangle {
 public:
  CaseTriangle() = default;  // empty placeholder; assign a real triangle before use
  CaseTriangle(Date start_date, int n_rows, int anchor_index, int d_max,
               std::vector<std::string> district_ids, std::vector<Stratum> groups);

  int n_rows() const { return n_rows_; }
  int anchor_index() const { return anchor_; }
  int d_max() const { return d_max_; }
  int n_districts() const { return R_; }
  int n_groups() const { return G_; }
  Date start_date() const { return start_; }
  Date date_of_row(int t) const { return start_ + (t - 1); }
  Date anchor_date() const { return start_ + (anchor_ - 1); }
  int row_of_date(Date d) const { return static_cast<int>(d - start_) + 1; }

  const std::vector<std::string>& district_ids() const { return district_ids_; }
  const std::vector<Stratum>& groups() const { return groups_; }

  bool observed(int t, int d) const { return t + d <= anchor_; }
  CellState state(int t, int d) const { return state_[cell(t, d)]; }

  double at(int t, int d, int r, int g) const { return values_[index(t, d, r, g)]; }
  void set_cell(int t, int d, int r, int g, double value, CellState s) {
    values_[index(t, d, r, g)] = value;
    state_[cell(t, d)] = s;
  }

  // Sum over districts and groups for one (t, d).
  double cell_total(int t, int d) const;

  // Appends `extra` all-missing rows (used before a forecast fill).
  void extend_rows(int extra);

  // Restricts to the last `window_days` registration rows ending at the
  // anchor; row indices are re-based so the anchor sits at t = window_days.
  CaseTriangle window(int window_days) const;

  // Re-masks a complete (ground-truth) triangle as it would have appeared on
  // `anchor`: rows after the anchor are cut, unobserved cells zeroed.
  CaseTriangle as_of(Date anchor) const;

  bool same_universe(const CaseTriangle& other) const {
    return district_ids_ == other.district_ids_ && groups_.size() == other.groups_.size();
  }

  std::size_t index(int t, int d, int r, int g) const {
    return ((static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(d_max_) +
             static_cast<std::size_t>(d - 1)) *
                static_cast<std::size_t>(R_) +
            static_cast<std::size_t>(r)) *
               static_cast<std::size_t>(G_) +
           static_cast<std::size_t>(g);
  }

 private:
  std::size_t cell(int t, int d) const {
    return static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(d_max_) +
           static_cast<std::size_t>(d - 1);
  }

  Date start_;
  int n_rows_ = 0;
  int anchor_ = 0;
  int d_max_ = 0;
  int R_ = 0;
  int G_ = 0;
  std::vector<std::string> district_ids_;
  std::vector<Stratum> groups_;
  std::vector<double> values_;
  std::vector<CellState> state_;
};

// Row-wise cumulated counts C[t,d,r,g] = sum_{j<=d} N[t,j,r,g].
class CumTriangle {
 public:
  CumTriangle() = default;
  explicit CumTriangle(const CaseTriangle& tri);

  double at(int t, int d, int r, int g) const {
    if (d == 0 || t == 0) return 0.0;  // boundary convention for AR terms
    return values_[((static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(d_max_) +
                     static_cast<std::size_t>(d - 1)) *
                        static_cast<std::size_t>(R_) +
                    static_cast<std::size_t>(r)) *
                       static_cast<std::size_t>(G_) +
                   static_cast<std::size_t>(g)];
  }
  int n_rows() const { return n_rows_; }
  int d_max() const { return d_max_; }

 private:
  int n_rows_ = 0;
  int d_max_ = 0;
  int R_ = 0;
  int G_ = 0;
  std::vector<double> values_;
};

CumTriangle cumulate(const CaseTriangle& tri);

// Differencing of consecutive daily cumulative snapshots. Batches must be
// ordered by report date on consecutive calendar days; the last batch's
// report date becomes the anchor (the day of analysis). First-appearance
// delays beyond d_max fold into d_max.
CaseTriangle merge_snapshots(const std::vector<SnapshotBatch>& batches, const StratumFrame& frame,
                             int d_max, NegativePolicy policy = NegativePolicy::clamp,
                             IngestStats* stats = nullptr);

enum class TargetKind { nowcast, forecast, forenowcast };

const char* target_kind_name(TargetKind k);

// Weekly aggregate for district r at analysis row T:
//   nowcast      sum_{t=T-k..T-1} sum_g C[t, d_max]          (row block before T)
//   forecast     sum_{t=1..k} sum_{d} sum_g N[T+t-d, d]      (report-day diagonals T+1..T+k)
//   forenowcast  sum_{t=T..T+k-1} sum_g C[t, d_max]          (row block from T on)
// Throws MissingCells when a required cell is neither observed nor predicted.
double aggregate_target(const CaseTriangle& tri, int T, int r, TargetKind kind, int k);

// The (t, d) index set a target touches; exposed for tests and audits.
std::vector<std::pair<int, int>> target_cells(int T, int d_max, TargetKind kind, int k);

// Snapshot CSV I/O. Accepts the register's column names (IdLandkreis,
// Altersgruppe, Geschlecht, AnzahlFall, Meldedatum, Datenstand) or the
// English set (district_id, age_group, gender, count, registration_date,
// report_date).
SnapshotBatch read_snapshot_csv(const std::string& path);
std::vector<SnapshotBatch> read_snapshot_dir(const std::string& dir);
void write_snapshot_csv(const SnapshotBatch& batch, const std::string& path);

// Triangle cache: '#key=value' header block plus one row per nonzero cell.
void save_triangle(const CaseTriangle& tri, const std::string& path);
CaseTriangle load_triangle(const std::string& path, const StratumFrame& frame);

}  // namespace delaycast
