#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/splines.hpp"
#include "core/stratum.hpp"
#include "core/triangle.hpp"

namespace delaycast {

// All model tunables. Defaults follow the production configuration: weekly
// delay horizon, 21-day fitting window, 7-day short-term random intercept,
// both autoregressive terms, both district random intercepts.
struct ModelSpec {
  int d_max = 7;
  int window_days = 21;
  int k_short = 7;
  bool include_ar_time = true;
  bool include_ar_delay = true;
  bool include_re = true;
  bool include_re_short = true;
  int time_basis_dim = 8;
  int spatial_basis_dim = 8;  // per axis
  int penalty_order = 2;
  int bootstrap_n = 1000;
  double interval_level = 0.90;
  double theta_fixed = -1.0;  // > 0 pins the overdispersion instead of estimating it

  void validate() const;
};

// One response cell of the regression: N[t,d,r,g] with its covariates. t is
// window-relative (1..window_days); rows beyond the window (predictions) use
// t > window_days.
struct DesignRow {
  int t = 0;
  int d = 0;
  int r = 0;
  int g = 0;
  double y = 0;
  double offset = 0;    // log population of stratum (r, g)
  double ar_time = 0;   // log(1 + C[t-1,d,r,g])
  double ar_delay = 0;  // log(1 + C[t,d-1,r,g])
  int wd_reg = 0;       // weekday of registration day t (0 = Monday)
  int wd_rep = 0;       // weekday of report day t + d
};

struct PenaltyBlock {
  std::string name;
  int offset = 0;  // first column in the stacked design
  int size = 0;
  Eigen::MatrixXd penalty;  // size x size, PSD
  int rank = 0;             // numerical rank of `penalty`
};

// Column bookkeeping for the stacked design. Offsets of -1 mean the block is
// absent under the current spec or data geometry.
struct DesignLayout {
  int p = 0;
  int col_intercept = 0;
  int off_delay = -1;   // d = 2..d_max dummies (reference d = 1)
  int n_delay = 0;
  int off_wd_reg = -1;  // Tue..Sun dummies (reference Monday)
  int off_wd_rep = -1;
  int off_age = -1;     // reference 35-59 (or the first group when absent)
  int n_age = 0;
  int off_gender = -1;  // reference F
  int n_gender = 0;
  int col_ar_time = -1;
  int col_ar_delay = -1;
  int off_time = -1;    // sum-to-zero constrained time spline
  int n_time = 0;
  int off_space = -1;   // sum-to-zero constrained spatial tensor spline
  int n_space = 0;
  int off_re_long = -1;   // one ridge-penalized indicator per district
  int off_re_short = -1;  // same, active only on the last k_short window days
  int n_districts = 0;
  std::vector<PenaltyBlock> penalties;
  std::vector<std::string> col_names;
  // Fixed columns pinned to zero to repair rank deficiencies that short
  // windows create (each weekday seen once makes weekday dummies act as day
  // dummies, and the t/d/t+d trend identity then links them to the delay
  // dummies). Pinning a dummy merges its category into the reference.
  std::vector<int> pinned;
};

// Turns a (t,d,r,g) cell plus AR covariates into the row's nonzero design
// entries. Shared by fitting and the iterative prediction path, and carried
// inside the serialized model.
class RowAssembler {
 public:
  DesignLayout layout;
  ModelSpec spec;
  int window_days = 0;
  Eigen::MatrixXd time_rows;     // window_days x n_time
  Eigen::MatrixXd spatial_rows;  // R x n_space (0 columns when block absent)
  std::vector<int> age_col;      // per group g: column index or -1 (reference)
  std::vector<int> gender_col;

  int max_entries() const;
  // Writes (column, value) pairs; returns the count. t past the window end
  // evaluates the time spline at the last window day.
  int assemble(const DesignRow& row, std::pair<int, double>* out) const;
};

// Row-access interface the estimator works against; implementations assemble
// rows on the fly so the full dense matrix never needs to exist.
class DesignMatrix {
 public:
  virtual ~DesignMatrix() = default;
  virtual Eigen::Index rows() const = 0;
  virtual int cols() const = 0;
  virtual int max_row_entries() const = 0;
  virtual int row_entries(Eigen::Index i, std::pair<int, double>* out) const = 0;
  virtual double y(Eigen::Index i) const = 0;
  virtual double offset(Eigen::Index i) const = 0;
  virtual const std::vector<PenaltyBlock>& penalties() const = 0;
  virtual const std::vector<std::string>& col_names() const = 0;
  virtual const std::vector<int>& pinned_cols() const {
    static const std::vector<int> none;
    return none;
  }

  Eigen::MatrixXd dense() const;  // for tests and the debug dump
};

class TriangleDesign final : public DesignMatrix {
 public:
  TriangleDesign(RowAssembler assembler, std::vector<DesignRow> rows);

  Eigen::Index rows() const override { return static_cast<Eigen::Index>(rows_.size()); }
  int cols() const override { return assembler_.layout.p; }
  int max_row_entries() const override { return assembler_.max_entries(); }
  int row_entries(Eigen::Index i, std::pair<int, double>* out) const override {
    return assembler_.assemble(rows_[static_cast<std::size_t>(i)], out);
  }
  double y(Eigen::Index i) const override { return rows_[static_cast<std::size_t>(i)].y; }
  double offset(Eigen::Index i) const override {
    return rows_[static_cast<std::size_t>(i)].offset;
  }
  const std::vector<PenaltyBlock>& penalties() const override {
    return assembler_.layout.penalties;
  }
  const std::vector<std::string>& col_names() const override {
    return assembler_.layout.col_names;
  }
  const std::vector<int>& pinned_cols() const override { return assembler_.layout.pinned; }

  const RowAssembler& assembler() const { return assembler_; }
  const std::vector<DesignRow>& design_rows() const { return rows_; }

  void dump_csv(const std::string& path) const;  // debug cross-checking aid

 private:
  RowAssembler assembler_;
  std::vector<DesignRow> rows_;
};

// Arbitrary dense design; used by unit tests and oracle comparisons.
class DenseDesign final : public DesignMatrix {
 public:
  DenseDesign(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd offset,
              std::vector<PenaltyBlock> penalties = {});

  Eigen::Index rows() const override { return x_.rows(); }
  int cols() const override { return static_cast<int>(x_.cols()); }
  int max_row_entries() const override { return static_cast<int>(x_.cols()); }
  int row_entries(Eigen::Index i, std::pair<int, double>* out) const override;
  double y(Eigen::Index i) const override { return y_[i]; }
  double offset(Eigen::Index i) const override { return offset_[i]; }
  const std::vector<PenaltyBlock>& penalties() const override { return penalties_; }
  const std::vector<std::string>& col_names() const override { return col_names_; }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd offset_;
  std::vector<PenaltyBlock> penalties_;
  std::vector<std::string> col_names_;
};

// Assembles the penalized design for a fitting window. The triangle must be
// exactly the window (anchor at its last row); use CaseTriangle::window first.
// One design row per observed blade cell per stratum with positive population.
TriangleDesign build_design(const CaseTriangle& tri, const CumTriangle& cum,
                            const StratumFrame& frame, const ModelSpec& spec);

}  // namespace delaycast
