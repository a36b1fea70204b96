#include "core/design.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "core/error.hpp"

namespace delaycast {

void ModelSpec::validate() const {
  if (d_max < 1) throw Error(Errc::usage, "BadSpec", "d_max must be >= 1");
  if (window_days < 2) throw Error(Errc::usage, "BadSpec", "window_days must be >= 2");
  if (k_short < 1 || k_short > window_days) {
    throw Error(Errc::usage, "BadSpec", "k_short must lie in [1, window_days]");
  }
  if (include_re_short && !include_re) {
    throw Error(Errc::usage, "BadSpec", "include_re_short requires include_re");
  }
  if (penalty_order < 1) throw Error(Errc::usage, "BadSpec", "penalty_order must be >= 1");
  if (time_basis_dim < penalty_order + 1 || spatial_basis_dim < penalty_order + 1) {
    throw Error(Errc::usage, "BadSpec", "basis dims must be >= penalty_order + 1");
  }
  if (bootstrap_n < 2) throw Error(Errc::usage, "BadSpec", "bootstrap_n must be >= 2");
  if (!(interval_level > 0.0 && interval_level < 1.0)) {
    throw Error(Errc::usage, "BadSpec", "interval_level must be in (0, 1)");
  }
}

int RowAssembler::max_entries() const {
  // intercept + delay + 2 weekdays + age + gender + 2 AR + 2 REs + smooths
  return 12 + layout.n_time + layout.n_space;
}

int RowAssembler::assemble(const DesignRow& row, std::pair<int, double>* out) const {
  int n = 0;
  const DesignLayout& l = layout;
  out[n++] = {l.col_intercept, 1.0};
  if (l.off_delay >= 0 && row.d >= 2) out[n++] = {l.off_delay + row.d - 2, 1.0};
  if (l.off_wd_reg >= 0 && row.wd_reg != 0) out[n++] = {l.off_wd_reg + row.wd_reg - 1, 1.0};
  if (l.off_wd_rep >= 0 && row.wd_rep != 0) out[n++] = {l.off_wd_rep + row.wd_rep - 1, 1.0};
  int ac = age_col[static_cast<std::size_t>(row.g)];
  if (ac >= 0) out[n++] = {ac, 1.0};
  int gc = gender_col[static_cast<std::size_t>(row.g)];
  if (gc >= 0) out[n++] = {gc, 1.0};
  if (l.col_ar_time >= 0) out[n++] = {l.col_ar_time, row.ar_time};
  if (l.col_ar_delay >= 0) out[n++] = {l.col_ar_delay, row.ar_delay};
  if (l.off_time >= 0) {
    int t = std::min(row.t, window_days);  // constant time trend past the window
    for (int j = 0; j < l.n_time; ++j) {
      out[n++] = {l.off_time + j, time_rows(t - 1, j)};
    }
  }
  if (l.off_space >= 0) {
    for (int j = 0; j < l.n_space; ++j) {
      out[n++] = {l.off_space + j, spatial_rows(row.r, j)};
    }
  }
  if (l.off_re_long >= 0) out[n++] = {l.off_re_long + row.r, 1.0};
  if (l.off_re_short >= 0 && row.t > window_days - spec.k_short) {
    out[n++] = {l.off_re_short + row.r, 1.0};
  }
  return n;
}

Eigen::MatrixXd DesignMatrix::dense() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows(), cols());
  std::vector<std::pair<int, double>> buf(static_cast<std::size_t>(max_row_entries()));
  for (Eigen::Index i = 0; i < rows(); ++i) {
    int n = row_entries(i, buf.data());
    for (int k = 0; k < n; ++k) x(i, buf[static_cast<std::size_t>(k)].first) += buf[static_cast<std::size_t>(k)].second;
  }
  return x;
}

TriangleDesign::TriangleDesign(RowAssembler assembler, std::vector<DesignRow> rows)
    : assembler_(std::move(assembler)), rows_(std::move(rows)) {}

void TriangleDesign::dump_csv(const std::string& path) const {
  std::string out = "t,d,r,g,y,offset";
  for (const auto& name : assembler_.layout.col_names) out += "," + name;
  out += '\n';
  std::vector<std::pair<int, double>> buf(static_cast<std::size_t>(max_row_entries()));
  std::vector<double> dense(static_cast<std::size_t>(cols()));
  char num[96];
  for (Eigen::Index i = 0; i < rows(); ++i) {
    const DesignRow& r = rows_[static_cast<std::size_t>(i)];
    std::fill(dense.begin(), dense.end(), 0.0);
    int n = row_entries(i, buf.data());
    for (int k = 0; k < n; ++k) dense[static_cast<std::size_t>(buf[static_cast<std::size_t>(k)].first)] += buf[static_cast<std::size_t>(k)].second;
    std::snprintf(num, sizeof(num), "%d,%d,%d,%d,%.10g,%.10g", r.t, r.d, r.r, r.g, r.y, r.offset);
    out += num;
    for (double v : dense) {
      std::snprintf(num, sizeof(num), ",%.10g", v);
      out += num;
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::data, "FileNotFound", "cannot write '" + path + "'");
  f << out;
}

DenseDesign::DenseDesign(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd offset,
                         std::vector<PenaltyBlock> penalties)
    : x_(std::move(x)), y_(std::move(y)), offset_(std::move(offset)),
      penalties_(std::move(penalties)) {
  for (int j = 0; j < cols(); ++j) col_names_.push_back("x" + std::to_string(j));
}

int DenseDesign::row_entries(Eigen::Index i, std::pair<int, double>* out) const {
  int n = 0;
  for (int j = 0; j < cols(); ++j) {
    double v = x_(i, j);
    if (v != 0.0) out[n++] = {j, v};
  }
  return n;
}

namespace {

// Reference categories: Monday, age 35-59 (or the frame's first age band),
// gender F.
void map_group_columns(const StratumFrame& frame, DesignLayout& layout,
                       std::vector<int>& age_col, std::vector<int>& gender_col,
                       std::vector<std::string>& names, int& next) {
  std::vector<std::string> ages, genders;
  for (const auto& g : frame.groups()) {
    if (std::find(ages.begin(), ages.end(), g.age_group) == ages.end()) ages.push_back(g.age_group);
    if (std::find(genders.begin(), genders.end(), g.gender) == genders.end()) {
      genders.push_back(g.gender);
    }
  }
  std::string age_ref = "35-59";
  if (std::find(ages.begin(), ages.end(), age_ref) == ages.end()) age_ref = ages.front();
  std::string gender_ref = "F";
  if (std::find(genders.begin(), genders.end(), gender_ref) == genders.end()) {
    gender_ref = genders.front();
  }

  std::map<std::string, int> age_idx, gender_idx;
  layout.off_age = next;
  for (const auto& a : ages) {
    if (a == age_ref) continue;
    age_idx[a] = next;
    names.push_back("age_" + a);
    ++next;
  }
  layout.n_age = next - layout.off_age;
  if (layout.n_age == 0) layout.off_age = -1;

  layout.off_gender = next;
  for (const auto& g : genders) {
    if (g == gender_ref) continue;
    gender_idx[g] = next;
    names.push_back("gender_" + g);
    ++next;
  }
  layout.n_gender = next - layout.off_gender;
  if (layout.n_gender == 0) layout.off_gender = -1;

  age_col.assign(static_cast<std::size_t>(frame.n_groups()), -1);
  gender_col.assign(static_cast<std::size_t>(frame.n_groups()), -1);
  for (int g = 0; g < frame.n_groups(); ++g) {
    const Stratum& s = frame.group(g);
    auto ai = age_idx.find(s.age_group);
    if (ai != age_idx.end()) age_col[static_cast<std::size_t>(g)] = ai->second;
    auto gi = gender_idx.find(s.gender);
    if (gi != gender_idx.end()) gender_col[static_cast<std::size_t>(g)] = gi->second;
  }
}

}  // namespace

TriangleDesign build_design(const CaseTriangle& tri, const CumTriangle& cum,
                            const StratumFrame& frame, const ModelSpec& spec) {
  spec.validate();
  const int W = spec.window_days;
  if (tri.anchor_index() != tri.n_rows() || tri.n_rows() != W) {
    throw Error(Errc::usage, "BadWindow",
                "build_design expects a windowed triangle with anchor at its last row");
  }
  if (tri.d_max() != spec.d_max) {
    throw Error(Errc::usage, "BadSpec", "triangle d_max differs from spec.d_max");
  }
  if (static_cast<int>(frame.n_districts()) != tri.n_districts() ||
      frame.n_groups() != tri.n_groups()) {
    throw Error(Errc::usage, "BadFrame", "stratum frame does not match the triangle universe");
  }
  const int R = tri.n_districts();
  const int G = tri.n_groups();

  // Observed blade cells inside the window.
  std::vector<std::pair<int, int>> cells;
  for (int t = 1; t <= W; ++t) {
    for (int d = 1; d <= spec.d_max; ++d) {
      if (tri.observed(t, d)) cells.emplace_back(t, d);
    }
  }
  if (cells.empty()) throw Error(Errc::data, "EmptyWindow", "no observed cells in the window");

  // Duplicate district coordinates collapse the spatial tensor basis.
  std::vector<std::pair<double, double>> coords;
  coords.reserve(static_cast<std::size_t>(R));
  std::map<std::pair<double, double>, std::string> seen;
  std::string dups;
  for (int r = 0; r < R; ++r) {
    const District& d = frame.district(r);
    auto key = std::make_pair(d.lon, d.lat);
    auto it = seen.find(key);
    if (it != seen.end()) {
      dups += " (" + it->second + ", " + d.id + ")";
    } else {
      seen.emplace(key, d.id);
    }
    coords.emplace_back(d.lon, d.lat);
  }

  std::set<double> lons, lats;
  for (auto [lon, lat] : coords) {
    lons.insert(lon);
    lats.insert(lat);
  }
  int n_points = static_cast<int>(seen.size());

  // The tensor dimension adapts to the available geometry: never more basis
  // columns than distinct district locations, never more than requested. The
  // block is dropped entirely when a proper penalized basis does not fit
  // (tiny synthetic maps); district random intercepts then carry the
  // between-district differences.
  int m_space = std::min({spec.spatial_basis_dim, static_cast<int>(lons.size()),
                          static_cast<int>(lats.size()),
                          static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_points))))});
  bool want_space = m_space >= spec.penalty_order + 1 && m_space >= 4;
  if (want_space && !dups.empty()) {
    throw Error(Errc::numeric, "RankDeficient",
                "duplicate district coordinates collapse the spatial basis:" + dups);
  }

  DesignLayout layout;
  RowAssembler assembler;
  std::vector<std::string>& names = layout.col_names;
  int next = 0;

  layout.col_intercept = next;
  names.push_back("intercept");
  ++next;

  layout.off_delay = next;
  layout.n_delay = spec.d_max - 1;
  for (int d = 2; d <= spec.d_max; ++d) names.push_back("delay_" + std::to_string(d));
  next += layout.n_delay;
  if (layout.n_delay == 0) layout.off_delay = -1;

  layout.off_wd_reg = next;
  for (int w = 1; w < 7; ++w) names.push_back(std::string("wd_reg_") + weekday_name(w));
  next += 6;
  layout.off_wd_rep = next;
  for (int w = 1; w < 7; ++w) names.push_back(std::string("wd_rep_") + weekday_name(w));
  next += 6;

  map_group_columns(frame, layout, assembler.age_col, assembler.gender_col, names, next);

  if (spec.include_ar_time) {
    layout.col_ar_time = next;
    names.push_back("ar_time");
    ++next;
  }
  // With a single delay column the delay-AR covariate is identically zero.
  if (spec.include_ar_delay && spec.d_max > 1) {
    layout.col_ar_delay = next;
    names.push_back("ar_delay");
    ++next;
  }

  // Time smooth: one B-spline basis over the full window span (the anchor row
  // carries no data but is where predictions start), with a weighted
  // sum-to-zero constraint matching the stacked design's column sum.
  std::set<int> distinct_days;
  for (auto [t, d] : cells) distinct_days.insert(t);
  if (static_cast<int>(distinct_days.size()) < spec.time_basis_dim - 1) {
    throw Error(Errc::numeric, "DegenerateKnots",
                "window has " + std::to_string(distinct_days.size()) +
                    " observed days, too few for time basis dim " +
                    std::to_string(spec.time_basis_dim));
  }
  BSplineBasis time_def = time_basis_def(1.0, static_cast<double>(W), spec.time_basis_dim);
  Eigen::VectorXd time_colsum = Eigen::VectorXd::Zero(spec.time_basis_dim);
  for (auto [t, d] : cells) time_colsum += time_def.eval(static_cast<double>(t));
  Eigen::MatrixXd zt = nullspace_transform(time_colsum);
  assembler.time_rows.resize(W, spec.time_basis_dim - 1);
  for (int t = 1; t <= W; ++t) {
    assembler.time_rows.row(t - 1) = (time_def.eval(static_cast<double>(t)).transpose() * zt);
  }
  layout.off_time = next;
  layout.n_time = spec.time_basis_dim - 1;
  for (int j = 0; j < layout.n_time; ++j) names.push_back("s_time_" + std::to_string(j));
  next += layout.n_time;
  Eigen::MatrixXd time_pen =
      zt.transpose() * difference_penalty(spec.time_basis_dim, spec.penalty_order) * zt;
  layout.penalties.push_back(
      {"smooth_time", layout.off_time, layout.n_time, time_pen, psd_rank(time_pen)});

  if (want_space) {
    SmoothBlock space_raw = spatial_basis(coords, m_space, spec.penalty_order);
    Eigen::VectorXd space_colsum = space_raw.basis.colwise().sum();
    Eigen::MatrixXd zs = nullspace_transform(space_colsum);
    assembler.spatial_rows = space_raw.basis * zs;
    layout.off_space = next;
    layout.n_space = static_cast<int>(assembler.spatial_rows.cols());
    for (int j = 0; j < layout.n_space; ++j) names.push_back("s_space_" + std::to_string(j));
    next += layout.n_space;
    Eigen::MatrixXd space_pen = zs.transpose() * space_raw.penalty * zs;
    layout.penalties.push_back(
        {"smooth_space", layout.off_space, layout.n_space, space_pen, psd_rank(space_pen)});
  } else {
    assembler.spatial_rows.resize(R, 0);
  }

  if (spec.include_re) {
    layout.off_re_long = next;
    for (int r = 0; r < R; ++r) names.push_back("u_long_" + frame.district(r).id);
    next += R;
    layout.penalties.push_back(
        {"re_long", layout.off_re_long, R, Eigen::MatrixXd::Identity(R, R), R});
  }
  if (spec.include_re_short) {
    layout.off_re_short = next;
    for (int r = 0; r < R; ++r) names.push_back("u_short_" + frame.district(r).id);
    next += R;
    layout.penalties.push_back(
        {"re_short", layout.off_re_short, R, Eigen::MatrixXd::Identity(R, R), R});
  }

  layout.p = next;
  layout.n_districts = R;

  // Rank repair. Short fitting windows where each weekday appears only once
  // turn the weekday dummies into day dummies; those collide with the delay
  // dummies (t + d is the report day) and with the time spline's unpenalized
  // linear direction. Greedy Gram-Schmidt over the (t, d, g) pattern space
  // scans intercept, delay, age, gender, then the (protected) time spline
  // columns, then the weekday dummies; a weekday dummy that adds nothing is
  // pinned to zero, merging its category into the reference.
  {
    struct ScanCol {
      int gram_idx;
      int layout_col;  // -1 for protected penalized columns
    };
    const int n_dummy = layout.off_time;  // fixed dummy + AR columns precede the smooths
    const int n_scan = n_dummy + layout.n_time;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n_scan, n_scan);
    Eigen::VectorXd pattern = Eigen::VectorXd::Zero(n_scan);
    for (auto [t, d] : cells) {
      int wd_reg = tri.date_of_row(t).weekday();
      int wd_rep = (tri.date_of_row(t) + d).weekday();
      for (int g = 0; g < G; ++g) {
        pattern.setZero();
        pattern[layout.col_intercept] = 1.0;
        if (layout.off_delay >= 0 && d >= 2) pattern[layout.off_delay + d - 2] = 1.0;
        if (wd_reg != 0) pattern[layout.off_wd_reg + wd_reg - 1] = 1.0;
        if (wd_rep != 0) pattern[layout.off_wd_rep + wd_rep - 1] = 1.0;
        if (assembler.age_col[static_cast<std::size_t>(g)] >= 0) {
          pattern[assembler.age_col[static_cast<std::size_t>(g)]] = 1.0;
        }
        if (assembler.gender_col[static_cast<std::size_t>(g)] >= 0) {
          pattern[assembler.gender_col[static_cast<std::size_t>(g)]] = 1.0;
        }
        pattern.segment(n_dummy, layout.n_time) = assembler.time_rows.row(t - 1);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(pattern);
      }
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();

    std::vector<ScanCol> scan;
    scan.push_back({layout.col_intercept, -1});
    for (int j = 0; j < layout.n_delay; ++j) scan.push_back({layout.off_delay + j, -1});
    for (int j = 0; j < layout.n_age; ++j) scan.push_back({layout.off_age + j, -1});
    for (int j = 0; j < layout.n_gender; ++j) scan.push_back({layout.off_gender + j, -1});
    for (int j = 0; j < layout.n_time; ++j) scan.push_back({n_dummy + j, -1});
    for (int j = 0; j < 6; ++j) scan.push_back({layout.off_wd_reg + j, layout.off_wd_reg + j});
    for (int j = 0; j < 6; ++j) scan.push_back({layout.off_wd_rep + j, layout.off_wd_rep + j});

    std::vector<int> kept;
    Eigen::MatrixXd chol(n_scan, n_scan);
    for (const ScanCol& col : scan) {
      double diag = gram(col.gram_idx, col.gram_idx);
      double resid = diag;
      Eigen::VectorXd w(static_cast<Eigen::Index>(kept.size()));
      if (diag > 0) {
        for (std::size_t i = 0; i < kept.size(); ++i) {
          double v = gram(kept[i], col.gram_idx);
          for (std::size_t l = 0; l < i; ++l) {
            v -= chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) *
                 w[static_cast<Eigen::Index>(l)];
          }
          w[static_cast<Eigen::Index>(i)] =
              v / chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
        }
        resid = diag - w.squaredNorm();
      }
      if (diag > 0 && resid > 1e-8 * diag) {
        Eigen::Index m = static_cast<Eigen::Index>(kept.size());
        chol.row(m).head(m) = w.transpose();
        chol(m, m) = std::sqrt(resid);
        kept.push_back(col.gram_idx);
      } else if (col.layout_col >= 0) {
        layout.pinned.push_back(col.layout_col);
      }
    }
    std::sort(layout.pinned.begin(), layout.pinned.end());
  }

  assembler.layout = std::move(layout);
  assembler.spec = spec;
  assembler.window_days = W;

  // One row per observed cell and stratum; zero-population strata would have
  // been rejected by the frame already, but stay defensive about it.
  std::vector<DesignRow> rows;
  rows.reserve(cells.size() * static_cast<std::size_t>(R) * static_cast<std::size_t>(G));
  for (auto [t, d] : cells) {
    int wd_reg = tri.date_of_row(t).weekday();
    int wd_rep = (tri.date_of_row(t) + d).weekday();
    for (int r = 0; r < R; ++r) {
      for (int g = 0; g < G; ++g) {
        double pop = frame.population(r, g);
        if (!(pop > 0)) continue;
        DesignRow row;
        row.t = t;
        row.d = d;
        row.r = r;
        row.g = g;
        row.y = tri.at(t, d, r, g);
        row.offset = std::log(pop);
        row.ar_time = t >= 2 ? std::log1p(cum.at(t - 1, d, r, g)) : 0.0;
        row.ar_delay = std::log1p(cum.at(t, d - 1, r, g));
        row.wd_reg = wd_reg;
        row.wd_rep = wd_rep;
        rows.push_back(row);
      }
    }
  }
  return TriangleDesign(std::move(assembler), std::move(rows));
}

}  // namespace delaycast
