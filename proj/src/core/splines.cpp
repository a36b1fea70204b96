#include "core/splines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "core/error.hpp"

namespace delaycast {

Eigen::VectorXd BSplineBasis::eval(double x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  if (dim == 0) return out;
  x = std::clamp(x, lo, hi);

  // Interval index k with knots[k] <= x < knots[k+1]; the top end maps to the
  // last interior interval so the basis stays a partition of unity at hi.
  int k = order - 1;
  while (k + 1 < dim && x >= knots[k + 1]) ++k;

  // de Boor triangular scheme: N[j] holds the value of B_{k-order+1+j}.
  std::array<double, 16> n{};
  n[0] = 1.0;
  for (int deg = 1; deg < order; ++deg) {
    double saved = 0.0;
    for (int j = 0; j < deg; ++j) {
      int i = k - deg + 1 + j;
      double left = knots[i];
      double right = knots[i + deg];
      double term = (right > left) ? n[static_cast<std::size_t>(j)] / (right - left) : 0.0;
      n[static_cast<std::size_t>(j)] = saved + (right - x) * term;
      saved = (x - left) * term;
    }
    n[static_cast<std::size_t>(deg)] = saved;
  }
  for (int j = 0; j < order; ++j) {
    int idx = k - order + 1 + j;
    if (idx >= 0 && idx < dim) out[idx] = n[static_cast<std::size_t>(j)];
  }
  return out;
}

BSplineBasis make_bspline_basis(double lo, double hi, int dim, int order) {
  if (!(hi > lo)) throw Error(Errc::numeric, "DegenerateKnots", "basis span is empty");
  if (dim < order) throw Error(Errc::usage, "BadSpec", "basis dim must be >= spline order");
  if (order > 15) throw Error(Errc::usage, "BadSpec", "spline order too large");
  BSplineBasis b;
  b.lo = lo;
  b.hi = hi;
  b.dim = dim;
  b.order = order;
  // dim - order + 1 interior intervals, knots extended order-1 steps past each end.
  double h = (hi - lo) / static_cast<double>(dim - order + 1);
  b.knots.resize(dim + order);
  for (int i = 0; i < dim + order; ++i) {
    b.knots[i] = lo + h * static_cast<double>(i - (order - 1));
  }
  return b;
}

Eigen::MatrixXd difference_penalty(int dim, int order) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(dim, dim);
  for (int k = 0; k < order; ++k) {
    int rows = static_cast<int>(d.rows());
    if (rows < 2) return Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd next(rows - 1, dim);
    for (int i = 0; i + 1 < rows; ++i) next.row(i) = d.row(i + 1) - d.row(i);
    d = std::move(next);
  }
  return d.transpose() * d;
}

SmoothBlock time_basis(const std::vector<double>& t_values, int dim, int penalty_order) {
  if (dim < penalty_order + 1) {
    throw Error(Errc::usage, "BadSpec", "time basis dim must be >= penalty_order + 1");
  }
  std::set<double> distinct(t_values.begin(), t_values.end());
  // dim basis columns lose one to the sum-to-zero constraint downstream, so
  // dim-1 distinct evaluation points is the least that can stay full rank.
  if (static_cast<int>(distinct.size()) < dim - 1) {
    throw Error(Errc::numeric, "DegenerateKnots",
                "window has " + std::to_string(distinct.size()) +
                    " distinct days, fewer than basis dim " + std::to_string(dim) + " allows");
  }
  BSplineBasis def = time_basis_def(*distinct.begin(), *distinct.rbegin(), dim);
  SmoothBlock out;
  out.basis.resize(static_cast<Eigen::Index>(t_values.size()), dim);
  for (std::size_t i = 0; i < t_values.size(); ++i) {
    out.basis.row(static_cast<Eigen::Index>(i)) = def.eval(t_values[i]).transpose();
  }
  out.penalty = difference_penalty(dim, penalty_order);
  return out;
}

BSplineBasis time_basis_def(double lo, double hi, int dim) {
  return make_bspline_basis(lo, hi, dim, 4);
}

SmoothBlock spatial_basis(const std::vector<std::pair<double, double>>& coords, int dim_per_axis,
                          int penalty_order) {
  if (dim_per_axis < penalty_order + 1) {
    throw Error(Errc::usage, "BadSpec", "spatial basis dim must be >= penalty_order + 1");
  }
  std::set<double> lons, lats;
  for (auto [lon, lat] : coords) {
    lons.insert(lon);
    lats.insert(lat);
  }
  if (lons.size() < 2 || lats.size() < 2) {
    throw Error(Errc::numeric, "DegenerateKnots",
                "spatial basis needs >= 2 distinct coordinates per axis");
  }
  BSplineBasis blon = make_bspline_basis(*lons.begin(), *lons.rbegin(), dim_per_axis, 4);
  BSplineBasis blat = make_bspline_basis(*lats.begin(), *lats.rbegin(), dim_per_axis, 4);

  int m = dim_per_axis;
  SmoothBlock out;
  out.basis.resize(static_cast<Eigen::Index>(coords.size()), m * m);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    Eigen::VectorXd vlon = blon.eval(coords[i].first);
    Eigen::VectorXd vlat = blat.eval(coords[i].second);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        out.basis(static_cast<Eigen::Index>(i), a * m + b) = vlon[a] * vlat[b];
      }
    }
  }

  // Kronecker sum of the marginal difference penalties.
  Eigen::MatrixXd s1 = difference_penalty(m, penalty_order);
  Eigen::MatrixXd s2 = difference_penalty(m, penalty_order);
  out.penalty = Eigen::MatrixXd::Zero(m * m, m * m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      for (int c = 0; c < m; ++c) {
        // (S1 kron I): couples (a,b) with (c,b); (I kron S2): (a,b) with (a,c).
        out.penalty(a * m + b, c * m + b) += s1(a, c);
        out.penalty(a * m + b, a * m + c) += s2(b, c);
      }
    }
  }
  return out;
}

Eigen::MatrixXd nullspace_transform(const Eigen::VectorXd& c) {
  Eigen::Index p = c.size();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(p - 1);
}

int psd_rank(const Eigen::MatrixXd& s, double rel_tol) {
  if (s.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  double max_ev = es.eigenvalues().cwiseAbs().maxCoeff();
  if (max_ev <= 0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > rel_tol * max_ev) ++rank;
  }
  return rank;
}

}  // namespace delaycast
