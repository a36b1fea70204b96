#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace delaycast {

// Cubic B-spline basis on equally spaced knots spanning [lo, hi]. Evaluation
// clamps to the span, which is exactly the constant extrapolation the
// prediction step needs for the time trend.
struct BSplineBasis {
  double lo = 0;
  double hi = 1;
  int dim = 0;
  int order = 4;  // cubic
  Eigen::VectorXd knots;  // dim + order knots, uniform, extended past [lo, hi]

  Eigen::VectorXd eval(double x) const;  // length dim; rows sum to 1 on [lo, hi]
};

BSplineBasis make_bspline_basis(double lo, double hi, int dim, int order = 4);

// S = D'D for the order-th forward difference matrix D.
Eigen::MatrixXd difference_penalty(int dim, int order);

struct SmoothBlock {
  Eigen::MatrixXd basis;    // one evaluation row per input point
  Eigen::MatrixXd penalty;  // positive semi-definite, dim x dim
};

// Basis + order-`penalty_order` difference penalty over day indices.
SmoothBlock time_basis(const std::vector<double>& t_values, int dim, int penalty_order);
BSplineBasis time_basis_def(double lo, double hi, int dim);

// Tensor-product basis over (lon, lat) with a Kronecker-sum penalty; one row
// per coordinate pair (i.e. per district).
SmoothBlock spatial_basis(const std::vector<std::pair<double, double>>& coords, int dim_per_axis,
                          int penalty_order);

// Orthonormal basis Z of the null space of c' (p x p-1), so columns of X*Z
// satisfy the weighted sum-to-zero constraint c'beta = 0.
Eigen::MatrixXd nullspace_transform(const Eigen::VectorXd& c);

// Numerical rank of a symmetric PSD matrix (eigenvalues above rel_tol * max).
int psd_rank(const Eigen::MatrixXd& s, double rel_tol = 1e-9);

}  // namespace delaycast
