#include <doctest.h>

#include <cmath>
#include <random>

#include "core/error.hpp"
#include "core/splines.hpp"

using namespace delaycast;

namespace {

// Independent oracle: textbook recursive Cox-de Boor evaluation, O(2^order),
// deliberately different from the library's iterative triangular scheme.
double bspline_recursive(const Eigen::VectorXd& knots, int i, int order, double x) {
  if (order == 1) {
    return (x >= knots[i] && x < knots[i + 1]) ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  double dl = knots[i + order - 1] - knots[i];
  double dr = knots[i + order] - knots[i + 1];
  if (dl > 0) left = (x - knots[i]) / dl * bspline_recursive(knots, i, order - 1, x);
  if (dr > 0) right = (knots[i + order] - x) / dr * bspline_recursive(knots, i + 1, order - 1, x);
  return left + right;
}

}  // namespace

TEST_CASE("basis rows sum to one across the span") {
  BSplineBasis basis = make_bspline_basis(1.0, 21.0, 8);
  for (double x = 1.0; x <= 21.0; x += 0.25) {
    Eigen::VectorXd v = basis.eval(x);
    CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.minCoeff() >= 0.0);
  }
  // Clamped evaluation keeps the partition of unity outside the span.
  CHECK(basis.eval(35.0).sum() == doctest::Approx(1.0));
  CHECK(basis.eval(35.0).isApprox(basis.eval(21.0)));
}

TEST_CASE("order-2 difference penalty annihilates linear coefficient vectors") {
  Eigen::MatrixXd s = difference_penalty(8, 2);
  Eigen::VectorXd linear(8);
  for (int i = 0; i < 8; ++i) linear[i] = 3.0 - 0.7 * i;
  CHECK(std::abs(linear.dot(s * linear)) < 1e-12);
  Eigen::VectorXd quad(8);
  for (int i = 0; i < 8; ++i) quad[i] = i * i;
  CHECK(quad.dot(s * quad) > 1.0);
  CHECK(psd_rank(s) == 6);
}

TEST_CASE("basis values match the recursive oracle at knot midpoints") {
  BSplineBasis basis = make_bspline_basis(0.0, 10.0, 9);
  for (int k = 3; k + 1 < 9; ++k) {
    double x = 0.5 * (basis.knots[k] + basis.knots[k + 1]);
    Eigen::VectorXd v = basis.eval(x);
    for (int i = 0; i < 9; ++i) {
      double oracle = bspline_recursive(basis.knots, i, 4, x);
      CHECK(v[i] == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int rep = 0; rep < 200; ++rep) {
    double x = u(rng);
    Eigen::VectorXd v = basis.eval(x);
    for (int i = 0; i < 9; ++i) {
      CHECK(v[i] == doctest::Approx(bspline_recursive(basis.knots, i, 4, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("time basis") {
  std::vector<double> days;
  for (int t = 1; t <= 21; ++t) days.push_back(t);

  SUBCASE("constant function is representable") {
    SmoothBlock block = time_basis(days, 8, 2);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
    Eigen::VectorXd fitted = block.basis * ones;
    for (int i = 0; i < fitted.size(); ++i) CHECK(fitted[i] == doctest::Approx(1.0));
  }
  SUBCASE("degenerate windows are rejected") {
    std::vector<double> few = {1, 2, 3, 4, 5};
    CHECK_THROWS_WITH_AS(time_basis(few, 8, 2), doctest::Contains("DegenerateKnots"), Error);
  }
}

TEST_CASE("spatial tensor basis") {
  std::vector<std::pair<double, double>> coords;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) coords.emplace_back(6.0 + i, 47.0 + j);
  }

  SUBCASE("tensor partition of unity") {
    SmoothBlock block = spatial_basis(coords, 4, 2);
    Eigen::VectorXd fitted = block.basis * Eigen::VectorXd::Ones(16);
    for (int i = 0; i < fitted.size(); ++i) CHECK(fitted[i] == doctest::Approx(1.0));
  }

  SUBCASE("single district is rejected") {
    std::vector<std::pair<double, double>> one = {{6.0, 47.0}};
    CHECK_THROWS_WITH_AS(spatial_basis(one, 4, 2), doctest::Contains("DegenerateKnots"), Error);
  }

  SUBCASE("penalty vanishes on affine-in-index coefficient sheets") {
    SmoothBlock block = spatial_basis(coords, 5, 2);
    Eigen::VectorXd sheet(25);
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        sheet[a * 5 + b] = 2.0 + 0.3 * a - 0.8 * b + 0.05 * a * b;
      }
    }
    CHECK(std::abs(sheet.dot(block.penalty * sheet)) < 1e-10);
    Eigen::VectorXd bumpy = sheet;
    bumpy[12] += 1.0;
    CHECK(bumpy.dot(block.penalty * bumpy) > 1.0);
  }
}

TEST_CASE("nullspace transform satisfies the constraint and keeps orthonormal columns") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  Eigen::VectorXd c(12);
  for (int i = 0; i < 12; ++i) c[i] = std::abs(n(rng)) + 0.1;
  Eigen::MatrixXd z = nullspace_transform(c);
  CHECK(z.rows() == 12);
  CHECK(z.cols() == 11);
  CHECK((c.transpose() * z).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::MatrixXd ztz = z.transpose() * z;
  CHECK((ztz - Eigen::MatrixXd::Identity(11, 11)).cwiseAbs().maxCoeff() < 1e-10);
}
