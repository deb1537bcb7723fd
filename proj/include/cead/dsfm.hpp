#pragma once
// Semiparametric dynamic factor extraction for one cluster of voxels.
//
// The cluster's series Y (T time points by J voxels) is approximated by
//   Y_{t,j} ~= (1, Z_t)^T A psi(X_j)
// where psi is a tensor-product quadratic B-spline basis over the cluster's
// bounding box, A is a (L+1) x K coefficient matrix whose first row is the
// static intercept field, and Z_t is the L-dimensional loading series.
// The bilinear least-squares problem is solved by exact alternating least
// squares (each half-step solves its block optimally, so the objective is
// non-increasing). The fitted loadings are identified by centering (means
// absorbed into the intercept row), whitening to unit sample variance with
// orthogonal columns, rotating so the factor functions are orthogonal in the
// voxel norm and ordered by decreasing size, and a sign convention that
// aligns each loading with the cluster-mean series. With distinct factor
// sizes this makes the representation unique.

#include "cead/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cead {

class SplineBasis;
SplineBasis build_basis(std::span<const std::array<int, 3>> cluster_coords,
                        std::array<int, 3> interior_knots);

// Tensor-product clamped B-spline basis over a cluster's bounding box.
// Per axis the degree is quadratic, lowered on short axes (linear on a
// 2-voxel extent, constant on a single voxel), and the interior knot count
// is reduced whenever it would create more basis functions than the axis
// has voxels; every reduction is reported in warnings().
class SplineBasis {
public:
  int k() const { return k_; }                                   // total basis size
  std::array<int, 3> per_axis_counts() const { return counts_; } // basis functions per axis
  std::array<int, 3> degrees() const { return degrees_; }
  std::array<int, 3> interior_knots() const { return interior_; }
  std::array<int, 3> box_lo() const { return lo_; }
  std::array<int, 3> box_hi() const { return hi_; }

  // basis vector psi(coord), K values; coord must lie in the bounding box
  std::vector<double> evaluate(const std::array<int, 3>& coord) const;

  // J x K design over the coordinates the basis was built from
  const Eigen::MatrixXd& design() const { return design_; }
  std::span<const std::array<int, 3>> coords() const { return coords_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

private:
  SplineBasis() = default;
  friend SplineBasis build_basis(std::span<const std::array<int, 3>>, std::array<int, 3>);

  int k_ = 0;
  std::array<int, 3> counts_{}, degrees_{}, interior_{}, lo_{}, hi_{};
  std::array<std::vector<double>, 3> knots_; // clamped knot vectors (empty for degenerate axes)
  std::vector<std::array<int, 3>> coords_;
  Eigen::MatrixXd design_;
  std::vector<std::string> warnings_;
};

struct FactorFit {
  int l = 0;                     // number of dynamic factors
  Eigen::MatrixXd z_hat;         // T x L loading series (intercept excluded)
  Eigen::MatrixXd a_hat;         // (L+1) x K coefficients; row 0 = intercept field
  double objective = 0.0;        // final residual sum of squares
  int iterations = 0;
  bool converged = false;
  bool ridged = false;           // a rank-deficient solve needed a tiny ridge
  std::vector<double> rss_trace; // objective after every half-step
};

// Alternating least squares for the bilinear model above.
// Preconditions: y finite, T > l + 1, J >= K, l >= 1.
FactorFit fit_dsfm(const Eigen::MatrixXd& y, const SplineBasis& basis, int l,
                   double tol = 1e-8, int max_iter = 200, std::uint64_t seed = 0);

// (1, Z_t) * A * psi(X_j) for each t and each requested coordinate.
Eigen::MatrixXd fitted_values(const FactorFit& fit, const SplineBasis& basis,
                              std::span<const std::array<int, 3>> coords);

// Plain average of the cluster's voxel series (the baseline comparator).
Eigen::VectorXd cluster_mean_series(const Eigen::MatrixXd& y);

} // namespace cead
