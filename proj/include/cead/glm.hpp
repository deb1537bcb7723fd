#pragma once
// Hemodynamic response modeling and activation testing.
//
// A stimulus train is convolved with a double-gamma hemodynamic response to
// form regressors; any series (voxel, cluster mean, or extracted loading) is
// tested against that design by ordinary least squares. t statistics are
// mapped to Z scores through a sign-preserving probit transform of the
// Student-t tail, capped at |Z| = 38. Group inference is a one-sample t-test
// of per-subject effect estimates. Activation is declared where Z > 3.09,
// and voxel-level maps additionally require a 26-connected component of at
// least 20 voxels.

#include "cead/stats.hpp"
#include "cead/volume.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace cead {

// Double-gamma hemodynamic response at t seconds after stimulus onset:
//   h(t) = (t/5.4)^6 exp{-(t-5.4)/0.9} - 0.35 (t/10.8)^12 exp{-(t-10.8)/0.9}
// Throws Validation for negative t.
double hrf(double t);

// h sampled on the grid 0, step, 2*step, ..., up to t_max seconds inclusive.
std::vector<double> hrf_samples(double step_s, double t_max_s = 32.0);

struct DesignMatrix {
  Eigen::MatrixXd x;              // T x p
  std::vector<int> condition_ids; // one per leading column, ascending
  bool has_intercept = false;     // intercept appended as the last column
};

// One regressor column per selected condition: events become boxcars sampled
// at tr_s (an impulse when duration is zero), scaled by amplitude, convolved
// with the response, and truncated to nt samples. An empty condition list
// selects every condition in the table. Throws Validation when a selected
// condition has no events, an event starts outside the run, or a column
// comes out all zero.
DesignMatrix make_design(const EventTable& events, std::int64_t nt, double tr_s,
                         std::span<const int> conditions = {},
                         bool intercept = true);

struct RegressorStats {
  double beta = 0, se = 0, t = 0, z = 0, p = 1;
};

struct FirstLevelResult {
  std::vector<RegressorStats> stats; // one per design column
  int df = 0;
  double ar1_rho = 0; // lag-1 coefficient removed when prewhitening is on
};

// Ordinary least squares of one series on the design. With prewhiten_ar1 the
// lag-1 residual autocorrelation is estimated and removed by quasi-differencing
// before the final fit (the first sample is dropped).
FirstLevelResult first_level(const Eigen::VectorXd& series,
                             const DesignMatrix& design,
                             bool prewhiten_ar1 = false);

struct GroupResult {
  double mean_beta = 0, se = 0, t = 0, z = 0, p = 1;
  int df = 0;
  bool degenerate = false; // zero cross-subject variance; z pinned to 0 or +-38
};

// One-sample t-test of per-subject effect estimates against zero (>= 3 subjects).
GroupResult group_level(std::span<const double> betas);

// Flags units with z > z_thresh. With per-unit voxel coordinates supplied
// (same length as z), only 26-connected components of at least `extent`
// supra-threshold voxels survive; with coords empty each unit stands alone
// and the extent rule does not apply (cluster-level testing).
std::vector<std::uint8_t> threshold_activation(
    std::span<const double> z, std::span<const std::array<int, 3>> coords,
    double z_thresh = 3.09, int extent = 20);

} // namespace cead
