#pragma once
// End-to-end orchestration: configuration, artifact files, and the
// cluster -> fit -> activate -> phi -> decide pipeline with a hashed
// output manifest so reruns can be compared byte for byte.

#include "cead/behavior.hpp"
#include "cead/decision.hpp"
#include "cead/dsfm.hpp"
#include "cead/glm.hpp"
#include "cead/ncut.hpp"
#include "cead/volume.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cead {

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a, 64 bit) for the output manifest.

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Configuration. Flat key=value text; every field has a CLI flag of the same
// name. The "desk" profile shrinks the grid and cluster count to something
// that runs in seconds on a laptop; explicit keys always win over profile
// values. serialize_config/parse_config round-trip exactly.

struct PipelineConfig {
  std::string profile = "full"; // full | desk
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "cead_out";

  // Input synthesis ("panel") or files supplied by the caller ("none").
  std::string simulate = "panel";
  int subjects = 19;
  std::int64_t nt = 1400;
  double tr_s = 2.0;
  std::array<int, 3> dims{32, 38, 32}; // desk: 6 x 7 x 6
  double voxel_mm = 3.0;
  double fwhm_mm = 8.0;
  double vol_noise_sd = 0.5;    // spatially smoothed voxel noise
  double series_noise_sd = 0.3; // i.i.d. noise on each cluster loading series
  double spacing_s = 10.0;
  double panel_beta1 = 0.5; // planted attitude model, block-1 amplitudes
  double panel_beta2 = 0.5; // block-2 amplitudes
  double panel_linear_noise_sd = 0.15;

  // External inputs when simulate = none.
  std::vector<std::filesystem::path> volumes; // one per subject
  std::filesystem::path events_path;
  std::filesystem::path choices_path;

  // Parcellation and factor extraction.
  int clusters = 1000; // desk: 20
  int factors = 1;
  std::array<int, 3> knots{2, 2, 2};
  bool prewhiten = false;

  // Activation test.
  double z_thresh = 3.09;
  int extent = 20;

  // Risk attitudes.
  int phi_window = 100; // rolling-window size; 0 disables the rolling table
  LogitSign logit_sign = LogitSign::paper;

  // Decision regression.
  std::string weights = "optimize"; // optimize | uniform
  std::int64_t mc_iters = 10000;
  std::vector<int> decision_clusters; // empty = pick from activation ranking
};

// Parse "key = value" lines ('#' comments and blank lines ignored); unknown
// keys are errors. `overrides` are additional key=value pairs applied on top
// (the CLI maps flags onto them).
PipelineConfig parse_config(const std::string& text,
                            std::span<const std::string> overrides = {});
PipelineConfig read_config_file(const std::filesystem::path& path,
                                std::span<const std::string> overrides = {});
std::string serialize_config(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Artifact files. All tables are tab-separated with a header line; floating
// point values are written with round-trip precision.

// Loading series: column "t" then one column per factor.
void write_loadings_tsv(const std::filesystem::path& path, const Eigen::MatrixXd& z);
Eigen::MatrixXd read_loadings_tsv(const std::filesystem::path& path);

// One cluster's extracted factors plus the data-scale restoration factors.
// `method` is "dsfm" or "average" (the fallback when the spline design has
// more columns than the cluster has voxels even after dropping knots).
struct ClusterFit {
  int cluster = 0;     // 1-based parcel label
  std::string method;  // dsfm | average
  Eigen::MatrixXd z;   // T x L (average: T x 1), unit-variance loading series
  Eigen::MatrixXd coeff;          // (L+1) x K coefficients, row 0 = intercept
  std::vector<double> scale;      // per factor: RMS data-scale of its field
  std::array<int, 3> knots_used{};
  int iterations = 0;
  bool converged = true;
};

// Fits one cluster, reducing interior knots (largest axis first) until the
// basis fits the voxel count, and falling back to the centred unit-variance
// mean series when no basis does.
ClusterFit fit_cluster_series(const Eigen::MatrixXd& y,
                              std::span<const std::array<int, 3>> coords,
                              std::array<int, 3> knots, int factors,
                              std::uint64_t seed, int cluster_label);

// Cluster membership (1-based labels; label 0 is background) in x-fastest
// voxel order, decoded straight from a label volume.
struct ClusterMembers {
  std::vector<int> labels; // 1..C
  std::vector<std::vector<std::int64_t>> voxels;
  std::vector<std::vector<std::array<int, 3>>> coords;
};

ClusterMembers members_from_labels(const LabelVolume& labels);

// Fits every cluster of a labelled volume (per-cluster seeds derived from
// `seed` and the cluster label).
std::vector<ClusterFit> fit_volume_clusters(const VolumeSeries& vol,
                                            const ClusterMembers& members,
                                            std::array<int, 3> knots, int factors,
                                            std::uint64_t seed);

void write_coefficients_tsv(const std::filesystem::path& path, const ClusterFit& fit);

// Loadings plus the metadata needed to restore data scale.
struct LoadedFit {
  int cluster = 0;
  std::string method;
  Eigen::MatrixXd z;
  std::vector<double> scale;
};

// Reads every cluster_NNNN_loadings.tsv (+ matching coefficients file) in a
// fit directory, ascending by cluster id.
std::vector<LoadedFit> read_fits_dir(const std::filesystem::path& dir);

// First factor restored to data scale (z.col(0) * scale[0]).
Eigen::VectorXd scaled_series(const LoadedFit& fit);

void write_phi_tsv(const std::filesystem::path& path,
                   std::span<const RiskAttitude> rows);
std::vector<RiskAttitude> read_phi_tsv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Activation summary over clusters.

struct ActivationRow {
  int cluster = 0;
  int n = 0; // subjects pooled (1 = single-series first-level test)
  double mean_beta = 0, se = 0, t = 0, z = 0;
  bool activated = false;
};

// series[subject][cluster] are data-scale loading series; with one subject
// the row reports that subject's first-level statistics, otherwise the
// group-level test across subjects' first-level coefficients.
std::vector<ActivationRow> activation_table(
    std::span<const std::vector<Eigen::VectorXd>> series,
    std::span<const int> cluster_labels, const EventTable& events, double tr_s,
    double z_thresh, bool prewhiten);

void write_activation_tsv(const std::filesystem::path& path,
                          std::span<const ActivationRow> rows);

// ---------------------------------------------------------------------------
// Decision stage: regression of attitudes on reaction aggregates of two
// clusters, leave-one-out forecasting, and the Monte-Carlo weight search.

struct DecisionSummary {
  std::array<int, 2> clusters{0, 0};
  std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
  std::string weights_mode; // uniform | optimize
  double mae = 0;           // leave-one-out MAE at `weights`
  double uniform_mae = 0;
  std::uint64_t chosen_iter = 0;
  RiskRegression regression; // with intercept, regressors in `clusters` order
  LooResult loo;             // at `weights`
  std::vector<std::string> subjects;
  std::vector<double> phi;
};

// series[subject] holds the two chosen clusters' data-scale loading series in
// `cluster_ids` order.
DecisionSummary decide_from_series(
    std::span<const std::string> subjects, std::span<const double> phi,
    std::span<const std::array<Eigen::VectorXd, 2>> series,
    std::array<int, 2> cluster_ids, const EventTable& events, double tr_s,
    const std::string& weights_mode, std::int64_t mc_iters, std::uint64_t seed);

void write_decision_tsv(const std::filesystem::path& path,
                        const DecisionSummary& summary);

// ---------------------------------------------------------------------------
// Pipeline driver.

struct ManifestEntry {
  std::string stage;
  std::string path; // relative to out_dir, '/' separators
  std::uint64_t bytes = 0;
  std::uint64_t hash = 0;
};

struct PipelineResult {
  std::filesystem::path out_dir;
  std::filesystem::path manifest_path;
  std::vector<ManifestEntry> entries;
  bool complete = false;
  // Summary of the run, for callers and logs.
  int n_clusters = 0;
  std::vector<ActivationRow> activation;
  DecisionSummary decision;
};

// Runs simulate (or ingest) -> cluster -> fit -> activate -> phi -> decide,
// writing every artifact under cfg.out_dir and a manifest.jsonl of content
// hashes. On a stage failure the manifest is still written, with a trailing
// "failed" record, before the error is rethrown.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// Process exit code for a pipeline error (numerical failures are separated
// from usage/data errors).
int exit_code_for(ErrorKind kind);

} // namespace cead
