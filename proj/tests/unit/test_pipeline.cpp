#include "doctest.h"

#include "cead/pipeline.hpp"
#include "cead/simulate.hpp"
#include "helpers.hpp"

#include <cmath>
#include <cstring>
#include <string>

using namespace cead;
using testutil::TempDir;

namespace {

std::string slurp_text(const std::filesystem::path& p) {
  auto bytes = testutil::slurp(p);
  return std::string(bytes.begin(), bytes.end());
}

// The z-slab a voxel row belongs to under the panel synthesis layout.
int slab_of(int z, int nz) { return std::min(2, z * 3 / nz); }

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);

  TempDir td("fnv");
  const std::string payload = "foobar";
  testutil::spit(td.path("x.bin"), std::vector<char>(payload.begin(), payload.end()));
  CHECK(fnv1a64_file(td.path("x.bin")) == 0x85944171f73967e8ull);
}

TEST_CASE("configuration defaults match the documented interface") {
  const PipelineConfig cfg = parse_config("");
  CHECK(cfg.profile == "full");
  CHECK(cfg.clusters == 1000);
  CHECK(cfg.factors == 1);
  CHECK(cfg.knots == std::array<int, 3>{2, 2, 2});
  CHECK(cfg.z_thresh == doctest::Approx(3.09));
  CHECK(cfg.extent == 20);
  CHECK(cfg.mc_iters == 10000);
  CHECK(cfg.phi_window == 100);
  CHECK(cfg.fwhm_mm == doctest::Approx(8.0));
  CHECK(cfg.voxel_mm == doctest::Approx(3.0));
  CHECK(cfg.tr_s == doctest::Approx(2.0));
  CHECK(cfg.weights == "optimize");
  CHECK(cfg.logit_sign == LogitSign::paper);
  CHECK(cfg.subjects == 19);
  CHECK(cfg.nt == 1400);
  CHECK(cfg.simulate == "panel");
  CHECK(cfg.decision_clusters.empty());
  CHECK_FALSE(cfg.prewhiten);
}

TEST_CASE("desk profile shrinks scale but explicit keys win") {
  const PipelineConfig desk = parse_config("profile = desk\n");
  CHECK(desk.clusters == 20);
  CHECK(desk.dims == std::array<int, 3>{6, 7, 6});
  // Everything else keeps its full-profile default.
  CHECK(desk.mc_iters == 10000);
  CHECK(desk.z_thresh == doctest::Approx(3.09));

  const PipelineConfig mixed = parse_config("clusters = 33\nprofile = desk\n");
  CHECK(mixed.clusters == 33); // explicit key beats the profile, regardless of order
  CHECK(mixed.dims == std::array<int, 3>{6, 7, 6});

  // CLI-style overrides are applied after the file text.
  const std::vector<std::string> overrides{"clusters=44", "seed=9"};
  const PipelineConfig flags = parse_config("profile = desk\nclusters = 33\n", overrides);
  CHECK(flags.clusters == 44);
  CHECK(flags.seed == 9);
}

TEST_CASE("configuration serialization round-trips exactly") {
  PipelineConfig cfg;
  cfg.profile = "desk";
  cfg.seed = 1234567890123456789ull;
  cfg.out_dir = "somewhere/else";
  cfg.simulate = "none";
  cfg.subjects = 7;
  cfg.nt = 999;
  cfg.tr_s = 1.75;
  cfg.dims = {5, 6, 7};
  cfg.voxel_mm = 2.5;
  cfg.fwhm_mm = 6.25;
  cfg.vol_noise_sd = 0.125;
  cfg.series_noise_sd = 1.0 / 3.0;
  cfg.spacing_s = 8.5;
  cfg.panel_beta1 = -1.5;
  cfg.panel_beta2 = 0.7071067811865476;
  cfg.panel_linear_noise_sd = 0.2;
  cfg.volumes = {"a.ceadvol", "b/c.ceadvol"};
  cfg.events_path = "ev.tsv";
  cfg.choices_path = "ch.tsv";
  cfg.clusters = 11;
  cfg.factors = 2;
  cfg.knots = {1, 0, 3};
  cfg.prewhiten = true;
  cfg.z_thresh = 2.3263478740408408;
  cfg.extent = 5;
  cfg.phi_window = 64;
  cfg.logit_sign = LogitSign::intuitive;
  cfg.weights = "uniform";
  cfg.mc_iters = 321;
  cfg.decision_clusters = {4, 9};

  const std::string text = serialize_config(cfg);
  const PipelineConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.seed == cfg.seed);
  CHECK(back.series_noise_sd == cfg.series_noise_sd); // bit-exact through %.17g
  CHECK(back.volumes.size() == 2);
  CHECK(back.volumes[1] == std::filesystem::path("b/c.ceadvol"));
  CHECK(back.decision_clusters == std::vector<int>{4, 9});
  CHECK(back.logit_sign == LogitSign::intuitive);
  CHECK(back.prewhiten);

  // The default configuration round-trips too (decision_clusters as "auto").
  const PipelineConfig def = parse_config("");
  CHECK(serialize_config(parse_config(serialize_config(def))) == serialize_config(def));
}

TEST_CASE("configuration rejects malformed and invalid input") {
  CHECK_THROWS_AS((void)parse_config("nonsense_key = 1\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("clusters ten\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("clusters = ten\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("profile = laptop\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("clusters = 0\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("weights = random\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("knots = 1,2\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("simulate = none\n"), CeadError); // no volumes given
  CHECK_THROWS_AS((void)parse_config("decision_clusters = 5\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("decision_clusters = 5,5\n"), CeadError);
  CHECK_THROWS_AS((void)parse_config("", {{"no_equals_sign"}}), CeadError);

  try {
    (void)parse_config("mystery = 1\n");
    CHECK(false);
  } catch (const CeadError& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
}

TEST_CASE("loading and attitude tables round-trip exactly") {
  TempDir td("tsv_rt");
  Rng rng(42);
  Eigen::MatrixXd z(37, 3);
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (Eigen::Index l = 0; l < z.cols(); ++l)
      z(t, l) = rng.normal() * std::pow(10.0, double(l * 6) - 6.0);
  z(0, 0) = 1.0 / 3.0;
  z(1, 0) = -0.0;
  z(2, 1) = 1e-300;
  write_loadings_tsv(td.path("l.tsv"), z);
  const Eigen::MatrixXd back = read_loadings_tsv(td.path("l.tsv"));
  REQUIRE(back.rows() == z.rows());
  REQUIRE(back.cols() == z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (Eigen::Index l = 0; l < z.cols(); ++l)
      CHECK(back(t, l) == z(t, l)); // %.17g round-trips doubles bit-exactly

  std::vector<RiskAttitude> rows(2);
  rows[0].subject_id = "s01";
  rows[0].phi_hat = 0.123456789012345678;
  rows[0].se = 0.05;
  rows[0].ci_lo = 0.02;
  rows[0].ci_hi = 0.22;
  rows[0].n_trials = 256;
  rows[0].log_likelihood = -123.75;
  rows[1].subject_id = "s02";
  rows[1].phi_hat = -0.4;
  rows[1].se = 1e9;
  rows[1].n_trials = 10;
  rows[1].separated = true;
  write_phi_tsv(td.path("phi.tsv"), rows);
  const auto back_rows = read_phi_tsv(td.path("phi.tsv"));
  REQUIRE(back_rows.size() == 2);
  CHECK(back_rows[0].subject_id == "s01");
  CHECK(back_rows[0].phi_hat == rows[0].phi_hat);
  CHECK(back_rows[0].log_likelihood == rows[0].log_likelihood);
  CHECK(back_rows[1].separated);
  CHECK(back_rows[1].se == rows[1].se);
  CHECK(back_rows[1].n_trials == 10);
}

TEST_CASE("fit_cluster_series recovers a planted factor on a thin cluster") {
  // A 1 x 12 x 1 line of voxels: quadratic spline along y, constant axes
  // elsewhere, so the tensor design easily fits inside 12 voxels.
  const Eigen::Index T = 300;
  std::vector<std::array<int, 3>> coords;
  for (int y = 0; y < 12; ++y) coords.push_back({4, y, 2});
  Eigen::VectorXd z_true(T);
  for (Eigen::Index t = 0; t < T; ++t)
    z_true(t) = std::sin(0.07 * double(t)) + 0.4 * std::cos(0.023 * double(t));
  Eigen::VectorXd field(12);
  for (int j = 0; j < 12; ++j) field(j) = 1.0 + 0.15 * j + 0.02 * j * j;
  Eigen::MatrixXd y = z_true * field.transpose();

  const ClusterFit fit = fit_cluster_series(y, coords, {2, 2, 2}, 1, 7, 3);
  CHECK(fit.cluster == 3);
  CHECK(fit.method == "dsfm");
  CHECK(fit.knots_used[0] == 0); // singleton axes cannot carry interior knots
  CHECK(fit.knots_used[2] == 0);
  REQUIRE(fit.z.cols() == 1);
  REQUIRE(fit.scale.size() == 1);

  // Correlation with the truth (sign-aligned by construction via the cluster
  // mean) and the restored physical scale.
  std::vector<double> a(z_true.data(), z_true.data() + T);
  Eigen::VectorXd restored = fit.z.col(0) * fit.scale[0];
  std::vector<double> b(restored.data(), restored.data() + T);
  CHECK(pearson_corr(a, b) > 0.9999);

  // The restored series should match the centred truth at the field's RMS.
  const double zc_sd = std::sqrt((z_true.array() - z_true.mean()).square().sum() / double(T - 1));
  const double rms_field = std::sqrt(field.squaredNorm() / 12.0);
  const double expect = zc_sd * rms_field;
  const double got = std::sqrt((restored.array() - restored.mean()).square().sum() / double(T - 1));
  CHECK(got == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("fit_cluster_series falls back to the mean series when no basis fits") {
  // Three voxels in an L: the smallest tensor design over their bounding box
  // still has 4 columns, so the fallback must engage.
  const Eigen::Index T = 50;
  std::vector<std::array<int, 3>> coords{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  Rng rng(5);
  Eigen::MatrixXd y(T, 3);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int j = 0; j < 3; ++j) y(t, j) = rng.normal() + double(j);

  const ClusterFit fit = fit_cluster_series(y, coords, {2, 2, 2}, 1, 0, 9);
  CHECK(fit.method == "average");
  CHECK(fit.coeff.size() == 0);
  REQUIRE(fit.scale.size() == 1);

  Eigen::VectorXd mean = y.rowwise().mean();
  const double mu = mean.mean();
  const double sd = std::sqrt((mean.array() - mu).square().sum() / double(T - 1));
  CHECK(fit.scale[0] == doctest::Approx(sd).epsilon(1e-12));
  for (Eigen::Index t = 0; t < T; ++t)
    CHECK(fit.z(t, 0) * fit.scale[0] == doctest::Approx(mean(t) - mu).epsilon(1e-10));

  // A constant cluster degrades to a zero series instead of dividing by zero.
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(T, 3, 2.5);
  const ClusterFit fz = fit_cluster_series(flat, coords, {0, 0, 0}, 1, 0, 1);
  CHECK(fz.method == "average");
  CHECK(fz.scale[0] == 0.0);
  CHECK(fz.z.col(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit directory writing and reading preserve method, scale, and series") {
  TempDir td("fitdir");
  const Eigen::Index T = 40;
  Rng rng(11);

  ClusterFit a;
  a.cluster = 2;
  a.method = "dsfm";
  a.z = Eigen::MatrixXd::NullaryExpr(T, 1, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  a.coeff = Eigen::MatrixXd::NullaryExpr(2, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  a.scale = {1.7320508075688772};
  a.knots_used = {0, 1, 0};
  a.iterations = 3;

  ClusterFit b;
  b.cluster = 10;
  b.method = "average";
  b.z = Eigen::MatrixXd::NullaryExpr(T, 1, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  b.coeff.resize(0, 0);
  b.scale = {0.25};

  for (const ClusterFit* f : {&b, &a}) { // written out of order; read back sorted
    char name[64];
    std::snprintf(name, sizeof name, "cluster_%04d_loadings.tsv", f->cluster);
    write_loadings_tsv(td.path(name), f->z);
    std::snprintf(name, sizeof name, "cluster_%04d_coefficients.tsv", f->cluster);
    write_coefficients_tsv(td.path(name), *f);
  }

  const std::vector<LoadedFit> fits = read_fits_dir(td.dir());
  REQUIRE(fits.size() == 2);
  CHECK(fits[0].cluster == 2);
  CHECK(fits[1].cluster == 10);
  CHECK(fits[0].method == "dsfm");
  CHECK(fits[1].method == "average");
  CHECK(fits[0].scale[0] == a.scale[0]);
  const Eigen::VectorXd sa = scaled_series(fits[0]);
  for (Eigen::Index t = 0; t < T; ++t) CHECK(sa(t) == a.z(t, 0) * a.scale[0]);

  CHECK_THROWS_AS((void)read_fits_dir(td.path("missing")), CeadError);
}

TEST_CASE("activation_table separates responding from silent clusters") {
  const Eigen::Index nt = 240;
  const double tr = 2.0;
  EventTable events;
  for (int k = 0; k < 20; ++k) events.rows.push_back({20.0 * k, 0.0, 0, 1.0});

  const DesignMatrix design = make_design(events, nt, tr);
  const Eigen::VectorXd response = design.x.col(0);

  Rng rng(77);
  const std::size_t n = 6;
  std::vector<std::vector<Eigen::VectorXd>> series(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double amp = 2.0 + 0.2 * rng.normal();
    Eigen::VectorXd active = amp * response;
    Eigen::VectorXd silent(nt), flat = Eigen::VectorXd::Constant(nt, 3.25);
    for (Eigen::Index t = 0; t < nt; ++t) {
      active(t) += 0.3 * rng.normal();
      silent(t) = 0.8 * rng.normal();
    }
    series[i] = {active, silent, flat};
  }
  const std::vector<int> labels{1, 2, 3};

  const auto rows = activation_table(series, labels, events, tr, 3.09, false);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].cluster == 1);
  CHECK(rows[0].n == int(n));
  CHECK(rows[0].z > 3.09);
  CHECK(rows[0].activated);
  CHECK(std::abs(rows[1].z) < 3.09);
  CHECK_FALSE(rows[1].activated);
  // The flat cluster is reported as zero evidence, not NaN.
  CHECK(rows[2].z == 0.0);
  CHECK_FALSE(rows[2].activated);

  // Single-subject mode uses the first-level statistics directly.
  std::vector<std::vector<Eigen::VectorXd>> one{series[0]};
  const auto single = activation_table(one, labels, events, tr, 3.09, false);
  CHECK(single[0].n == 1);
  CHECK(single[0].z > 3.09);
  CHECK_FALSE(single[1].activated);

  TempDir td("act");
  write_activation_tsv(td.path("a.tsv"), rows);
  const std::string text = slurp_text(td.path("a.tsv"));
  CHECK(text.find("cluster\tn\tmean_beta\tse\tt\tz\tactivated\n") == 0);
  CHECK(text.find("\t1\n") != std::string::npos);
}

TEST_CASE("decide_from_series recovers a planted linear attitude model") {
  PanelConfig pc;
  pc.n_subjects = 12;
  pc.linear_noise_sd = 0.05;
  pc.series_noise_sd = 0.0;
  pc.seed = 21;
  const Panel panel = gen_panel(pc);

  std::vector<std::array<Eigen::VectorXd, 2>> series;
  std::vector<std::string> subjects;
  for (int i = 0; i < pc.n_subjects; ++i) {
    series.push_back({panel.loadings[std::size_t(i)][0], panel.loadings[std::size_t(i)][1]});
    subjects.push_back(panel.choices.subjects()[std::size_t(i)]);
  }

  const DecisionSummary opt = decide_from_series(subjects, panel.phi, series, {1, 2},
                                                 panel.events, pc.tr_s, "optimize", 400, 3);
  CHECK(opt.weights_mode == "optimize");
  CHECK(opt.mae <= opt.uniform_mae);
  CHECK(opt.mae < 0.1);
  CHECK(opt.regression.r2 > 0.9);
  REQUIRE(opt.loo.points.size() == subjects.size());
  double wsum = 0;
  for (double w : opt.weights) {
    CHECK(w >= 0.0);
    wsum += w;
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));

  const DecisionSummary uni = decide_from_series(subjects, panel.phi, series, {1, 2},
                                                 panel.events, pc.tr_s, "uniform", 400, 3);
  CHECK(uni.chosen_iter == 0);
  CHECK(uni.mae == uni.uniform_mae);
  CHECK(uni.uniform_mae == doctest::Approx(opt.uniform_mae).epsilon(1e-12));
  for (double w : uni.weights) CHECK(w == doctest::Approx(0.25));

  TempDir td("dec");
  write_decision_tsv(td.path("d.tsv"), opt);
  const std::string text = slurp_text(td.path("d.tsv"));
  CHECK(text.find("# clusters\t1\t2\n") != std::string::npos);
  CHECK(text.find("# weights_mode\toptimize\n") != std::string::npos);
  CHECK(text.find("# coef\tintercept\t") != std::string::npos);
  CHECK(text.find("subject\tphi\tpred\tlo\thi\tinside\n") != std::string::npos);

  CHECK_THROWS_AS((void)decide_from_series(subjects, panel.phi, series, {1, 2}, panel.events,
                                           pc.tr_s, "bogus", 10, 3),
                  CeadError);
}

TEST_CASE("run_pipeline produces a complete, internally consistent output tree") {
  TempDir td("pipe");
  const std::vector<std::string> overrides{
      "profile=desk", "subjects=10",      "mc_iters=300",
      "phi_window=200", "seed=4",         "out_dir=" + td.path("run1").string()};
  const PipelineConfig cfg = parse_config("", overrides);
  const PipelineResult result = run_pipeline(cfg);

  CHECK(result.complete);
  CHECK(result.n_clusters == 20);
  REQUIRE(result.activation.size() == 20);
  CHECK(std::filesystem::exists(result.manifest_path));

  // Every manifest entry names an existing file whose size and content hash
  // match what the manifest recorded.
  REQUIRE_FALSE(result.entries.empty());
  for (const ManifestEntry& e : result.entries) {
    const auto full = result.out_dir / e.path;
    REQUIRE(std::filesystem::exists(full));
    CHECK(std::filesystem::file_size(full) == e.bytes);
  }
  const ManifestEntry& act_entry = *std::find_if(
      result.entries.begin(), result.entries.end(),
      [](const ManifestEntry& e) { return e.path == "activate/activation.tsv"; });
  CHECK(fnv1a64_file(result.out_dir / act_entry.path) == act_entry.hash);

  // The recorded configuration reproduces the run's parameters.
  const PipelineConfig recorded = read_config_file(result.out_dir / "config_resolved.txt");
  CHECK(recorded.seed == cfg.seed);
  CHECK(recorded.clusters == cfg.clusters);
  CHECK(recorded.mc_iters == cfg.mc_iters);
  CHECK(recorded.subjects == cfg.subjects);

  // Activation must light up the two signal slabs and stay quiet on the
  // noise slab. Slab membership comes from the written label volume.
  const LabelVolume labels = read_labels(result.out_dir / "cluster" / "labels.ceadlab");
  const ClusterMembers members = members_from_labels(labels);
  const int nz = labels.dims()[2];
  std::vector<int> majority_slab(members.labels.size());
  for (std::size_t c = 0; c < members.labels.size(); ++c) {
    std::array<int, 3> count{0, 0, 0};
    for (const auto& xyz : members.coords[c]) ++count[std::size_t(slab_of(xyz[2], nz))];
    majority_slab[c] = int(std::max_element(count.begin(), count.end()) - count.begin());
  }
  int activated_signal = 0;
  bool slab0_hit = false, slab1_hit = false;
  for (std::size_t c = 0; c < members.labels.size(); ++c) {
    const ActivationRow& row = result.activation[c];
    REQUIRE(row.cluster == members.labels[c]);
    if (majority_slab[c] == 2) {
      CHECK_FALSE(row.activated); // noise slab must stay silent
    } else if (row.activated) {
      ++activated_signal;
      (majority_slab[c] == 0 ? slab0_hit : slab1_hit) = true;
    }
  }
  CHECK(activated_signal >= 8);
  CHECK(slab0_hit);
  CHECK(slab1_hit);

  // The two decision regressors come from different signal slabs (the
  // collinearity guard must skip same-slab near-duplicates).
  auto slab_of_cluster = [&](int label) {
    for (std::size_t c = 0; c < members.labels.size(); ++c)
      if (members.labels[c] == label) return majority_slab[c];
    return -1;
  };
  const int s0 = slab_of_cluster(result.decision.clusters[0]);
  const int s1 = slab_of_cluster(result.decision.clusters[1]);
  CHECK(s0 != s1);
  CHECK(s0 <= 1);
  CHECK(s1 <= 1);

  // Forecasting quality on the synthetic panel.
  CHECK(result.decision.mae <= result.decision.uniform_mae);
  CHECK(result.decision.mae < 0.4);
  CHECK(result.decision.regression.r2 > 0.5);
  CHECK(result.decision.loo.points.size() >= 8);

  // The rolling attitude table was requested and written.
  CHECK(std::filesystem::exists(result.out_dir / "phi" / "phi_rolling.tsv"));
  const auto phi_rows = read_phi_tsv(result.out_dir / "phi" / "phi.tsv");
  CHECK(phi_rows.size() == 10);

  // Rerun with the identical analysis configuration into a different
  // directory: the manifests must match byte for byte.
  std::vector<std::string> overrides2 = overrides;
  overrides2.back() = "out_dir=" + td.path("run2").string();
  const PipelineResult again = run_pipeline(parse_config("", overrides2));
  CHECK(slurp_text(result.manifest_path) == slurp_text(again.manifest_path));
  CHECK(slurp_text(result.manifest_path).find("\"status\":\"complete\"") != std::string::npos);
}

TEST_CASE("run_pipeline records the failing stage in the manifest and rethrows") {
  TempDir td("pipefail");
  PipelineConfig cfg;
  cfg.simulate = "none";
  cfg.volumes = {td.path("missing.ceadvol")};
  cfg.events_path = td.path("missing_events.tsv");
  cfg.choices_path = td.path("missing_choices.tsv");
  cfg.out_dir = td.path("out");

  CHECK_THROWS_AS((void)run_pipeline(cfg), CeadError);
  const std::string manifest = slurp_text(td.path("out") / "manifest.jsonl");
  CHECK(manifest.find("\"status\":\"failed\"") != std::string::npos);
  CHECK(manifest.find("\"stage\":\"sim\"") != std::string::npos);
  // The artifacts written before the failure are still listed.
  CHECK(manifest.find("config_resolved.txt") != std::string::npos);
}

TEST_CASE("exit codes separate numerical failures from usage errors") {
  CHECK(exit_code_for(ErrorKind::Numerical) == 3);
  CHECK(exit_code_for(ErrorKind::Validation) == 2);
  CHECK(exit_code_for(ErrorKind::Io) == 2);
  CHECK(exit_code_for(ErrorKind::Parse) == 2);
}

} // TEST_SUITE
