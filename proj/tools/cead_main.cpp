// cead: spatially constrained parcellation, per-cluster factor extraction,
// activation testing, risk-attitude estimation, and decision regression for
// 4-D voxel time series, plus a synthetic-panel end-to-end pipeline.

#include "cead/common.hpp"
#include "cead/diagnostics.hpp"
#include "cead/pipeline.hpp"
#include "cead/simgraph.hpp"
#include "cead/simulate.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cead;

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::array<int, 3> parse_triple(const std::string& what, const std::string& s) {
  std::array<int, 3> out{};
  int n = 0;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t pos = s.find(',', start);
    const std::string part = pos == std::string::npos ? s.substr(start) : s.substr(start, pos - start);
    try {
      out[std::size_t(i)] = std::stoi(part);
    } catch (...) {
      fail(ErrorKind::Parse, what + ": expected three comma-separated integers, got '" + s + "'");
    }
    ++n;
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (n != 3 || s.find(',', start) != std::string::npos)
    fail(ErrorKind::Parse, what + ": expected three comma-separated integers, got '" + s + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& what, const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(',', start);
    const std::string part = pos == std::string::npos ? s.substr(start) : s.substr(start, pos - start);
    try {
      out.push_back(std::stoi(part));
    } catch (...) {
      fail(ErrorKind::Parse, what + ": expected comma-separated integers, got '" + s + "'");
    }
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

LogitSign sign_of(const std::string& s) {
  if (s == "paper") return LogitSign::paper;
  if (s == "intuitive") return LogitSign::intuitive;
  fail(ErrorKind::Parse, "sign must be paper or intuitive");
}

// Multi-subject fit directories hold one subdirectory per subject; a
// single-subject directory holds the cluster tables directly.
std::vector<std::string> subject_dirs(const fs::path& fits) {
  std::vector<std::string> subs;
  for (const auto& entry : fs::directory_iterator(fits))
    if (entry.is_directory()) subs.push_back(entry.path().filename().string());
  std::sort(subs.begin(), subs.end());
  return subs;
}

// ---------------------------------------------------------------------------

void cmd_simulate(const std::string& setup, std::uint64_t seed, std::int64_t nt,
                  double noise_sd, double fwhm, const std::string& dims_s, double voxel,
                  double tr, const std::string& out, const std::string& events_out,
                  const std::string& truth_out) {
  SimConfig cfg;
  cfg.setup = setup_from_string(setup);
  cfg.seed = seed;
  cfg.nt = nt;
  cfg.noise_sd = noise_sd;
  cfg.fwhm_mm = fwhm;
  cfg.dims = parse_triple("--dims", dims_s);
  cfg.voxel_mm = {float(voxel), float(voxel), float(voxel)};
  cfg.tr_s = float(tr);
  const BoldSim sim = gen_bold(cfg);
  write_volume(sim.vol, out);
  std::fprintf(stderr, "[simulate] setup=%s seed=%" PRIu64 " wrote %s\n", setup.c_str(), seed,
               out.c_str());
  if (!events_out.empty()) write_events(sim.events, events_out);
  if (!truth_out.empty()) {
    std::string s = "t\tloading\n";
    for (Eigen::Index t = 0; t < sim.loading.size(); ++t)
      s += std::to_string(t) + '\t' + fmt_g(sim.loading(t)) + '\n';
    write_text(truth_out, s);
  }
}

void cmd_cluster(const std::string& input, int clusters, std::uint64_t seed,
                 const std::string& output, std::string summary) {
  const VolumeSeries vol = read_volume(input);
  std::vector<std::int64_t> zero_var;
  const SimilarityGraph graph = build_graph(vol, &zero_var);
  const Parcellation parc = parcellate(graph, clusters, derive_seed(seed, "pipeline.cluster"));
  write_labels(parc.labels, output);
  if (summary.empty()) summary = output + ".tsv";
  std::string s;
  for (const std::string& w : parc.warnings) s += "# warning\t" + w + '\n';
  s += "label\tsize\tcreation_cost\n";
  for (const ClusterSummary& c : parc.clusters)
    s += std::to_string(c.label) + '\t' + std::to_string(c.members.size()) + '\t' +
         fmt_g(c.creation_cost) + '\n';
  write_text(summary, s);
  std::fprintf(stderr, "[cluster] clusters=%d zero_variance_voxels=%zu wrote %s\n",
               parc.n_clusters, zero_var.size(), output.c_str());
}

void cmd_fit(const std::string& input, const std::string& labels_path, int factors,
             const std::string& knots_s, std::uint64_t seed, const std::string& output) {
  const VolumeSeries vol = read_volume(input);
  const LabelVolume labels = read_labels(labels_path);
  if (labels.dims()[0] != vol.dims().nx || labels.dims()[1] != vol.dims().ny ||
      labels.dims()[2] != vol.dims().nz)
    fail(ErrorKind::Validation, "fit: label volume dimensions do not match the data");
  const ClusterMembers members = members_from_labels(labels);
  fs::create_directories(output);
  int n_dsfm = 0, n_average = 0;
  for (const ClusterFit& fit :
       fit_volume_clusters(vol, members, parse_triple("--knots", knots_s), factors, seed)) {
    (fit.method == "dsfm" ? n_dsfm : n_average) += 1;
    char name[64];
    std::snprintf(name, sizeof name, "cluster_%04d_loadings.tsv", fit.cluster);
    write_loadings_tsv(fs::path(output) / name, fit.z);
    std::snprintf(name, sizeof name, "cluster_%04d_coefficients.tsv", fit.cluster);
    write_coefficients_tsv(fs::path(output) / name, fit);
  }
  std::fprintf(stderr, "[fit] dsfm=%d average=%d wrote %s\n", n_dsfm, n_average, output.c_str());
}

void cmd_activate(const std::string& fits, const std::string& events_path, double tr,
                  double z_thresh, int extent, bool prewhiten, const std::string& output) {
  (void)extent; // cluster-unit testing: each parcel stands alone, no extent rule
  const EventTable events = read_events(events_path);
  const std::vector<std::string> subs = subject_dirs(fits);

  std::vector<int> labels;
  std::vector<std::vector<Eigen::VectorXd>> series;
  if (subs.empty()) {
    const std::vector<LoadedFit> fit = read_fits_dir(fits);
    series.emplace_back();
    for (const LoadedFit& f : fit) {
      labels.push_back(f.cluster);
      series[0].push_back(scaled_series(f));
    }
  } else {
    for (const std::string& sid : subs) {
      const std::vector<LoadedFit> fit = read_fits_dir(fs::path(fits) / sid);
      std::vector<int> these;
      std::vector<Eigen::VectorXd> row;
      for (const LoadedFit& f : fit) {
        these.push_back(f.cluster);
        row.push_back(scaled_series(f));
      }
      if (labels.empty()) labels = these;
      else if (these != labels)
        fail(ErrorKind::Validation, "activate: subject " + sid + " has different clusters");
      series.push_back(std::move(row));
    }
  }
  const auto rows = activation_table(series, labels, events, tr, z_thresh, prewhiten);
  write_activation_tsv(output, rows);
  int n_act = 0;
  for (const auto& r : rows) n_act += r.activated ? 1 : 0;
  std::fprintf(stderr, "[activate] subjects=%zu activated=%d/%zu wrote %s\n",
               std::max<std::size_t>(subs.size(), 1), n_act, labels.size(), output.c_str());
}

void cmd_phi(const std::string& choices_path, int window, const std::string& sign_s,
             const std::string& output) {
  const ChoiceTable choices = read_choices(choices_path);
  const LogitSign sign = sign_of(sign_s);
  std::vector<RiskAttitude> rows;
  for (const std::string& sid : choices.subjects()) {
    RiskAttitude r = estimate_phi(choices.for_subject(sid), sign);
    r.subject_id = sid;
    rows.push_back(std::move(r));
  }
  write_phi_tsv(output, rows);
  if (window > 0) {
    std::string s = "subject\tlast_trial\tphi\tse\n";
    for (const std::string& sid : choices.subjects()) {
      const std::vector<ChoiceRow> trials = choices.for_subject(sid);
      if (int(trials.size()) < window) continue;
      for (const RollingPhiPoint& pt : rolling_phi(trials, window, sign))
        s += sid + '\t' + std::to_string(pt.last_trial) + '\t' + fmt_g(pt.fit.phi_hat) + '\t' +
             fmt_g(pt.fit.se) + '\n';
    }
    fs::path rolling = output;
    rolling.replace_filename(rolling.stem().string() + "_rolling" +
                             rolling.extension().string());
    write_text(rolling, s);
  }
  std::fprintf(stderr, "[phi] subjects=%zu wrote %s\n", rows.size(), output.c_str());
}

void cmd_decide(const std::string& phi_path, const std::string& fits,
                const std::string& events_path, double tr, const std::string& clusters_s,
                const std::string& weights_mode, std::int64_t mc_iters, std::uint64_t seed,
                const std::string& output) {
  const std::vector<RiskAttitude> attitudes = read_phi_tsv(phi_path);
  const EventTable events = read_events(events_path);

  std::array<int, 2> wanted{0, 0};
  if (!clusters_s.empty()) {
    const std::vector<int> ids = parse_int_list("--clusters", clusters_s);
    if (ids.size() < 2 || ids[0] == ids[1])
      fail(ErrorKind::Validation, "decide: --clusters needs two distinct cluster ids");
    wanted = {ids[0], ids[1]};
  }

  std::vector<std::string> subjects;
  std::vector<double> phi;
  std::vector<std::array<Eigen::VectorXd, 2>> series;
  for (const RiskAttitude& r : attitudes) {
    if (r.separated || !std::isfinite(r.phi_hat) || !std::isfinite(r.se)) continue;
    const fs::path dir = fs::path(fits) / r.subject_id;
    if (!fs::is_directory(dir))
      fail(ErrorKind::Io, "decide: no fit directory for subject " + r.subject_id);
    const std::vector<LoadedFit> fit = read_fits_dir(dir);
    if (wanted[0] == 0) {
      if (fit.size() < 2) fail(ErrorKind::Validation, "decide: need at least two clusters");
      wanted = {fit[0].cluster, fit[1].cluster};
    }
    std::array<Eigen::VectorXd, 2> pair;
    for (int j = 0; j < 2; ++j) {
      bool found = false;
      for (const LoadedFit& f : fit)
        if (f.cluster == wanted[std::size_t(j)]) {
          pair[std::size_t(j)] = scaled_series(f);
          found = true;
          break;
        }
      if (!found)
        fail(ErrorKind::Validation, "decide: subject " + r.subject_id + " lacks cluster " +
                                        std::to_string(wanted[std::size_t(j)]));
    }
    subjects.push_back(r.subject_id);
    phi.push_back(r.phi_hat);
    series.push_back(std::move(pair));
  }

  const DecisionSummary summary = decide_from_series(subjects, phi, series, wanted, events, tr,
                                                     weights_mode, mc_iters, seed);
  write_decision_tsv(output, summary);
  std::fprintf(stderr, "[decide] clusters=%d,%d loo_mae=%s uniform_mae=%s wrote %s\n",
               summary.clusters[0], summary.clusters[1], fmt_g(summary.mae).c_str(),
               fmt_g(summary.uniform_mae).c_str(), output.c_str());
}

void cmd_diag(const std::string& fits, const std::string& windows_s, const std::string& output) {
  const std::vector<LoadedFit> fit = read_fits_dir(fits);
  std::string s = "cluster\tkpss\tkpss_lag\tadf\tadf_lags\tacf_1\tacf_2\tacf_3\tacf_4\tacf_5\n";
  for (const LoadedFit& f : fit) {
    DiagOptions opts;
    opts.acf_max_lag = 5;
    std::vector<double> z(f.z.col(0).data(), f.z.col(0).data() + f.z.rows());
    const DiagnosticsReport rep = diagnose(z, opts);
    s += std::to_string(f.cluster) + '\t' + fmt_g(rep.kpss_stat) + '\t' +
         std::to_string(rep.kpss_lag) + '\t' + fmt_g(rep.adf_stat) + '\t' +
         std::to_string(rep.adf_lags);
    for (int k = 1; k <= 5; ++k) s += '\t' + fmt_g(rep.acf[std::size_t(k)]);
    s += '\n';
  }
  write_text(output, s);

  const std::vector<int> windows = parse_int_list("--windows", windows_s);
  if (fit.size() >= 2 && !windows.empty()) {
    std::vector<double> a(fit[0].z.col(0).data(), fit[0].z.col(0).data() + fit[0].z.rows());
    std::vector<double> b(fit[1].z.col(0).data(), fit[1].z.col(0).data() + fit[1].z.rows());
    for (int w : windows) {
      if (w < 2 || w > int(a.size())) continue;
      const RollingCorr rc = rolling_corr(a, b, w);
      std::string rs = "# clusters\t" + std::to_string(fit[0].cluster) + '\t' +
                       std::to_string(fit[1].cluster) + '\n';
      rs += "start\tcorr\tdefined\n";
      for (std::size_t i = 0; i < rc.values.size(); ++i)
        rs += std::to_string(i) + '\t' + fmt_g(rc.values[i]) + '\t' +
              (rc.defined[i] ? "1" : "0") + '\n';
      fs::path p = output;
      p.replace_filename(p.stem().string() + "_roll" + std::to_string(w) +
                         p.extension().string());
      write_text(p, rs);
    }
  }
  std::fprintf(stderr, "[diag] clusters=%zu wrote %s\n", fit.size(), output.c_str());
}

void cmd_pipeline(const std::string& config_path, const std::vector<std::string>& overrides) {
  PipelineConfig cfg = config_path.empty() ? parse_config("", overrides)
                                           : read_config_file(config_path, overrides);
  const PipelineResult result = run_pipeline(cfg);
  std::printf("pipeline complete: %zu artifacts under %s\n", result.entries.size(),
              result.out_dir.generic_string().c_str());
  std::printf("manifest: %s\n", result.manifest_path.generic_string().c_str());
  int n_act = 0;
  for (const auto& r : result.activation) n_act += r.activated ? 1 : 0;
  // Summary lines are for reading, not parsing; artifacts keep full precision.
  std::printf("clusters: %d (%d activated at z > %g)\n", result.n_clusters, n_act,
              cfg.z_thresh);
  std::printf("decision: clusters %d,%d loo_mae=%.4f uniform_mae=%.4f r2=%.4f\n",
              result.decision.clusters[0], result.decision.clusters[1], result.decision.mae,
              result.decision.uniform_mae, result.decision.regression.r2);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"cead: parcellation, factor extraction, activation, and decision analysis"};
  app.require_subcommand(1);

  // ---- simulate -----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic 4-D volume");
  std::string sim_setup = "a", sim_out, sim_events, sim_truth, sim_dims = "6,7,6";
  std::uint64_t sim_seed = 0;
  std::int64_t sim_nt = 1400;
  double sim_noise = 2.4, sim_fwhm = 8.0, sim_voxel = 3.0, sim_tr = 2.0;
  sim->add_option("--setup", sim_setup, "Scenario: a, b, c, or d")->capture_default_str();
  sim->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();
  sim->add_option("--nt", sim_nt, "Time points")->capture_default_str();
  sim->add_option("--noise-sd", sim_noise, "Noise standard deviation")->capture_default_str();
  sim->add_option("--fwhm", sim_fwhm, "Noise smoothing width in mm")->capture_default_str();
  sim->add_option("--dims", sim_dims, "Grid (nx,ny,nz)")->capture_default_str();
  sim->add_option("--voxel-mm", sim_voxel, "Voxel size in mm")->capture_default_str();
  sim->add_option("--tr", sim_tr, "Sampling interval in seconds")->capture_default_str();
  sim->add_option("--out", sim_out, "Output volume path")->required();
  sim->add_option("--events", sim_events, "Also write the event schedule here");
  sim->add_option("--truth", sim_truth, "Also write the true loading series here");

  // ---- cluster ------------------------------------------------------------
  auto* clu = app.add_subcommand("cluster", "Parcellate a volume into contiguous clusters");
  std::string clu_input, clu_output, clu_summary;
  int clu_clusters = 1000;
  std::uint64_t clu_seed = 0;
  clu->add_option("--input", clu_input, "Input volume")->required();
  clu->add_option("--clusters", clu_clusters, "Number of clusters")->capture_default_str();
  clu->add_option("--seed", clu_seed, "RNG seed")->capture_default_str();
  clu->add_option("--output", clu_output, "Output label volume")->required();
  clu->add_option("--summary", clu_summary, "Cluster summary table (default <output>.tsv)");

  // ---- fit ----------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Extract per-cluster factor loading series");
  std::string fit_input, fit_labels, fit_output, fit_knots = "2,2,2";
  int fit_factors = 1;
  std::uint64_t fit_seed = 0;
  fit->add_option("--input", fit_input, "Input volume")->required();
  fit->add_option("--labels", fit_labels, "Label volume from 'cluster'")->required();
  fit->add_option("--factors", fit_factors, "Dynamic factors per cluster")->capture_default_str();
  fit->add_option("--knots", fit_knots, "Interior spline knots per axis")->capture_default_str();
  fit->add_option("--seed", fit_seed, "RNG seed")->capture_default_str();
  fit->add_option("--output", fit_output, "Output directory")->required();

  // ---- activate -------------------------------------------------------------
  auto* act = app.add_subcommand("activate", "Test cluster loading series for activation");
  std::string act_fits, act_events, act_output;
  double act_tr = 2.0, act_z = 3.09;
  int act_extent = 20;
  bool act_prewhiten = false;
  act->add_option("--fits", act_fits, "Fit directory (per-subject subdirectories pooled)")
      ->required();
  act->add_option("--events", act_events, "Event schedule")->required();
  act->add_option("--tr", act_tr, "Sampling interval in seconds")->capture_default_str();
  act->add_option("--z", act_z, "Activation threshold")->capture_default_str();
  act->add_option("--extent", act_extent, "Voxel-level extent rule (unused for clusters)")
      ->capture_default_str();
  act->add_flag("--prewhiten", act_prewhiten, "Remove lag-1 residual autocorrelation");
  act->add_option("--output", act_output, "Output activation table")->required();

  // ---- phi ------------------------------------------------------------------
  auto* phi = app.add_subcommand("phi", "Estimate per-subject risk attitudes from choices");
  std::string phi_choices, phi_output, phi_sign = "paper";
  int phi_window = 100;
  phi->add_option("--choices", phi_choices, "Choice table")->required();
  phi->add_option("--window", phi_window, "Rolling-window size (0 disables)")
      ->capture_default_str();
  phi->add_option("--sign", phi_sign, "Logit sign convention: paper or intuitive")
      ->capture_default_str();
  phi->add_option("--output", phi_output, "Output attitude table")->required();

  // ---- decide -----------------------------------------------------------------
  auto* dec = app.add_subcommand("decide", "Regress attitudes on cluster reactions");
  std::string dec_phi, dec_fits, dec_events, dec_clusters, dec_weights = "optimize", dec_output;
  double dec_tr = 2.0;
  std::int64_t dec_mc = 10000;
  std::uint64_t dec_seed = 0;
  dec->add_option("--phi", dec_phi, "Attitude table from 'phi'")->required();
  dec->add_option("--fits", dec_fits, "Fit directory with per-subject subdirectories")
      ->required();
  dec->add_option("--events", dec_events, "Event schedule")->required();
  dec->add_option("--tr", dec_tr, "Sampling interval in seconds")->capture_default_str();
  dec->add_option("--clusters", dec_clusters, "Two regressor cluster ids (default first two)");
  dec->add_option("--weights", dec_weights, "optimize or uniform")->capture_default_str();
  dec->add_option("--mc-iters", dec_mc, "Monte-Carlo weight draws")->capture_default_str();
  dec->add_option("--seed", dec_seed, "RNG seed")->capture_default_str();
  dec->add_option("--output", dec_output, "Output decision table")->required();

  // ---- diag ---------------------------------------------------------------------
  auto* dia = app.add_subcommand("diag", "Time-series diagnostics of extracted loadings");
  std::string dia_fits, dia_windows = "250,500", dia_output;
  dia->add_option("--fits", dia_fits, "Single-subject fit directory")->required();
  dia->add_option("--windows", dia_windows, "Rolling-correlation window sizes")
      ->capture_default_str();
  dia->add_option("--output", dia_output, "Output diagnostics table")->required();

  // ---- pipeline -------------------------------------------------------------------
  auto* pip = app.add_subcommand("pipeline", "Run cluster -> fit -> activate -> phi -> decide");
  std::string pip_config, pip_profile, pip_out;
  std::vector<std::string> pip_set;
  bool pip_seed_given = false, pip_clusters_given = false, pip_subjects_given = false;
  std::uint64_t pip_seed = 0;
  int pip_clusters = 0, pip_subjects = 0;
  pip->add_option("--config", pip_config, "Configuration file (key = value lines)");
  pip->add_option("--profile", pip_profile, "full or desk");
  pip->add_option("--out", pip_out, "Output directory");
  pip->add_option("--seed", pip_seed, "RNG seed")->each([&](const std::string&) {
    pip_seed_given = true;
  });
  pip->add_option("--clusters", pip_clusters, "Number of clusters")
      ->each([&](const std::string&) { pip_clusters_given = true; });
  pip->add_option("--subjects", pip_subjects, "Panel subjects")->each([&](const std::string&) {
    pip_subjects_given = true;
  });
  pip->add_option("--set", pip_set, "Additional key=value overrides")->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      cmd_simulate(sim_setup, sim_seed, sim_nt, sim_noise, sim_fwhm, sim_dims, sim_voxel, sim_tr,
                   sim_out, sim_events, sim_truth);
    } else if (*clu) {
      cmd_cluster(clu_input, clu_clusters, clu_seed, clu_output, clu_summary);
    } else if (*fit) {
      cmd_fit(fit_input, fit_labels, fit_factors, fit_knots, fit_seed, fit_output);
    } else if (*act) {
      cmd_activate(act_fits, act_events, act_tr, act_z, act_extent, act_prewhiten, act_output);
    } else if (*phi) {
      cmd_phi(phi_choices, phi_window, phi_sign, phi_output);
    } else if (*dec) {
      cmd_decide(dec_phi, dec_fits, dec_events, dec_tr, dec_clusters, dec_weights, dec_mc,
                 dec_seed, dec_output);
    } else if (*dia) {
      cmd_diag(dia_fits, dia_windows, dia_output);
    } else if (*pip) {
      std::vector<std::string> overrides;
      if (!pip_profile.empty()) overrides.push_back("profile=" + pip_profile);
      if (!pip_out.empty()) overrides.push_back("out_dir=" + pip_out);
      if (pip_seed_given) overrides.push_back("seed=" + std::to_string(pip_seed));
      if (pip_clusters_given) overrides.push_back("clusters=" + std::to_string(pip_clusters));
      if (pip_subjects_given) overrides.push_back("subjects=" + std::to_string(pip_subjects));
      for (const std::string& s : pip_set) overrides.push_back(s);
      cmd_pipeline(pip_config, overrides);
    }
  } catch (const CeadError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
