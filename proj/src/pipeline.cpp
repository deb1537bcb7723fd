#include "cead/pipeline.hpp"

#include "cead/common.hpp"
#include "cead/simgraph.hpp"
#include "cead/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace cead {

// ---------------------------------------------------------------------------
// Hashing.

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  if (in.bad()) fail(ErrorKind::Io, "read failed while hashing: " + path.string());
  return h;
}

// ---------------------------------------------------------------------------
// Small formatting / parsing helpers.

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_str(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double_val(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) fail(ErrorKind::Parse, "empty value for " + key);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    fail(ErrorKind::Parse, "bad number for " + key + ": '" + t + "'");
  return v;
}

long long parse_i64_val(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) fail(ErrorKind::Parse, "empty value for " + key);
  char* end = nullptr;
  long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    fail(ErrorKind::Parse, "bad integer for " + key + ": '" + t + "'");
  return v;
}

std::uint64_t parse_u64_val(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t.empty() || t[0] == '-') fail(ErrorKind::Parse, "bad unsigned integer for " + key + ": '" + t + "'");
  char* end = nullptr;
  unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    fail(ErrorKind::Parse, "bad unsigned integer for " + key + ": '" + t + "'");
  return v;
}

int parse_int_val(const std::string& key, const std::string& s) {
  long long v = parse_i64_val(key, s);
  if (v < INT32_MIN || v > INT32_MAX) fail(ErrorKind::Parse, key + " out of range");
  return static_cast<int>(v);
}

bool parse_bool_val(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  fail(ErrorKind::Parse, "bad boolean for " + key + ": '" + t + "'");
}

std::array<int, 3> parse_int3_val(const std::string& key, const std::string& s) {
  auto parts = split_str(trim(s), ',');
  if (parts.size() != 3) fail(ErrorKind::Parse, key + " needs three comma-separated integers");
  return {parse_int_val(key, parts[0]), parse_int_val(key, parts[1]), parse_int_val(key, parts[2])};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "read failed: " + path.string());
  return ss.str();
}

// Non-comment, non-blank lines of a table file, with the header line first.
std::vector<std::string> table_lines(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& raw : split_str(text, '\n')) {
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

constexpr std::array<double, 4> kUniformWeights{0.25, 0.25, 0.25, 0.25};

} // namespace

// ---------------------------------------------------------------------------
// Configuration.

namespace {

void apply_config_key(PipelineConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "profile") {
    if (v != "full" && v != "desk") fail(ErrorKind::Parse, "profile must be full or desk");
    c.profile = v;
  } else if (key == "seed") {
    c.seed = parse_u64_val(key, v);
  } else if (key == "out_dir") {
    if (v.empty()) fail(ErrorKind::Parse, "out_dir must not be empty");
    c.out_dir = v;
  } else if (key == "simulate") {
    if (v != "panel" && v != "none") fail(ErrorKind::Parse, "simulate must be panel or none");
    c.simulate = v;
  } else if (key == "subjects") {
    c.subjects = parse_int_val(key, v);
  } else if (key == "nt") {
    c.nt = parse_i64_val(key, v);
  } else if (key == "tr") {
    c.tr_s = parse_double_val(key, v);
  } else if (key == "dims") {
    c.dims = parse_int3_val(key, v);
  } else if (key == "voxel_mm") {
    c.voxel_mm = parse_double_val(key, v);
  } else if (key == "fwhm_mm") {
    c.fwhm_mm = parse_double_val(key, v);
  } else if (key == "vol_noise_sd") {
    c.vol_noise_sd = parse_double_val(key, v);
  } else if (key == "series_noise_sd") {
    c.series_noise_sd = parse_double_val(key, v);
  } else if (key == "spacing_s") {
    c.spacing_s = parse_double_val(key, v);
  } else if (key == "panel_beta1") {
    c.panel_beta1 = parse_double_val(key, v);
  } else if (key == "panel_beta2") {
    c.panel_beta2 = parse_double_val(key, v);
  } else if (key == "panel_linear_noise_sd") {
    c.panel_linear_noise_sd = parse_double_val(key, v);
  } else if (key == "volumes") {
    c.volumes.clear();
    if (!v.empty())
      for (const std::string& p : split_str(v, ','))
        c.volumes.emplace_back(trim(p));
  } else if (key == "events") {
    c.events_path = v;
  } else if (key == "choices") {
    c.choices_path = v;
  } else if (key == "clusters") {
    c.clusters = parse_int_val(key, v);
  } else if (key == "factors") {
    c.factors = parse_int_val(key, v);
  } else if (key == "knots") {
    c.knots = parse_int3_val(key, v);
  } else if (key == "prewhiten") {
    c.prewhiten = parse_bool_val(key, v);
  } else if (key == "z") {
    c.z_thresh = parse_double_val(key, v);
  } else if (key == "extent") {
    c.extent = parse_int_val(key, v);
  } else if (key == "phi_window") {
    c.phi_window = parse_int_val(key, v);
  } else if (key == "logit_sign") {
    if (v == "paper") c.logit_sign = LogitSign::paper;
    else if (v == "intuitive") c.logit_sign = LogitSign::intuitive;
    else fail(ErrorKind::Parse, "logit_sign must be paper or intuitive");
  } else if (key == "weights") {
    if (v != "optimize" && v != "uniform") fail(ErrorKind::Parse, "weights must be optimize or uniform");
    c.weights = v;
  } else if (key == "mc_iters") {
    c.mc_iters = parse_i64_val(key, v);
  } else if (key == "decision_clusters") {
    c.decision_clusters.clear();
    if (!v.empty() && v != "auto")
      for (const std::string& p : split_str(v, ','))
        c.decision_clusters.push_back(parse_int_val(key, p));
  } else {
    fail(ErrorKind::Parse, "unknown configuration key: " + key);
  }
}

void validate_config(const PipelineConfig& c) {
  auto reject = [](const std::string& msg) { fail(ErrorKind::Validation, "config: " + msg); };
  if (c.profile != "full" && c.profile != "desk") reject("profile must be full or desk");
  if (c.simulate != "panel" && c.simulate != "none") reject("simulate must be panel or none");
  if (c.weights != "optimize" && c.weights != "uniform") reject("weights must be optimize or uniform");
  if (c.out_dir.empty()) reject("out_dir must not be empty");
  if (c.subjects < 1) reject("subjects must be positive");
  if (c.simulate == "panel" && c.subjects < 4) reject("panel simulation needs at least 4 subjects");
  if (c.nt < 8) reject("nt too small");
  if (!(c.tr_s > 0)) reject("tr must be positive");
  for (int d : c.dims)
    if (d < 1) reject("dims must be positive");
  if (!(c.voxel_mm > 0)) reject("voxel_mm must be positive");
  if (c.fwhm_mm < 0) reject("fwhm_mm must be non-negative");
  if (c.vol_noise_sd < 0 || c.series_noise_sd < 0 || c.panel_linear_noise_sd < 0)
    reject("noise levels must be non-negative");
  if (!(c.spacing_s > 0)) reject("spacing_s must be positive");
  if (c.panel_beta1 == 0 || c.panel_beta2 == 0) reject("panel betas must be non-zero");
  if (c.clusters < 1) reject("clusters must be positive");
  if (c.factors < 1) reject("factors must be positive");
  for (int k : c.knots)
    if (k < 0) reject("knots must be non-negative");
  if (!(c.z_thresh > 0)) reject("z must be positive");
  if (c.extent < 0) reject("extent must be non-negative");
  if (c.phi_window < 0) reject("phi_window must be non-negative");
  if (c.mc_iters < 1) reject("mc_iters must be positive");
  if (!c.decision_clusters.empty()) {
    if (c.decision_clusters.size() < 2) reject("decision_clusters needs two cluster ids (or auto)");
    if (c.decision_clusters[0] == c.decision_clusters[1]) reject("decision_clusters must be distinct");
    for (int id : c.decision_clusters)
      if (id < 1) reject("decision_clusters ids are 1-based");
  }
  if (c.simulate == "none") {
    if (c.volumes.empty()) reject("simulate=none needs volumes");
    if (c.events_path.empty()) reject("simulate=none needs events");
    if (c.choices_path.empty()) reject("simulate=none needs choices");
  }
}

std::string join_paths(const std::vector<fs::path>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += v[i].generic_string();
  }
  return s;
}

std::string join_ints(std::span<const int> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

} // namespace

PipelineConfig parse_config(const std::string& text, std::span<const std::string> overrides) {
  std::vector<std::pair<std::string, std::string>> kvs;
  int line_no = 0;
  for (const std::string& raw : split_str(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": expected key = value");
    kvs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  for (const std::string& o : overrides) {
    std::size_t eq = o.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Parse, "override '" + o + "': expected key=value");
    kvs.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }

  std::string profile = "full";
  for (const auto& [k, v] : kvs)
    if (k == "profile") profile = trim(v);

  PipelineConfig cfg;
  if (profile == "desk") {
    cfg.profile = "desk";
    cfg.clusters = 20;
    cfg.dims = {6, 7, 6};
  }
  for (const auto& [k, v] : kvs) apply_config_key(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

PipelineConfig read_config_file(const fs::path& path, std::span<const std::string> overrides) {
  return parse_config(read_text_file(path), overrides);
}

std::string serialize_config(const PipelineConfig& cfg) {
  validate_config(cfg);
  std::string s = "# cead pipeline configuration\n";
  auto kv = [&s](const char* k, const std::string& v) {
    s += k;
    s += " = ";
    s += v;
    s += '\n';
  };
  kv("profile", cfg.profile);
  kv("seed", std::to_string(cfg.seed));
  kv("out_dir", cfg.out_dir.generic_string());
  kv("simulate", cfg.simulate);
  kv("subjects", std::to_string(cfg.subjects));
  kv("nt", std::to_string(cfg.nt));
  kv("tr", fmt_g(cfg.tr_s));
  kv("dims", join_ints(cfg.dims));
  kv("voxel_mm", fmt_g(cfg.voxel_mm));
  kv("fwhm_mm", fmt_g(cfg.fwhm_mm));
  kv("vol_noise_sd", fmt_g(cfg.vol_noise_sd));
  kv("series_noise_sd", fmt_g(cfg.series_noise_sd));
  kv("spacing_s", fmt_g(cfg.spacing_s));
  kv("panel_beta1", fmt_g(cfg.panel_beta1));
  kv("panel_beta2", fmt_g(cfg.panel_beta2));
  kv("panel_linear_noise_sd", fmt_g(cfg.panel_linear_noise_sd));
  kv("volumes", join_paths(cfg.volumes));
  kv("events", cfg.events_path.generic_string());
  kv("choices", cfg.choices_path.generic_string());
  kv("clusters", std::to_string(cfg.clusters));
  kv("factors", std::to_string(cfg.factors));
  kv("knots", join_ints(cfg.knots));
  kv("prewhiten", cfg.prewhiten ? "true" : "false");
  kv("z", fmt_g(cfg.z_thresh));
  kv("extent", std::to_string(cfg.extent));
  kv("phi_window", std::to_string(cfg.phi_window));
  kv("logit_sign", cfg.logit_sign == LogitSign::paper ? "paper" : "intuitive");
  kv("weights", cfg.weights);
  kv("mc_iters", std::to_string(cfg.mc_iters));
  kv("decision_clusters",
     cfg.decision_clusters.empty() ? std::string("auto") : join_ints(cfg.decision_clusters));
  return s;
}

// ---------------------------------------------------------------------------
// Loading-series and coefficient tables.

void write_loadings_tsv(const fs::path& path, const Eigen::MatrixXd& z) {
  if (z.rows() < 1 || z.cols() < 1)
    fail(ErrorKind::Validation, "write_loadings_tsv: empty matrix");
  std::string s = "t";
  for (Eigen::Index l = 0; l < z.cols(); ++l) s += "\tz_" + std::to_string(l + 1);
  s += '\n';
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    s += std::to_string(t);
    for (Eigen::Index l = 0; l < z.cols(); ++l) {
      s += '\t';
      s += fmt_g(z(t, l));
    }
    s += '\n';
  }
  write_text_file(path, s);
}

Eigen::MatrixXd read_loadings_tsv(const fs::path& path) {
  const auto lines = table_lines(read_text_file(path));
  if (lines.size() < 2) fail(ErrorKind::Parse, "loadings table has no rows: " + path.string());
  const auto header = split_str(lines[0], '\t');
  if (header.size() < 2 || header[0] != "t")
    fail(ErrorKind::Parse, "bad loadings header: " + path.string());
  const Eigen::Index cols = Eigen::Index(header.size()) - 1;
  const Eigen::Index rows = Eigen::Index(lines.size()) - 1;
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const auto parts = split_str(lines[std::size_t(t) + 1], '\t');
    if (Eigen::Index(parts.size()) != cols + 1)
      fail(ErrorKind::Parse, "ragged loadings row in " + path.string());
    for (Eigen::Index l = 0; l < cols; ++l)
      z(t, l) = parse_double_val("loadings", parts[std::size_t(l) + 1]);
  }
  return z;
}

void write_coefficients_tsv(const fs::path& path, const ClusterFit& fit) {
  std::string s;
  s += "# cluster\t" + std::to_string(fit.cluster) + '\n';
  s += "# method\t" + fit.method + '\n';
  s += "# factors\t" + std::to_string(fit.z.cols()) + '\n';
  s += "# scale";
  for (double v : fit.scale) {
    s += '\t';
    s += fmt_g(v);
  }
  s += '\n';
  s += "# knots_used\t" + join_ints(fit.knots_used) + '\n';
  s += "# iterations\t" + std::to_string(fit.iterations) + '\n';
  s += std::string("# converged\t") + (fit.converged ? "true" : "false") + '\n';
  s += "basis_index";
  for (Eigen::Index r = 0; r < fit.coeff.rows(); ++r) s += "\ta_" + std::to_string(r);
  s += '\n';
  for (Eigen::Index k = 0; k < fit.coeff.cols(); ++k) {
    s += std::to_string(k);
    for (Eigen::Index r = 0; r < fit.coeff.rows(); ++r) {
      s += '\t';
      s += fmt_g(fit.coeff(r, k));
    }
    s += '\n';
  }
  write_text_file(path, s);
}

namespace {

// Metadata lines ("# key\tvalues...") of a coefficients file.
void read_coefficients_meta(const fs::path& path, std::string* method,
                            std::vector<double>* scale) {
  method->clear();
  scale->clear();
  for (const std::string& raw : split_str(read_text_file(path), '\n')) {
    if (raw.size() < 2 || raw[0] != '#') continue;
    const auto parts = split_str(raw.substr(2), '\t');
    if (parts.empty()) continue;
    if (parts[0] == "method" && parts.size() >= 2) *method = trim(parts[1]);
    if (parts[0] == "scale")
      for (std::size_t i = 1; i < parts.size(); ++i)
        scale->push_back(parse_double_val("scale", parts[i]));
  }
  if (method->empty() || scale->empty())
    fail(ErrorKind::Parse, "coefficients file lacks method/scale metadata: " + path.string());
}

std::string cluster_file_name(int label, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "cluster_%04d_%s.tsv", label, kind);
  return buf;
}

} // namespace

std::vector<LoadedFit> read_fits_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "not a fit directory: " + dir.string());
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string pre = "cluster_", suf = "_loadings.tsv";
    if (name.size() <= pre.size() + suf.size()) continue;
    if (name.compare(0, pre.size(), pre) != 0) continue;
    if (name.compare(name.size() - suf.size(), suf.size(), suf) != 0) continue;
    const std::string mid = name.substr(pre.size(), name.size() - pre.size() - suf.size());
    if (mid.empty() || mid.find_first_not_of("0123456789") != std::string::npos) continue;
    ids.push_back(std::atoi(mid.c_str()));
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) fail(ErrorKind::Io, "no cluster loadings found in " + dir.string());

  std::vector<LoadedFit> out;
  out.reserve(ids.size());
  for (int id : ids) {
    LoadedFit f;
    f.cluster = id;
    f.z = read_loadings_tsv(dir / cluster_file_name(id, "loadings"));
    read_coefficients_meta(dir / cluster_file_name(id, "coefficients"), &f.method, &f.scale);
    if (Eigen::Index(f.scale.size()) != f.z.cols())
      fail(ErrorKind::Parse, "scale count does not match factor count for cluster " + std::to_string(id));
    out.push_back(std::move(f));
  }
  return out;
}

Eigen::VectorXd scaled_series(const LoadedFit& fit) {
  if (fit.z.cols() < 1 || fit.scale.empty())
    fail(ErrorKind::Validation, "scaled_series: empty fit");
  return fit.z.col(0) * fit.scale[0];
}

// ---------------------------------------------------------------------------
// Per-cluster factor extraction with knot reduction and mean fallback.

ClusterFit fit_cluster_series(const Eigen::MatrixXd& y,
                              std::span<const std::array<int, 3>> coords,
                              std::array<int, 3> knots, int factors,
                              std::uint64_t seed, int cluster_label) {
  const Eigen::Index T = y.rows(), J = y.cols();
  if (J != Eigen::Index(coords.size()))
    fail(ErrorKind::Validation, "fit_cluster_series: coords/series mismatch");
  if (T < 3) fail(ErrorKind::Validation, "fit_cluster_series: too few time points");
  if (factors < 1) fail(ErrorKind::Validation, "fit_cluster_series: factors must be positive");

  ClusterFit out;
  out.cluster = cluster_label;

  if (J >= 3) {
    std::array<int, 3> ks = knots;
    for (;;) {
      SplineBasis basis = build_basis(coords, ks);
      ks = basis.interior_knots();
      if (basis.k() <= J && basis.k() >= factors + 1) {
        FactorFit fit = fit_dsfm(y, basis, factors, 1e-8, 200, seed);
        out.method = "dsfm";
        out.z = fit.z_hat;
        out.coeff = fit.a_hat;
        out.knots_used = ks;
        out.iterations = fit.iterations;
        out.converged = fit.converged;
        const Eigen::MatrixXd& design = basis.design();
        out.scale.resize(std::size_t(factors));
        for (int l = 0; l < factors; ++l) {
          Eigen::VectorXd field = design * fit.a_hat.row(l + 1).transpose();
          out.scale[std::size_t(l)] = std::sqrt(field.squaredNorm() / double(J));
        }
        return out;
      }
      int axis = 0;
      for (int a = 1; a < 3; ++a)
        if (ks[std::size_t(a)] > ks[std::size_t(axis)]) axis = a;
      if (ks[std::size_t(axis)] == 0) break;
      --ks[std::size_t(axis)];
    }
  }

  // Fallback: centred unit-variance cluster mean, with its own standard
  // deviation as the data-scale restoration factor.
  Eigen::VectorXd m = cluster_mean_series(y);
  const double mu = m.mean();
  m.array() -= mu;
  const double sd = std::sqrt(m.squaredNorm() / double(T - 1));
  out.method = "average";
  out.knots_used = {0, 0, 0};
  out.iterations = 0;
  out.converged = true;
  out.coeff.resize(0, 0);
  if (sd > 0 && std::isfinite(sd)) {
    out.z = m / sd;
    out.scale = {sd};
  } else {
    out.z = Eigen::VectorXd::Zero(T);
    out.scale = {0.0};
  }
  return out;
}

ClusterMembers members_from_labels(const LabelVolume& labels) {
  ClusterMembers m;
  const int C = labels.n_clusters();
  if (C < 1) fail(ErrorKind::Validation, "members_from_labels: label volume has no clusters");
  m.labels.resize(std::size_t(C));
  for (int c = 0; c < C; ++c) m.labels[std::size_t(c)] = c + 1;
  m.voxels.assign(std::size_t(C), {});
  m.coords.assign(std::size_t(C), {});
  const auto& lab = labels.labels();
  const auto dims = labels.dims();
  const int nx = dims[0], ny = dims[1];
  for (std::int64_t v = 0; v < std::int64_t(lab.size()); ++v) {
    const std::int32_t l = lab[std::size_t(v)];
    if (l < 1) continue;
    const int x = int(v % nx), y = int((v / nx) % ny), z = int(v / (std::int64_t(nx) * ny));
    m.voxels[std::size_t(l - 1)].push_back(v);
    m.coords[std::size_t(l - 1)].push_back({x, y, z});
  }
  for (int c = 0; c < C; ++c)
    if (m.voxels[std::size_t(c)].empty())
      fail(ErrorKind::Validation,
           "members_from_labels: cluster " + std::to_string(c + 1) + " has no voxels");
  return m;
}

std::vector<ClusterFit> fit_volume_clusters(const VolumeSeries& vol,
                                            const ClusterMembers& members,
                                            std::array<int, 3> knots, int factors,
                                            std::uint64_t seed) {
  const std::int64_t V = vol.dims().n_voxels();
  const Eigen::Index nt = vol.dims().nt;
  std::vector<ClusterFit> fits;
  fits.reserve(members.labels.size());
  for (std::size_t c = 0; c < members.labels.size(); ++c) {
    const auto& voxels = members.voxels[c];
    for (std::int64_t vx : voxels)
      if (vx < 0 || vx >= V)
        fail(ErrorKind::Validation, "fit_volume_clusters: label volume does not match the data");
    Eigen::MatrixXd y(nt, Eigen::Index(voxels.size()));
    for (std::size_t j = 0; j < voxels.size(); ++j)
      for (Eigen::Index t = 0; t < nt; ++t)
        y(t, Eigen::Index(j)) = vol.data()[std::size_t(voxels[j] + V * t)];
    fits.push_back(fit_cluster_series(
        y, members.coords[c], knots, factors,
        derive_seed(seed, "fit.cluster", std::uint64_t(members.labels[c])), members.labels[c]));
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Activation summary.

std::vector<ActivationRow> activation_table(
    std::span<const std::vector<Eigen::VectorXd>> series,
    std::span<const int> cluster_labels, const EventTable& events, double tr_s,
    double z_thresh, bool prewhiten) {
  const std::size_t n = series.size();
  if (n == 0) fail(ErrorKind::Validation, "activation_table: no subjects");
  const std::size_t C = cluster_labels.size();
  for (const auto& per_subject : series)
    if (per_subject.size() != C)
      fail(ErrorKind::Validation, "activation_table: cluster count differs across subjects");
  if (C == 0) fail(ErrorKind::Validation, "activation_table: no clusters");
  const Eigen::Index nt = series[0][0].size();
  for (const auto& per_subject : series)
    for (const auto& z : per_subject)
      if (z.size() != nt)
        fail(ErrorKind::Validation, "activation_table: series lengths differ");

  const DesignMatrix design = make_design(events, nt, tr_s);

  std::vector<ActivationRow> rows(C);
  for (std::size_t c = 0; c < C; ++c) {
    ActivationRow& row = rows[c];
    row.cluster = cluster_labels[c];
    row.n = int(n);
    // A flat series (e.g. a degenerate cluster) carries no evidence; keep the
    // row at zero rather than dividing by a zero residual variance.
    auto flat = [](const Eigen::VectorXd& v) {
      return (v.array() - v.mean()).abs().maxCoeff() == 0.0;
    };
    if (n == 1) {
      if (flat(series[0][c])) continue;
      const FirstLevelResult fr = first_level(series[0][c], design, prewhiten);
      row.mean_beta = fr.stats[0].beta;
      row.se = fr.stats[0].se;
      row.t = fr.stats[0].t;
      row.z = fr.stats[0].z;
    } else {
      std::vector<double> betas;
      betas.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (flat(series[i][c])) {
          betas.push_back(0.0);
          continue;
        }
        betas.push_back(first_level(series[i][c], design, prewhiten).stats[0].beta);
      }
      const GroupResult gr = group_level(betas);
      row.mean_beta = gr.mean_beta;
      row.se = gr.se;
      row.t = gr.t;
      row.z = gr.z;
    }
    row.activated = row.z > z_thresh;
  }
  return rows;
}

void write_activation_tsv(const fs::path& path, std::span<const ActivationRow> rows) {
  std::string s = "cluster\tn\tmean_beta\tse\tt\tz\tactivated\n";
  for (const ActivationRow& r : rows) {
    s += std::to_string(r.cluster);
    s += '\t';
    s += std::to_string(r.n);
    s += '\t';
    s += fmt_g(r.mean_beta);
    s += '\t';
    s += fmt_g(r.se);
    s += '\t';
    s += fmt_g(r.t);
    s += '\t';
    s += fmt_g(r.z);
    s += '\t';
    s += r.activated ? '1' : '0';
    s += '\n';
  }
  write_text_file(path, s);
}

// ---------------------------------------------------------------------------
// Risk attitude table.

void write_phi_tsv(const fs::path& path, std::span<const RiskAttitude> rows) {
  std::string s = "subject\tphi\tse\tlo\thi\tn_trials\tlog_lik\tseparated\n";
  for (const RiskAttitude& r : rows) {
    s += r.subject_id;
    s += '\t';
    s += fmt_g(r.phi_hat);
    s += '\t';
    s += fmt_g(r.se);
    s += '\t';
    s += fmt_g(r.ci_lo);
    s += '\t';
    s += fmt_g(r.ci_hi);
    s += '\t';
    s += std::to_string(r.n_trials);
    s += '\t';
    s += fmt_g(r.log_likelihood);
    s += '\t';
    s += r.separated ? '1' : '0';
    s += '\n';
  }
  write_text_file(path, s);
}

std::vector<RiskAttitude> read_phi_tsv(const fs::path& path) {
  const auto lines = table_lines(read_text_file(path));
  if (lines.empty() || split_str(lines[0], '\t')[0] != "subject")
    fail(ErrorKind::Parse, "bad attitude table header: " + path.string());
  std::vector<RiskAttitude> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto p = split_str(lines[i], '\t');
    if (p.size() != 8) fail(ErrorKind::Parse, "ragged attitude row in " + path.string());
    RiskAttitude r;
    r.subject_id = p[0];
    r.phi_hat = parse_double_val("phi", p[1]);
    r.se = parse_double_val("se", p[2]);
    r.ci_lo = parse_double_val("lo", p[3]);
    r.ci_hi = parse_double_val("hi", p[4]);
    r.n_trials = parse_int_val("n_trials", p[5]);
    r.log_likelihood = parse_double_val("log_lik", p[6]);
    r.separated = parse_bool_val("separated", p[7]);
    out.push_back(std::move(r));
  }
  if (out.empty()) fail(ErrorKind::Parse, "attitude table has no rows: " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Decision stage.

DecisionSummary decide_from_series(
    std::span<const std::string> subjects, std::span<const double> phi,
    std::span<const std::array<Eigen::VectorXd, 2>> series,
    std::array<int, 2> cluster_ids, const EventTable& events, double tr_s,
    const std::string& weights_mode, std::int64_t mc_iters, std::uint64_t seed) {
  const std::size_t n = subjects.size();
  if (phi.size() != n || series.size() != n)
    fail(ErrorKind::Validation, "decide_from_series: subject count mismatch");
  if (n < 4) fail(ErrorKind::Validation, "decide_from_series: need at least 4 subjects");
  if (weights_mode != "uniform" && weights_mode != "optimize")
    fail(ErrorKind::Validation, "decide_from_series: weights_mode must be uniform or optimize");

  DecisionSummary out;
  out.clusters = cluster_ids;
  out.weights_mode = weights_mode;
  out.subjects.assign(subjects.begin(), subjects.end());
  out.phi.assign(phi.begin(), phi.end());

  std::vector<std::vector<ReactionStat>> stats(n);
  for (std::size_t i = 0; i < n; ++i) {
    stats[i].reserve(2);
    for (int j = 0; j < 2; ++j)
      stats[i].push_back(reaction_stat(series[i][std::size_t(j)], events, tr_s,
                                       kUniformWeights, subjects[i],
                                       cluster_ids[std::size_t(j)]));
  }

  if (weights_mode == "optimize") {
    const WeightSearch ws =
        optimize_weights(phi, stats, mc_iters, derive_seed(seed, "pipeline.mc"));
    out.weights = ws.weights;
    out.mae = ws.mae;
    out.uniform_mae = ws.uniform_mae;
    out.chosen_iter = ws.chosen_iter;
  } else {
    out.weights = kUniformWeights;
  }

  out.loo = loo_predict(phi, stats, out.weights);
  if (weights_mode == "uniform") {
    out.mae = out.loo.mae;
    out.uniform_mae = out.loo.mae;
    out.chosen_iter = 0;
  }

  Eigen::MatrixXd x(Eigen::Index(n), 2);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j)
      x(Eigen::Index(i), j) = weighted_aggregate(stats[i][std::size_t(j)], out.weights);
  out.regression = fit_risk_regression(phi, x, true);
  return out;
}

void write_decision_tsv(const fs::path& path, const DecisionSummary& s) {
  std::string out;
  out += "# clusters\t" + std::to_string(s.clusters[0]) + '\t' + std::to_string(s.clusters[1]) + '\n';
  out += "# weights_mode\t" + s.weights_mode + '\n';
  out += "# weights";
  for (double w : s.weights) {
    out += '\t';
    out += fmt_g(w);
  }
  out += '\n';
  out += "# chosen_iter\t" + std::to_string(s.chosen_iter) + '\n';
  out += "# uniform_mae\t" + fmt_g(s.uniform_mae) + '\n';
  out += "# mae\t" + fmt_g(s.mae) + '\n';
  out += "# r2\t" + fmt_g(s.regression.r2) + "\tadj_r2\t" + fmt_g(s.regression.adj_r2) + '\n';
  const Eigen::Index k = s.regression.beta.size();
  for (Eigen::Index j = 0; j < k; ++j) {
    const bool intercept = s.regression.with_intercept && j == k - 1;
    out += "# coef\t";
    out += intercept ? "intercept" : "cluster_" + std::to_string(s.clusters[std::size_t(j)]);
    out += '\t' + fmt_g(s.regression.beta(j)) + '\t' + fmt_g(s.regression.se(j)) + '\t' +
           fmt_g(s.regression.t(j)) + '\t' + fmt_g(s.regression.p(j)) + '\n';
  }
  out += "subject\tphi\tpred\tlo\thi\tinside\n";
  for (std::size_t i = 0; i < s.subjects.size(); ++i) {
    const LooPoint& p = s.loo.points[i];
    out += s.subjects[i];
    out += '\t';
    out += fmt_g(p.phi_true);
    out += '\t';
    out += fmt_g(p.phi_pred);
    out += '\t';
    out += fmt_g(p.lo);
    out += '\t';
    out += fmt_g(p.hi);
    out += '\t';
    out += p.inside ? '1' : '0';
    out += '\n';
  }
  write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Pipeline driver.

namespace {

class StageClock {
public:
  StageClock() : t0_(std::chrono::steady_clock::now()) {}
  long long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point t0_;
};

void log_stage(const std::string& stage, const std::string& msg, const StageClock& clock) {
  std::fprintf(stderr, "[%s] %s elapsed_ms=%lld\n", stage.c_str(), msg.c_str(), clock.ms());
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (static_cast<unsigned char>(c) < 0x20) {
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries,
                    const std::string& failed_stage, const std::string& error) {
  std::string s;
  for (const ManifestEntry& e : entries) {
    s += "{\"stage\":\"" + json_escape(e.stage) + "\",\"path\":\"" + json_escape(e.path) +
         "\",\"bytes\":" + std::to_string(e.bytes) + ",\"fnv1a64\":\"" + fmt_hex64(e.hash) +
         "\"}\n";
  }
  if (failed_stage.empty()) {
    s += "{\"stage\":\"pipeline\",\"status\":\"complete\",\"entries\":" +
         std::to_string(entries.size()) + "}\n";
  } else {
    s += "{\"stage\":\"" + json_escape(failed_stage) +
         "\",\"status\":\"failed\",\"error\":\"" + json_escape(error) + "\"}\n";
  }
  write_text_file(path, s);
}

// Synthesizes one subject's volume: three z-slabs carry the subject's three
// loading series scaled by a smooth positive spatial field, plus spatially
// smoothed noise.
VolumeSeries synthesize_subject_volume(const PipelineConfig& cfg,
                                       const std::array<Eigen::VectorXd, 3>& loadings,
                                       std::uint64_t noise_seed) {
  const int nx = cfg.dims[0], ny = cfg.dims[1], nz = cfg.dims[2];
  const std::int64_t V = std::int64_t(nx) * ny * nz;
  const std::int64_t nt = loadings[0].size();
  const std::vector<double> field = factor_field(cfg.dims);
  const Eigen::MatrixXd noise = smooth_noise(
      cfg.dims, nt, cfg.fwhm_mm, {cfg.voxel_mm, cfg.voxel_mm, cfg.voxel_mm}, noise_seed);
  std::vector<double> data(std::size_t(V * nt), 0.0);
  std::vector<std::uint8_t> mask(std::size_t(V), 1);
  for (std::int64_t v = 0; v < V; ++v) {
    const int z = int(v / (std::int64_t(nx) * ny));
    const int slab = std::min(2, z * 3 / nz);
    const Eigen::VectorXd& load = loadings[std::size_t(slab)];
    const double m = field[std::size_t(v)];
    for (std::int64_t t = 0; t < nt; ++t)
      data[std::size_t(v + V * t)] = load(t) * m + cfg.vol_noise_sd * noise(t, v);
  }
  Dims4 d4{nx, ny, nz, int(nt)};
  const float mm = float(cfg.voxel_mm);
  return VolumeSeries::create(d4, {mm, mm, mm}, float(cfg.tr_s), std::move(mask),
                              std::move(data));
}

struct ArtifactSink {
  const fs::path* out_dir = nullptr;
  std::vector<ManifestEntry>* entries = nullptr;

  void add(const std::string& stage, const fs::path& rel) const {
    const fs::path full = *out_dir / rel;
    ManifestEntry e;
    e.stage = stage;
    e.path = rel.generic_string();
    e.bytes = std::uint64_t(fs::file_size(full));
    e.hash = fnv1a64_file(full);
    entries->push_back(std::move(e));
  }
};

} // namespace

int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::Numerical ? 3 : 2;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);

  PipelineResult result;
  result.out_dir = cfg.out_dir;
  result.manifest_path = cfg.out_dir / "manifest.jsonl";

  fs::create_directories(cfg.out_dir / "sim");
  fs::create_directories(cfg.out_dir / "cluster");
  fs::create_directories(cfg.out_dir / "fits");
  fs::create_directories(cfg.out_dir / "activate");
  fs::create_directories(cfg.out_dir / "phi");
  fs::create_directories(cfg.out_dir / "decide");

  ArtifactSink sink{&cfg.out_dir, &result.entries};
  std::string stage = "config";

  try {
    StageClock total;
    {
      StageClock clock;
      // The resolved configuration identifies the analysis; where the outputs
      // land does not, so out_dir is reset to its default before writing.
      // Reruns into different directories therefore produce identical
      // manifests when everything else matches.
      PipelineConfig recorded = cfg;
      recorded.out_dir = PipelineConfig{}.out_dir;
      write_text_file(cfg.out_dir / "config_resolved.txt", serialize_config(recorded));
      sink.add(stage, "config_resolved.txt");
      log_stage(stage, "resolved configuration written", clock);
    }

    // ----- simulate / ingest ---------------------------------------------
    stage = "sim";
    std::vector<fs::path> volume_paths;
    std::vector<std::string> subjects;
    EventTable events;
    ChoiceTable choices;
    {
      StageClock clock;
      if (cfg.simulate == "panel") {
        PanelConfig pc;
        pc.n_subjects = cfg.subjects;
        // Attitudes are drawn from a positive band: the group activation test
        // is one-sided, so the demo needs both signal blocks' mean amplitudes
        // well above zero while keeping enough spread for the regression.
        {
          Rng rng(derive_seed(cfg.seed, "pipeline.phi"));
          pc.true_phi.resize(std::size_t(cfg.subjects));
          for (double& p : pc.true_phi) p = 0.2 + 0.9 * rng.uniform();
        }
        pc.beta1 = cfg.panel_beta1;
        pc.beta2 = cfg.panel_beta2;
        pc.linear_noise_sd = cfg.panel_linear_noise_sd;
        pc.series_noise_sd = cfg.series_noise_sd;
        pc.tr_s = cfg.tr_s;
        pc.nt = cfg.nt;
        pc.spacing_s = cfg.spacing_s;
        pc.sign = cfg.logit_sign;
        pc.seed = derive_seed(cfg.seed, "pipeline.panel");
        const Panel panel = gen_panel(pc);
        events = panel.events;
        choices = panel.choices;
        subjects = choices.subjects();

        write_events(events, cfg.out_dir / "sim" / "events.tsv");
        sink.add(stage, fs::path("sim") / "events.tsv");
        write_choices(choices, cfg.out_dir / "sim" / "choices.tsv");
        sink.add(stage, fs::path("sim") / "choices.tsv");

        std::string truth = "subject\tphi\tamp_1\tamp_2\tamp_3\n";
        for (std::size_t i = 0; i < subjects.size(); ++i) {
          truth += subjects[i];
          truth += '\t';
          truth += fmt_g(panel.phi[i]);
          for (double a : panel.amplitudes[i]) {
            truth += '\t';
            truth += fmt_g(a);
          }
          truth += '\n';
        }
        write_text_file(cfg.out_dir / "sim" / "truth.tsv", truth);
        sink.add(stage, fs::path("sim") / "truth.tsv");

        for (std::size_t i = 0; i < subjects.size(); ++i) {
          const VolumeSeries vol = synthesize_subject_volume(
              cfg, panel.loadings[i], derive_seed(cfg.seed, "pipeline.volnoise", std::uint64_t(i)));
          const fs::path rel = fs::path("sim") / ("vol_" + subjects[i] + ".ceadvol");
          write_volume(vol, cfg.out_dir / rel);
          sink.add(stage, rel);
          volume_paths.push_back(cfg.out_dir / rel);
        }
        log_stage(stage, "panel synthesized subjects=" + std::to_string(subjects.size()), clock);
      } else {
        events = read_events(cfg.events_path);
        choices = read_choices(cfg.choices_path);
        subjects = choices.subjects();
        volume_paths = cfg.volumes;
        if (subjects.size() != volume_paths.size())
          fail(ErrorKind::Validation,
               "sim: choices list " + std::to_string(subjects.size()) + " subjects but " +
                   std::to_string(volume_paths.size()) + " volumes were given");
        log_stage(stage, "external inputs subjects=" + std::to_string(subjects.size()), clock);
      }
    }

    // ----- cluster ---------------------------------------------------------
    stage = "cluster";
    LabelVolume labels;
    ClusterMembers members;
    double tr_actual = cfg.tr_s;
    Eigen::Index nt_actual = 0;
    std::array<int, 3> vol_dims{};
    {
      StageClock clock;
      const VolumeSeries ref = read_volume(volume_paths[0]);
      tr_actual = ref.tr_s();
      nt_actual = ref.dims().nt;
      vol_dims = {ref.dims().nx, ref.dims().ny, ref.dims().nz};

      std::vector<std::int64_t> zero_var;
      const SimilarityGraph graph = build_graph(ref, &zero_var);
      const Parcellation parc =
          parcellate(graph, cfg.clusters, derive_seed(cfg.seed, "pipeline.cluster"));
      labels = parc.labels;
      result.n_clusters = parc.n_clusters;

      write_labels(labels, cfg.out_dir / "cluster" / "labels.ceadlab");
      sink.add(stage, fs::path("cluster") / "labels.ceadlab");

      std::string summary;
      for (const std::string& w : parc.warnings) summary += "# warning\t" + w + '\n';
      summary += "label\tsize\tcreation_cost\n";
      for (const ClusterSummary& c : parc.clusters)
        summary += std::to_string(c.label) + '\t' + std::to_string(c.members.size()) + '\t' +
                   fmt_g(c.creation_cost) + '\n';
      write_text_file(cfg.out_dir / "cluster" / "clusters.tsv", summary);
      sink.add(stage, fs::path("cluster") / "clusters.tsv");

      // Membership in x-fastest voxel order, straight from the label volume so
      // later subjects need only the labels, not the graph.
      members = members_from_labels(labels);
      log_stage(stage,
                "parcellated clusters=" + std::to_string(parc.n_clusters) +
                    " zero_variance_voxels=" + std::to_string(zero_var.size()),
                clock);
    }

    // ----- fit --------------------------------------------------------------
    stage = "fit";
    const std::size_t n_subjects = subjects.size();
    const std::size_t C = members.labels.size();
    std::vector<std::vector<Eigen::VectorXd>> scaled(n_subjects);
    {
      StageClock clock;
      int n_dsfm = 0, n_average = 0;
      for (std::size_t i = 0; i < n_subjects; ++i) {
        const VolumeSeries vol = read_volume(volume_paths[i]);
        if (vol.dims().nx != vol_dims[0] || vol.dims().ny != vol_dims[1] ||
            vol.dims().nz != vol_dims[2] || vol.dims().nt != int(nt_actual))
          fail(ErrorKind::Validation, "fit: volume for " + subjects[i] +
                                          " has different dimensions than the first subject");
        const fs::path subject_rel = fs::path("fits") / subjects[i];
        fs::create_directories(cfg.out_dir / subject_rel);
        scaled[i].reserve(C);
        const std::vector<ClusterFit> fits = fit_volume_clusters(
            vol, members, cfg.knots, cfg.factors,
            derive_seed(cfg.seed, "pipeline.fit", std::uint64_t(i)));
        for (const ClusterFit& fit : fits) {
          (fit.method == "dsfm" ? n_dsfm : n_average) += 1;
          write_loadings_tsv(cfg.out_dir / subject_rel /
                                 cluster_file_name(fit.cluster, "loadings"),
                             fit.z);
          sink.add(stage, subject_rel / cluster_file_name(fit.cluster, "loadings"));
          write_coefficients_tsv(cfg.out_dir / subject_rel /
                                     cluster_file_name(fit.cluster, "coefficients"),
                                 fit);
          sink.add(stage, subject_rel / cluster_file_name(fit.cluster, "coefficients"));
          scaled[i].push_back(fit.z.col(0) * fit.scale[0]);
        }
      }
      log_stage(stage,
                "fits dsfm=" + std::to_string(n_dsfm) + " average=" + std::to_string(n_average),
                clock);
    }

    // ----- activate -----------------------------------------------------------
    stage = "activate";
    {
      StageClock clock;
      result.activation = activation_table(scaled, members.labels, events, tr_actual,
                                           cfg.z_thresh, cfg.prewhiten);
      write_activation_tsv(cfg.out_dir / "activate" / "activation.tsv", result.activation);
      sink.add(stage, fs::path("activate") / "activation.tsv");
      int n_act = 0;
      for (const ActivationRow& r : result.activation) n_act += r.activated ? 1 : 0;
      log_stage(stage, "activated=" + std::to_string(n_act) + "/" + std::to_string(C), clock);
    }

    // ----- phi ------------------------------------------------------------------
    stage = "phi";
    std::vector<RiskAttitude> attitudes;
    {
      StageClock clock;
      attitudes.reserve(n_subjects);
      for (const std::string& sid : subjects) {
        const std::vector<ChoiceRow> rows = choices.for_subject(sid);
        RiskAttitude r = estimate_phi(rows, cfg.logit_sign);
        r.subject_id = sid;
        attitudes.push_back(std::move(r));
      }
      write_phi_tsv(cfg.out_dir / "phi" / "phi.tsv", attitudes);
      sink.add(stage, fs::path("phi") / "phi.tsv");

      if (cfg.phi_window > 0) {
        std::string rolling = "subject\tlast_trial\tphi\tse\n";
        for (const std::string& sid : subjects) {
          const std::vector<ChoiceRow> rows = choices.for_subject(sid);
          if (int(rows.size()) < cfg.phi_window) continue;
          for (const RollingPhiPoint& pt : rolling_phi(rows, cfg.phi_window, cfg.logit_sign))
            rolling += sid + '\t' + std::to_string(pt.last_trial) + '\t' +
                       fmt_g(pt.fit.phi_hat) + '\t' + fmt_g(pt.fit.se) + '\n';
        }
        write_text_file(cfg.out_dir / "phi" / "phi_rolling.tsv", rolling);
        sink.add(stage, fs::path("phi") / "phi_rolling.tsv");
      }
      log_stage(stage, "attitudes estimated subjects=" + std::to_string(n_subjects), clock);
    }

    // ----- decide ----------------------------------------------------------------
    stage = "decide";
    {
      StageClock clock;
      std::vector<std::size_t> usable;
      for (std::size_t i = 0; i < n_subjects; ++i)
        if (!attitudes[i].separated && std::isfinite(attitudes[i].phi_hat) &&
            std::isfinite(attitudes[i].se))
          usable.push_back(i);
      if (usable.size() < 4)
        fail(ErrorKind::Validation, "decide: need at least 4 usable attitude estimates, have " +
                                        std::to_string(usable.size()));

      auto cluster_index = [&](int label) -> std::size_t {
        for (std::size_t c = 0; c < C; ++c)
          if (members.labels[c] == label) return c;
        fail(ErrorKind::Validation, "decide: unknown cluster id " + std::to_string(label));
      };

      // Aggregate reaction per usable subject for one cluster, uniform weights.
      auto aggregates_of = [&](std::size_t c) {
        std::vector<double> a;
        a.reserve(usable.size());
        for (std::size_t u : usable)
          a.push_back(reaction_stat(scaled[u][c], events, tr_actual, kUniformWeights).aggregate);
        return a;
      };

      std::size_t c0 = 0, c1 = 0;
      if (!cfg.decision_clusters.empty()) {
        c0 = cluster_index(cfg.decision_clusters[0]);
        c1 = cluster_index(cfg.decision_clusters[1]);
      } else {
        // Rank clusters by activation evidence; take the strongest, then the
        // strongest whose subject-wise aggregates are not collinear with it.
        std::vector<std::size_t> order(C);
        for (std::size_t c = 0; c < C; ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double za = result.activation[a].z, zb = result.activation[b].z;
          if (za != zb) return za > zb;
          return members.labels[a] < members.labels[b];
        });
        c0 = order[0];
        const std::vector<double> base = aggregates_of(c0);
        bool found = false;
        for (std::size_t k = 1; k < order.size() && !found; ++k) {
          const std::vector<double> cand = aggregates_of(order[k]);
          if (std::abs(pearson_corr(base, cand)) < 0.9) {
            c1 = order[k];
            found = true;
          }
        }
        if (!found)
          fail(ErrorKind::Validation,
               "decide: no second regressor independent of cluster " +
                   std::to_string(members.labels[c0]));
      }

      std::vector<std::string> dec_subjects;
      std::vector<double> dec_phi;
      std::vector<std::array<Eigen::VectorXd, 2>> dec_series;
      for (std::size_t u : usable) {
        dec_subjects.push_back(subjects[u]);
        dec_phi.push_back(attitudes[u].phi_hat);
        dec_series.push_back({scaled[u][c0], scaled[u][c1]});
      }
      result.decision = decide_from_series(
          dec_subjects, dec_phi, dec_series,
          {members.labels[c0], members.labels[c1]}, events, tr_actual, cfg.weights,
          cfg.mc_iters, cfg.seed);
      write_decision_tsv(cfg.out_dir / "decide" / "decision.tsv", result.decision);
      sink.add(stage, fs::path("decide") / "decision.tsv");
      log_stage(stage,
                "clusters=" + std::to_string(result.decision.clusters[0]) + "," +
                    std::to_string(result.decision.clusters[1]) +
                    " loo_mae=" + fmt_g(result.decision.mae),
                clock);
    }

    stage = "manifest";
    write_manifest(result.manifest_path, result.entries, {}, {});
    result.complete = true;
    log_stage("pipeline", "complete entries=" + std::to_string(result.entries.size()), total);
  } catch (const std::exception& e) {
    try {
      write_manifest(result.manifest_path, result.entries, stage, e.what());
    } catch (...) {
      // The failure record is best effort; the original error matters more.
    }
    std::fprintf(stderr, "[%s] failed: %s\n", stage.c_str(), e.what());
    throw;
  }
  return result;
}

} // namespace cead
