#include "cead/simulate.hpp"

#include "cead/common.hpp"
#include "cead/glm.hpp"

#include <algorithm>
#include <cmath>

namespace cead {

std::vector<double> factor_field(std::array<int, 3> dims) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    fail(ErrorKind::Validation, "factor_field: dimensions must be positive");
  std::vector<double> m;
  m.reserve(std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]));
  for (int z = 1; z <= dims[2]; ++z)
    for (int y = 1; y <= dims[1]; ++y)
      for (int x = 1; x <= dims[0]; ++x) {
        const double dx = x - 6.0, dy = y - 8.0, dz = z - 6.0;
        m.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
      }
  return m;
}

SimSetup setup_from_string(const std::string& s) {
  if (s == "a") return SimSetup::a;
  if (s == "b") return SimSetup::b;
  if (s == "c") return SimSetup::c;
  if (s == "d") return SimSetup::d;
  fail(ErrorKind::Validation, "unknown simulation setup: " + s);
}

std::string to_string(SimSetup s) {
  switch (s) {
    case SimSetup::a: return "a";
    case SimSetup::b: return "b";
    case SimSetup::c: return "c";
    case SimSetup::d: return "d";
  }
  fail(ErrorKind::Validation, "unknown simulation setup value");
}

namespace {

// 1-D Gaussian taps, sigma in voxels, truncated at 3 sigma, unit sum
std::vector<double> kernel_1d(double sigma_vox) {
  const int radius = std::max(0, int(std::ceil(3.0 * sigma_vox)));
  std::vector<double> k(std::size_t(2 * radius + 1), 0.0);
  double sum = 0;
  for (int d = -radius; d <= radius; ++d) {
    const double w = sigma_vox > 0 ? std::exp(-0.5 * d * d / (sigma_vox * sigma_vox))
                                   : (d == 0 ? 1.0 : 0.0);
    k[std::size_t(d + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// one separable pass along `axis` with per-position renormalization over
// in-grid, in-mask taps; field is x-fastest over the grid
void smooth_axis(std::vector<double>& field, std::array<int, 3> dims,
                 const std::vector<std::uint8_t>* mask, int axis,
                 const std::vector<double>& k) {
  const int radius = int(k.size() / 2);
  if (radius == 0) return;
  const std::int64_t sx = 1, sy = dims[0], sz = std::int64_t(dims[0]) * dims[1];
  const std::int64_t stride = axis == 0 ? sx : (axis == 1 ? sy : sz);
  const int extent = dims[std::size_t(axis)];

  std::vector<double> line(std::size_t(extent), 0.0);
  const int n0 = dims[axis == 0 ? 1 : 0];
  const int n1 = dims[axis == 2 ? 1 : 2];
  const std::int64_t s0 = axis == 0 ? sy : sx;
  const std::int64_t s1 = axis == 2 ? sy : sz;

  for (int j1 = 0; j1 < n1; ++j1)
    for (int j0 = 0; j0 < n0; ++j0) {
      const std::int64_t base = j0 * s0 + j1 * s1;
      for (int i = 0; i < extent; ++i) line[std::size_t(i)] = field[base + i * stride];
      for (int i = 0; i < extent; ++i) {
        const std::int64_t vox = base + i * stride;
        if (mask && !(*mask)[std::size_t(vox)]) continue;
        double acc = 0, wsum = 0;
        const int lo = std::max(0, i - radius), hi = std::min(extent - 1, i + radius);
        for (int j = lo; j <= hi; ++j) {
          if (mask && !(*mask)[std::size_t(base + j * stride)]) continue;
          const double w = k[std::size_t(j - i + radius)];
          acc += w * line[std::size_t(j)];
          wsum += w;
        }
        field[vox] = wsum > 0 ? acc / wsum : line[std::size_t(i)];
      }
    }
}

// variance factor of the renormalized kernel at each axis position
std::vector<double> axis_var_factor(int extent, const std::vector<double>& k) {
  const int radius = int(k.size() / 2);
  std::vector<double> f(std::size_t(extent), 1.0);
  for (int i = 0; i < extent; ++i) {
    const int lo = std::max(0, i - radius), hi = std::min(extent - 1, i + radius);
    double wsum = 0;
    for (int j = lo; j <= hi; ++j) wsum += k[std::size_t(j - i + radius)];
    double w2 = 0;
    for (int j = lo; j <= hi; ++j) {
      const double w = k[std::size_t(j - i + radius)] / wsum;
      w2 += w * w;
    }
    f[std::size_t(i)] = w2;
  }
  return f;
}

} // namespace

Eigen::MatrixXd smooth_noise(std::array<int, 3> dims, std::int64_t nt,
                             double fwhm_mm, std::array<double, 3> voxel_mm,
                             std::uint64_t seed) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || nt < 1)
    fail(ErrorKind::Validation, "smooth_noise: dimensions must be positive");
  if (!(fwhm_mm > 0)) fail(ErrorKind::Validation, "smooth_noise: width must be positive");

  const std::int64_t nv = std::int64_t(dims[0]) * dims[1] * dims[2];
  std::array<std::vector<double>, 3> k;
  std::array<std::vector<double>, 3> var_factor;
  for (int a = 0; a < 3; ++a) {
    k[std::size_t(a)] = kernel_1d(fwhm_mm / voxel_mm[std::size_t(a)]);
    var_factor[std::size_t(a)] =
        axis_var_factor(dims[std::size_t(a)], k[std::size_t(a)]);
  }

  // per-voxel standard deviation of the smoothed unit-variance input
  std::vector<double> sd(std::size_t(nv), 1.0);
  {
    std::int64_t v = 0;
    for (int z = 0; z < dims[2]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[0]; ++x, ++v)
          sd[std::size_t(v)] = std::sqrt(var_factor[0][std::size_t(x)] *
                                         var_factor[1][std::size_t(y)] *
                                         var_factor[2][std::size_t(z)]);
  }

  Rng rng(derive_seed(seed, "smooth.noise"));
  Eigen::MatrixXd out(nt, nv);
  std::vector<double> field(std::size_t(nv), 0.0);
  for (std::int64_t t = 0; t < nt; ++t) {
    for (double& v : field) v = rng.normal();
    for (int a = 0; a < 3; ++a) smooth_axis(field, dims, nullptr, a, k[std::size_t(a)]);
    for (std::int64_t v = 0; v < nv; ++v)
      out(t, v) = field[std::size_t(v)] / sd[std::size_t(v)];
  }
  return out;
}

VolumeSeries gaussian_smooth(const VolumeSeries& v, double fwhm_mm) {
  if (!(fwhm_mm > 0)) fail(ErrorKind::Validation, "gaussian_smooth: width must be positive");
  const Dims4& d = v.dims();
  const std::array<int, 3> dims{d.nx, d.ny, d.nz};
  std::array<std::vector<double>, 3> k;
  for (int a = 0; a < 3; ++a)
    k[std::size_t(a)] = kernel_1d(fwhm_mm / v.voxel_mm()[std::size_t(a)]);

  const std::int64_t nv = d.n_voxels();
  std::vector<double> data = v.data();
  std::vector<double> field(std::size_t(nv), 0.0);
  for (int t = 0; t < d.nt; ++t) {
    const std::int64_t off = nv * t;
    std::copy(data.begin() + off, data.begin() + off + nv, field.begin());
    for (int a = 0; a < 3; ++a) smooth_axis(field, dims, &v.mask(), a, k[std::size_t(a)]);
    std::copy(field.begin(), field.end(), data.begin() + off);
  }
  return VolumeSeries::create(d, v.voxel_mm(), v.tr_s(), v.mask(), std::move(data));
}

Eigen::VectorXd gen_ar2(std::int64_t nt, std::array<double, 2> coeffs,
                        std::uint64_t seed, int burn_in) {
  const double a1 = coeffs[0], a2 = coeffs[1];
  // stationarity triangle for an order-2 autoregression
  if (!(a1 + a2 < 1.0 && a2 - a1 < 1.0 && std::abs(a2) < 1.0))
    fail(ErrorKind::Validation, "gen_ar2: coefficients are not stationary");
  if (nt < 1) fail(ErrorKind::Validation, "gen_ar2: need at least one sample");
  Rng rng(derive_seed(seed, "sim.ar2"));
  Eigen::VectorXd z(nt);
  double zm1 = 0, zm2 = 0;
  for (std::int64_t t = -burn_in; t < nt; ++t) {
    const double zt = a1 * zm1 + a2 * zm2 + rng.normal();
    zm2 = zm1;
    zm1 = zt;
    if (t >= 0) z(t) = zt;
  }
  return z;
}

BoldSim gen_bold(const SimConfig& cfg) {
  if (cfg.dims[0] < 1 || cfg.dims[1] < 1 || cfg.dims[2] < 1 || cfg.nt < 1)
    fail(ErrorKind::Validation, "gen_bold: dimensions must be positive");
  if (!(cfg.noise_sd >= 0)) fail(ErrorKind::Validation, "gen_bold: negative noise sd");
  if (!(cfg.tr_s > 0)) fail(ErrorKind::Validation, "gen_bold: repetition time must be positive");
  if (cfg.n_events < 1) fail(ErrorKind::Validation, "gen_bold: need at least one event");

  EventTable events;
  if (cfg.events) {
    events = *cfg.events;
  } else {
    // evenly spaced impulse schedule over the run
    for (int i = 0; i < cfg.n_events; ++i) {
      Event e;
      e.onset_s = double(std::int64_t(double(i) * double(cfg.nt) / cfg.n_events)) * cfg.tr_s;
      e.duration_s = 0;
      e.condition_id = 1;
      e.amplitude = 1.0;
      events.rows.push_back(e);
    }
  }

  Eigen::VectorXd loading;
  switch (cfg.setup) {
    case SimSetup::a:
    case SimSetup::b: {
      const DesignMatrix dm = make_design(events, cfg.nt, cfg.tr_s, {}, false);
      loading = dm.x.col(0);
      break;
    }
    case SimSetup::c:
      loading = Eigen::VectorXd::Ones(cfg.nt);
      break;
    case SimSetup::d:
      loading = gen_ar2(cfg.nt, cfg.ar, cfg.seed);
      break;
  }

  const std::vector<double> m = factor_field(cfg.dims);
  const std::int64_t nv = std::int64_t(cfg.dims[0]) * cfg.dims[1] * cfg.dims[2];
  std::vector<double> data(std::size_t(nv * cfg.nt), 0.0);

  for (std::int64_t t = 0; t < cfg.nt; ++t) {
    const double zt = loading(t);
    double* slab = data.data() + nv * t;
    for (std::int64_t v = 0; v < nv; ++v) slab[v] = zt * m[std::size_t(v)];
  }

  if (cfg.noise_sd > 0) {
    if (cfg.setup == SimSetup::a) {
      Rng rng(derive_seed(cfg.seed, "sim.noise"));
      for (double& v : data) v += cfg.noise_sd * rng.normal();
    } else {
      const Eigen::MatrixXd eps =
          smooth_noise(cfg.dims, cfg.nt,
                       cfg.fwhm_mm, {cfg.voxel_mm[0], cfg.voxel_mm[1], cfg.voxel_mm[2]},
                       derive_seed(cfg.seed, "sim.noise"));
      for (std::int64_t t = 0; t < cfg.nt; ++t) {
        double* slab = data.data() + nv * t;
        for (std::int64_t v = 0; v < nv; ++v) slab[v] += cfg.noise_sd * eps(t, v);
      }
    }
  }

  Dims4 d4{cfg.dims[0], cfg.dims[1], cfg.dims[2], int(cfg.nt)};
  std::vector<std::uint8_t> mask(std::size_t(nv), 1);
  VolumeSeries vol =
      VolumeSeries::create(d4, cfg.voxel_mm, cfg.tr_s, std::move(mask), std::move(data));
  return BoldSim{std::move(vol), std::move(loading), std::move(events)};
}

Panel gen_panel(const PanelConfig& cfg) {
  if (cfg.n_subjects < 4) fail(ErrorKind::Validation, "gen_panel: need at least 4 subjects");
  if (!cfg.true_phi.empty() && int(cfg.true_phi.size()) != cfg.n_subjects)
    fail(ErrorKind::Validation, "gen_panel: phi list does not match the subject count");
  if (!(cfg.tr_s > 0) || !(cfg.spacing_s > 0))
    fail(ErrorKind::Validation, "gen_panel: times must be positive");
  if (cfg.beta1 == 0 || cfg.beta2 == 0)
    fail(ErrorKind::Validation, "gen_panel: planted coefficients must be non-zero");
  const double pattern_mean =
      0.25 * (cfg.pattern[0] + cfg.pattern[1] + cfg.pattern[2] + cfg.pattern[3]);
  if (std::abs(pattern_mean) < 1e-12)
    fail(ErrorKind::Validation, "gen_panel: response pattern must have non-zero mean");

  constexpr int kTrials = 256;
  const std::int64_t last_onset_idx =
      std::int64_t(std::floor(double(kTrials - 1) * cfg.spacing_s / cfg.tr_s));
  if (last_onset_idx + 4 >= cfg.nt)
    fail(ErrorKind::Validation, "gen_panel: events do not fit the series with 4-sample lookahead");

  Panel panel;
  for (int k = 0; k < kTrials; ++k) {
    Event e;
    e.onset_s = double(k) * cfg.spacing_s;
    e.duration_s = 0;
    e.condition_id = 1;
    e.amplitude = 1.0;
    panel.events.rows.push_back(e);
  }

  // 16 cells x (8 single + 4 correlated + 4 uncorrelated)
  struct Cell { double mu, sd; Condition cond; };
  std::vector<Cell> base;
  for (double mu : {5.0, 7.0, 9.0, 11.0})
    for (double sd : {2.0, 4.0, 6.0, 8.0}) {
      for (int r = 0; r < 8; ++r) base.push_back({mu, sd, Condition::single});
      for (int r = 0; r < 4; ++r) base.push_back({mu, sd, Condition::correlated});
      for (int r = 0; r < 4; ++r) base.push_back({mu, sd, Condition::uncorrelated});
    }

  for (int i = 0; i < cfg.n_subjects; ++i) {
    Rng rng(derive_seed(cfg.seed, "panel.subject", std::uint64_t(i)));
    const double phi =
        cfg.true_phi.empty() ? -0.1 + 1.2 * rng.uniform() : cfg.true_phi[std::size_t(i)];
    panel.phi.push_back(phi);

    // plant the aggregates: phi = b1*x1 + b2*x2 + eps, third cluster pure noise
    const double x1 = phi / (2.0 * cfg.beta1) + 0.3 * rng.normal();
    const double eps = cfg.linear_noise_sd * rng.normal();
    const double x2 = (phi + eps - cfg.beta1 * x1) / cfg.beta2;
    const double x3 = cfg.third_noise_scale * rng.normal();
    std::array<double, 3> amp{x1 / pattern_mean, x2 / pattern_mean, x3 / pattern_mean};
    panel.amplitudes.push_back(amp);

    std::array<Eigen::VectorXd, 3> series;
    for (auto& s : series) s = Eigen::VectorXd::Zero(cfg.nt);
    for (int kev = 0; kev < kTrials; ++kev) {
      const auto r = std::int64_t(std::floor(double(kev) * cfg.spacing_s / cfg.tr_s));
      for (int tau = 1; tau <= 4; ++tau)
        for (int c = 0; c < 3; ++c)
          series[std::size_t(c)](r + tau) +=
              amp[std::size_t(c)] * cfg.pattern[std::size_t(tau - 1)];
    }
    if (cfg.series_noise_sd > 0)
      for (auto& s : series)
        for (std::int64_t t = 0; t < cfg.nt; ++t) s(t) += cfg.series_noise_sd * rng.normal();
    panel.loadings.push_back(std::move(series));

    // per-subject deterministic shuffle of the trial schedule
    std::vector<int> order(base.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = int(j);
    for (std::size_t j = order.size(); j > 1; --j)
      std::swap(order[j - 1], order[rng.below(j)]);

    const std::string sid =
        "s" + std::string(i + 1 < 10 ? "0" : "") + std::to_string(i + 1);
    for (int k = 0; k < kTrials; ++k) {
      const Cell& cell = base[std::size_t(order[std::size_t(k)])];
      ChoiceRow row;
      row.subject_id = sid;
      row.trial_index = k;
      row.mean_return_pct = cell.mu;
      row.sd_return_pct = cell.sd;
      row.condition = cell.cond;
      row.chose_risky = rng.uniform() < choice_probability(cell.mu, cell.sd, phi, cfg.sign);
      row.onset_s = double(k) * cfg.spacing_s;
      panel.choices.rows.push_back(std::move(row));
    }
  }
  return panel;
}

} // namespace cead
