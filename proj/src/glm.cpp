#include "cead/glm.hpp"

#include "cead/common.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cead {

double hrf(double t) {
  if (t < 0) fail(ErrorKind::Validation, "hrf: negative time");
  const double a = std::pow(t / 5.4, 6.0) * std::exp(-(t - 5.4) / 0.9);
  const double b = std::pow(t / 10.8, 12.0) * std::exp(-(t - 10.8) / 0.9);
  return a - 0.35 * b;
}

std::vector<double> hrf_samples(double step_s, double t_max_s) {
  if (!(step_s > 0) || !(t_max_s >= 0))
    fail(ErrorKind::Validation, "hrf_samples: step must be positive");
  std::vector<double> h;
  for (std::int64_t k = 0;; ++k) {
    const double t = double(k) * step_s;
    if (t > t_max_s + 1e-9) break;
    h.push_back(hrf(t));
  }
  return h;
}

DesignMatrix make_design(const EventTable& events, std::int64_t nt, double tr_s,
                         std::span<const int> conditions, bool intercept) {
  if (nt < 1) fail(ErrorKind::Validation, "design: need at least one sample");
  if (!(tr_s > 0)) fail(ErrorKind::Validation, "design: repetition time must be positive");

  std::vector<int> selected(conditions.begin(), conditions.end());
  if (selected.empty()) selected = events.condition_ids();
  if (selected.empty()) fail(ErrorKind::Validation, "design: no conditions to model");
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());

  const std::vector<double> h = hrf_samples(tr_s);
  const int p = int(selected.size()) + (intercept ? 1 : 0);

  DesignMatrix dm;
  dm.condition_ids = selected;
  dm.has_intercept = intercept;
  dm.x = Eigen::MatrixXd::Zero(Eigen::Index(nt), p);

  for (std::size_t ci = 0; ci < selected.size(); ++ci) {
    const int cond = selected[ci];
    // stimulus train sampled on the acquisition grid
    std::vector<double> stim(std::size_t(nt), 0.0);
    bool any = false;
    for (const Event& ev : events.rows) {
      if (ev.condition_id != cond) continue;
      any = true;
      if (ev.onset_s < 0 || ev.onset_s >= double(nt) * tr_s)
        fail(ErrorKind::Validation, "design: event onset outside the run");
      const auto first = std::int64_t(std::floor(ev.onset_s / tr_s));
      if (ev.duration_s <= 0) {
        stim[std::size_t(first)] += ev.amplitude; // impulse
      } else {
        for (std::int64_t k = first; k < nt; ++k) {
          const double t = double(k) * tr_s;
          if (t >= ev.onset_s + ev.duration_s) break;
          if (t >= ev.onset_s) stim[std::size_t(k)] += ev.amplitude;
        }
      }
    }
    if (!any) fail(ErrorKind::Validation, "design: a selected condition has no events");

    for (std::int64_t t = 0; t < nt; ++t) {
      double v = 0.0;
      const std::int64_t kmax = std::min<std::int64_t>(t, std::int64_t(h.size()) - 1);
      for (std::int64_t k = 0; k <= kmax; ++k) v += stim[std::size_t(t - k)] * h[std::size_t(k)];
      dm.x(Eigen::Index(t), Eigen::Index(ci)) = v;
    }
    if (dm.x.col(Eigen::Index(ci)).cwiseAbs().maxCoeff() == 0.0)
      fail(ErrorKind::Validation, "design: a regressor column is identically zero");
  }
  if (intercept) dm.x.col(p - 1).setOnes();
  return dm;
}

namespace {

FirstLevelResult summarize(const OlsFit& f, double rho) {
  FirstLevelResult r;
  r.df = f.df;
  r.ar1_rho = rho;
  r.stats.resize(std::size_t(f.beta.size()));
  for (Eigen::Index j = 0; j < f.beta.size(); ++j) {
    RegressorStats& s = r.stats[std::size_t(j)];
    s.beta = f.beta[j];
    s.se = f.se[j];
    s.t = f.t[j];
    s.z = z_from_t(f.t[j], double(f.df));
    s.p = f.p[j];
  }
  return r;
}

} // namespace

FirstLevelResult first_level(const Eigen::VectorXd& series,
                             const DesignMatrix& design, bool prewhiten_ar1) {
  if (series.size() != design.x.rows())
    fail(ErrorKind::Validation, "first level: series length does not match the design");
  if (!series.allFinite())
    fail(ErrorKind::Validation, "first level: series contains non-finite values");

  const OlsFit base = ols(series, design.x, design.has_intercept);
  if (!prewhiten_ar1) return summarize(base, 0.0);

  // quasi-difference with the lag-1 residual autocorrelation, then refit
  const Eigen::VectorXd& e = base.resid;
  const Eigen::Index n = e.size();
  double num = 0, den = 0;
  for (Eigen::Index t = 1; t < n; ++t) {
    num += e[t] * e[t - 1];
    den += e[t - 1] * e[t - 1];
  }
  double rho = den > 0 ? num / den : 0.0;
  rho = std::clamp(rho, -0.99, 0.99);

  Eigen::VectorXd ys(n - 1);
  Eigen::MatrixXd xs(n - 1, design.x.cols());
  for (Eigen::Index t = 1; t < n; ++t) {
    ys[t - 1] = series[t] - rho * series[t - 1];
    xs.row(t - 1) = design.x.row(t) - rho * design.x.row(t - 1);
  }
  return summarize(ols(ys, xs, design.has_intercept), rho);
}

GroupResult group_level(std::span<const double> betas) {
  if (betas.size() < 3) fail(ErrorKind::Validation, "group level: need at least 3 subjects");
  const OneSampleT t = one_sample_t(betas);
  GroupResult g;
  g.mean_beta = t.mean;
  g.df = t.df;
  g.degenerate = t.degenerate;
  if (t.degenerate) {
    g.se = 0;
    g.t = t.t;                       // 0 or +-infinity
    g.z = z_from_t(t.t, double(t.df)); // 0 or +-38
    g.p = t.mean == 0 ? 1.0 : 0.0;
    return g;
  }
  g.se = sample_sd(betas) / std::sqrt(double(betas.size()));
  g.t = t.t;
  g.z = z_from_t(t.t, double(t.df));
  g.p = p_two_sided_t(t.t, double(t.df));
  return g;
}

std::vector<std::uint8_t> threshold_activation(
    std::span<const double> z, std::span<const std::array<int, 3>> coords,
    double z_thresh, int extent) {
  for (double v : z)
    if (!std::isfinite(v)) fail(ErrorKind::Validation, "activation: non-finite Z value");
  if (!coords.empty() && coords.size() != z.size())
    fail(ErrorKind::Validation, "activation: coordinate list does not match the Z map");

  const std::size_t n = z.size();
  std::vector<std::uint8_t> supra(n, 0);
  for (std::size_t i = 0; i < n; ++i) supra[i] = z[i] > z_thresh ? 1 : 0;
  if (coords.empty()) return supra; // cluster-level units: no extent rule

  // connected components of supra-threshold voxels under 26-adjacency
  const auto key = [](const std::array<int, 3>& c) {
    return (std::int64_t(c[0]) << 42) ^ (std::int64_t(c[1]) << 21) ^ std::int64_t(c[2]);
  };
  std::unordered_map<std::int64_t, std::size_t> index;
  index.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i)
    if (supra[i]) index.emplace(key(coords[i]), i);

  std::vector<std::uint8_t> activated(n, 0);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::size_t> stack, comp;
  for (std::size_t s = 0; s < n; ++s) {
    if (!supra[s] || seen[s]) continue;
    comp.clear();
    stack.assign(1, s);
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comp.push_back(i);
      const auto& c = coords[i];
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const auto it = index.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
            if (it == index.end() || seen[it->second]) continue;
            seen[it->second] = 1;
            stack.push_back(it->second);
          }
    }
    if (int(comp.size()) >= extent)
      for (std::size_t i : comp) activated[i] = 1;
  }
  return activated;
}

} // namespace cead
