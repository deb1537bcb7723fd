#include "cead/stats.hpp"

#include "cead/common.hpp"

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace cead {

namespace {
const boost::math::normal_distribution<double> kNorm(0.0, 1.0);
} // namespace

double norm_cdf(double z) { return boost::math::cdf(kNorm, z); }

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::Validation, "norm_quantile: p outside (0,1)");
  return boost::math::quantile(kNorm, p);
}

double t_cdf(double t, double df) {
  boost::math::students_t_distribution<double> d(df);
  return boost::math::cdf(d, t);
}

double t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::Validation, "t_quantile: p outside (0,1)");
  boost::math::students_t_distribution<double> d(df);
  return boost::math::quantile(d, p);
}

double z_from_t(double t, double df) {
  constexpr double cap = 38.0;
  if (!std::isfinite(t)) return t > 0 ? cap : -cap;
  // Work in the upper tail of |t| so the probit stays accurate for large t.
  boost::math::students_t_distribution<double> d(df);
  double tail = boost::math::cdf(boost::math::complement(d, std::fabs(t)));
  double z;
  if (tail <= 0.0) {
    z = cap;
  } else {
    z = -boost::math::quantile(kNorm, tail); // = Phi^-1(1 - tail), computed stably
    if (z > cap) z = cap;
  }
  return t >= 0 ? z : -z;
}

double p_two_sided_t(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t_distribution<double> d(df);
  return 2.0 * boost::math::cdf(boost::math::complement(d, std::fabs(t)));
}

double noncentral_t_sf(double x, double df, double noncentrality) {
  boost::math::non_central_t_distribution<double> d(df, noncentrality);
  return boost::math::cdf(boost::math::complement(d, x));
}

OlsFit ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, bool has_intercept) {
  const int n = int(X.rows()), p = int(X.cols());
  if (y.size() != n) fail(ErrorKind::Validation, "ols: y/X row mismatch");
  if (n <= p) fail(ErrorKind::Numerical, "ols: no residual degrees of freedom");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) fail(ErrorKind::Numerical, "ols: design matrix is rank deficient");

  OlsFit f;
  f.beta = qr.solve(y);
  f.fitted = X * f.beta;
  f.resid = y - f.fitted;
  f.df = n - p;
  double rss = f.resid.squaredNorm();
  f.sigma2 = rss / f.df;
  f.xtx_inv = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  f.se.resize(p);
  f.t.resize(p);
  f.p.resize(p);
  for (int j = 0; j < p; ++j) {
    f.se[j] = std::sqrt(std::max(0.0, f.sigma2 * f.xtx_inv(j, j)));
    f.t[j] = f.se[j] > 0 ? f.beta[j] / f.se[j]
                         : (f.beta[j] == 0 ? 0.0
                                           : std::numeric_limits<double>::infinity() *
                                                 (f.beta[j] > 0 ? 1 : -1));
    f.p[j] = std::isfinite(f.t[j]) ? p_two_sided_t(f.t[j], f.df) : 0.0;
  }

  // centered TSS with an intercept, uncentered (sum of squares of y) without
  double tss;
  if (has_intercept) {
    double ym = y.mean();
    tss = (y.array() - ym).matrix().squaredNorm();
  } else {
    tss = y.squaredNorm();
  }
  f.r2 = tss > 0 ? 1.0 - rss / tss : 0.0;
  double adj_den = double(n - p);
  double adj_num = has_intercept ? double(n - 1) : double(n);
  f.adj_r2 = 1.0 - (1.0 - f.r2) * adj_num / adj_den;
  return f;
}

OneSampleT one_sample_t(std::span<const double> x) {
  OneSampleT r;
  const int n = int(x.size());
  if (n < 2) fail(ErrorKind::Validation, "one_sample_t: need n >= 2");
  r.mean = mean_of(x);
  double sd = sample_sd(x);
  r.df = n - 1;
  if (sd == 0) {
    r.degenerate = true;
    r.t = r.mean == 0 ? 0.0
                      : std::numeric_limits<double>::infinity() * (r.mean > 0 ? 1 : -1);
    return r;
  }
  r.t = r.mean / (sd / std::sqrt(double(n)));
  return r;
}

} // namespace cead
