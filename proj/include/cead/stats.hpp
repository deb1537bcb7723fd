#pragma once
// Regression core and distribution transforms shared by the GLM, behavior and
// decision layers. Distribution internals live in stats.cpp (Boost.Math).

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace cead {

// ---------------- distributions ----------------

double norm_cdf(double z);
double norm_quantile(double p);           // p in (0,1)
double t_cdf(double t, double df);
double t_quantile(double p, double df);   // p in (0,1)

// Sign-preserving probit transform of the Student-t CDF, capped at |z| <= 38.
double z_from_t(double t, double df);

// two-sided p-value for a t statistic
double p_two_sided_t(double t, double df);

// upper-tail probability P(T > x) for a noncentral t variable; used as a
// closed-form power oracle for one-sample tests
double noncentral_t_sf(double x, double df, double noncentrality);

// ---------------- ordinary least squares ----------------

struct OlsFit {
  Eigen::VectorXd beta, se, t, p; // p two-sided
  Eigen::VectorXd fitted, resid;
  Eigen::MatrixXd xtx_inv;
  double sigma2 = 0; // residual variance, df denominator
  int df = 0;        // n - #columns
  double r2 = 0;     // centered TSS if has_intercept, uncentered otherwise
  double adj_r2 = 0;
};

// X passed with every column explicit (append the intercept column yourself);
// has_intercept only selects the R^2 convention. Throws Numerical on rank
// deficiency or df <= 0.
OlsFit ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, bool has_intercept);

// one-sample t-test of mean 0; returns (t, df); zero-variance flagged by caller
struct OneSampleT {
  double t = 0;
  int df = 0;
  double mean = 0;
  bool degenerate = false; // sd == 0
};
OneSampleT one_sample_t(std::span<const double> x);

} // namespace cead
