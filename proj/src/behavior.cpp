#include "cead/behavior.hpp"

#include "cead/common.hpp"
#include "cead/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cead {

LogitSign logit_sign_from_string(const std::string& s) {
  if (s == "paper") return LogitSign::paper;
  if (s == "intuitive") return LogitSign::intuitive;
  fail(ErrorKind::Validation, "unknown logit sign mode: " + s);
}

std::string to_string(LogitSign s) {
  return s == LogitSign::paper ? "paper" : "intuitive";
}

double mv_value(double mean_pct, double sd_pct, double phi) {
  if (sd_pct < 0) fail(ErrorKind::Validation, "mv_value: negative standard deviation");
  return mean_pct - phi * sd_pct;
}

namespace {

// numerically stable 1/(1+e^-u)
double logistic(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// log(1+e^u) without overflow
double log1pexp(double u) {
  if (u > 35) return u;
  return std::log1p(std::exp(u));
}

// logit of the risky choice: u = +-(5 - V); paper keeps the printed
// direction P = 1/(1+exp{V-5}) = logistic(5-V)
double risky_logit(double mean_pct, double sd_pct, double phi, LogitSign sign) {
  const double v = mv_value(mean_pct, sd_pct, phi);
  return sign == LogitSign::paper ? 5.0 - v : v - 5.0;
}

} // namespace

double choice_probability(double mean_pct, double sd_pct, double phi, LogitSign sign) {
  return logistic(risky_logit(mean_pct, sd_pct, phi, sign));
}

RiskAttitude estimate_phi(std::span<const ChoiceRow> choices, LogitSign sign) {
  if (choices.size() < 10)
    fail(ErrorKind::Validation, "estimate_phi: need at least 10 trials");
  RiskAttitude r;
  r.subject_id = choices.front().subject_id;
  r.n_trials = int(choices.size());
  for (const ChoiceRow& c : choices) {
    if (c.subject_id != r.subject_id)
      fail(ErrorKind::Validation, "estimate_phi: rows mix several subjects");
    if (c.sd_return_pct < 0)
      fail(ErrorKind::Validation, "estimate_phi: negative standard deviation");
  }

  // logit u_i = +-(5 - mu_i + phi * sd_i): du/dphi = +-sd_i. With every sd_i
  // positive, the likelihood has an interior maximum exactly when both
  // outcomes occur; a single-class subject drives phi to +-infinity.
  const double ds = sign == LogitSign::paper ? 1.0 : -1.0;
  bool any_risky = false, any_safe = false;
  for (const ChoiceRow& c : choices) (c.chose_risky ? any_risky : any_safe) = true;

  const auto log_lik = [&](double phi) {
    double ll = 0;
    for (const ChoiceRow& c : choices) {
      const double u = risky_logit(c.mean_return_pct, c.sd_return_pct, phi, sign);
      // log p = -log(1+e^-u), log(1-p) = -log(1+e^u)
      ll -= c.chose_risky ? log1pexp(-u) : log1pexp(u);
    }
    return ll;
  };

  if (!(any_risky && any_safe)) {
    r.separated = true;
    r.phi_hat = 0;
    r.se = std::numeric_limits<double>::infinity();
    r.ci_lo = -std::numeric_limits<double>::infinity();
    r.ci_hi = std::numeric_limits<double>::infinity();
    r.log_likelihood = log_lik(0.0);
    return r;
  }

  // The log-likelihood is strictly concave in phi, so the score decreases
  // monotonically and has one root when both outcomes occur. Newton steps are
  // safeguarded by a sign bracket: any step leaving the bracket falls back to
  // bisection, which makes the iteration unconditionally convergent even when
  // saturated probabilities flatten the information.
  const auto score_info = [&](double phi) {
    double score = 0, info = 0;
    for (const ChoiceRow& c : choices) {
      const double u = risky_logit(c.mean_return_pct, c.sd_return_pct, phi, sign);
      const double p = logistic(u);
      const double y = c.chose_risky ? 1.0 : 0.0;
      score += (y - p) * ds * c.sd_return_pct;
      info += p * (1.0 - p) * c.sd_return_pct * c.sd_return_pct;
    }
    return std::pair<double, double>(score, info);
  };

  double lo = -1, hi = 1;
  while (score_info(lo).first <= 0 && lo > -1e9) lo *= 2;
  while (score_info(hi).first >= 0 && hi < 1e9) hi *= 2;

  double phi = 0;
  double info = 0;
  bool converged = false;
  if (score_info(lo).first > 0 && score_info(hi).first < 0) {
    phi = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const auto [score, cur_info] = score_info(phi);
      info = cur_info;
      if (score > 0) lo = phi; else hi = phi;
      double next = info > 1e-300 ? phi + score / info : phi;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi); // bisect
      const double step = next - phi;
      phi = next;
      if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(phi)) ||
          hi - lo <= 1e-12 * std::max(1.0, std::abs(phi))) {
        converged = true;
        info = score_info(phi).second;
        break;
      }
    }
  }
  if (!converged || info <= 0) {
    r.separated = true;
    r.phi_hat = phi;
    r.se = std::numeric_limits<double>::infinity();
    r.ci_lo = -std::numeric_limits<double>::infinity();
    r.ci_hi = std::numeric_limits<double>::infinity();
    r.log_likelihood = log_lik(phi);
    return r;
  }

  r.phi_hat = phi;
  r.se = 1.0 / std::sqrt(info);
  const double zq = norm_quantile(0.975);
  r.ci_lo = phi - zq * r.se;
  r.ci_hi = phi + zq * r.se;
  r.log_likelihood = log_lik(phi);
  return r;
}

std::vector<RollingPhiPoint> rolling_phi(std::span<const ChoiceRow> choices,
                                         int window, LogitSign sign) {
  if (window < 10)
    fail(ErrorKind::Validation, "rolling_phi: window must hold at least 10 trials");
  if (std::size_t(window) > choices.size())
    fail(ErrorKind::Validation, "rolling_phi: window exceeds the number of trials");
  std::vector<RollingPhiPoint> out;
  out.reserve(choices.size() - std::size_t(window) + 1);
  for (std::size_t last = std::size_t(window) - 1; last < choices.size(); ++last) {
    RollingPhiPoint p;
    p.last_trial = long(last);
    p.fit = estimate_phi(choices.subspan(last + 1 - std::size_t(window), std::size_t(window)), sign);
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace cead
