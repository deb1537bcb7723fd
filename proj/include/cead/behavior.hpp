#pragma once
// Mean-variance valuation and logistic risk-attitude estimation.
//
// A subject values a risky return stream at V = mean - phi * sd and chooses
// it over a 5% bond with logistic probability. phi is estimated per subject
// by one-dimensional Newton maximization of the logistic log-likelihood,
// which is concave, so the interior optimum is global. Positive phi marks
// risk aversion, negative phi risk seeking, zero risk neutrality.

#include "cead/volume.hpp"

#include <span>
#include <string>
#include <vector>

namespace cead {

// Direction of the value-to-probability link. `paper` keeps the printed
// exponent P = 1/(1 + exp{V - 5}), under which a higher valuation lowers the
// risky-choice probability; `intuitive` flips the exponent so a higher
// valuation raises it. The printed form is the default.
enum class LogitSign { paper, intuitive };

LogitSign logit_sign_from_string(const std::string& s);
std::string to_string(LogitSign s);

// V = mean - phi * sd. Throws Validation for negative sd.
double mv_value(double mean_pct, double sd_pct, double phi);

// P(choose risky over the 5% bond); overflow-safe logistic of +-(V - 5).
double choice_probability(double mean_pct, double sd_pct, double phi,
                          LogitSign sign = LogitSign::paper);

struct RiskAttitude {
  std::string subject_id;
  double phi_hat = 0;
  double se = 0;
  double ci_lo = 0, ci_hi = 0; // 95% Wald interval
  int n_trials = 0;
  double log_likelihood = 0;
  bool separated = false; // one-sided choices: MLE diverges, bounds non-finite
};

// Maximum-likelihood phi for one subject's rows (>= 10 trials, single
// subject id). When every trial has the same outcome the likelihood has no
// interior maximum; the result is flagged with se and CI bounds infinite.
RiskAttitude estimate_phi(std::span<const ChoiceRow> choices,
                          LogitSign sign = LogitSign::paper);

struct RollingPhiPoint {
  long last_trial = 0; // index into the row span of the window's last trial
  RiskAttitude fit;
};

// phi re-estimated on every contiguous window of `window` trials, in order.
std::vector<RollingPhiPoint> rolling_phi(std::span<const ChoiceRow> choices,
                                         int window = 100,
                                         LogitSign sign = LogitSign::paper);

} // namespace cead
