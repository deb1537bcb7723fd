#include "doctest.h"

#include "cead/behavior.hpp"
#include "cead/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace {

constexpr double kMeans[4] = {5, 7, 9, 11};
constexpr double kSds[4] = {2, 4, 6, 8};

// one block of the 16-cell design, `reps` trials per cell, choices sampled
// from the logistic model at the given phi
std::vector<cead::ChoiceRow> sample_rows(double phi, cead::LogitSign sign,
                                         std::uint64_t seed, int reps = 16) {
  cead::Rng rng(seed);
  std::vector<cead::ChoiceRow> rows;
  long trial = 0;
  for (double mu : kMeans)
    for (double sd : kSds)
      for (int r = 0; r < reps; ++r) {
        cead::ChoiceRow c;
        c.subject_id = "s01";
        c.trial_index = trial++;
        c.mean_return_pct = mu;
        c.sd_return_pct = sd;
        c.condition = cead::Condition::single;
        c.chose_risky = rng.uniform() < cead::choice_probability(mu, sd, phi, sign);
        c.onset_s = double(c.trial_index) * 10.0;
        rows.push_back(c);
      }
  return rows;
}

// independent likelihood for the grid oracle
double loglik(const std::vector<cead::ChoiceRow>& rows, double phi,
              cead::LogitSign sign) {
  double ll = 0;
  for (const auto& c : rows) {
    const double p =
        cead::choice_probability(c.mean_return_pct, c.sd_return_pct, phi, sign);
    ll += c.chose_risky ? std::log(p) : std::log(1.0 - p);
  }
  return ll;
}

} // namespace

TEST_SUITE("behavior") {

TEST_CASE("mean-variance value matches hand-computed cases") {
  CHECK(cead::mv_value(7, 4, 0) == 7.0);
  CHECK(cead::mv_value(9, 6, 1.092) == doctest::Approx(2.448).epsilon(1e-12));
  CHECK(cead::mv_value(5, 2, -0.0699) == doctest::Approx(5.1398).epsilon(1e-12));
  CHECK_THROWS_AS(cead::mv_value(5, -1, 0), cead::CeadError);
}

TEST_CASE("choice probability follows the printed link and stays in (0,1)") {
  // V = 5 means indifference against the 5% bond in both sign modes
  CHECK(cead::choice_probability(5, 2, 0, cead::LogitSign::paper) == 0.5);
  CHECK(cead::choice_probability(7, 4, 0.5, cead::LogitSign::intuitive) == 0.5);
  // printed form: V = 7 gives 1/(1+e^2)
  CHECK(cead::choice_probability(7, 4, 0, cead::LogitSign::paper) ==
        doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
  CHECK(cead::choice_probability(7, 4, 0, cead::LogitSign::intuitive) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));

  // paper sign: raising phi lowers V and so raises the risky probability
  double prev = 0;
  for (double phi : {-1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
    const double p = cead::choice_probability(9, 6, phi, cead::LogitSign::paper);
    CHECK(p > prev);
    prev = p;
  }
  // overflow-safe at extreme arguments
  for (double mu : {-1e6, 1e6}) {
    const double p = cead::choice_probability(mu, 2, 0, cead::LogitSign::paper);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(std::isfinite(p));
  }
  CHECK(cead::logit_sign_from_string("paper") == cead::LogitSign::paper);
  CHECK(cead::logit_sign_from_string("intuitive") == cead::LogitSign::intuitive);
  CHECK_THROWS_AS(cead::logit_sign_from_string("bogus"), cead::CeadError);
}

TEST_CASE("the planted risk attitude is recovered from one session of choices") {
  for (auto sign : {cead::LogitSign::paper, cead::LogitSign::intuitive}) {
    const auto rows =
        sample_rows(0.5, sign, cead::derive_seed(0xbeaf, "test.behavior.recover",
                                                 sign == cead::LogitSign::paper ? 0 : 1));
    const auto fit = cead::estimate_phi(rows, sign);
    CHECK(!fit.separated);
    CHECK(fit.n_trials == 256);
    CHECK(fit.se > 0);
    CHECK(fit.se < 0.2);
    CHECK(std::abs(fit.phi_hat - 0.5) <= 3.0 * fit.se);
    CHECK(fit.ci_lo < fit.phi_hat);
    CHECK(fit.ci_hi > fit.phi_hat);

    // grid oracle: the reported maximizer beats every nearby grid value
    for (int k = -200; k <= 200; ++k) {
      const double phi = fit.phi_hat + 0.01 * k;
      CHECK(fit.log_likelihood >= loglik(rows, phi, sign) - 1e-9);
    }
    CHECK(fit.log_likelihood ==
          doctest::Approx(loglik(rows, fit.phi_hat, sign)).epsilon(1e-10));
  }
}

TEST_CASE("a chooser ignoring the risk dimension is estimated near neutral") {
  // choices sampled from the phi = 0 model itself: probability depends on the
  // mean only, never on sd
  const auto rows = sample_rows(0.0, cead::LogitSign::paper,
                                cead::derive_seed(0xbeaf, "test.behavior.neutral"));
  const auto fit = cead::estimate_phi(rows, cead::LogitSign::paper);
  CHECK(!fit.separated);
  CHECK(std::abs(fit.phi_hat) <= 3.0 * fit.se);
  CHECK(std::abs(fit.phi_hat) < 0.25);
}

TEST_CASE("a deterministic threshold chooser still maximizes the likelihood") {
  std::vector<cead::ChoiceRow> rows;
  long trial = 0;
  for (double mu : kMeans)
    for (double sd : kSds)
      for (int r = 0; r < 16; ++r) {
        cead::ChoiceRow c;
        c.subject_id = "s01";
        c.trial_index = trial++;
        c.mean_return_pct = mu;
        c.sd_return_pct = sd;
        c.chose_risky = mu > 5.0;
        rows.push_back(c);
      }
  const auto fit = cead::estimate_phi(rows, cead::LogitSign::intuitive);
  CHECK(!fit.separated);
  // independent oracle: dense grid argmax
  double best_phi = -5, best_ll = -1e300;
  for (int k = -5000; k <= 5000; ++k) {
    const double ll = loglik(rows, 0.001 * k, cead::LogitSign::intuitive);
    if (ll > best_ll) {
      best_ll = ll;
      best_phi = 0.001 * k;
    }
  }
  CHECK(std::abs(fit.phi_hat - best_phi) <= 0.002); // grid pitch 0.001
  CHECK(fit.log_likelihood >= best_ll - 1e-9);
}

TEST_CASE("single-class subjects are flagged as separated, small samples rejected") {
  auto rows = sample_rows(0.5, cead::LogitSign::paper, 7);
  for (auto& c : rows) c.chose_risky = true;
  const auto fit = cead::estimate_phi(rows, cead::LogitSign::paper);
  CHECK(fit.separated);
  CHECK(!std::isfinite(fit.ci_lo));
  CHECK(!std::isfinite(fit.ci_hi));
  CHECK(!std::isfinite(fit.se));

  CHECK_THROWS_AS(cead::estimate_phi(std::span<const cead::ChoiceRow>(rows).first(9),
                                     cead::LogitSign::paper),
                  cead::CeadError);
  auto mixed = rows;
  mixed[5].subject_id = "s02";
  CHECK_THROWS_AS(cead::estimate_phi(mixed, cead::LogitSign::paper), cead::CeadError);
}

TEST_CASE("the estimate ignores trial order") {
  const auto rows = sample_rows(0.8, cead::LogitSign::paper,
                                cead::derive_seed(0xbeaf, "test.behavior.perm"));
  auto shuffled = rows;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto a = cead::estimate_phi(rows, cead::LogitSign::paper);
  const auto b = cead::estimate_phi(shuffled, cead::LogitSign::paper);
  CHECK(a.phi_hat == doctest::Approx(b.phi_hat).epsilon(1e-10));
  CHECK(a.se == doctest::Approx(b.se).epsilon(1e-10));
}

TEST_CASE("a full-length window reduces the rolling estimate to the plain one") {
  const auto rows = sample_rows(0.3, cead::LogitSign::paper,
                                cead::derive_seed(0xbeaf, "test.behavior.roll1"));
  const auto points = cead::rolling_phi(rows, int(rows.size()));
  REQUIRE(points.size() == 1);
  const auto whole = cead::estimate_phi(rows, cead::LogitSign::paper);
  CHECK(points[0].fit.phi_hat == whole.phi_hat);
  CHECK(points[0].fit.se == whole.se);
  CHECK(points[0].last_trial == long(rows.size()) - 1);
  CHECK_THROWS_AS(cead::rolling_phi(rows, int(rows.size()) + 1), cead::CeadError);
  CHECK_THROWS_AS(cead::rolling_phi(rows, 5), cead::CeadError);
}

TEST_CASE("a mid-session policy change shows up as a level shift") {
  auto early = sample_rows(0.1, cead::LogitSign::paper,
                           cead::derive_seed(0xbeaf, "test.behavior.shift", 0), 8);
  const auto late = sample_rows(0.9, cead::LogitSign::paper,
                                cead::derive_seed(0xbeaf, "test.behavior.shift", 1), 8);
  early.insert(early.end(), late.begin(), late.end());
  const auto pts = cead::rolling_phi(early, 100);
  REQUIRE(pts.size() == early.size() - 99);
  const double first = pts.front().fit.phi_hat;
  const double last = pts.back().fit.phi_hat;
  CHECK(last - first > 0.4);
}

TEST_CASE("rolling estimates of a stationary chooser show no monotone trend") {
  // Consecutive windows share 99 of 100 trials, so the rolling series is a
  // moving average with triangular autocorrelation rho_h = 1 - h/window. The
  // Mann-Kendall variance must be inflated for that serial dependence
  // (Hamed-Rao correction with the rank autocorrelation (6/pi) asin(rho/2));
  // the uncorrected statistic would reject stationarity almost surely.
  const int window = 100;
  int calm = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    const auto rows = sample_rows(
        0.5, cead::LogitSign::paper,
        cead::derive_seed(0xbeaf, "test.behavior.mk", std::uint64_t(rep)));
    const auto pts = cead::rolling_phi(rows, window);
    const int n = int(pts.size());
    long long s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double d = pts[std::size_t(j)].fit.phi_hat - pts[std::size_t(i)].fit.phi_hat;
        s += d > 0 ? 1 : (d < 0 ? -1 : 0);
      }
    const double var0 = double(n) * (n - 1) * (2.0 * n + 5.0) / 18.0;
    double corr = 0;
    for (int h = 1; h < n; ++h) {
      const double rho = h < window ? 1.0 - double(h) / window : 0.0;
      const double rho_rank = (6.0 / M_PI) * std::asin(rho / 2.0);
      corr += double(n - h) * (n - h - 1) * (n - h - 2) * rho_rank;
    }
    const double vif = 1.0 + 2.0 / (double(n) * (n - 1) * (n - 2)) * corr;
    const double cont = s > 0 ? -1.0 : (s < 0 ? 1.0 : 0.0);
    const double z = (double(s) + cont) / std::sqrt(var0 * vif);
    if (std::abs(z) < 1.96) ++calm;
  }
  CHECK(calm >= 90);
}

} // TEST_SUITE
