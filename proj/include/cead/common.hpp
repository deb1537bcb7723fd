#pragma once
// Shared plumbing: error taxonomy, deterministic RNG, small numeric helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cead {

// ---------------- errors ----------------

enum class ErrorKind {
  Io,          // file unreadable/unwritable
  BadMagic,    // wrong leading magic bytes
  Truncated,   // payload shorter/longer than the header promises
  DimOverflow, // dimension product overflows addressable size
  NonFinite,   // NaN/Inf where finite values are required
  Parse,       // malformed text input (TSV, config)
  Validation,  // semantic precondition violated
  Numerical,   // solver non-convergence, collinear design, ...
};

class CeadError : public std::runtime_error {
public:
  CeadError(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw CeadError(k, msg); }

// ---------------- deterministic RNG ----------------
//
// mt19937_64's output sequence is pinned by the standard; the std:: distributions
// are not. All variate transforms below are spelled out so identical seeds give
// identical streams on every platform.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable sub-stream seed derivation: mix a base seed with a short tag and indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
  for (unsigned char c : tag) h = (h ^ c) * 0x100000001b3ULL;
  h = (h ^ a) * 0x100000001b3ULL;
  h = (h ^ b) * 0x100000001b3ULL;
  return splitmix64(base ^ h);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // uniform on (0,1), never exactly 0 or 1
  double uniform() { return (double(eng_() >> 11) + 0.5) * 0x1p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // unbiased rejection sampling
    std::uint64_t lim = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do { v = eng_(); } while (v >= lim);
    return v % n;
  }

  // Dirichlet(1,...,1) of given length via normalized exponentials
  std::vector<double> dirichlet_flat(int k) {
    std::vector<double> w(k);
    double s = 0;
    for (int i = 0; i < k; ++i) { w[i] = -std::log(uniform()); s += w[i]; }
    for (int i = 0; i < k; ++i) w[i] /= s;
    return w;
  }

private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0;
};

// ---------------- small numeric helpers ----------------

inline double mean_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

// sample variance, n-1 denominator (the convention used throughout)
inline double sample_var(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_var(v)); }

inline double pearson_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    fail(ErrorKind::Validation, "pearson_corr: need two equal-length series, n >= 2");
  double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return 0.0; // degenerate: define as 0, callers may flag
  return sab / std::sqrt(saa * sbb);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

} // namespace cead
