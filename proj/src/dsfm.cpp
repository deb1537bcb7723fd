#include "cead/dsfm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cead {
namespace {

// All B-spline basis values at x for a clamped knot vector (degree p, nb
// functions): locate the knot span, run the triangular recurrence, and
// scatter the p+1 non-zero values into a dense output.
void basis_row(const std::vector<double>& kn, int p, int nb, double x, double* out) {
  std::fill(out, out + nb, 0.0);
  int s = p;
  while (s + 1 < nb && x >= kn[std::size_t(s + 1)]) ++s;

  double left[4] = {0, 0, 0, 0}, right[4] = {0, 0, 0, 0}, n[4] = {1, 0, 0, 0};
  for (int j = 1; j <= p; ++j) {
    left[j] = x - kn[std::size_t(s + 1 - j)];
    right[j] = kn[std::size_t(s + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out[s - p + r] = n[r];
}

const char* axis_name(int a) { return a == 0 ? "x" : (a == 1 ? "y" : "z"); }

} // namespace

SplineBasis build_basis(std::span<const std::array<int, 3>> cluster_coords,
                        std::array<int, 3> interior_knots) {
  if (cluster_coords.empty())
    fail(ErrorKind::Validation, "spline basis: cluster must be non-empty");

  SplineBasis b;
  b.coords_.assign(cluster_coords.begin(), cluster_coords.end());
  for (int a = 0; a < 3; ++a) {
    if (interior_knots[std::size_t(a)] < 0)
      fail(ErrorKind::Validation, "spline basis: interior knot count must be non-negative");
    int lo = b.coords_[0][std::size_t(a)], hi = lo;
    for (const auto& c : b.coords_) {
      lo = std::min(lo, c[std::size_t(a)]);
      hi = std::max(hi, c[std::size_t(a)]);
    }
    b.lo_[std::size_t(a)] = lo;
    b.hi_[std::size_t(a)] = hi;

    const int extent = hi - lo + 1;
    const int degree = std::min(2, extent - 1);
    const int max_interior = extent - degree - 1;
    const int interior = std::min(interior_knots[std::size_t(a)], max_interior);
    if (interior < interior_knots[std::size_t(a)])
      b.warnings_.push_back(std::string("axis ") + axis_name(a) + ": interior knots reduced from " +
                            std::to_string(interior_knots[std::size_t(a)]) + " to " +
                            std::to_string(interior) + " on a " + std::to_string(extent) +
                            "-voxel extent");

    b.degrees_[std::size_t(a)] = degree;
    b.interior_[std::size_t(a)] = interior;
    b.counts_[std::size_t(a)] = interior + degree + 1;
    if (degree > 0) {
      auto& kn = b.knots_[std::size_t(a)];
      for (int i = 0; i <= degree; ++i) kn.push_back(double(lo));
      for (int i = 1; i <= interior; ++i)
        kn.push_back(double(lo) + double(hi - lo) * double(i) / double(interior + 1));
      for (int i = 0; i <= degree; ++i) kn.push_back(double(hi));
    }
  }
  b.k_ = b.counts_[0] * b.counts_[1] * b.counts_[2];

  b.design_.resize(Eigen::Index(b.coords_.size()), b.k_);
  for (std::size_t j = 0; j < b.coords_.size(); ++j) {
    const std::vector<double> psi = b.evaluate(b.coords_[j]);
    for (int k = 0; k < b.k_; ++k) b.design_(Eigen::Index(j), k) = psi[std::size_t(k)];
  }
  return b;
}

std::vector<double> SplineBasis::evaluate(const std::array<int, 3>& coord) const {
  std::array<std::vector<double>, 3> axis_vals;
  for (int a = 0; a < 3; ++a) {
    const int x = coord[std::size_t(a)];
    if (x < lo_[std::size_t(a)] || x > hi_[std::size_t(a)])
      fail(ErrorKind::Validation, "spline basis: coordinate outside the basis bounding box");
    axis_vals[std::size_t(a)].assign(std::size_t(counts_[std::size_t(a)]), 0.0);
    if (degrees_[std::size_t(a)] == 0) {
      axis_vals[std::size_t(a)][0] = 1.0;
    } else {
      basis_row(knots_[std::size_t(a)], degrees_[std::size_t(a)], counts_[std::size_t(a)],
                double(x), axis_vals[std::size_t(a)].data());
    }
  }
  std::vector<double> out(std::size_t(k_), 0.0);
  std::size_t idx = 0;
  for (int iz = 0; iz < counts_[2]; ++iz)
    for (int iy = 0; iy < counts_[1]; ++iy)
      for (int ix = 0; ix < counts_[0]; ++ix, ++idx)
        out[idx] = axis_vals[0][std::size_t(ix)] * axis_vals[1][std::size_t(iy)] *
                   axis_vals[2][std::size_t(iz)];
  return out;
}

namespace {

// Symmetric positive semi-definite solve helper: LDLT of m, falling back to a
// tiny ridge when m is numerically rank-deficient.
struct SpdSolver {
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  bool ridged = false;

  explicit SpdSolver(const Eigen::MatrixXd& m) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (lu.rank() < m.rows()) {
      ridged = true;
      Eigen::MatrixXd r = m;
      r.diagonal().array() += 1e-10;
      ldlt.compute(r);
    } else {
      ldlt.compute(m);
    }
  }
};

} // namespace

FactorFit fit_dsfm(const Eigen::MatrixXd& y, const SplineBasis& basis, int l,
                   double tol, int max_iter, std::uint64_t seed) {
  const Eigen::Index t_len = y.rows(), j_len = y.cols();
  const int k = basis.k();
  if (l < 1) fail(ErrorKind::Validation, "factor fit: factor count must be positive");
  if (t_len <= l + 1) fail(ErrorKind::Validation, "factor fit: need more time points than factors");
  if (j_len < k) fail(ErrorKind::Validation, "factor fit: fewer voxels than basis functions");
  if (Eigen::Index(basis.coords().size()) != j_len)
    fail(ErrorKind::Validation, "factor fit: series width does not match the basis cluster");
  if (!y.allFinite()) fail(ErrorKind::Validation, "factor fit: series contains non-finite values");

  FactorFit fit;
  fit.l = l;

  const Eigen::MatrixXd& b = basis.design(); // J x K
  const Eigen::MatrixXd yb = y * b;          // T x K
  const Eigen::MatrixXd btb = b.transpose() * b;
  SpdSolver btb_solver(btb);
  fit.ridged = btb_solver.ridged;

  // principal-direction initialization of the loadings (smaller-side Gram)
  Eigen::MatrixXd z(t_len, l);
  {
    const Eigen::RowVectorXd col_mean = y.colwise().mean();
    const Eigen::MatrixXd yc = y.rowwise() - col_mean;
    Eigen::MatrixXd z0(t_len, l);
    if (j_len <= t_len) {
      const Eigen::MatrixXd gram = yc.transpose() * yc;
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
      for (int c = 0; c < l; ++c) z0.col(c) = yc * es.eigenvectors().col(j_len - 1 - c);
    } else {
      const Eigen::MatrixXd gram = yc * yc.transpose();
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
      for (int c = 0; c < l; ++c) z0.col(c) = es.eigenvectors().col(t_len - 1 - c);
    }
    Rng rng(derive_seed(seed, "dsfm.init"));
    for (int c = 0; c < l; ++c) {
      const double nrm = z0.col(c).norm();
      if (nrm > 1e-300) {
        z.col(c) = z0.col(c) / nrm;
      } else {
        for (Eigen::Index i = 0; i < t_len; ++i) z(i, c) = rng.normal();
        z.col(c) /= z.col(c).norm();
      }
    }
  }

  Eigen::MatrixXd a;                 // (L+1) x K
  Eigen::MatrixXd zt(t_len, l + 1);  // (1, Z)
  zt.col(0).setOnes();
  double prev_rss = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= max_iter; ++it) {
    fit.iterations = it;
    zt.rightCols(l) = z;

    // half-step 1: coefficients given loadings
    const Eigen::MatrixXd ztz = zt.transpose() * zt;
    SpdSolver ztz_solver(ztz);
    fit.ridged = fit.ridged || ztz_solver.ridged;
    const Eigen::MatrixXd m1 = ztz_solver.ldlt.solve(zt.transpose() * yb); // (L+1) x K
    a = btb_solver.ldlt.solve(m1.transpose()).transpose();                 // (L+1) x K
    const Eigen::MatrixXd g = a * b.transpose();                           // (L+1) x J
    fit.rss_trace.push_back((y - zt * g).squaredNorm());

    // half-step 2: loadings given coefficients
    const Eigen::MatrixXd g1 = g.bottomRows(l); // L x J
    const Eigen::MatrixXd yc0 = y.rowwise() - g.row(0);
    const Eigen::MatrixXd gg = g1 * g1.transpose();
    SpdSolver gg_solver(gg);
    fit.ridged = fit.ridged || gg_solver.ridged;
    z = gg_solver.ldlt.solve(g1 * yc0.transpose()).transpose(); // T x L
    zt.rightCols(l) = z;
    const double rss = (y - zt * g).squaredNorm();
    fit.rss_trace.push_back(rss);

    if (rss == 0.0 || (std::isfinite(prev_rss) && prev_rss - rss <= tol * std::max(prev_rss, 1e-300))) {
      fit.converged = true;
      fit.objective = rss;
      break;
    }
    prev_rss = rss;
    fit.objective = rss;
  }

  // ---- identification ----
  // center: absorb loading means into the intercept row
  const Eigen::RowVectorXd z_mean = z.colwise().mean();
  a.row(0) += z_mean * a.bottomRows(l);
  z.rowwise() -= z_mean;

  // whiten: unit variance, orthogonal columns, decreasing variance share
  if (t_len > 1) {
    const Eigen::MatrixXd cov = z.transpose() * z / double(t_len - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::MatrixXd u(l, l);
    Eigen::VectorXd lam(l);
    for (int c = 0; c < l; ++c) { // reorder to descending eigenvalues
      u.col(c) = es.eigenvectors().col(l - 1 - c);
      lam(c) = es.eigenvalues()(l - 1 - c);
    }
    Eigen::VectorXd scale(l);
    for (int c = 0; c < l; ++c) scale(c) = lam(c) > 1e-300 ? std::sqrt(lam(c)) : 1.0;
    z = z * u;
    Eigen::MatrixXd a1 = u.transpose() * a.bottomRows(l);
    for (int c = 0; c < l; ++c) {
      z.col(c) /= scale(c);
      a1.row(c) *= scale(c);
    }
    a.bottomRows(l) = a1;
  }

  // rotate: whitening leaves an orthogonal rotation free when l > 1; pin it by
  // making the factor functions orthogonal in the voxel norm with decreasing
  // size, i.e. diagonalize a1 * (psi' psi) * a1' with descending eigenvalues
  if (l > 1) {
    const Eigen::MatrixXd a1g =
        a.bottomRows(l) * btb * a.bottomRows(l).transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a1g);
    Eigen::MatrixXd u(l, l);
    for (int c = 0; c < l; ++c) u.col(c) = es.eigenvectors().col(l - 1 - c);
    z = z * u;
    a.bottomRows(l) = (u.transpose() * a.bottomRows(l)).eval();
  }

  // sign: align each loading with the cluster-mean series
  const Eigen::VectorXd mean_series = y.rowwise().mean();
  const Eigen::VectorXd mc = mean_series.array() - mean_series.mean();
  for (int c = 0; c < l; ++c) {
    double d = z.col(c).dot(mc);
    if (d == 0.0) d = z(0, c);
    if (d < 0.0) {
      z.col(c) = -z.col(c);
      a.row(c + 1) = -a.row(c + 1);
    }
  }

  fit.z_hat = std::move(z);
  fit.a_hat = std::move(a);
  if (fit.rss_trace.empty()) fit.objective = y.squaredNorm();
  return fit;
}

Eigen::MatrixXd fitted_values(const FactorFit& fit, const SplineBasis& basis,
                              std::span<const std::array<int, 3>> coords) {
  if (fit.a_hat.rows() != fit.l + 1 || fit.a_hat.cols() != basis.k())
    fail(ErrorKind::Validation, "fitted values: coefficient shape does not match the basis");
  const Eigen::Index t_len = fit.z_hat.rows();
  Eigen::MatrixXd bq(Eigen::Index(coords.size()), basis.k());
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const std::vector<double> psi = basis.evaluate(coords[j]);
    for (int k = 0; k < basis.k(); ++k) bq(Eigen::Index(j), k) = psi[std::size_t(k)];
  }
  Eigen::MatrixXd zt(t_len, fit.l + 1);
  zt.col(0).setOnes();
  zt.rightCols(fit.l) = fit.z_hat;
  return zt * fit.a_hat * bq.transpose();
}

Eigen::VectorXd cluster_mean_series(const Eigen::MatrixXd& y) {
  if (y.cols() == 0) fail(ErrorKind::Validation, "cluster mean: empty series");
  return y.rowwise().mean();
}

} // namespace cead
