#include "cead/ncut.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>

namespace cead {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Connected components through stored (positive-weight) edges. Components are
// found by scanning seeds in ascending node id, so they come out ordered by
// their minimum member, and each component is sorted.
std::vector<std::vector<std::int64_t>> graph_components(const SimilarityGraph& g) {
  const std::int64_t n = g.n();
  std::vector<char> seen(std::size_t(n), 0);
  std::vector<std::vector<std::int64_t>> comps;
  std::vector<std::int64_t> stack;
  for (std::int64_t s = 0; s < n; ++s) {
    if (seen[std::size_t(s)]) continue;
    comps.emplace_back();
    auto& comp = comps.back();
    seen[std::size_t(s)] = 1;
    stack.assign(1, s);
    while (!stack.empty()) {
      const std::int64_t v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (const GraphEdge& e : g.neighbors(v)) {
        if (!seen[std::size_t(e.to)]) {
          seen[std::size_t(e.to)] = 1;
          stack.push_back(e.to);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
  }
  return comps;
}

// y = (2I - L_sym) x = x + S W S x with S = diag(1/sqrt(degree)).
void apply_op(const SimilarityGraph& g, const std::vector<double>& inv_sqrt_deg,
              const std::vector<double>& x, std::vector<double>& scratch,
              std::vector<double>& y) {
  const std::int64_t n = g.n();
  for (std::int64_t i = 0; i < n; ++i) scratch[std::size_t(i)] = inv_sqrt_deg[std::size_t(i)] * x[std::size_t(i)];
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const GraphEdge& e : g.neighbors(i)) acc += e.w * scratch[std::size_t(e.to)];
    y[std::size_t(i)] = x[std::size_t(i)] + inv_sqrt_deg[std::size_t(i)] * acc;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(std::vector<double>& y, double c, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

struct SpectralVector {
  std::vector<double> x; // eigenvector in symmetric coordinates
  double lambda2 = 0.0;  // second-smallest eigenvalue of the normalized Laplacian
};

// Lanczos iteration on 2I - L_sym with the constant-direction eigenvector
// D^{1/2} 1 deflated explicitly and full reorthogonalization. The dominant
// Ritz pair of the deflated operator corresponds to the second-smallest
// Laplacian eigenvalue. Krylov iteration resolves clustered eigenvalues that
// plain power steps cannot separate within a bounded iteration budget.
SpectralVector second_smallest(const SimilarityGraph& g,
                               const std::vector<double>& inv_sqrt_deg,
                               std::uint64_t seed) {
  const std::int64_t n = g.n();
  const std::size_t ns = std::size_t(n);
  constexpr double kTol = 1e-8;

  std::vector<double> v0(ns);
  double v0n2 = 0.0;
  for (std::size_t i = 0; i < ns; ++i) {
    const double d = g.degree(std::int64_t(i));
    v0[i] = std::sqrt(d);
    v0n2 += d;
  }
  const double v0n = std::sqrt(v0n2);
  for (double& v : v0) v /= v0n;

  const int m_max = int(std::min<std::int64_t>(n - 1, 256));
  Rng rng(seed);

  // start vector orthogonal to the deflated direction
  std::vector<double> q(ns);
  for (int attempt = 0;; ++attempt) {
    for (double& v : q) v = rng.normal();
    axpy(q, -dot(q, v0), v0);
    axpy(q, -dot(q, v0), v0);
    const double nrm = std::sqrt(dot(q, q));
    if (nrm > 1e-12) {
      for (double& v : q) v /= nrm;
      break;
    }
    if (attempt >= 8) fail(ErrorKind::Numerical, "spectral bipartition: could not seed the iteration");
  }

  std::vector<std::vector<double>> basis;
  basis.push_back(std::move(q));
  std::vector<double> alpha, beta; // beta[k] couples basis[k] and basis[k+1]
  std::vector<double> w(ns), scratch(ns);

  for (int j = 0; j < m_max; ++j) {
    apply_op(g, inv_sqrt_deg, basis[std::size_t(j)], scratch, w);
    if (j > 0) axpy(w, -beta[std::size_t(j - 1)], basis[std::size_t(j - 1)]);
    const double a = dot(basis[std::size_t(j)], w);
    alpha.push_back(a);
    axpy(w, -a, basis[std::size_t(j)]);
    axpy(w, -dot(w, v0), v0);
    for (int i = 0; i <= j; ++i) axpy(w, -dot(w, basis[std::size_t(i)]), basis[std::size_t(i)]);
    const double b = std::sqrt(dot(w, w));

    const bool last = (j + 1 == m_max) || (b <= 1e-12);
    if (last || ((j + 1) % 8 == 0)) {
      const int m = j + 1;
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) t(i, i) = alpha[std::size_t(i)];
      for (int i = 0; i + 1 < m; ++i) {
        t(i, i + 1) = beta[std::size_t(i)];
        t(i + 1, i) = beta[std::size_t(i)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      if (es.info() != Eigen::Success)
        fail(ErrorKind::Numerical, "spectral bipartition: tridiagonal eigensolver failed");
      const double theta = es.eigenvalues()(m - 1);
      const Eigen::VectorXd s = es.eigenvectors().col(m - 1);
      const double resid = b * std::abs(s(m - 1));
      if (resid <= kTol * std::max(1.0, std::abs(theta)) || b <= 1e-12) {
        SpectralVector out;
        out.x.assign(ns, 0.0);
        for (int i = 0; i < m; ++i) axpy(out.x, s(i), basis[std::size_t(i)]);
        out.lambda2 = std::max(0.0, 2.0 - theta);
        return out;
      }
      if (last) break;
    }

    beta.push_back(b);
    std::vector<double> qn(ns);
    for (std::size_t i = 0; i < ns; ++i) qn[i] = w[i] / b;
    basis.push_back(std::move(qn));
  }
  fail(ErrorKind::Numerical, "spectral bipartition: eigensolver did not converge");
}

} // namespace

double ncut_cost(const SimilarityGraph& g, std::span<const std::uint8_t> side) {
  const std::int64_t n = g.n();
  if (std::int64_t(side.size()) != n)
    fail(ErrorKind::Validation, "ncut cost: assignment length does not match node count");
  std::int64_t n0 = 0;
  for (std::size_t i = 0; i < side.size(); ++i) {
    if (side[i] > 1) fail(ErrorKind::Validation, "ncut cost: assignment entries must be 0 or 1");
    n0 += (side[i] == 0);
  }
  if (n0 == 0 || n0 == n)
    fail(ErrorKind::Validation, "ncut cost: both sides must be non-empty");

  double assoc0 = 0.0, assoc1 = 0.0, cut = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    (side[std::size_t(i)] == 0 ? assoc0 : assoc1) += g.degree(i);
    for (const GraphEdge& e : g.neighbors(i))
      if (e.to > i && side[std::size_t(e.to)] != side[std::size_t(i)]) cut += e.w;
  }
  if (assoc0 <= 0.0 || assoc1 <= 0.0) return kInf;
  return cut / assoc0 + cut / assoc1;
}

BipartitionResult spectral_bipartition(const SimilarityGraph& g, std::uint64_t seed) {
  const std::int64_t n = g.n();
  if (n < 2) fail(ErrorKind::Validation, "spectral bipartition: need at least 2 nodes");
  if (!(g.total_weight() > 0.0))
    fail(ErrorKind::Validation, "spectral bipartition: graph has no positive-weight edges");
  if (graph_components(g).size() != 1)
    fail(ErrorKind::Validation, "spectral bipartition: graph must be connected (split components first)");

  std::vector<double> inv_sqrt_deg(std::size_t(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) inv_sqrt_deg[std::size_t(i)] = 1.0 / std::sqrt(g.degree(i));

  const SpectralVector ev = second_smallest(g, inv_sqrt_deg, seed);

  // generalized eigenvector of (D - W) y = lambda D y
  std::vector<double> y(std::size_t(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) y[std::size_t(i)] = inv_sqrt_deg[std::size_t(i)] * ev.x[std::size_t(i)];

  std::vector<std::int64_t> order(std::size_t(n), 0);
  std::iota(order.begin(), order.end(), std::int64_t(0));
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double ya = y[std::size_t(a)], yb = y[std::size_t(b)];
    if (ya != yb) return ya < yb;
    return a < b;
  });

  // threshold positions: prefix {order[0..k]} vs the rest; a position is a
  // real threshold only where the sorted values strictly increase
  bool any_strict = false;
  auto strict_at = [&](std::int64_t k) {
    return y[std::size_t(order[std::size_t(k + 1)])] > y[std::size_t(order[std::size_t(k)])];
  };
  for (std::int64_t k = 0; k + 1 < n && !any_strict; ++k) any_strict = strict_at(k);

  std::vector<std::int64_t> cands;
  const bool full_sweep = n <= 10000;
  if (full_sweep) {
    for (std::int64_t k = 0; k + 1 < n; ++k)
      if (!any_strict || strict_at(k)) cands.push_back(k);
  } else {
    std::int64_t prev = -1;
    for (std::int64_t qidx = 1; qidx <= 127; ++qidx) {
      std::int64_t k = (n * qidx) / 128 - 1;
      k = std::clamp<std::int64_t>(k, 0, n - 2);
      if (k == prev) continue;
      prev = k;
      if (!any_strict || strict_at(k)) cands.push_back(k);
    }
    if (cands.empty())
      for (std::int64_t k = 0; k + 1 < n; ++k)
        if (strict_at(k)) cands.push_back(k);
  }

  double assoc_total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) assoc_total += g.degree(i);

  std::vector<char> in_p(std::size_t(n), 0);
  double cut = 0.0, assoc_p = 0.0;
  double best_cost = kInf;
  std::int64_t best_k = -1;
  std::size_t ci = 0;
  for (std::int64_t k = 0; k + 1 < n && ci < cands.size(); ++k) {
    const std::int64_t v = order[std::size_t(k)];
    double w_to_p = 0.0;
    for (const GraphEdge& e : g.neighbors(v))
      if (in_p[std::size_t(e.to)]) w_to_p += e.w;
    cut += g.degree(v) - 2.0 * w_to_p;
    assoc_p += g.degree(v);
    in_p[std::size_t(v)] = 1;
    if (cands[ci] == k) {
      ++ci;
      const double assoc_q = assoc_total - assoc_p;
      if (assoc_p > 0.0 && assoc_q > 0.0) {
        const double cost = cut / assoc_p + cut / assoc_q;
        if (cost < best_cost) {
          best_cost = cost;
          best_k = k;
        }
      }
    }
  }
  if (best_k < 0)
    fail(ErrorKind::Numerical, "spectral bipartition: no admissible threshold");

  BipartitionResult out;
  out.side.assign(std::size_t(n), 1);
  for (std::int64_t k = 0; k <= best_k; ++k) out.side[std::size_t(order[std::size_t(k)])] = 0;
  out.ncut_cost = ncut_cost(g, out.side);
  out.eigenvalue = ev.lambda2;
  return out;
}

namespace {

struct ClusterState {
  std::vector<std::int64_t> members; // ascending root node ids
  double creation_cost = 0.0;
  bool peel = false;                 // split along graph components at cost 0
  std::vector<std::uint8_t> side;    // spectral plan, aligned with members
};

} // namespace

Parcellation parcellate(const SimilarityGraph& g, int n_clusters, std::uint64_t seed) {
  const std::int64_t n = g.n();
  if (n_clusters < 1) fail(ErrorKind::Validation, "parcellate: cluster count must be positive");
  if (std::int64_t(n_clusters) > n) fail(ErrorKind::Validation, "parcellate: cluster count exceeds node count");

  Parcellation out;
  if (n > 1 && !(g.total_weight() > 0.0))
    out.warnings.push_back("similarity graph has no positive-weight edges; peeling voxels off spatially");

  const std::array<int, 3> dims = g.grid_dims();
  const std::int64_t nvox = std::int64_t(dims[0]) * dims[1] * dims[2];
  std::vector<std::int64_t> node_at(std::size_t(nvox), -1);
  for (std::int64_t i = 0; i < n; ++i) node_at[std::size_t(g.voxel_of(i))] = i;

  std::vector<ClusterState> all;
  std::vector<char> active;
  std::vector<int> cluster_of(std::size_t(n), 0);

  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;

  // Decide how a cluster would be split and queue it by that cost.
  auto plan = [&](int idx) {
    ClusterState& c = all[std::size_t(idx)];
    if (c.members.size() < 2) return;
    const SimilarityGraph sub = subgraph(g, c.members);
    if (graph_components(sub).size() > 1) {
      c.peel = true;
      pq.emplace(0.0, idx);
      return;
    }
    BipartitionResult bp =
        spectral_bipartition(sub, derive_seed(seed, "ncut.split", std::uint64_t(idx)));
    c.peel = false;
    c.side = std::move(bp.side);
    pq.emplace(bp.ncut_cost, idx);
  };

  // 26-adjacency components of a sorted node set, ordered by minimum member.
  std::vector<std::int64_t> member_epoch(std::size_t(n), -1), visit_epoch(std::size_t(n), -1);
  std::int64_t epoch = 0;
  auto spatial_components = [&](const std::vector<std::int64_t>& nodes) {
    ++epoch;
    for (std::int64_t v : nodes) member_epoch[std::size_t(v)] = epoch;
    std::vector<std::vector<std::int64_t>> comps;
    std::vector<std::int64_t> stack;
    for (std::int64_t s : nodes) {
      if (visit_epoch[std::size_t(s)] == epoch) continue;
      comps.emplace_back();
      auto& comp = comps.back();
      visit_epoch[std::size_t(s)] = epoch;
      stack.assign(1, s);
      while (!stack.empty()) {
        const std::int64_t v = stack.back();
        stack.pop_back();
        comp.push_back(v);
        const auto& co = g.coord(v);
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              const int x = co[0] + dx, yy = co[1] + dy, z = co[2] + dz;
              if (x < 0 || x >= dims[0] || yy < 0 || yy >= dims[1] || z < 0 || z >= dims[2]) continue;
              const std::int64_t vox = x + std::int64_t(dims[0]) * (yy + std::int64_t(dims[1]) * z);
              const std::int64_t u = node_at[std::size_t(vox)];
              if (u < 0 || member_epoch[std::size_t(u)] != epoch) continue;
              if (visit_epoch[std::size_t(u)] == epoch) continue;
              visit_epoch[std::size_t(u)] = epoch;
              stack.push_back(u);
            }
      }
      std::sort(comp.begin(), comp.end());
    }
    return comps;
  };

  {
    ClusterState root;
    root.members.resize(std::size_t(n));
    std::iota(root.members.begin(), root.members.end(), std::int64_t(0));
    all.push_back(std::move(root));
    active.push_back(1);
  }
  int count = 1;
  plan(0);

  std::vector<int> last_pieces;
  while (count < n_clusters) {
    if (pq.empty())
      fail(ErrorKind::Numerical, "parcellate: no splittable cluster left before reaching the target");
    const auto [cost, idx] = pq.top();
    pq.pop();

    // gather the two sides before touching `all` (push_back invalidates refs)
    std::vector<std::int64_t> side_a, side_b;
    {
      const ClusterState& c = all[std::size_t(idx)];
      if (c.peel) {
        const SimilarityGraph sub = subgraph(g, c.members);
        auto comps = graph_components(sub);
        std::size_t main = 0;
        for (std::size_t k = 1; k < comps.size(); ++k) {
          if (comps[k].size() > comps[main].size()) main = k;
          // equal sizes: keep the earlier component (it has the smaller minimum id)
        }
        for (std::size_t k = 0; k < comps.size(); ++k)
          for (std::int64_t pos : comps[k])
            (k == main ? side_a : side_b).push_back(c.members[std::size_t(pos)]);
        std::sort(side_b.begin(), side_b.end());
      } else {
        for (std::size_t pos = 0; pos < c.members.size(); ++pos)
          (c.side[pos] == 0 ? side_a : side_b).push_back(c.members[pos]);
      }
    }
    active[std::size_t(idx)] = 0;
    all[std::size_t(idx)].side.clear();

    last_pieces.clear();
    for (const auto* side : {&side_a, &side_b}) {
      for (auto& comp : spatial_components(*side)) {
        const int ni = int(all.size());
        ClusterState piece;
        piece.members = std::move(comp);
        piece.creation_cost = cost;
        for (std::int64_t v : piece.members) cluster_of[std::size_t(v)] = ni;
        all.push_back(std::move(piece));
        active.push_back(1);
        last_pieces.push_back(ni);
        ++count;
      }
    }
    --count;
    if (count < n_clusters)
      for (int ni : last_pieces) plan(ni);
  }

  // The final split can overshoot when a side falls apart into several
  // spatial components. Merge the smallest of those pieces into its smallest
  // spatially adjacent sibling until the count is exact; merging siblings
  // keeps every earlier cluster's footprint intact.
  auto pick_smallest = [&](const std::vector<int>& candidates, int exclude) {
    int best = -1;
    for (int idx : candidates) {
      if (idx == exclude || !active[std::size_t(idx)]) continue;
      if (best < 0 || all[std::size_t(idx)].members.size() < all[std::size_t(best)].members.size() ||
          (all[std::size_t(idx)].members.size() == all[std::size_t(best)].members.size() && idx < best))
        best = idx;
    }
    return best;
  };
  auto adjacent_clusters = [&](int idx) {
    std::vector<int> adj;
    for (std::int64_t v : all[std::size_t(idx)].members) {
      const auto& co = g.coord(v);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const int x = co[0] + dx, yy = co[1] + dy, z = co[2] + dz;
            if (x < 0 || x >= dims[0] || yy < 0 || yy >= dims[1] || z < 0 || z >= dims[2]) continue;
            const std::int64_t vox = x + std::int64_t(dims[0]) * (yy + std::int64_t(dims[1]) * z);
            const std::int64_t u = node_at[std::size_t(vox)];
            if (u < 0) continue;
            const int cu = cluster_of[std::size_t(u)];
            if (cu != idx && active[std::size_t(cu)]) adj.push_back(cu);
          }
    }
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    return adj;
  };

  bool warned_nonadjacent = false, warned_outside = false;
  while (count > n_clusters) {
    const int victim = pick_smallest(last_pieces, -1);
    if (victim < 0) fail(ErrorKind::Numerical, "parcellate: merge phase ran out of pieces");
    const std::vector<int> adj = adjacent_clusters(victim);
    std::vector<int> adj_pieces;
    for (int a : adj)
      if (std::find(last_pieces.begin(), last_pieces.end(), a) != last_pieces.end()) adj_pieces.push_back(a);
    int absorber = pick_smallest(adj_pieces, victim);
    if (absorber < 0) {
      absorber = pick_smallest(adj, victim);
      if (absorber >= 0 && !warned_outside) {
        warned_outside = true;
        out.warnings.push_back("cluster-count adjustment merged a piece into a neighbor outside its own split");
      }
    }
    if (absorber < 0) {
      std::vector<int> everyone;
      for (int idx = 0; idx < int(all.size()); ++idx)
        if (active[std::size_t(idx)]) everyone.push_back(idx);
      absorber = pick_smallest(everyone, victim);
      if (absorber >= 0 && !warned_nonadjacent) {
        warned_nonadjacent = true;
        out.warnings.push_back("cluster-count adjustment merged spatially non-adjacent clusters");
      }
    }
    if (absorber < 0) fail(ErrorKind::Numerical, "parcellate: no merge partner available");

    auto& am = all[std::size_t(absorber)].members;
    auto& vm = all[std::size_t(victim)].members;
    std::vector<std::int64_t> merged;
    merged.reserve(am.size() + vm.size());
    std::merge(am.begin(), am.end(), vm.begin(), vm.end(), std::back_inserter(merged));
    for (std::int64_t v : vm) cluster_of[std::size_t(v)] = absorber;
    am = std::move(merged);
    vm.clear();
    active[std::size_t(victim)] = 0;
    --count;
  }

  // final labels, ordered by each cluster's first voxel
  std::vector<int> final_ids;
  for (int idx = 0; idx < int(all.size()); ++idx)
    if (active[std::size_t(idx)]) final_ids.push_back(idx);
  std::sort(final_ids.begin(), final_ids.end(), [&](int a, int b) {
    return all[std::size_t(a)].members.front() < all[std::size_t(b)].members.front();
  });

  std::vector<std::int32_t> labels(std::size_t(nvox), 0);
  out.clusters.reserve(final_ids.size());
  for (std::size_t k = 0; k < final_ids.size(); ++k) {
    const ClusterState& c = all[std::size_t(final_ids[k])];
    ClusterSummary cs;
    cs.label = int(k) + 1;
    cs.members = c.members;
    cs.creation_cost = c.creation_cost;
    for (std::int64_t v : c.members) labels[std::size_t(g.voxel_of(v))] = cs.label;
    out.clusters.push_back(std::move(cs));
  }
  out.labels = LabelVolume::create(dims, std::move(labels));
  out.n_clusters = int(final_ids.size());
  return out;
}

} // namespace cead
