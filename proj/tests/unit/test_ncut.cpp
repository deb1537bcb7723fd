#include "doctest.h"

#include "cead/ncut.hpp"
#include "cead/simgraph.hpp"
#include "cead/volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <vector>

namespace {

using Edge = std::tuple<std::int64_t, std::int64_t, double>;

// Nodes laid out along the x axis; spatial structure is irrelevant for the
// cost/spectral tests, which only look at the weighted graph.
cead::SimilarityGraph line_graph(int n, const std::vector<Edge>& edges) {
  std::vector<std::array<int, 3>> coords;
  std::vector<std::int64_t> vox;
  for (int i = 0; i < n; ++i) {
    coords.push_back({i, 0, 0});
    vox.push_back(i);
  }
  return cead::SimilarityGraph::from_edges(std::move(coords), std::move(vox), {n, 1, 1}, edges);
}

// Independent dense-matrix normalized-cut evaluation used as the oracle.
double dense_ncut(const std::vector<std::vector<double>>& w, unsigned p_mask) {
  const int n = int(w.size());
  std::vector<double> deg(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[std::size_t(i)] += w[std::size_t(i)][std::size_t(j)];
  double cut = 0.0, ap = 0.0, aq = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool pi = (p_mask >> i) & 1u;
    (pi ? ap : aq) += deg[std::size_t(i)];
    for (int j = i + 1; j < n; ++j) {
      const bool pj = (p_mask >> j) & 1u;
      if (pi != pj) cut += w[std::size_t(i)][std::size_t(j)];
    }
  }
  if (ap <= 0.0 || aq <= 0.0) return std::numeric_limits<double>::infinity();
  return cut / ap + cut / aq;
}

// Exhaustive minimum over all bipartitions (node n-1 pinned to side Q).
double exhaustive_min_ncut(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<double>> w(std::size_t(n), std::vector<double>(std::size_t(n), 0.0));
  for (const auto& [a, b, ww] : edges) {
    w[std::size_t(a)][std::size_t(b)] += ww;
    w[std::size_t(b)][std::size_t(a)] += ww;
  }
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) best = std::min(best, dense_ncut(w, mask));
  return best;
}

std::vector<Edge> clique_edges(std::int64_t lo, std::int64_t hi, double w) {
  std::vector<Edge> e;
  for (std::int64_t a = lo; a < hi; ++a)
    for (std::int64_t b = a + 1; b < hi; ++b) e.emplace_back(a, b, w);
  return e;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  REQUIRE(a.size() == b.size());
  long long agree = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++total;
      agree += ((a[i] == a[j]) == (b[i] == b[j]));
    }
  return double(agree) / double(total);
}

// Two coherent slabs separated by a weakly coherent middle region.
cead::VolumeSeries blob_volume(std::uint64_t seed, std::vector<int>* truth) {
  const int nx = 9, ny = 5, nz = 3, nt = 300;
  cead::Rng rng(seed);
  std::vector<double> s1(nt), s2(nt), bg(nt);
  for (int t = 0; t < nt; ++t) {
    s1[std::size_t(t)] = rng.normal();
    s2[std::size_t(t)] = rng.normal();
    bg[std::size_t(t)] = rng.normal();
  }
  const std::int64_t nvox = std::int64_t(nx) * ny * nz;
  std::vector<double> data(std::size_t(nvox) * nt);
  if (truth) truth->assign(std::size_t(nvox), 0);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const std::int64_t v = x + std::int64_t(nx) * (y + std::int64_t(ny) * z);
        const int region = x <= 2 ? 0 : (x >= 6 ? 1 : 2);
        if (truth) (*truth)[std::size_t(v)] = region;
        for (int t = 0; t < nt; ++t) {
          double val = 0.0;
          if (region == 0) val = 0.9 * s1[std::size_t(t)] + 0.3 * rng.normal();
          else if (region == 1) val = 0.9 * s2[std::size_t(t)] + 0.3 * rng.normal();
          else val = 0.4 * bg[std::size_t(t)] + 1.0 * rng.normal();
          data[std::size_t(v + nvox * t)] = val;
        }
      }
  return cead::VolumeSeries::create({nx, ny, nz, nt}, {1.f, 1.f, 1.f}, 2.f,
                                    std::vector<std::uint8_t>(std::size_t(nvox), 1), std::move(data));
}

cead::VolumeSeries random_volume(int nx, int ny, int nz, int nt, std::uint64_t seed) {
  cead::Rng rng(seed);
  const std::int64_t nvox = std::int64_t(nx) * ny * nz;
  std::vector<double> data(std::size_t(nvox) * nt);
  std::vector<double> common(std::size_t(nt), 0.0);
  for (double& c : common) c = rng.normal();
  for (std::int64_t v = 0; v < nvox; ++v)
    for (int t = 0; t < nt; ++t)
      data[std::size_t(v + nvox * t)] = 0.5 * common[std::size_t(t)] + rng.normal();
  return cead::VolumeSeries::create({nx, ny, nz, nt}, {1.f, 1.f, 1.f}, 2.f,
                                    std::vector<std::uint8_t>(std::size_t(nvox), 1), std::move(data));
}

} // namespace

TEST_SUITE("ncut") {

TEST_CASE("cost of splitting a single unit edge is exactly two") {
  const auto g = line_graph(2, {{0, 1, 1.0}});
  const std::vector<std::uint8_t> side{0, 1};
  CHECK(cead::ncut_cost(g, side) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("middle split of a unit four-path costs two thirds and is the exhaustive minimum") {
  const std::vector<Edge> edges{{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}};
  const auto g = line_graph(4, edges);
  const std::vector<std::uint8_t> middle{0, 0, 1, 1};
  const double mid_cost = cead::ncut_cost(g, middle);
  CHECK(mid_cost == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(exhaustive_min_ncut(4, edges) == doctest::Approx(mid_cost).epsilon(1e-15));
}

TEST_CASE("zero cut across disconnected components, infinite cost for a zero-association side") {
  const auto g = line_graph(4, {{0, 1, 0.7}, {2, 3, 0.4}});
  CHECK(cead::ncut_cost(g, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.0);

  const auto h = line_graph(3, {{0, 1, 1.0}}); // node 2 isolated
  CHECK(std::isinf(cead::ncut_cost(h, std::vector<std::uint8_t>{0, 0, 1})));
}

TEST_CASE("cost rejects malformed assignments") {
  const auto g = line_graph(2, {{0, 1, 1.0}});
  CHECK_THROWS_AS(cead::ncut_cost(g, std::vector<std::uint8_t>{0}), cead::CeadError);
  CHECK_THROWS_AS(cead::ncut_cost(g, std::vector<std::uint8_t>{0, 0}), cead::CeadError);
  CHECK_THROWS_AS(cead::ncut_cost(g, std::vector<std::uint8_t>{0, 2}), cead::CeadError);
}

TEST_CASE("weak bridge between two cliques is cut exactly there") {
  std::vector<Edge> edges = clique_edges(0, 10, 1.0);
  auto right = clique_edges(10, 20, 1.0);
  edges.insert(edges.end(), right.begin(), right.end());
  edges.emplace_back(9, 10, 0.01);
  const auto g = line_graph(20, edges);

  const auto bp = cead::spectral_bipartition(g);
  for (int i = 0; i < 20; ++i) CHECK(bp.side[std::size_t(i)] == bp.side[std::size_t(i < 10 ? 0 : 19)]);
  CHECK(bp.side[0] != bp.side[19]);
  // cut = bridge weight; each side's association = 2 * 45 internal + bridge
  CHECK(bp.ncut_cost == doctest::Approx(2.0 * 0.01 / 90.01).epsilon(1e-12));
  CHECK(bp.eigenvalue > 0.0);
}

TEST_CASE("symmetric barbell splits into equal halves") {
  std::vector<Edge> edges = clique_edges(0, 5, 1.0);
  auto right = clique_edges(5, 10, 1.0);
  edges.insert(edges.end(), right.begin(), right.end());
  edges.emplace_back(4, 5, 1.0);
  const auto g = line_graph(10, edges);

  const auto bp = cead::spectral_bipartition(g);
  const int n0 = int(std::count(bp.side.begin(), bp.side.end(), std::uint8_t(0)));
  CHECK(n0 == 5);
  // cut = 1; each side's association = 2 * 10 clique-internal + 1 bridge
  CHECK(bp.ncut_cost == doctest::Approx(2.0 / 21.0).epsilon(1e-12));
  CHECK(bp.eigenvalue > 0.0);
}

TEST_CASE("spectral result stays within five percent of the exhaustive minimum") {
  int ok = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    cead::Rng rng(cead::derive_seed(0xce4d5eedULL, "test.ncut.random", std::uint64_t(trial)));
    const int n = 4 + int(rng.below(9)); // 4..12
    std::vector<Edge> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1, 0.2 + 0.8 * rng.uniform());
    for (int i = 0; i < n; ++i)
      for (int j = i + 2; j < n; ++j)
        if (rng.uniform() < 0.4) edges.emplace_back(i, j, 0.05 + 0.95 * rng.uniform());
    const auto g = line_graph(n, edges);

    const auto bp = cead::spectral_bipartition(g);
    CHECK(bp.ncut_cost == doctest::Approx(cead::ncut_cost(g, bp.side)).epsilon(1e-12));
    const double oracle = exhaustive_min_ncut(n, edges);
    if (bp.ncut_cost <= 1.05 * oracle + 1e-12) ++ok;
  }
  CHECK(ok >= 190);
}

TEST_CASE("spectral preconditions are enforced") {
  const auto lone = line_graph(1, {});
  CHECK_THROWS_AS(cead::spectral_bipartition(lone), cead::CeadError);
  const auto split = line_graph(4, {{0, 1, 1.0}, {2, 3, 1.0}});
  CHECK_THROWS_AS(cead::spectral_bipartition(split), cead::CeadError);
  const auto empty = line_graph(3, {});
  CHECK_THROWS_AS(cead::spectral_bipartition(empty), cead::CeadError);
}

TEST_CASE("single cluster and full refinement endpoints") {
  const auto vol = random_volume(4, 3, 2, 60, 99);
  const auto g = cead::build_graph(vol);
  const std::int64_t n = g.n();

  const auto one = cead::parcellate(g, 1, 7);
  CHECK(one.n_clusters == 1);
  CHECK(one.clusters.size() == 1);
  CHECK(std::int64_t(one.clusters[0].members.size()) == n);
  for (std::int32_t lab : one.labels.labels()) CHECK(lab == 1);

  const auto atoms = cead::parcellate(g, int(n), 7);
  CHECK(atoms.n_clusters == int(n));
  for (const auto& c : atoms.clusters) CHECK(c.members.size() == 1);
  CHECK(cead::labels_connected(atoms.labels));
}

TEST_CASE("two coherent slabs and the weak middle are recovered") {
  std::vector<int> truth;
  const auto vol = blob_volume(0xb10bULL, &truth);
  const auto g = cead::build_graph(vol);
  const auto p = cead::parcellate(g, 3, 11);

  CHECK(p.n_clusters == 3);
  CHECK(cead::labels_connected(p.labels));
  std::vector<int> found;
  for (std::int32_t lab : p.labels.labels()) {
    CHECK(lab >= 1);
    CHECK(lab <= 3);
    found.push_back(int(lab));
  }
  CHECK(rand_index(truth, found) >= 0.95);

  std::size_t total = 0;
  for (const auto& c : p.clusters) total += c.members.size();
  CHECK(total == std::size_t(g.n()));
}

TEST_CASE("raising the cluster count only refines, never re-draws") {
  std::vector<int> truth;
  const auto vol = blob_volume(0xb10bULL, &truth);
  const auto g = cead::build_graph(vol);

  auto prev = cead::parcellate(g, 2, 5);
  for (int c = 3; c <= 9; ++c) {
    const auto next = cead::parcellate(g, c, 5);
    CHECK(next.n_clusters == c);
    CHECK(cead::labels_connected(next.labels));
    // every finer cluster must sit inside exactly one coarser cluster
    for (const auto& cl : next.clusters) {
      REQUIRE(!cl.members.empty());
      const std::int32_t parent =
          prev.labels.labels()[std::size_t(g.voxel_of(cl.members.front()))];
      for (std::int64_t m : cl.members)
        CHECK(prev.labels.labels()[std::size_t(g.voxel_of(m))] == parent);
    }
    prev = next;
  }
}

TEST_CASE("identical inputs and seed reproduce the identical parcellation") {
  const auto vol = random_volume(5, 4, 3, 80, 1234);
  const auto g = cead::build_graph(vol);
  const auto a = cead::parcellate(g, 6, 42);
  const auto b = cead::parcellate(g, 6, 42);
  CHECK(a.labels.labels() == b.labels.labels());
  REQUIRE(a.clusters.size() == b.clusters.size());
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    CHECK(a.clusters[i].members == b.clusters[i].members);
    CHECK(a.clusters[i].creation_cost == b.clusters[i].creation_cost);
  }
}

TEST_CASE("a graph with no positive weights peels voxels with a warning") {
  // mutually orthogonal +/-1 series (Hadamard rows 1..8): every pairwise
  // correlation is exactly zero, so no positive-weight edge survives
  const int nx = 2, ny = 2, nz = 2, nt = 16;
  const std::int64_t nvox = 8;
  std::vector<double> data(std::size_t(nvox) * nt);
  for (std::int64_t v = 0; v < nvox; ++v) {
    const unsigned row = unsigned(v) + 1;
    for (int t = 0; t < nt; ++t) {
      const int bits = __builtin_popcount(row & unsigned(t));
      data[std::size_t(v + nvox * t)] = (bits % 2 == 0) ? 1.0 : -1.0;
    }
  }
  const auto vol = cead::VolumeSeries::create({nx, ny, nz, nt}, {1.f, 1.f, 1.f}, 1.f,
                                              std::vector<std::uint8_t>(8, 1), std::move(data));
  const auto g = cead::build_graph(vol);
  REQUIRE(g.edge_count() == 0);

  const auto p = cead::parcellate(g, 4, 3);
  CHECK(p.n_clusters == 4);
  CHECK(!p.warnings.empty());
  CHECK(cead::labels_connected(p.labels));
  std::vector<std::size_t> sizes;
  for (const auto& c : p.clusters) sizes.push_back(c.members.size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{1, 1, 1, 5});
}

TEST_CASE("an isolated zero-variance voxel is peeled at zero cost") {
  const int nx = 3, ny = 3, nz = 3, nt = 50;
  cead::Rng rng(777);
  std::vector<double> common(nt);
  for (double& v : common) v = rng.normal();
  const std::int64_t nvox = 27;
  std::vector<double> data(std::size_t(nvox) * nt, 0.0);
  for (std::int64_t v = 0; v < nvox; ++v) {
    if (v == 13) continue; // center voxel: constant zero series
    for (int t = 0; t < nt; ++t)
      data[std::size_t(v + nvox * t)] = common[std::size_t(t)] + 0.2 * rng.normal();
  }
  const auto vol = cead::VolumeSeries::create({nx, ny, nz, nt}, {1.f, 1.f, 1.f}, 1.f,
                                              std::vector<std::uint8_t>(27, 1), std::move(data));
  std::vector<std::int64_t> zero_var;
  const auto g = cead::build_graph(vol, &zero_var);
  REQUIRE(zero_var == std::vector<std::int64_t>{13});

  const auto p = cead::parcellate(g, 2, 9);
  CHECK(p.n_clusters == 2);
  REQUIRE(p.clusters.size() == 2);
  CHECK(p.clusters[0].members.size() == 26);
  CHECK(p.clusters[1].members.size() == 1);
  CHECK(p.clusters[0].creation_cost == 0.0);
  CHECK(p.clusters[1].creation_cost == 0.0);
  CHECK(cead::labels_connected(p.labels));
}

TEST_CASE("parcellate validates the requested cluster count") {
  const auto vol = random_volume(3, 2, 2, 30, 4);
  const auto g = cead::build_graph(vol);
  CHECK_THROWS_AS(cead::parcellate(g, 0, 1), cead::CeadError);
  CHECK_THROWS_AS(cead::parcellate(g, int(g.n()) + 1, 1), cead::CeadError);
}

} // TEST_SUITE
