#include "doctest.h"

#include "cead/simgraph.hpp"
#include "cead/volume.hpp"

#include <cmath>
#include <map>

using namespace cead;

namespace {

VolumeSeries volume_from_series(Dims4 dims, const std::vector<std::vector<double>>& series,
                                std::vector<std::uint8_t> mask = {}) {
  std::int64_t nvox = dims.n_voxels();
  if (mask.empty()) mask.assign(std::size_t(nvox), 1);
  std::vector<double> data(std::size_t(dims.n_values()), 0.0);
  for (std::int64_t v = 0; v < nvox; ++v) {
    if (!mask[std::size_t(v)]) continue;
    for (int t = 0; t < dims.nt; ++t) data[std::size_t(v + nvox * t)] = series[std::size_t(v)][std::size_t(t)];
  }
  return VolumeSeries::create(dims, {3, 3, 3}, 2, std::move(mask), std::move(data));
}

// independent dense oracle: all-pairs truncated correlations over 26-neighborhoods
std::vector<std::vector<double>> dense_weights(const VolumeSeries& v) {
  const auto& d = v.dims();
  std::int64_t nvox = d.n_voxels();
  std::vector<std::int64_t> masked;
  for (std::int64_t i = 0; i < nvox; ++i)
    if (v.masked_in(i)) masked.push_back(i);
  auto coord = [&](std::int64_t vx) {
    int x = int(vx % d.nx), y = int((vx / d.nx) % d.ny), z = int(vx / (std::int64_t(d.nx) * d.ny));
    return std::array<int, 3>{x, y, z};
  };
  std::size_t n = masked.size();
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      auto ca = coord(masked[a]), cb = coord(masked[b]);
      int dx = std::abs(ca[0] - cb[0]), dy = std::abs(ca[1] - cb[1]), dz = std::abs(ca[2] - cb[2]);
      if (dx > 1 || dy > 1 || dz > 1) continue;
      auto sa = v.series_at(masked[a]), sb = v.series_at(masked[b]);
      if (sample_sd(sa) == 0 || sample_sd(sb) == 0) continue;
      double c = pearson_corr(sa, sb);
      if (c > 0) w[a][b] = w[b][a] = std::min(c, 1.0);
    }
  return w;
}

} // namespace

TEST_SUITE("simgraph") {

TEST_CASE("identical neighbor series give weight 1, anticorrelated give no edge") {
  std::vector<double> up{1, 2, 3, 5, 4, 6};
  std::vector<double> down{6, 4, 5, 3, 2, 1}; // strongly negative corr with up
  VolumeSeries v = volume_from_series({3, 1, 1, 6}, {up, up, down});
  SimilarityGraph g = build_graph(v);
  REQUIRE(g.n() == 3);
  REQUIRE(g.neighbors(0).size() == 1);
  CHECK(g.neighbors(0)[0].to == 1);
  CHECK(g.neighbors(0)[0].w == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.neighbors(2).empty()); // negative corr truncated to 0, edge dropped
}

TEST_CASE("two-node Laplacian at w=0.5 maps (1,-1) to (1,-1)") {
  // b = 0.5*z1 + sqrt(0.75)*z2 with orthogonal equal-variance z1, z2 -> corr exactly 0.5
  std::vector<double> z1{1, 1, -1, -1};
  std::vector<double> z2{1, -1, 1, -1};
  std::vector<double> a = z1, b(4);
  for (int t = 0; t < 4; ++t) b[std::size_t(t)] = 0.5 * z1[std::size_t(t)] + std::sqrt(0.75) * z2[std::size_t(t)];
  VolumeSeries v = volume_from_series({2, 1, 1, 4}, {a, b});
  SimilarityGraph g = build_graph(v);
  REQUIRE(g.n() == 2);
  REQUIRE(g.neighbors(0).size() == 1);
  CHECK(g.neighbors(0)[0].w == doctest::Approx(0.5).epsilon(1e-12));
  auto ly = laplacian_apply(g, std::vector<double>{1.0, -1.0});
  CHECK(ly[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ly[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("laplacian_apply matches a dense (D-W)y oracle on random volumes") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Dims4 dims{3, 3, 2, 24};
    std::int64_t nvox = dims.n_voxels();
    std::vector<std::vector<double>> series(std::size_t(nvox), std::vector<double>(std::size_t(dims.nt)));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(nvox), 0);
    for (std::int64_t i = 0; i < nvox; ++i) {
      mask[std::size_t(i)] = rng.uniform() < 0.85 ? 1 : 0;
      for (int t = 0; t < dims.nt; ++t) series[std::size_t(i)][std::size_t(t)] = rng.normal();
    }
    if (mask[0] == 0) mask[0] = 1; // keep at least one node
    VolumeSeries v = volume_from_series(dims, series, mask);
    SimilarityGraph g = build_graph(v);
    auto w = dense_weights(v);
    REQUIRE(std::int64_t(w.size()) == g.n());

    std::vector<double> y(std::size_t(g.n()));
    for (auto& x : y) x = rng.normal();
    auto got = laplacian_apply(g, y);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double deg = 0, wy = 0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        deg += w[i][j];
        wy += w[i][j] * y[j];
      }
      CHECK(got[i] == doctest::Approx(deg * y[i] - wy).epsilon(1e-10));
    }
  }
}

TEST_CASE("weights are symmetric and in [0,1], neighbor lists bounded by 26") {
  Rng rng(99);
  Dims4 dims{4, 3, 3, 30};
  std::int64_t nvox = dims.n_voxels();
  std::vector<std::vector<double>> series(std::size_t(nvox), std::vector<double>(std::size_t(dims.nt)));
  for (auto& s : series)
    for (auto& x : s) x = rng.normal();
  SimilarityGraph g = build_graph(volume_from_series(dims, series));

  for (std::int64_t i = 0; i < g.n(); ++i) {
    CHECK(g.neighbors(i).size() <= 26);
    for (const auto& e : g.neighbors(i)) {
      CHECK(e.w > 0);
      CHECK(e.w <= 1.0);
      bool found = false; // symmetric counterpart
      for (const auto& back : g.neighbors(e.to))
        if (back.to == i && back.w == e.w) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("zero-variance voxels are flagged and isolated") {
  std::vector<double> flat{2, 2, 2, 2};
  std::vector<double> live{1, 2, 3, 4};
  VolumeSeries v = volume_from_series({2, 1, 1, 4}, {flat, live});
  std::vector<std::int64_t> flagged;
  SimilarityGraph g = build_graph(v, &flagged);
  REQUIRE(flagged.size() == 1);
  CHECK(flagged[0] == 0);
  CHECK(g.neighbors(0).empty());
  CHECK(g.neighbors(1).empty());
  CHECK(g.degree(0) == 0.0);
}

TEST_CASE("subgraph induces edges, degrees and coordinates") {
  std::vector<double> s0{1, 2, 3, 4, 5, 7};
  std::vector<double> s1{1, 2, 3, 4, 6, 6};
  std::vector<double> s2{2, 2, 3, 5, 5, 8};
  std::vector<double> s3{1, 3, 3, 4, 5, 9};
  VolumeSeries v = volume_from_series({4, 1, 1, 6}, {s0, s1, s2, s3});
  SimilarityGraph g = build_graph(v);

  std::vector<std::int64_t> keep{1, 2, 3};
  SimilarityGraph h = subgraph(g, keep);
  REQUIRE(h.n() == 3);
  CHECK(h.coord(0)[0] == 1);
  CHECK(h.voxel_of(2) == 3);
  // edge (1,2) of g must appear as (0,1) of h with identical weight
  double wg = 0, wh = 0;
  for (const auto& e : g.neighbors(1))
    if (e.to == 2) wg = e.w;
  for (const auto& e : h.neighbors(0))
    if (e.to == 1) wh = e.w;
  CHECK(wg > 0);
  CHECK(wh == doctest::Approx(wg).epsilon(1e-15));
  // no edge may leave the kept set
  for (std::int64_t i = 0; i < h.n(); ++i)
    for (const auto& e : h.neighbors(i)) CHECK(e.to < 3);

  SimilarityGraph empty = subgraph(g, std::vector<std::int64_t>{});
  CHECK(empty.n() == 0);
}

TEST_CASE("only masked-in voxels become nodes") {
  std::vector<double> s{1, 2, 3, 4};
  VolumeSeries v = volume_from_series({3, 1, 1, 4}, {s, {0, 0, 0, 0}, s}, {1, 0, 1});
  SimilarityGraph g = build_graph(v);
  CHECK(g.n() == 2);
  CHECK(g.voxel_of(0) == 0);
  CHECK(g.voxel_of(1) == 2);
  // nodes 0 and 2 are not 26-adjacent (distance 2 on x): no edges
  CHECK(g.edge_count() == 0);
}

} // TEST_SUITE
