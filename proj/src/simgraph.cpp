#include "cead/simgraph.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace cead {

std::int64_t SimilarityGraph::edge_count() const { return std::int64_t(edges_.size()) / 2; }

double SimilarityGraph::total_weight() const {
  double s = 0;
  for (const auto& e : edges_) s += e.w;
  return s / 2;
}

SimilarityGraph SimilarityGraph::from_edges(
    std::vector<std::array<int, 3>> coords, std::vector<std::int64_t> voxel_index,
    std::array<int, 3> grid_dims,
    const std::vector<std::tuple<std::int64_t, std::int64_t, double>>& undirected_edges) {
  SimilarityGraph g;
  g.coords_ = std::move(coords);
  g.voxel_index_ = std::move(voxel_index);
  g.grid_dims_ = grid_dims;
  const std::int64_t n = g.n();
  if (g.voxel_index_.size() != std::size_t(n))
    fail(ErrorKind::Validation, "SimilarityGraph: coords/voxel_index size mismatch");

  std::vector<std::int64_t> count(n, 0);
  for (const auto& [a, b, w] : undirected_edges) {
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
      fail(ErrorKind::Validation, "SimilarityGraph: edge endpoint out of range");
    if (!(w > 0) || !std::isfinite(w))
      fail(ErrorKind::Validation, "SimilarityGraph: edge weights must be positive and finite");
    ++count[a];
    ++count[b];
  }
  g.offsets_.assign(n + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + count[i];
  g.edges_.resize(std::size_t(g.offsets_[n]));
  std::vector<std::int64_t> cur(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& [a, b, w] : undirected_edges) {
    g.edges_[std::size_t(cur[a]++)] = {b, w};
    g.edges_[std::size_t(cur[b]++)] = {a, w};
  }
  g.degree_.assign(n, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (const auto& e : g.neighbors(i)) g.degree_[i] += e.w;
  return g;
}

SimilarityGraph build_graph(const VolumeSeries& v, std::vector<std::int64_t>* zero_variance_voxels) {
  const Dims4& dims = v.dims();
  const std::int64_t nvox = dims.n_voxels();
  const int nt = dims.nt;

  // node table over masked-in voxels, x fastest
  std::vector<std::int64_t> node_of(nvox, -1);
  std::vector<std::array<int, 3>> coords;
  std::vector<std::int64_t> voxel_index;
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) {
        std::int64_t vx = v.voxel_index(x, y, z);
        if (!v.masked_in(vx)) continue;
        node_of[vx] = std::int64_t(coords.size());
        coords.push_back({x, y, z});
        voxel_index.push_back(vx);
      }
  const std::int64_t n = std::int64_t(coords.size());

  // centered series and sds, node-major for cache-friendly dots
  std::vector<double> centered(std::size_t(n) * nt);
  std::vector<double> sd(n);
  std::vector<std::int64_t> degenerate;
  for (std::int64_t i = 0; i < n; ++i) {
    double m = 0;
    const std::int64_t vx = voxel_index[std::size_t(i)];
    for (int t = 0; t < nt; ++t) m += v.data()[vx + nvox * t];
    m /= nt;
    double ss = 0;
    for (int t = 0; t < nt; ++t) {
      double d = v.data()[vx + nvox * t] - m;
      centered[std::size_t(i) * nt + t] = d;
      ss += d * d;
    }
    sd[std::size_t(i)] = nt >= 2 ? std::sqrt(ss / (nt - 1)) : 0.0;
    if (sd[std::size_t(i)] == 0.0) degenerate.push_back(vx);
  }
  if (zero_variance_voxels) *zero_variance_voxels = degenerate;

  // forward half of the 26-neighborhood, lexicographic in (dz, dy, dx)
  std::vector<std::array<int, 3>> fwd;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && (dy < 0 || (dy == 0 && dx <= 0))) continue;
        fwd.push_back({dx, dy, dz});
      }

  std::vector<std::tuple<std::int64_t, std::int64_t, double>> edges;
  for (std::int64_t i = 0; i < n; ++i) {
    auto [x, y, z] = coords[std::size_t(i)];
    if (sd[std::size_t(i)] == 0.0) continue;
    for (const auto& d : fwd) {
      int xx = x + d[0], yy = y + d[1], zz = z + d[2];
      if (xx < 0 || yy < 0 || zz < 0 || xx >= dims.nx || yy >= dims.ny || zz >= dims.nz) continue;
      std::int64_t j = node_of[v.voxel_index(xx, yy, zz)];
      if (j < 0 || sd[std::size_t(j)] == 0.0) continue;
      const double* a = centered.data() + std::size_t(i) * nt;
      const double* b = centered.data() + std::size_t(j) * nt;
      double dot = 0;
      for (int t = 0; t < nt; ++t) dot += a[t] * b[t];
      double corr = dot / ((nt - 1) * sd[std::size_t(i)] * sd[std::size_t(j)]);
      if (corr > 0) edges.emplace_back(i, j, std::min(corr, 1.0));
    }
  }
  return SimilarityGraph::from_edges(std::move(coords), std::move(voxel_index),
                                     {dims.nx, dims.ny, dims.nz}, edges);
}

std::vector<double> laplacian_apply(const SimilarityGraph& g, std::span<const double> y) {
  if (std::int64_t(y.size()) != g.n())
    fail(ErrorKind::Validation, "laplacian_apply: vector length != node count");
  std::vector<double> out(y.size());
  for (std::int64_t i = 0; i < g.n(); ++i) {
    double wy = 0;
    for (const auto& e : g.neighbors(i)) wy += e.w * y[std::size_t(e.to)];
    out[std::size_t(i)] = g.degree(i) * y[std::size_t(i)] - wy;
  }
  return out;
}

SimilarityGraph subgraph(const SimilarityGraph& g, std::span<const std::int64_t> nodes) {
  std::vector<std::int64_t> newid(std::size_t(g.n()), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    std::int64_t i = nodes[k];
    if (i < 0 || i >= g.n()) fail(ErrorKind::Validation, "subgraph: node id out of range");
    if (newid[std::size_t(i)] != -1) fail(ErrorKind::Validation, "subgraph: duplicate node id");
    newid[std::size_t(i)] = std::int64_t(k);
  }
  std::vector<std::array<int, 3>> coords(nodes.size());
  std::vector<std::int64_t> voxel_index(nodes.size());
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> edges;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    coords[k] = g.coord(nodes[k]);
    voxel_index[k] = g.voxel_of(nodes[k]);
    for (const auto& e : g.neighbors(nodes[k])) {
      std::int64_t j = newid[std::size_t(e.to)];
      if (j > std::int64_t(k)) edges.emplace_back(std::int64_t(k), j, e.w);
    }
  }
  return SimilarityGraph::from_edges(std::move(coords), std::move(voxel_index), g.grid_dims(),
                                     edges);
}

} // namespace cead
