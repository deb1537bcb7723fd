#pragma once
// Voxel similarity graph: nodes are masked-in voxels, edges join 26-neighbors,
// weights are positive-truncated Pearson correlations of the voxel time series.
// Zero-weight pairs are not stored, so graph connectivity is connectivity
// through positive-weight edges.

#include "cead/common.hpp"
#include "cead/volume.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace cead {

struct GraphEdge {
  std::int64_t to = 0;
  double w = 0;
};

class SimilarityGraph {
public:
  std::int64_t n() const { return std::int64_t(coords_.size()); }
  std::int64_t edge_count() const; // undirected count
  double degree(std::int64_t i) const { return degree_[i]; }
  double total_weight() const;
  std::span<const GraphEdge> neighbors(std::int64_t i) const {
    return {edges_.data() + offsets_[i], std::size_t(offsets_[i + 1] - offsets_[i])};
  }
  const std::array<int, 3>& coord(std::int64_t i) const { return coords_[i]; }
  std::int64_t voxel_of(std::int64_t i) const { return voxel_index_[i]; }
  std::array<int, 3> grid_dims() const { return grid_dims_; }

  // construction helpers (build_graph / subgraph / tests)
  static SimilarityGraph from_edges(std::vector<std::array<int, 3>> coords,
                                    std::vector<std::int64_t> voxel_index,
                                    std::array<int, 3> grid_dims,
                                    const std::vector<std::tuple<std::int64_t, std::int64_t, double>>& undirected_edges);

private:
  std::vector<std::array<int, 3>> coords_;
  std::vector<std::int64_t> voxel_index_; // x-fastest linear voxel index per node
  std::array<int, 3> grid_dims_{};
  std::vector<std::int64_t> offsets_; // CSR, size n+1
  std::vector<GraphEdge> edges_;
  std::vector<double> degree_;
};

// Pearson weights w = max(corr, 0) over 26-neighborhoods. Voxels with zero
// time variance give weight 0 on every incident pair and are reported.
SimilarityGraph build_graph(const VolumeSeries& v,
                            std::vector<std::int64_t>* zero_variance_voxels = nullptr);

// y -> (D - W) y
std::vector<double> laplacian_apply(const SimilarityGraph& g, std::span<const double> y);

// induced subgraph; nodes are renumbered 0..k-1 in the order given
SimilarityGraph subgraph(const SimilarityGraph& g, std::span<const std::int64_t> nodes);

} // namespace cead
