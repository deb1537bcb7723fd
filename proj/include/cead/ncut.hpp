#pragma once
// Recursive normalized-cut parcellation of a voxel similarity graph.
//
// A bipartition (P, Q) of the node set R is scored by
//   ncut(P, Q) = cut(P, Q) / assoc(P, R) + cut(P, Q) / assoc(Q, R)
// where cut is the total weight crossing the split and assoc(S, R) is the
// total weight incident to S. spectral_bipartition relaxes the minimization
// to the second-smallest generalized eigenpair of (D - W) y = lambda D y and
// discretizes by sweeping thresholds over the eigenvector. parcellate applies
// bipartitions best-first until the requested number of clusters is reached,
// keeping every cluster spatially contiguous under 26-adjacency.

#include "cead/common.hpp"
#include "cead/simgraph.hpp"
#include "cead/volume.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cead {

struct BipartitionResult {
  std::vector<std::uint8_t> side; // 0 or 1 per node; both sides non-empty
  double ncut_cost = 0.0;         // exact cost of `side`
  double eigenvalue = 0.0;        // second-smallest generalized eigenvalue
};

// Exact normalized-cut cost of a two-sided assignment (entries 0/1).
// A side with zero total association yields +infinity (never preferable).
// Throws Validation if the assignment length mismatches or a side is empty.
double ncut_cost(const SimilarityGraph& g, std::span<const std::uint8_t> side);

// Best threshold discretization of the relaxed spectral solution.
// Requires a connected graph with at least 2 nodes and positive total weight.
// Deterministic for a fixed seed (the seed only picks the iteration start).
// Throws Validation on precondition violations, Numerical if the eigensolver
// fails to converge.
BipartitionResult spectral_bipartition(const SimilarityGraph& g,
                                       std::uint64_t seed = 0x9e3779b97f4a7c15ull);

struct ClusterSummary {
  int label = 0;                        // final label, 1-based
  std::vector<std::int64_t> members;    // graph node ids, ascending
  double creation_cost = 0.0;           // cut cost of the split that made it
};

struct Parcellation {
  LabelVolume labels;                   // 0 = background, 1..C = clusters
  int n_clusters = 0;
  std::vector<ClusterSummary> clusters; // size n_clusters, by label
  std::vector<std::string> warnings;
};

// Splits the graph into exactly `n_clusters` spatially contiguous clusters.
// Best-first: the cluster whose best bipartition has the lowest cost is split
// next (ties broken by creation order). Graph-disconnected clusters are
// peeled along their components at cost zero. Sides that come out spatially
// disconnected are decomposed into their 26-adjacency components; if that
// overshoots the target, the smallest pieces of the final split are merged
// into their smallest spatially adjacent sibling until the count is exact.
// Deterministic given graph, target, and seed.
Parcellation parcellate(const SimilarityGraph& g, int n_clusters, std::uint64_t seed);

} // namespace cead
