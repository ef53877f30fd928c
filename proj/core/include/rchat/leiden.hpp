#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace rchat {

// Undirected weighted graph over nodes 0..n-1. Parallel edges accumulate.
class WeightedGraph {
 public:
  explicit WeightedGraph(std::size_t n = 0);

  std::size_t size() const { return adj_.size(); }
  void add_edge(std::size_t u, std::size_t v, double w);

  // Neighbours other than v itself.
  const std::map<std::size_t, double>& neighbors(std::size_t v) const { return adj_.at(v); }
  double self_loop(std::size_t v) const { return self_.at(v); }
  // Weighted degree; a self-loop counts twice.
  double degree(std::size_t v) const;
  // Sum of edge weights, each edge (and self-loop) once.
  double total_weight() const { return total_; }
  // (u, v, w) with u <= v, sorted.
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges() const;

 private:
  std::vector<std::map<std::size_t, double>> adj_;
  std::vector<double> self_;
  double total_ = 0.0;
};

// Community label per node. Labels are arbitrary; equal labels share a community.
using Partition = std::vector<std::size_t>;

// Q = sum_c [ w_in(c)/W - resolution * (deg(c) / 2W)^2 ]. Returns 0 for W = 0.
double modularity(const WeightedGraph& graph, const Partition& partition, double resolution);

// Labels renumbered 0.. in order of first appearance.
Partition normalize_partition(const Partition& partition);

struct PhaseQuality {
  int iteration = 0;
  std::string phase;  // init, move, refine, aggregate, split
  double quality = 0.0;
};

struct LeidenResult {
  std::vector<Partition> levels;  // normalized; levels[0] is the coarsest
  std::vector<PhaseQuality> quality_log;
};

inline constexpr double kRefineRandomness = 0.01;

// Local moving, refinement and aggregation, repeated until no node of the
// aggregate graph moves. Level 0 is the final partition; deeper levels are the
// refined partitions of earlier iterations, finest last.
LeidenResult leiden(const WeightedGraph& graph, double resolution, std::uint64_t seed, int max_levels);

// Splits every community into its connected components.
Partition split_disconnected(const WeightedGraph& graph, const Partition& partition);

}  // namespace rchat
