#include "rchat/leiden.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "rchat/errors.hpp"

namespace rchat {

WeightedGraph::WeightedGraph(std::size_t n) : adj_(n), self_(n, 0.0) {}

void WeightedGraph::add_edge(std::size_t u, std::size_t v, double w) {
  if (u >= size() || v >= size()) throw Error(ErrorCode::invalid_argument, "edge endpoint out of range");
  if (!std::isfinite(w) || w < 0) throw Error(ErrorCode::invalid_argument, "edge weight must be finite and >= 0");
  if (u == v) {
    self_[u] += w;
  } else {
    adj_[u][v] += w;
    adj_[v][u] += w;
  }
  total_ += w;
}

double WeightedGraph::degree(std::size_t v) const {
  double d = 2.0 * self_.at(v);
  for (const auto& [u, w] : adj_.at(v)) d += w;
  return d;
}

std::vector<std::tuple<std::size_t, std::size_t, double>> WeightedGraph::edges() const {
  std::vector<std::tuple<std::size_t, std::size_t, double>> out;
  for (std::size_t v = 0; v < size(); ++v) {
    if (self_[v] > 0) out.emplace_back(v, v, self_[v]);
    for (const auto& [u, w] : adj_[v]) {
      if (u > v) out.emplace_back(v, u, w);
    }
  }
  return out;
}

Partition normalize_partition(const Partition& partition) {
  std::map<std::size_t, std::size_t> ids;
  Partition out(partition.size());
  for (std::size_t i = 0; i < partition.size(); ++i) {
    out[i] = ids.emplace(partition[i], ids.size()).first->second;
  }
  return out;
}

double modularity(const WeightedGraph& graph, const Partition& partition, double resolution) {
  if (partition.size() != graph.size()) {
    throw Error(ErrorCode::invalid_partition, "partition covers " + std::to_string(partition.size()) +
                                                  " nodes, graph has " + std::to_string(graph.size()));
  }
  if (!(resolution > 0)) throw Error(ErrorCode::invalid_argument, "resolution must be > 0");
  const double W = graph.total_weight();
  if (W <= 0) return 0.0;
  const auto labels = normalize_partition(partition);
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> w_in(k, 0.0), deg(k, 0.0);
  for (const auto& [u, v, w] : graph.edges()) {
    if (labels[u] == labels[v]) w_in[labels[u]] += w;
  }
  for (std::size_t v = 0; v < graph.size(); ++v) deg[labels[v]] += graph.degree(v);
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double share = deg[c] / (2.0 * W);
    q += w_in[c] / W - resolution * share * share;
  }
  return q;
}

Partition split_disconnected(const WeightedGraph& graph, const Partition& partition) {
  const auto labels = normalize_partition(partition);
  Partition out(labels.size(), 0);
  std::vector<bool> seen(labels.size(), false);
  std::size_t next = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      out[v] = next;
      for (const auto& [u, w] : graph.neighbors(v)) {
        if (!seen[u] && w > 0 && labels[u] == labels[s]) {
          seen[u] = true;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  return out;
}

namespace {

constexpr double kEps = 1e-12;
constexpr int kMaxIterations = 64;

// Compact form used inside one aggregation level.
struct LevelGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // no self-loops
  std::vector<double> self;
  std::vector<double> deg;
  double two_w = 0.0;

  std::size_t size() const { return adj.size(); }
};

LevelGraph from_graph(const WeightedGraph& g) {
  LevelGraph lg;
  lg.adj.resize(g.size());
  lg.self.resize(g.size());
  lg.deg.resize(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    lg.adj[v].assign(g.neighbors(v).begin(), g.neighbors(v).end());
    lg.self[v] = g.self_loop(v);
    lg.deg[v] = g.degree(v);
  }
  lg.two_w = 2.0 * g.total_weight();
  return lg;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  // Uniform in [0, 1) from the top 53 bits.
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

std::size_t count_labels(const Partition& p) {
  std::vector<bool> used(p.size(), false);
  std::size_t n = 0;
  for (auto c : p) {
    if (!used[c]) {
      used[c] = true;
      ++n;
    }
  }
  return n;
}

// Labels in `comm` must lie in [0, n).
void move_nodes_fast(const LevelGraph& g, Partition& comm, double gamma, Rng& rng) {
  const std::size_t n = g.size();
  if (g.two_w <= 0) return;
  std::vector<double> tot(n, 0.0);
  std::vector<std::size_t> members(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    tot[comm[v]] += g.deg[v];
    ++members[comm[v]];
  }
  std::vector<std::size_t> empty;
  for (std::size_t c = n; c-- > 0;) {
    if (members[c] == 0) empty.push_back(c);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::deque<std::size_t> queue(order.begin(), order.end());
  std::vector<bool> queued(n, true);
  std::vector<double> link(n, 0.0);
  std::vector<bool> touched_flag(n, false);
  std::vector<std::size_t> touched;

  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    queued[v] = false;
    const auto own = comm[v];
    tot[own] -= g.deg[v];
    --members[own];

    for (const auto& [u, w] : g.adj[v]) {
      const auto c = comm[u];
      if (!touched_flag[c]) {
        touched_flag[c] = true;
        touched.push_back(c);
      }
      link[c] += w;
    }
    auto gain = [&](std::size_t c) { return link[c] - gamma * g.deg[v] * tot[c] / g.two_w; };
    auto best = own;
    double best_gain = gain(own);
    for (auto c : touched) {
      const double gc = gain(c);
      if (gc > best_gain + kEps) {
        best = c;
        best_gain = gc;
      }
    }
    if (members[own] > 0 && 0.0 > best_gain + kEps && !empty.empty()) {
      best = empty.back();
      empty.pop_back();
    }
    for (auto c : touched) {
      link[c] = 0.0;
      touched_flag[c] = false;
    }
    touched.clear();

    comm[v] = best;
    tot[best] += g.deg[v];
    ++members[best];
    if (best != own) {
      if (members[own] == 0) empty.push_back(own);
      for (const auto& [u, w] : g.adj[v]) {
        if (!queued[u] && comm[u] != best) {
          queued[u] = true;
          queue.push_back(u);
        }
      }
    }
  }
}

// Merges singletons inside each community of `comm` into well-connected
// subcommunities. Returns labels in [0, n).
Partition refine(const LevelGraph& g, const Partition& comm, double gamma, Rng& rng) {
  const std::size_t n = g.size();
  Partition refined(n);
  for (std::size_t v = 0; v < n; ++v) refined[v] = v;
  if (g.two_w <= 0) return refined;

  std::vector<double> tot(n), ext(n, 0.0);
  std::vector<std::size_t> size(n, 1);
  for (std::size_t v = 0; v < n; ++v) tot[v] = g.deg[v];

  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t v = 0; v < n; ++v) groups[comm[v]].push_back(v);
  std::vector<double> group_tot(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) group_tot[comm[v]] += g.deg[v];
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [u, w] : g.adj[v]) {
      if (comm[u] == comm[v]) ext[v] += w;
    }
  }

  std::vector<double> link(n, 0.0);
  std::vector<bool> touched_flag(n, false);
  std::vector<std::size_t> touched;
  std::vector<std::pair<std::size_t, double>> candidates;

  for (auto& group : groups) {
    if (group.size() < 2) continue;
    const double total = group_tot[comm[group.front()]];
    auto well_connected = [&](double inner_ext, double t) {
      return inner_ext + kEps >= gamma * t * (total - t) / g.two_w;
    };
    rng.shuffle(group);
    for (const auto v : group) {
      const auto own = refined[v];
      if (size[own] != 1) continue;
      if (!well_connected(ext[own], tot[own])) continue;

      for (const auto& [u, w] : g.adj[v]) {
        if (comm[u] != comm[v]) continue;
        const auto c = refined[u];
        if (c == own) continue;
        if (!touched_flag[c]) {
          touched_flag[c] = true;
          touched.push_back(c);
        }
        link[c] += w;
      }
      candidates.clear();
      candidates.emplace_back(own, 0.0);
      double best = 0.0;
      for (auto c : touched) {
        if (!well_connected(ext[c], tot[c])) continue;
        const double gc = link[c] - gamma * g.deg[v] * tot[c] / g.two_w;
        if (gc < 0) continue;
        candidates.emplace_back(c, gc);
        best = std::max(best, gc);
      }
      std::size_t chosen = own;
      if (candidates.size() > 1) {
        double sum = 0.0;
        for (auto& [c, gc] : candidates) {
          gc = std::exp((gc - best) / kRefineRandomness);
          sum += gc;
        }
        double r = rng.unit() * sum;
        chosen = candidates.back().first;
        for (const auto& [c, p] : candidates) {
          if (r < p) {
            chosen = c;
            break;
          }
          r -= p;
        }
      }
      if (chosen != own) {
        ext[chosen] = ext[chosen] + ext[own] - 2.0 * link[chosen];
        tot[chosen] += tot[own];
        size[chosen] += 1;
        tot[own] = 0.0;
        size[own] = 0;
        refined[v] = chosen;
      }
      for (auto c : touched) {
        link[c] = 0.0;
        touched_flag[c] = false;
      }
      touched.clear();
    }
  }
  return refined;
}

// Collapses each `groups` label into one node. `dense` receives the mapping
// from old label to new node id (ordered by first node).
LevelGraph aggregate(const LevelGraph& g, const Partition& groups, std::vector<std::size_t>& dense) {
  const std::size_t n = g.size();
  dense.assign(n, static_cast<std::size_t>(-1));
  std::size_t m = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (dense[groups[v]] == static_cast<std::size_t>(-1)) dense[groups[v]] = m++;
  }
  std::vector<std::map<std::size_t, double>> adj(m);
  LevelGraph out;
  out.self.assign(m, 0.0);
  out.deg.assign(m, 0.0);
  out.two_w = g.two_w;
  for (std::size_t v = 0; v < n; ++v) {
    const auto a = dense[groups[v]];
    out.self[a] += g.self[v];
    out.deg[a] += g.deg[v];
    for (const auto& [u, w] : g.adj[v]) {
      if (u < v) continue;
      const auto b = dense[groups[u]];
      if (a == b) {
        out.self[a] += w;
      } else {
        adj[a][b] += w;
        adj[b][a] += w;
      }
    }
  }
  out.adj.resize(m);
  for (std::size_t a = 0; a < m; ++a) out.adj[a].assign(adj[a].begin(), adj[a].end());
  return out;
}

bool all_singletons(const Partition& p) { return count_labels(normalize_partition(p)) == p.size(); }

}  // namespace

LeidenResult leiden(const WeightedGraph& graph, double resolution, std::uint64_t seed, int max_levels) {
  if (graph.size() == 0) throw Error(ErrorCode::empty_graph, "leiden: graph has no nodes");
  if (!(resolution > 0)) throw Error(ErrorCode::invalid_argument, "resolution must be > 0");
  if (max_levels < 1) throw Error(ErrorCode::invalid_argument, "max_levels must be >= 1");

  Rng rng(seed);
  LeidenResult result;
  LevelGraph g = from_graph(graph);
  const std::size_t n0 = graph.size();
  std::vector<std::size_t> membership(n0);  // original node -> node of g
  for (std::size_t v = 0; v < n0; ++v) membership[v] = v;
  Partition comm = membership;  // community per node of g

  auto flat = [&](const Partition& p) {
    Partition out(n0);
    for (std::size_t v = 0; v < n0; ++v) out[v] = p[membership[v]];
    return out;
  };
  auto log = [&](int iteration, const char* phase, const Partition& p) {
    result.quality_log.push_back({iteration, phase, modularity(graph, p, resolution)});
  };

  std::vector<Partition> refined_history;
  log(0, "init", comm);
  for (int it = 1; it <= kMaxIterations; ++it) {
    move_nodes_fast(g, comm, resolution, rng);
    log(it, "move", flat(comm));
    if (count_labels(comm) == g.size()) break;

    auto refined = refine(g, comm, resolution, rng);
    if (count_labels(refined) == g.size()) refined = comm;  // nothing merged; aggregate by the partition itself
    log(it, "refine", flat(comm));

    std::vector<std::size_t> dense;
    LevelGraph next = aggregate(g, refined, dense);
    Partition next_comm(next.size());
    for (std::size_t v = 0; v < g.size(); ++v) next_comm[dense[refined[v]]] = comm[v];
    // Keep labels inside [0, m) for move_nodes_fast.
    next_comm = normalize_partition(next_comm);
    for (auto& m : membership) m = dense[refined[m]];
    g = std::move(next);
    comm = std::move(next_comm);
    Partition identity(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) identity[v] = v;
    refined_history.push_back(flat(identity));
    log(it, "aggregate", flat(comm));
  }

  Partition final_partition = flat(comm);
  const auto split = split_disconnected(graph, final_partition);
  if (normalize_partition(split) != normalize_partition(final_partition)) {
    final_partition = split;
    log(static_cast<int>(result.quality_log.back().iteration), "split", final_partition);
  }

  std::vector<Partition> levels{normalize_partition(final_partition)};
  for (auto it = refined_history.rbegin(); it != refined_history.rend(); ++it) {
    if (static_cast<int>(levels.size()) >= max_levels) break;
    auto p = normalize_partition(split_disconnected(graph, *it));
    if (p == levels.back() || all_singletons(p)) continue;
    levels.push_back(std::move(p));
  }
  result.levels = std::move(levels);
  return result;
}

}  // namespace rchat
