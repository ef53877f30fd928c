#pragma once

// Independent reference implementations and generators for property tests.
// Nothing here calls into the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// ---------------------------------------------------------------------------
// Text

// Mix of ASCII, whitespace and 2/3/4-byte code points.
inline std::string random_utf8(Rng& rng, std::size_t code_points) {
  static const std::vector<std::string> pool = {"a", "b", "z", " ", "\n", "\t", "#", "0",
                                                "\xc3\xa9",          // é
                                                "\xce\xbb",          // λ
                                                "\xe2\x82\xac",      // €
                                                "\xe6\xbc\xa2",      // 漢
                                                "\xf0\x9f\x98\x80"}; // 😀
  std::string s;
  for (std::size_t i = 0; i < code_points; ++i) s += pool[uniform(rng, 0, pool.size() - 1)];
  return s;
}

inline std::vector<std::string> split_code_points(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const std::size_t len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

struct ChunkView {
  std::string text;
  std::size_t start;
  std::size_t end;
};

// Checks coverage, overlap and reconstruction of a chunking of `text`.
// Returns a description of the first violation.
inline std::optional<std::string> check_chunking(const std::string& text, std::size_t size, std::size_t overlap,
                                                 const std::vector<ChunkView>& chunks) {
  const auto cps = split_code_points(text);
  if (cps.empty()) {
    return chunks.empty() ? std::nullopt : std::optional<std::string>("chunks for empty text");
  }
  if (chunks.empty()) return "no chunks";
  if (chunks.front().start != 0) return "first chunk does not start at 0";
  if (chunks.back().end != cps.size()) return "last chunk does not reach the end";
  std::string rebuilt;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    if (c.end <= c.start || c.end - c.start > size) return "chunk " + std::to_string(i) + " has a bad length";
    std::string expect;
    for (std::size_t k = c.start; k < c.end; ++k) expect += cps[k];
    if (expect != c.text) return "chunk " + std::to_string(i) + " text differs from its span";
    if (i + 1 < chunks.size()) {
      if (c.end - c.start != size) return "non-final chunk " + std::to_string(i) + " is short";
      const auto& next = chunks[i + 1];
      if (c.end < next.start || c.end - next.start != overlap) {
        return "overlap between " + std::to_string(i) + " and " + std::to_string(i + 1) + " is not exact";
      }
    }
    // Drop the prefix shared with the previous chunk, then append.
    const std::size_t skip = i == 0 ? 0 : chunks[i - 1].end - c.start;
    const auto piece = split_code_points(c.text);
    for (std::size_t k = skip; k < piece.size(); ++k) rebuilt += piece[k];
  }
  if (rebuilt != text) return "reconstruction differs from the original";
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Retrieval

struct Hit {
  std::string id;
  double score;
};

// Full scan, full sort, then filter and cut.
inline std::vector<Hit> full_scan_top_k(const std::vector<std::pair<std::string, std::vector<double>>>& items,
                                        const std::vector<double>& q, std::size_t k, double threshold) {
  auto norm = [](const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += static_cast<long double>(x) * x;
    return std::sqrt(static_cast<double>(s));
  };
  std::vector<Hit> all;
  for (const auto& [id, v] : items) {
    double dot = 0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * q[i];
    all.push_back({id, dot / (norm(v) * norm(q))});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  std::vector<Hit> out;
  for (const auto& h : all) {
    if (out.size() == k) break;
    if (h.score >= threshold) out.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graphs

struct Edge {
  std::size_t u;
  std::size_t v;
  double w;
};

struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;

  std::vector<std::vector<double>> matrix() const {
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    for (const auto& e : edges) {
      a[e.u][e.v] += e.w;
      if (e.u != e.v) a[e.v][e.u] += e.w;
    }
    return a;
  }
};

// Random simple weighted graph; p is the edge probability.
inline Graph random_graph(Rng& rng, std::size_t n, double p, bool integer_weights, bool self_loops = false) {
  Graph g;
  g.n = n;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = self_loops ? u : u + 1; v < n; ++v) {
      if (uniform_real(rng, 0, 1) >= p) continue;
      const double w = integer_weights ? static_cast<double>(uniform(rng, 1, 5)) : uniform_real(rng, 0.1, 3.0);
      g.edges.push_back({u, v, w});
    }
  }
  return g;
}

// Textbook double loop: Q = 1/(2m) sum_ij [A_ij - gamma k_i k_j / 2m] delta(c_i, c_j),
// with self-loops contributing 2w to A_ii.
inline double naive_modularity(const Graph& g, const std::vector<std::size_t>& labels, double gamma) {
  std::vector<std::vector<double>> a(g.n, std::vector<double>(g.n, 0.0));
  for (const auto& e : g.edges) {
    if (e.u == e.v) {
      a[e.u][e.u] += 2 * e.w;
    } else {
      a[e.u][e.v] += e.w;
      a[e.v][e.u] += e.w;
    }
  }
  std::vector<double> k(g.n, 0.0);
  double two_m = 0;
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) k[i] += a[i][j];
    two_m += k[i];
  }
  if (two_m == 0) return 0.0;
  double q = 0;
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      if (labels[i] == labels[j]) q += a[i][j] - gamma * k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

// Calls f on every set partition of {0..n-1} as restricted growth strings.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> a(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t max_label) {
    if (i == n) {
      f(a);
      return;
    }
    for (std::size_t l = 0; l <= max_label + 1; ++l) {
      a[i] = l;
      rec(i + 1, std::max(max_label, l));
    }
  };
  if (n == 0) return;
  a[0] = 0;
  if (n == 1) {
    f(a);
    return;
  }
  rec(1, 0);
}

inline std::pair<double, std::vector<std::size_t>> exhaustive_optimum(const Graph& g, double gamma) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> arg;
  for_each_partition(g.n, [&](const std::vector<std::size_t>& p) {
    const double q = naive_modularity(g, p, gamma);
    if (q > best + 1e-12) {
      best = q;
      arg = p;
    }
  });
  return {best, arg};
}

// Every community induces a connected subgraph (BFS restricted to members).
inline bool communities_connected(const Graph& g, const std::vector<std::size_t>& labels) {
  std::vector<std::vector<std::size_t>> adj(g.n);
  for (const auto& e : g.edges) {
    if (e.u == e.v || e.w <= 0) continue;
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  std::vector<bool> seen_label(*std::max_element(labels.begin(), labels.end()) + 1, false);
  for (std::size_t s = 0; s < g.n; ++s) {
    if (seen_label[labels[s]]) continue;
    seen_label[labels[s]] = true;
    std::vector<bool> reached(g.n, false);
    std::vector<std::size_t> stack = {s};
    reached[s] = true;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : adj[v]) {
        if (!reached[w] && labels[w] == labels[s]) {
          reached[w] = true;
          stack.push_back(w);
        }
      }
    }
    for (std::size_t v = 0; v < g.n; ++v) {
      if (labels[v] == labels[s] && !reached[v]) return false;
    }
  }
  return true;
}

// Same grouping regardless of label values.
inline bool same_grouping(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Statistics

inline double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
