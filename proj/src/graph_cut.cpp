#include "sunroof/graph_cut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "sunroof/raster.hpp"

namespace sunroof {

MaxFlow::MaxFlow(std::size_t nodes) : adjacency_(nodes) {}

std::size_t MaxFlow::add_node() {
  adjacency_.emplace_back();
  return adjacency_.size() - 1;
}

void MaxFlow::add_edge(std::size_t from, std::size_t to, double capacity, double reverse_capacity) {
  if (capacity < 0 || reverse_capacity < 0 || !std::isfinite(capacity) ||
      !std::isfinite(reverse_capacity)) {
    throw ContractError("max-flow capacities must be finite and non-negative");
  }
  if (from == to) return;
  adjacency_[from].push_back({to, adjacency_[to].size(), capacity});
  adjacency_[to].push_back({from, adjacency_[from].size() - 1, reverse_capacity});
  epsilon_ = std::max(epsilon_, 1e-13 * std::max(capacity, reverse_capacity));
}

bool MaxFlow::build_levels(std::size_t source, std::size_t sink) {
  level_.assign(adjacency_.size(), -1);
  std::queue<std::size_t> queue;
  level_[source] = 0;
  queue.push(source);
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop();
    for (const Edge& e : adjacency_[u]) {
      if (e.capacity > epsilon_ && level_[e.to] < 0) {
        level_[e.to] = level_[u] + 1;
        queue.push(e.to);
      }
    }
  }
  return level_[sink] >= 0;
}

double MaxFlow::push(std::size_t node, std::size_t sink, double limit) {
  if (node == sink) return limit;
  for (std::size_t& k = cursor_[node]; k < adjacency_[node].size(); ++k) {
    Edge& e = adjacency_[node][k];
    if (e.capacity <= epsilon_ || level_[e.to] != level_[node] + 1) continue;
    const double pushed = push(e.to, sink, std::min(limit, e.capacity));
    if (pushed > 0.0) {
      e.capacity -= pushed;
      adjacency_[e.to][e.reverse].capacity += pushed;
      return pushed;
    }
  }
  return 0.0;
}

double MaxFlow::solve(std::size_t source, std::size_t sink) {
  double flow = 0.0;
  while (build_levels(source, sink)) {
    cursor_.assign(adjacency_.size(), 0);
    while (true) {
      const double pushed = push(source, sink, std::numeric_limits<double>::infinity());
      if (pushed <= 0.0) break;
      flow += pushed;
    }
  }
  return flow;
}

std::vector<std::uint8_t> MaxFlow::reaches_sink(std::size_t sink) const {
  std::vector<std::uint8_t> reach(adjacency_.size(), 0);
  std::queue<std::size_t> queue;
  reach[sink] = 1;
  queue.push(sink);
  // Walk residual edges backwards: u reaches v when residual(u -> v) > 0,
  // and residual(u -> v) is the capacity of the edge stored at u.
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop();
    for (const Edge& back : adjacency_[v]) {
      const std::size_t u = back.to;
      const Edge& forward = adjacency_[u][back.reverse];
      if (!reach[u] && forward.capacity > epsilon_) {
        reach[u] = 1;
        queue.push(u);
      }
    }
  }
  return reach;
}

BinaryEnergy::BinaryEnergy(std::size_t nodes) : unary0_(nodes, 0.0), unary1_(nodes, 0.0) {}

void BinaryEnergy::add_unary(std::size_t i, double cost0, double cost1) {
  unary0_[i] += cost0;
  unary1_[i] += cost1;
}

void BinaryEnergy::add_pairwise(std::size_t i, std::size_t j, double e00, double e01, double e10,
                                double e11) {
  const double lambda = e01 + e10 - e00 - e11;
  const double scale = std::abs(e00) + std::abs(e01) + std::abs(e10) + std::abs(e11);
  if (lambda < -1e-12 * (1.0 + scale)) {
    throw ContractError("pairwise term between nodes " + std::to_string(i) + " and " +
                        std::to_string(j) + " is not submodular");
  }
  pairs_.push_back({i, j, e00, e01, e10, e11});
}

std::vector<std::uint8_t> BinaryEnergy::minimize() const {
  const std::size_t n = size();
  const std::size_t source = n;
  const std::size_t sink = n + 1;
  MaxFlow flow(n + 2);
  std::vector<double> u0 = unary0_;
  std::vector<double> u1 = unary1_;
  // E = A + (C-A) x_i + (D-C) x_j + (B+C-A-D)(1-x_i) x_j
  for (const Pair& p : pairs_) {
    u1[p.i] += p.e10 - p.e00;
    u1[p.j] += p.e11 - p.e10;
    const double lambda = std::max(0.0, p.e01 + p.e10 - p.e00 - p.e11);
    if (lambda > 0.0) flow.add_edge(p.i, p.j, lambda);
  }
  // x = 1 means the node ends on the sink side.
  for (std::size_t i = 0; i < n; ++i) {
    const double d = u1[i] - u0[i];
    if (d > 0.0) {
      flow.add_edge(source, i, d);
    } else if (d < 0.0) {
      flow.add_edge(i, sink, -d);
    }
  }
  flow.solve(source, sink);
  std::vector<std::uint8_t> reach = flow.reaches_sink(sink);
  reach.resize(n);
  return reach;
}

double BinaryEnergy::evaluate(std::span<const std::uint8_t> labels) const {
  double e = constant_;
  for (std::size_t i = 0; i < size(); ++i) e += labels[i] ? unary1_[i] : unary0_[i];
  for (const Pair& p : pairs_) {
    const bool a = labels[p.i] != 0;
    const bool b = labels[p.j] != 0;
    e += a ? (b ? p.e11 : p.e10) : (b ? p.e01 : p.e00);
  }
  return e;
}

}  // namespace sunroof
