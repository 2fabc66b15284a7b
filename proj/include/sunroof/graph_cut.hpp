#pragma once

// Exact minimization of submodular binary energies by s-t minimum cut.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sunroof {

/// Dinic max-flow over a directed graph with double capacities.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes);

  std::size_t add_node();
  void add_edge(std::size_t from, std::size_t to, double capacity, double reverse_capacity = 0.0);

  double solve(std::size_t source, std::size_t sink);

  /// After solve(): true when the node can still reach `sink` in the residual
  /// graph. These nodes form the smallest possible sink side of a minimum cut.
  std::vector<std::uint8_t> reaches_sink(std::size_t sink) const;

  std::size_t node_count() const { return adjacency_.size(); }

 private:
  struct Edge {
    std::size_t to;
    std::size_t reverse;
    double capacity;
  };
  bool build_levels(std::size_t source, std::size_t sink);
  double push(std::size_t node, std::size_t sink, double limit);

  std::vector<std::vector<Edge>> adjacency_;
  std::vector<int> level_;
  std::vector<std::size_t> cursor_;
  double epsilon_ = 1e-12;
};

/// E(x) = const + sum_i U_i(x_i) + sum_(i,j) V_ij(x_i, x_j) over x in {0,1}^n.
/// Pairwise terms must satisfy V(0,0) + V(1,1) <= V(0,1) + V(1,0).
class BinaryEnergy {
 public:
  explicit BinaryEnergy(std::size_t nodes);

  std::size_t size() const { return unary0_.size(); }

  void add_constant(double c) { constant_ += c; }
  void add_unary(std::size_t i, double cost0, double cost1);
  /// Throws ContractError for non-submodular terms (beyond a small tolerance).
  void add_pairwise(std::size_t i, std::size_t j, double e00, double e01, double e10, double e11);

  /// Globally minimal labeling. Where several labelings are optimal, nodes
  /// take label 0 unless label 1 is forced.
  std::vector<std::uint8_t> minimize() const;

  double evaluate(std::span<const std::uint8_t> labels) const;

 private:
  struct Pair {
    std::size_t i, j;
    double e00, e01, e10, e11;
  };
  double constant_ = 0.0;
  std::vector<double> unary0_;
  std::vector<double> unary1_;
  std::vector<Pair> pairs_;
};

}  // namespace sunroof
