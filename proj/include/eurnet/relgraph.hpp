#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eurnet/tensor.hpp"

namespace eurnet {

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t rel = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class DuplicateEdgeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DegreeProfile {
  std::vector<double> per_relation;  // mean in-degree for each relation
  double overall = 0.0;              // mean over relations
};

/// Multi-relational directed graph with destination-grouped storage.
///
/// Edges are grouped into slots (v, r), one per destination node and relation,
/// laid out node-major: slot index v·|R| + r. Sources inside a slot are kept
/// in ascending order. The canonical edge enumeration order is therefore
/// (dst, rel, src) ascending.
class RelGraph {
 public:
  RelGraph() = default;

  /// Builds a graph. Duplicate (src, dst, rel) triples are an error unless
  /// `dedupe` is set, in which case they are merged.
  static RelGraph from_edges(std::size_t num_nodes, std::size_t num_relations,
                             std::span<const Edge> edges, bool dedupe = false);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_edges() const { return sources_.size(); }
  std::size_t num_slots() const { return num_nodes_ * num_relations_; }

  std::size_t slot(std::size_t node, std::size_t rel) const { return node * num_relations_ + rel; }

  /// N_r(v), ascending.
  std::span<const std::uint32_t> neighbors(std::size_t node, std::size_t rel) const;
  std::size_t in_degree(std::size_t node, std::size_t rel) const;

  /// 1/|N_r(v)|, or 0 when the neighborhood is empty (weight absent).
  double norm_weight(std::size_t node, std::size_t rel) const { return norm_weights_[slot(node, rel)]; }
  bool has_norm_weight(std::size_t node, std::size_t rel) const { return in_degree(node, rel) > 0; }

  /// All edges in canonical (dst, rel, src) order.
  std::vector<Edge> edges() const;
  /// The i-th edge in canonical order.
  Edge edge(std::size_t index) const;

  /// Index of (src, dst, rel) in canonical order, or npos.
  std::size_t find_edge(std::uint32_t src, std::uint32_t dst, std::uint32_t rel) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Same edge set with node ids mapped through perm (new = perm[old]).
  RelGraph relabel(std::span<const std::size_t> perm) const;

  friend bool operator==(const RelGraph& a, const RelGraph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.num_relations_ == b.num_relations_ &&
           a.offsets_ == b.offsets_ && a.sources_ == b.sources_;
  }

 private:
  std::size_t num_nodes_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<std::size_t> offsets_;     // num_slots + 1
  std::vector<std::uint32_t> sources_;   // grouped by slot, ascending within a slot
  std::vector<double> norm_weights_;     // per slot
};

/// Mean-normalized relational aggregation, the sparse product Aᵀ·Z.
///
/// Output row v·|R| + r holds (1/|N_r(v)|)·Σ_{u∈N_r(v)} Z_u, zero when the
/// neighborhood is empty. Sources are summed in ascending order. Counts
/// 2·|E|·C FLOPs.
template <typename T>
Tensor<T> rel_aggregate(const RelGraph& graph, const Tensor<T>& z);

DegreeProfile degree_profile(const RelGraph& graph);

struct LineGraphOptions {
  std::size_t num_bins = 8;
  /// Connect e1 = (a→b) to its reverse e2 = (b→a). Such pairs have θ = π.
  bool include_reverse = true;
};

/// Bin of the angle θ between displacements (b−a) and (c−b):
/// min(floor(θ / (π/num_bins)), num_bins−1); zero-length displacements give 0.
std::size_t angle_bin(std::span<const double, 3> a, std::span<const double, 3> b,
                      std::span<const double, 3> c, std::size_t num_bins);

/// Line graph over the directed edges of `graph`. Node i of the result is
/// edge i of graph.edges(); edge e1 = (a→b) sends to e2 = (b→c) under the
/// relation given by the angle bin. `coords` is [|V|×3].
RelGraph build_line_graph(const RelGraph& graph, const Tensor<double>& coords,
                          const LineGraphOptions& options = {});

/// Edge-list text: `src<TAB>dst<TAB>rel` per line, `#` comments ignored.
std::vector<Edge> read_edge_list(std::istream& in);
void write_edge_list(std::ostream& out, std::span<const Edge> edges);

extern template Tensor<float> rel_aggregate(const RelGraph&, const Tensor<float>&);
extern template Tensor<double> rel_aggregate(const RelGraph&, const Tensor<double>&);

}  // namespace eurnet
