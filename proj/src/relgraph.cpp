#include "eurnet/relgraph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "eurnet/ops.hpp"

namespace eurnet {

RelGraph RelGraph::from_edges(std::size_t num_nodes, std::size_t num_relations,
                              std::span<const Edge> edges, bool dedupe) {
  for (const Edge& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes || e.rel >= num_relations) {
      throw std::out_of_range("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + "," +
                              std::to_string(e.rel) + ") out of range for " + std::to_string(num_nodes) +
                              " nodes and " + std::to_string(num_relations) + " relations");
    }
  }
  std::vector<Edge> sorted(edges.begin(), edges.end());
  auto canonical = [](const Edge& a, const Edge& b) {
    return std::tie(a.dst, a.rel, a.src) < std::tie(b.dst, b.rel, b.src);
  };
  std::sort(sorted.begin(), sorted.end(), canonical);
  auto dup = std::adjacent_find(sorted.begin(), sorted.end());
  if (dup != sorted.end()) {
    if (!dedupe) {
      throw DuplicateEdgeError("duplicate edge (" + std::to_string(dup->src) + "," +
                               std::to_string(dup->dst) + "," + std::to_string(dup->rel) + ")");
    }
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  }

  RelGraph g;
  g.num_nodes_ = num_nodes;
  g.num_relations_ = num_relations;
  g.offsets_.assign(g.num_slots() + 1, 0);
  for (const Edge& e : sorted) ++g.offsets_[g.slot(e.dst, e.rel) + 1];
  for (std::size_t s = 0; s < g.num_slots(); ++s) g.offsets_[s + 1] += g.offsets_[s];
  g.sources_.reserve(sorted.size());
  for (const Edge& e : sorted) g.sources_.push_back(e.src);
  g.norm_weights_.assign(g.num_slots(), 0.0);
  for (std::size_t s = 0; s < g.num_slots(); ++s) {
    const std::size_t deg = g.offsets_[s + 1] - g.offsets_[s];
    if (deg > 0) g.norm_weights_[s] = 1.0 / static_cast<double>(deg);
  }
  return g;
}

std::span<const std::uint32_t> RelGraph::neighbors(std::size_t node, std::size_t rel) const {
  const std::size_t s = slot(node, rel);
  return std::span<const std::uint32_t>(sources_).subspan(offsets_[s], offsets_[s + 1] - offsets_[s]);
}

std::size_t RelGraph::in_degree(std::size_t node, std::size_t rel) const {
  const std::size_t s = slot(node, rel);
  return offsets_[s + 1] - offsets_[s];
}

std::vector<Edge> RelGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t v = 0; v < num_nodes_; ++v)
    for (std::size_t r = 0; r < num_relations_; ++r)
      for (auto u : neighbors(v, r))
        out.push_back({u, static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(r)});
  return out;
}

Edge RelGraph::edge(std::size_t index) const {
  if (index >= num_edges()) throw std::out_of_range("edge index out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  const std::size_t s = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {sources_[index], static_cast<std::uint32_t>(s / num_relations_),
          static_cast<std::uint32_t>(s % num_relations_)};
}

std::size_t RelGraph::find_edge(std::uint32_t src, std::uint32_t dst, std::uint32_t rel) const {
  if (dst >= num_nodes_ || rel >= num_relations_) return npos;
  auto nb = neighbors(dst, rel);
  auto it = std::lower_bound(nb.begin(), nb.end(), src);
  if (it == nb.end() || *it != src) return npos;
  return offsets_[slot(dst, rel)] + static_cast<std::size_t>(it - nb.begin());
}

RelGraph RelGraph::relabel(std::span<const std::size_t> perm) const {
  if (perm.size() != num_nodes_) throw DimensionError("relabel: permutation size mismatch");
  std::vector<Edge> mapped = edges();
  for (Edge& e : mapped) {
    e.src = static_cast<std::uint32_t>(perm[e.src]);
    e.dst = static_cast<std::uint32_t>(perm[e.dst]);
  }
  return from_edges(num_nodes_, num_relations_, mapped);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> rel_aggregate(const RelGraph& graph, const Tensor<T>& z) {
  if (z.dim() != 2 || z.rows() != graph.num_nodes()) {
    throw DimensionError("rel_aggregate: expected " + std::to_string(graph.num_nodes()) +
                         " feature rows, got " + shape_str(z.shape()));
  }
  const std::size_t c = z.cols();
  const std::size_t slots = graph.num_slots();
  const std::size_t nrel = graph.num_relations();
  const auto& zv = z.values();
  std::vector<T> out(slots * c, T(0));
  parallel_for(graph.num_nodes(), 64, [&](std::size_t v0, std::size_t v1) {
    for (std::size_t v = v0; v < v1; ++v) {
      for (std::size_t r = 0; r < nrel; ++r) {
        const std::size_t s = graph.slot(v, r);
        const T w = static_cast<T>(graph.norm_weight(v, r));
        T* orow = out.data() + s * c;
        for (auto u : graph.neighbors(v, r)) {
          const T* zrow = zv.data() + static_cast<std::size_t>(u) * c;
          for (std::size_t j = 0; j < c; ++j) orow[j] += w * zrow[j];
        }
      }
    }
  });
  count_flops(op_kind::kRelAggregate, 2ULL * graph.num_edges() * c);
  auto zn = z.node();
  std::shared_ptr<const RelGraph> gp;
  if (grad_enabled() && z.requires_grad()) gp = std::make_shared<RelGraph>(graph);
  return Tensor<T>::make_result({slots, c}, std::move(out), {z}, [zn, gp, c](TensorNode<T>& self) {
    const RelGraph& g = *gp;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      for (std::size_t r = 0; r < g.num_relations(); ++r) {
        const std::size_t s = g.slot(v, r);
        const T w = static_cast<T>(g.norm_weight(v, r));
        const T* grow = self.grad.data() + s * c;
        for (auto u : g.neighbors(v, r)) {
          T* zg = zn->grad.data() + static_cast<std::size_t>(u) * c;
          for (std::size_t j = 0; j < c; ++j) zg[j] += w * grow[j];
        }
      }
    }
  });
}

template Tensor<float> rel_aggregate(const RelGraph&, const Tensor<float>&);
template Tensor<double> rel_aggregate(const RelGraph&, const Tensor<double>&);

DegreeProfile degree_profile(const RelGraph& graph) {
  DegreeProfile p;
  const std::size_t nrel = graph.num_relations();
  p.per_relation.assign(nrel, 0.0);
  if (nrel == 0 || graph.num_nodes() == 0) return p;
  std::vector<std::size_t> counts(nrel, 0);
  for (std::size_t v = 0; v < graph.num_nodes(); ++v)
    for (std::size_t r = 0; r < nrel; ++r) counts[r] += graph.in_degree(v, r);
  for (std::size_t r = 0; r < nrel; ++r) {
    p.per_relation[r] = static_cast<double>(counts[r]) / static_cast<double>(graph.num_nodes());
  }
  // Σ_r |E_r| / (|V|·|R|) evaluated from integers to keep the rational exact.
  p.overall = static_cast<double>(graph.num_edges()) /
              (static_cast<double>(graph.num_nodes()) * static_cast<double>(nrel));
  return p;
}

// ---------------------------------------------------------------------------

std::size_t angle_bin(std::span<const double, 3> a, std::span<const double, 3> b,
                      std::span<const double, 3> c, std::size_t num_bins) {
  double u[3], w[3];
  double uu = 0, ww = 0, uw = 0;
  for (int i = 0; i < 3; ++i) {
    u[i] = b[i] - a[i];
    w[i] = c[i] - b[i];
    uu += u[i] * u[i];
    ww += w[i] * w[i];
    uw += u[i] * w[i];
  }
  if (uu == 0.0 || ww == 0.0) return 0;
  const double cosine = std::clamp(uw / std::sqrt(uu * ww), -1.0, 1.0);
  const double theta = std::acos(cosine);
  const double width = std::numbers::pi / static_cast<double>(num_bins);
  const auto bin = static_cast<std::size_t>(std::floor(theta / width));
  return std::min(bin, num_bins - 1);
}

RelGraph build_line_graph(const RelGraph& graph, const Tensor<double>& coords,
                          const LineGraphOptions& options) {
  if (coords.dim() != 2 || coords.rows() != graph.num_nodes() || coords.cols() != 3) {
    throw DimensionError("build_line_graph: coords must be [" + std::to_string(graph.num_nodes()) +
                         "x3], got " + shape_str(coords.shape()));
  }
  if (options.num_bins == 0) throw ConfigError("build_line_graph: num_bins must be >= 1");
  const std::vector<Edge> edges = graph.edges();
  // Edges leaving each node, in canonical order.
  std::vector<std::vector<std::uint32_t>> outgoing(graph.num_nodes());
  for (std::size_t i = 0; i < edges.size(); ++i) outgoing[edges[i].src].push_back(static_cast<std::uint32_t>(i));

  auto point = [&](std::uint32_t node) {
    return std::span<const double, 3>(coords.data().data() + static_cast<std::size_t>(node) * 3, 3);
  };
  std::vector<Edge> line;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e1 = edges[i];
    for (std::uint32_t j : outgoing[e1.dst]) {
      if (j == i) continue;
      const Edge& e2 = edges[j];
      if (!options.include_reverse && e2.dst == e1.src && e2.src != e2.dst) continue;
      const std::size_t bin = angle_bin(point(e1.src), point(e1.dst), point(e2.dst), options.num_bins);
      line.push_back({static_cast<std::uint32_t>(i), j, static_cast<std::uint32_t>(bin)});
    }
  }
  return RelGraph::from_edges(edges.size(), options.num_bins, line);
}

// ---------------------------------------------------------------------------

std::vector<Edge> read_edge_list(std::istream& in) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    long long src = -1, dst = -1, rel = -1;
    std::string extra;
    if (!(fields >> src >> dst >> rel) || (fields >> extra)) {
      throw ParseError("expected `src<TAB>dst<TAB>rel`", lineno);
    }
    if (src < 0 || dst < 0 || rel < 0) throw ParseError("negative index", lineno);
    edges.push_back({static_cast<std::uint32_t>(src), static_cast<std::uint32_t>(dst),
                     static_cast<std::uint32_t>(rel)});
  }
  return edges;
}

void write_edge_list(std::ostream& out, std::span<const Edge> edges) {
  for (const Edge& e : edges) out << e.src << '\t' << e.dst << '\t' << e.rel << '\n';
}

}  // namespace eurnet
