#include "eurnet/costmodel.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "eurnet/layers.hpp"

namespace eurnet {

namespace {

// 2·d̄·|R|·|V|·C, exact whenever d̄·|V| is integral, rounded once otherwise.
std::uint64_t aggregation_flops(const CostParams& p) {
  if (p.avg_in_degree < 0 || !std::isfinite(p.avg_in_degree)) {
    throw ConfigError("average in-degree must be finite and non-negative");
  }
  const long double dv = static_cast<long double>(p.avg_in_degree) * p.num_nodes;
  if (dv == std::floor(dv)) {
    return 2 * static_cast<std::uint64_t>(dv) * p.num_relations * p.channels;
  }
  return static_cast<std::uint64_t>(std::llround(2.0L * dv * p.num_relations * p.channels));
}

void require_relations(const CostParams& p) {
  if (p.num_relations == 0) throw ContractError("GRMP cost needs at least one relation");
}

CostBreakdown finish(std::vector<std::uint64_t> steps) {
  CostBreakdown b{std::move(steps), 0};
  for (auto s : b.steps) b.total += s;
  return b;
}

}  // namespace

CostBreakdown rgconv_breakdown(const CostParams& p) {
  const std::uint64_t r = p.num_relations, v = p.num_nodes, c = p.channels;
  return finish({aggregation_flops(p), 2 * r * v * c * c, 2 * v * c * c + v * c});
}

CostBreakdown grmp_breakdown(const CostParams& p, const GrmpFormula& formula) {
  require_relations(p);
  const std::uint64_t r = p.num_relations, v = p.num_nodes, c = p.channels;
  // The attention step carries the remainder of the per-relation constant:
  // 2 (α) + 2 (broadcast and product) + 1 (sum) with one fewer sum than |R|.
  const std::uint64_t attention = (formula.per_relation_linear - 2) * r * v * c - v * c;
  return finish({2 * v * c * c, aggregation_flops(p) + 2 * r * v * c, attention, 2 * v * c * c,
                 2 * v * c * c + v * c});
}

std::uint64_t rgconv_flops(const CostParams& p) {
  const std::uint64_t r = p.num_relations, v = p.num_nodes, c = p.channels;
  return aggregation_flops(p) + r * 2 * v * c * c + 2 * v * c * c + v * c;
}

std::uint64_t grmp_flops(const CostParams& p, const GrmpFormula& formula) {
  require_relations(p);
  const std::uint64_t r = p.num_relations, v = p.num_nodes, c = p.channels;
  return aggregation_flops(p) + formula.per_relation_linear * r * v * c + 6 * v * c * c;
}

RelGraph uniform_degree_graph(std::size_t nodes, std::size_t relations, std::size_t degree) {
  if (degree > 0 && degree >= nodes) {
    throw ConfigError("uniform in-degree " + std::to_string(degree) + " needs more than " + std::to_string(nodes) +
                      " nodes");
  }
  std::vector<Edge> edges;
  edges.reserve(nodes * relations * degree);
  for (std::size_t v = 0; v < nodes; ++v)
    for (std::size_t r = 0; r < relations; ++r)
      for (std::size_t j = 1; j <= degree; ++j)
        edges.push_back({static_cast<std::uint32_t>((v + j) % nodes), static_cast<std::uint32_t>(v),
                         static_cast<std::uint32_t>(r)});
  return RelGraph::from_edges(nodes, relations, edges);
}

std::uint64_t measure_layer_flops(LayerKind kind, std::size_t relations, std::size_t degree, std::size_t nodes,
                                  std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto graph = uniform_degree_graph(nodes, relations, degree);
  auto z = trunc_normal<float>(rng, {nodes, channels}, 1.0);
  NoGradGuard no_grad;
  OpCounter counter({op_kind::kBiasAdd});
  if (kind == LayerKind::kRGConv) {
    auto p = RGConvParams<float>::init(rng, channels, channels, relations);
    CounterScope scope(counter);
    rgconv_forward(graph, z, p);
  } else {
    auto p = GRMPParams<float>::init(rng, channels, channels, relations);
    CounterScope scope(counter);
    grmp_forward(graph, z, p);
  }
  return counter.total();
}

SweepConfig eurnet_t_sweep_config() {
  SweepConfig cfg;
  const std::uint64_t channels[] = {96, 192, 384, 768}, depths[] = {2, 2, 6, 2};
  for (std::size_t s = 0; s < 4; ++s) {
    const std::uint64_t side = 224 >> (s + 2);
    cfg.stages.push_back({side * side, channels[s], depths[s]});
  }
  return cfg;
}

std::uint64_t ffn_flops(std::uint64_t nodes, std::uint64_t channels, std::uint64_t ratio) {
  return 4 * ratio * nodes * channels * channels + ratio * nodes * channels;
}

std::vector<SweepRow> sweep_knn_relations(const SweepConfig& config, std::uint64_t k_min, std::uint64_t k_max,
                                          const GrmpFormula& formula) {
  if (k_min == 0) throw ContractError("sweep starts at K = 1; GRMP needs a relation");
  if (k_max < k_min) throw ConfigError("empty K range");
  std::vector<SweepRow> rows;
  for (std::uint64_t k = k_min; k <= k_max; ++k) {
    SweepRow row{k, 0, 0};
    for (const auto& s : config.stages) {
      const CostParams p{k, config.degree_per_relation, s.num_nodes, s.channels};
      const std::uint64_t ffn = ffn_flops(s.num_nodes, s.channels, config.ffn_ratio);
      row.rgconv += s.depth * (rgconv_flops(p) + ffn);
      row.grmp += s.depth * (grmp_flops(p, formula) + ffn);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "K,rgconv_flops,grmp_flops\n";
  for (const auto& r : rows) out << r.k << ',' << r.rgconv << ',' << r.grmp << '\n';
}

}  // namespace eurnet
