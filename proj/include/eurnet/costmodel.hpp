#pragma once

// Closed-form FLOPs of one RGConv and one GRMP layer, the per-step split of
// each, and a sweep over the number of kNN relations for a staged network.
// Biases are not counted.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "eurnet/relgraph.hpp"

namespace eurnet {

struct CostParams {
  std::uint64_t num_relations = 1;
  double avg_in_degree = 0;  // per relation, per node
  std::uint64_t num_nodes = 1;
  std::uint64_t channels = 1;
};

struct CostBreakdown {
  std::vector<std::uint64_t> steps;
  std::uint64_t total = 0;
};

/// Per-relation linear cost factor of the GRMP formula. Only the mutation
/// test changes it, to show that a wrong constant is caught.
struct GrmpFormula {
  std::uint64_t per_relation_linear = 7;
};

std::uint64_t rgconv_flops(const CostParams& p);
std::uint64_t grmp_flops(const CostParams& p, const GrmpFormula& formula = {});

/// RGConv: aggregation, relation transforms, self update.
CostBreakdown rgconv_breakdown(const CostParams& p);
/// GRMP: input transform, aggregation with w_r, relation attention, output
/// transform, gated self update.
CostBreakdown grmp_breakdown(const CostParams& p, const GrmpFormula& formula = {});

/// Every node receives exactly `degree` in-edges under every relation, from
/// the nodes at offsets 1..degree (mod |V|). Needs degree < |V|.
RelGraph uniform_degree_graph(std::size_t nodes, std::size_t relations, std::size_t degree);

enum class LayerKind { kRGConv, kGRMP };

/// Runs one layer (32-bit, random parameters, no gradient recording) on a
/// uniform-degree graph and returns the counter total with biases excluded.
std::uint64_t measure_layer_flops(LayerKind kind, std::size_t relations, std::size_t degree, std::size_t nodes,
                                  std::size_t channels, std::uint64_t seed = 0);

struct StageCost {
  std::uint64_t num_nodes = 0;
  std::uint64_t channels = 0;
  std::uint64_t depth = 0;
};

struct SweepConfig {
  std::vector<StageCost> stages;
  std::uint64_t ffn_ratio = 4;
  double degree_per_relation = 1;
};

/// The tiny image configuration at 224×224: /4, /8, /16, /32 grids,
/// channels 96/192/384/768, depths 2/2/6/2.
SweepConfig eurnet_t_sweep_config();

/// Cost of one FFN block over |V| nodes: two matmuls and the activation.
std::uint64_t ffn_flops(std::uint64_t nodes, std::uint64_t channels, std::uint64_t ratio);

struct SweepRow {
  std::uint64_t k = 0;
  std::uint64_t rgconv = 0;
  std::uint64_t grmp = 0;
};

/// For each K, model totals with |R| = K relations of d̄ in-edges each.
/// FFN cost enters both columns identically. K must be ≥ 1.
std::vector<SweepRow> sweep_knn_relations(const SweepConfig& config, std::uint64_t k_min, std::uint64_t k_max,
                                          const GrmpFormula& formula = {});

/// `K,rgconv_flops,grmp_flops` header and one row per K.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace eurnet
