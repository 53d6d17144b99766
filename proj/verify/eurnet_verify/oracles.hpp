#pragma once

// Independent reference computations. These are deliberately literal and slow:
// dense matrices, per-node loops and brute-force sorts written straight from
// the defining formulas, sharing no code path with the library kernels.

#include <random>
#include <set>
#include <vector>

#include "eurnet/graphbuild.hpp"
#include "eurnet/layers.hpp"
#include "eurnet/relgraph.hpp"
#include "eurnet/tensor.hpp"

namespace eurnet::verify {

/// Each (u, v, r) present independently with probability p.
RelGraph random_graph(std::mt19937_64& rng, std::size_t nodes, std::size_t relations, double p,
                      bool allow_self_loops = false);

/// Every node receives exactly `degree` in-edges per relation (circulant offsets).
RelGraph regular_graph(std::size_t nodes, std::size_t relations, std::size_t degree);

/// Aᵀ·Z with the dense |V|×|R||V| adjacency matrix A.
std::vector<double> dense_rel_aggregate(const RelGraph& graph, const Tensor<double>& z);

/// All (e1, e2, bin) with head(e1) == tail(e2), by scanning every edge pair.
std::set<Edge> brute_force_line_edges(const RelGraph& graph, const Tensor<double>& coords,
                                      std::size_t num_bins, bool include_reverse);

/// Full distance matrix, 2×2-window exclusion, stable sort by distance.
std::set<Edge> brute_force_image_medium(const PatchGrid<double>& grid, std::size_t k, std::uint32_t rel);

/// Medium-range protein edges (rank-first and rank-second relations) from a
/// full distance matrix with explicit filtering and a stable sort.
std::set<Edge> brute_force_protein_medium(const ProteinChain& chain, const ProteinGraphOptions& options,
                                          std::uint32_t first_rel, std::uint32_t second_rel);

/// Random chain: a 3.8 Å random walk with mild persistence.
ProteinChain random_chain(std::mt19937_64& rng, std::size_t length);

/// Random E(3) transform (orthogonal matrix, possibly a reflection, plus a translation).
Tensor<double> random_e3_transform(std::mt19937_64& rng, const Tensor<double>& coords, bool reflect);

/// Smallest gap between any pairwise distance and the given thresholds, and
/// between consecutive medium-range candidate distances of any residue.
double protein_threshold_margin(const ProteinChain& chain, const ProteinGraphOptions& options);

/// Overwrites every parameter with uniform [-scale, scale) values so that
/// tests do not run at the near-degenerate default initialization.
template <typename T>
void randomize(const ParamList<T>& params, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const auto& [name, t] : params) {
    Tensor<T> handle = t;
    for (auto& v : handle.mutable_data()) v = static_cast<T>(dist(rng));
  }
}

/// RGConv written as a literal per-node double loop over relations and
/// neighbors, accumulating in double precision. Row-major [|V|×out].
template <typename T>
std::vector<double> rgconv_loop_oracle(const RelGraph& graph, const Tensor<T>& z, const RGConvParams<T>& p);

/// GRMP as a per-node loop: per relation mean of w_r ⊙ W_in z_u, weighted by
/// α_r(v), then W_out, then the gated or additive self update.
template <typename T>
std::vector<double> grmp_loop_oracle(const RelGraph& graph, const Tensor<T>& z, const GRMPParams<T>& p,
                                     const GRMPVariant& variant = {});

/// Fmax by direct enumeration: for each threshold, build the predicted label
/// sets explicitly and average precision over covered proteins and recall
/// over annotated proteins.
double fmax_oracle(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& labels,
                   const std::vector<double>& thresholds);

/// The grid 0.01, 0.02, ..., 0.99 written out as decimal fractions.
std::vector<double> fmax_grid();

/// Every distinct score value, as thresholds.
std::vector<double> distinct_thresholds(const std::vector<std::vector<double>>& scores);

}  // namespace eurnet::verify
