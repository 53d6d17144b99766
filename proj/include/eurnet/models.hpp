#pragma once

// Assembled networks: the hierarchical image classifier, the single-stage
// protein encoder, the knowledge-graph triplet scorer, and task metrics.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "eurnet/graphbuild.hpp"
#include "eurnet/layers.hpp"

namespace eurnet {

// ---------------------------------------------------------------------------
// Image classifier

struct ImageModelConfig {
  std::vector<std::size_t> channels{96, 192, 384, 768};
  std::vector<std::size_t> depths{2, 2, 6, 2};
  std::size_t k = 12;          // medium-range neighbors, stages 2 and later
  std::size_t ffn_ratio = 4;
  std::size_t patch = 4;       // stem: patch×patch, stride patch
  std::size_t in_channels = 3;
  std::size_t num_classes = 1000;
  std::size_t context_levels = 3;
  std::size_t context_kernel = 3;

  void validate() const;
};

/// Pre-norm residual block: x + GRMP(LN(x)) with virtual rows, then x + FFN(LN(x)).
template <typename T>
struct ImageBlock {
  LayerNorm<T> norm1;
  GRMPParams<T> grmp;
  ContextStack<T> context;
  LayerNorm<T> norm2;
  FFNParams<T> ffn;
};

template <typename T>
struct ImageStage {
  std::vector<ImageBlock<T>> blocks;
  bool has_merge = false;
  PatchMergingParams<T> merge;  // applied after the blocks
};

template <typename T>
struct ImageModel {
  ImageModelConfig config;
  Linear<T> stem;  // patch·patch·in_channels → C
  LayerNorm<T> stem_norm;
  std::vector<ImageStage<T>> stages;
  LayerNorm<T> final_norm;
  Linear<T> head;

  static ImageModel init(const ImageModelConfig& config, std::uint64_t seed);
  ParamList<T> parameters() const;
};

/// Relations per stage: 4 short (+ medium for stages after the first) + 2 long.
std::size_t image_stage_relations(std::size_t stage);

template <typename T>
struct ImageForwardResult {
  Tensor<T> logits;                      // [1×num_classes]
  std::vector<std::size_t> stage_nodes;  // patch count of each stage
};

/// `image` is [H×W×in_channels] with H and W divisible by patch·2^(stages−1).
template <typename T>
ImageForwardResult<T> image_forward(const Tensor<T>& image, const ImageModel<T>& model);

/// Non-overlapping patch×patch patches flattened in (row, col, channel) order:
/// [(H/p)(W/p) × p·p·C].
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch);

// ---------------------------------------------------------------------------
// Protein encoder

struct ProteinEncoderConfig {
  std::size_t num_layers = 6;
  std::size_t hidden = 512;
  std::size_t num_tasks = 1;
  std::size_t head_hidden = 512;
  ProteinGraphOptions graph;

  void validate() const;
};

template <typename T>
struct ProteinModel {
  ProteinEncoderConfig config;
  std::vector<GRMPParams<T>> layers;
  std::vector<LayerNorm<T>> norms;
  std::vector<Linear<T>> head;  // three maps with ReLU between

  static ProteinModel init(const ProteinEncoderConfig& config, std::uint64_t seed);
  ParamList<T> parameters() const;
};

template <typename T>
struct ProteinForwardResult {
  Tensor<T> representation;  // [1 × num_layers·hidden]
  Tensor<T> logits;          // [1 × num_tasks]
};

/// Each layer: GRMP over residues plus the virtual node (fed the mean residue
/// feature), layer norm, ReLU, then a sum pool. Pools are concatenated.
template <typename T>
ProteinForwardResult<T> protein_forward(const ProteinChain& chain, const ProteinModel<T>& model);

template <typename T>
ProteinForwardResult<T> protein_forward(const ProteinGraph& graph, const Tensor<T>& residue_features,
                                        const ProteinModel<T>& model);

/// Line graph over residue-to-residue edges (virtual-node edges dropped) and
/// one-hot edge features of the original relation: [E' × |R|].
struct ProteinLineGraph {
  RelGraph residue_graph;
  RelGraph line_graph;
};
ProteinLineGraph protein_line_graph(const ProteinGraph& graph, const ProteinChain& chain,
                                    const LineGraphOptions& options = {});
template <typename T>
Tensor<T> edge_relation_features(const RelGraph& graph);

// ---------------------------------------------------------------------------
// Knowledge graph

struct KGModelConfig {
  std::size_t num_layers = 6;
  std::size_t channels = 32;
  std::size_t scorer_hidden = 32;
  std::size_t negatives = 32;

  void validate() const;
};

template <typename T>
struct KGModel {
  KGModelConfig config;
  std::size_t num_entities = 0;
  std::size_t base_relations = 0;
  Tensor<T> entity_embedding;    // [|E|×C]
  Tensor<T> relation_embedding;  // [base relations × C]
  std::vector<GRMPParams<T>> layers;
  Linear<T> score_hidden;        // 3C → hidden
  Linear<T> score_out;           // hidden → 1

  static KGModel init(const KGModelConfig& config, std::size_t num_entities, std::size_t base_relations,
                      std::uint64_t seed);
  ParamList<T> parameters() const;
};

/// Entity representations: embeddings refined by residual GRMP layers with
/// ReLU over the fact graph (relations doubled for inverses).
template <typename T>
Tensor<T> kg_encode(const KGModel<T>& model, const RelGraph& fact_graph);

/// Logits of MLP([z_h ; e_r ; z_t]) for each triplet: [n×1].
template <typename T>
Tensor<T> kg_score(const KGModel<T>& model, const Tensor<T>& entities, std::span<const Triplet> triplets);

/// Scores of (h, r, e) or (e, r, t) for every entity e, as plain values.
template <typename T>
std::vector<double> kg_candidate_scores(const KGModel<T>& model, const Tensor<T>& entities, const Triplet& query,
                                        bool predict_tail);

// ---------------------------------------------------------------------------
// Metrics

struct RankingQuery {
  std::vector<double> scores;           // one per candidate
  std::size_t answer = 0;
  std::vector<std::size_t> filtered;    // other known-true candidates, removed before ranking
};

struct RankingMetrics {
  double mr = 0, mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
  std::size_t queries = 0;
  /// Expected MRR of a uniformly random ranking, H_N/N per query over its
  /// remaining candidates N.
  double random_mrr = 0;
};

/// 1 + #(scores above the answer) + #(ties other than the answer)/2, after filtering.
double filtered_rank(const RankingQuery& query);
RankingMetrics ranking_metrics(std::span<const RankingQuery> queries);

/// Harmonic number H_n / n.
double random_reciprocal_rank(std::size_t candidates);

/// Filtered head and tail prediction over `split`. Every triplet of every
/// split of `kg` counts as known-true for filtering.
template <typename T>
RankingMetrics evaluate_kg(const KGModel<T>& model, const KnowledgeGraph& kg, const TripletStore& split);

/// Protein-centric maximum F-score on the threshold grid 0.01..0.99.
/// scores and labels are row-major [P×T]; scores must lie in [0,1].
double fmax(std::span<const double> scores, std::span<const double> labels, std::size_t num_tasks);

/// `protein_id,task_id,value` rows (with header) into a dense matrix.
/// Pairs missing from the file are 0.
struct ScoreTable {
  std::vector<std::string> proteins;
  std::vector<std::string> tasks;
  std::vector<double> values;  // [proteins × tasks]
};
ScoreTable read_score_table(std::istream& in);
/// Reads labels in the id order of `like`, so values line up with it.
ScoreTable align_score_table(const ScoreTable& table, const ScoreTable& like);

}  // namespace eurnet
