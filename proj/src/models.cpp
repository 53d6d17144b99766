#include "eurnet/models.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace eurnet {

namespace {

void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

template <typename T>
void collect_tensor(ParamList<T>& out, const std::string& name, const Tensor<T>& t) {
  if (t.defined()) out.emplace_back(name, t);
}

}  // namespace

// ---------------------------------------------------------------------------
// Image classifier

void ImageModelConfig::validate() const {
  require_config(!channels.empty() && channels.size() == depths.size(), "image model: one depth per stage");
  for (std::size_t s = 1; s < channels.size(); ++s) {
    require_config(channels[s] == 2 * channels[s - 1], "image model: channels must double between stages");
  }
  require_config(patch > 0 && in_channels > 0 && num_classes > 0 && ffn_ratio > 0, "image model: zero size");
  require_config(context_kernel % 2 == 1, "image model: context kernel must be odd");
}

std::size_t image_stage_relations(std::size_t stage) { return stage == 0 ? 6 : 7; }

template <typename T>
ImageModel<T> ImageModel<T>::init(const ImageModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ImageModel m;
  m.config = config;
  const std::size_t c0 = config.channels[0];
  m.stem = Linear<T>::init(rng, config.patch * config.patch * config.in_channels, c0);
  m.stem_norm = LayerNorm<T>::init(c0);
  for (std::size_t s = 0; s < config.channels.size(); ++s) {
    const std::size_t c = config.channels[s];
    ImageStage<T> stage;
    for (std::size_t b = 0; b < config.depths[s]; ++b) {
      stage.blocks.push_back({LayerNorm<T>::init(c), GRMPParams<T>::init(rng, c, c, image_stage_relations(s)),
                              ContextStack<T>::init(rng, c, config.context_levels, config.context_kernel),
                              LayerNorm<T>::init(c), FFNParams<T>::init(rng, c, config.ffn_ratio)});
    }
    if (s + 1 < config.channels.size()) {
      stage.has_merge = true;
      stage.merge = PatchMergingParams<T>::init(rng, c);
    }
    m.stages.push_back(std::move(stage));
  }
  const std::size_t c_last = config.channels.back();
  m.final_norm = LayerNorm<T>::init(c_last);
  m.head = Linear<T>::init(rng, c_last, config.num_classes);
  return m;
}

template <typename T>
ParamList<T> ImageModel<T>::parameters() const {
  ParamList<T> out;
  stem.collect("stem.", out);
  stem_norm.collect("stem_norm.", out);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sp = "stage" + std::to_string(s) + ".";
    for (std::size_t b = 0; b < stages[s].blocks.size(); ++b) {
      const auto& blk = stages[s].blocks[b];
      const std::string bp = sp + "block" + std::to_string(b) + ".";
      blk.norm1.collect(bp + "norm1.", out);
      blk.grmp.collect(bp + "grmp.", out);
      blk.context.collect(bp + "context.", out);
      blk.norm2.collect(bp + "norm2.", out);
      blk.ffn.collect(bp + "ffn.", out);
    }
    if (stages[s].has_merge) stages[s].merge.collect(sp + "merge.", out);
  }
  final_norm.collect("final_norm.", out);
  head.collect("head.", out);
  return out;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch) {
  if (image.dim() != 3) throw DimensionError("patchify needs [H×W×C], got " + shape_str(image.shape()));
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (patch == 0 || h % patch || w % patch) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch;
  auto pixels = reshape(image, {h * w, c});
  std::vector<Tensor<T>> parts;
  for (std::size_t dy = 0; dy < patch; ++dy)
    for (std::size_t dx = 0; dx < patch; ++dx) {
      std::vector<std::size_t> idx;
      idx.reserve(gh * gw);
      for (std::size_t py = 0; py < gh; ++py)
        for (std::size_t px = 0; px < gw; ++px) idx.push_back((py * patch + dy) * w + px * patch + dx);
      parts.push_back(gather_rows(pixels, std::span<const std::size_t>(idx)));
    }
  return concat_cols(parts);
}

template <typename T>
ImageForwardResult<T> image_forward(const Tensor<T>& image, const ImageModel<T>& model) {
  const auto& cfg = model.config;
  if (image.dim() != 3 || image.shape()[2] != cfg.in_channels) {
    throw DimensionError("image must be [H×W×" + std::to_string(cfg.in_channels) + "], got " +
                         shape_str(image.shape()));
  }
  const std::size_t factor = cfg.patch << (cfg.channels.size() - 1);
  if (image.shape()[0] % factor || image.shape()[1] % factor) {
    throw ConfigError("image sides must be divisible by " + std::to_string(factor));
  }
  std::size_t h = image.shape()[0] / cfg.patch, w = image.shape()[1] / cfg.patch;
  auto z = model.stem_norm(model.stem(patchify(image, cfg.patch)));

  ImageForwardResult<T> result;
  for (std::size_t s = 0; s < model.stages.size(); ++s) {
    const auto& stage = model.stages[s];
    const std::size_t n = h * w, c = z.cols();
    // The stage graph comes from the stage input; neighbor search sees no gradient.
    const auto graph = build_image_graph(PatchGrid<T>{h, w, z.detach()}, {cfg.k, s > 0}).graph;
    for (const auto& blk : stage.blocks) {
      auto y = blk.norm1(z);
      auto full = concat_rows<T>({y, global_virtual_feature(y),
                                  context_virtual_features(reshape(y, {h, w, c}), blk.context)});
      z = add(z, slice_rows(grmp_forward(graph, full, blk.grmp), 0, n));
      z = add(z, ffn_forward(blk.norm2(z), blk.ffn));
    }
    result.stage_nodes.push_back(n);
    if (stage.has_merge) {
      z = patch_merging(z, h, w, stage.merge);
      h /= 2;
      w /= 2;
    }
  }
  result.logits = model.head(mean_rows(model.final_norm(z)));
  return result;
}

// ---------------------------------------------------------------------------
// Protein encoder

void ProteinEncoderConfig::validate() const {
  require_config(num_layers >= 1, "protein encoder needs at least one layer");
  require_config(hidden > 0 && num_tasks > 0 && head_hidden > 0, "protein encoder: zero width");
}

template <typename T>
ProteinModel<T> ProteinModel<T>::init(const ProteinEncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ProteinModel m;
  m.config = config;
  // Relation count comes from the graph builder's registry.
  const std::size_t relations = protein_edges(ProteinChain{"A", Tensor<double>::zeros({1, 3})}, config.graph)
                                    .registry.size();
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? kAminoAcids.size() : config.hidden;
    m.layers.push_back(GRMPParams<T>::init(rng, in, config.hidden, relations));
    m.norms.push_back(LayerNorm<T>::init(config.hidden));
  }
  const std::size_t rep = config.num_layers * config.hidden;
  m.head.push_back(Linear<T>::init(rng, rep, config.head_hidden));
  m.head.push_back(Linear<T>::init(rng, config.head_hidden, config.head_hidden));
  m.head.push_back(Linear<T>::init(rng, config.head_hidden, config.num_tasks));
  return m;
}

template <typename T>
ParamList<T> ProteinModel<T>::parameters() const {
  ParamList<T> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect("layer" + std::to_string(l) + ".", out);
    norms[l].collect("norm" + std::to_string(l) + ".", out);
  }
  for (std::size_t i = 0; i < head.size(); ++i) head[i].collect("head" + std::to_string(i) + ".", out);
  return out;
}

template <typename T>
ProteinForwardResult<T> protein_forward(const ProteinGraph& graph, const Tensor<T>& residue_features,
                                        const ProteinModel<T>& model) {
  const std::size_t n = graph.num_residues;
  if (n == 0) throw DataError("protein chain is empty");
  if (residue_features.dim() != 2 || residue_features.rows() != n) {
    throw DimensionError("residue features " + shape_str(residue_features.shape()) + " for " + std::to_string(n) +
                         " residues");
  }
  Tensor<T> h = residue_features;
  std::vector<Tensor<T>> pools;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto full = concat_rows<T>({h, global_virtual_feature(h)});
    auto out = slice_rows(grmp_forward(graph.graph, full, model.layers[l]), 0, n);
    h = relu(model.norms[l](out));
    pools.push_back(sum_rows(h));
  }
  ProteinForwardResult<T> result;
  result.representation = concat_cols(pools);
  auto x = result.representation;
  for (std::size_t i = 0; i < model.head.size(); ++i) {
    x = model.head[i](x);
    if (i + 1 < model.head.size()) x = relu(x);
  }
  result.logits = x;
  return result;
}

template <typename T>
ProteinForwardResult<T> protein_forward(const ProteinChain& chain, const ProteinModel<T>& model) {
  if (chain.length() == 0) throw DataError("protein chain is empty");
  return protein_forward(protein_edges(chain, model.config.graph), residue_features<T>(chain), model);
}

ProteinLineGraph protein_line_graph(const ProteinGraph& graph, const ProteinChain& chain,
                                    const LineGraphOptions& options) {
  std::vector<Edge> residue_edges;
  for (const Edge& e : graph.graph.edges()) {
    if (e.src < graph.num_residues && e.dst < graph.num_residues) residue_edges.push_back(e);
  }
  auto residue_graph = RelGraph::from_edges(graph.num_residues, graph.graph.num_relations(), residue_edges);
  auto line = build_line_graph(residue_graph, chain.coords, options);
  return {std::move(residue_graph), std::move(line)};
}

template <typename T>
Tensor<T> edge_relation_features(const RelGraph& graph) {
  const std::size_t r = graph.num_relations();
  std::vector<T> values(graph.num_edges() * r, T(0));
  for (std::size_t i = 0; i < graph.num_edges(); ++i) values[i * r + graph.edge(i).rel] = T(1);
  return Tensor<T>::from({graph.num_edges(), r}, std::move(values));
}

// ---------------------------------------------------------------------------
// Knowledge graph

void KGModelConfig::validate() const {
  require_config(channels > 0 && scorer_hidden > 0, "KG model: zero width");
  require_config(negatives > 0, "KG model: needs at least one negative per positive");
}

template <typename T>
KGModel<T> KGModel<T>::init(const KGModelConfig& config, std::size_t num_entities, std::size_t base_relations,
                            std::uint64_t seed) {
  config.validate();
  if (num_entities == 0 || base_relations == 0) throw DataError("KG model needs entities and relations");
  std::mt19937_64 rng(seed);
  KGModel m;
  m.config = config;
  m.num_entities = num_entities;
  m.base_relations = base_relations;
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(config.channels));
  m.entity_embedding = trunc_normal<T>(rng, {num_entities, config.channels}, embed_std);
  m.relation_embedding = trunc_normal<T>(rng, {base_relations, config.channels}, embed_std);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    m.layers.push_back(GRMPParams<T>::init(rng, config.channels, config.channels, 2 * base_relations));
  }
  m.score_hidden = Linear<T>::init(rng, 3 * config.channels, config.scorer_hidden);
  m.score_out = Linear<T>::init(rng, config.scorer_hidden, 1);
  return m;
}

template <typename T>
ParamList<T> KGModel<T>::parameters() const {
  ParamList<T> out;
  collect_tensor(out, "entity_embedding", entity_embedding);
  collect_tensor(out, "relation_embedding", relation_embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect("layer" + std::to_string(l) + ".", out);
  score_hidden.collect("score_hidden.", out);
  score_out.collect("score_out.", out);
  return out;
}

template <typename T>
Tensor<T> kg_encode(const KGModel<T>& model, const RelGraph& fact_graph) {
  if (fact_graph.num_nodes() != model.num_entities || fact_graph.num_relations() != 2 * model.base_relations) {
    throw DimensionError("fact graph does not match the KG model vocabulary");
  }
  Tensor<T> z = model.entity_embedding;
  for (const auto& layer : model.layers) z = add(z, relu(grmp_forward(fact_graph, z, layer)));
  return z;
}

template <typename T>
Tensor<T> kg_score(const KGModel<T>& model, const Tensor<T>& entities, std::span<const Triplet> triplets) {
  std::vector<std::size_t> heads, rels, tails;
  for (const auto& t : triplets) {
    if (t.head >= model.num_entities || t.tail >= model.num_entities || t.rel >= model.base_relations) {
      throw std::out_of_range("triplet (" + std::to_string(t.head) + ", " + std::to_string(t.rel) + ", " +
                              std::to_string(t.tail) + ") is outside the model vocabulary");
    }
    heads.push_back(t.head);
    rels.push_back(t.rel);
    tails.push_back(t.tail);
  }
  auto x = concat_cols<T>({gather_rows(entities, std::span<const std::size_t>(heads)),
                           gather_rows(model.relation_embedding, std::span<const std::size_t>(rels)),
                           gather_rows(entities, std::span<const std::size_t>(tails))});
  return model.score_out(relu(model.score_hidden(x)));
}

template <typename T>
std::vector<double> kg_candidate_scores(const KGModel<T>& model, const Tensor<T>& entities, const Triplet& query,
                                        bool predict_tail) {
  NoGradGuard no_grad;
  std::vector<Triplet> candidates(model.num_entities, query);
  for (std::uint32_t e = 0; e < model.num_entities; ++e) (predict_tail ? candidates[e].tail : candidates[e].head) = e;
  auto scores = kg_score(model, entities, candidates);
  return std::vector<double>(scores.data().begin(), scores.data().end());
}

// ---------------------------------------------------------------------------
// Metrics

double filtered_rank(const RankingQuery& query) {
  if (query.answer >= query.scores.size()) throw std::out_of_range("ranking answer has no score");
  std::vector<char> removed(query.scores.size(), 0);
  for (auto f : query.filtered) {
    if (f >= query.scores.size()) throw std::out_of_range("filtered candidate has no score");
    if (f != query.answer) removed[f] = 1;
  }
  const double target = query.scores[query.answer];
  std::size_t greater = 0, equal = 0;
  for (std::size_t i = 0; i < query.scores.size(); ++i) {
    if (removed[i] || i == query.answer) continue;
    if (query.scores[i] > target) ++greater;
    else if (query.scores[i] == target) ++equal;
  }
  return 1.0 + static_cast<double>(greater) + static_cast<double>(equal) / 2.0;
}

double random_reciprocal_rank(std::size_t candidates) {
  if (candidates == 0) return 0.0;
  double h = 0;
  for (std::size_t i = 1; i <= candidates; ++i) h += 1.0 / static_cast<double>(i);
  return h / static_cast<double>(candidates);
}

RankingMetrics ranking_metrics(std::span<const RankingQuery> queries) {
  RankingMetrics m;
  for (const auto& q : queries) {
    const double rank = filtered_rank(q);
    m.mr += rank;
    m.mrr += 1.0 / rank;
    m.hits1 += rank <= 1.0;
    m.hits3 += rank <= 3.0;
    m.hits10 += rank <= 10.0;
    std::set<std::size_t> removed(q.filtered.begin(), q.filtered.end());
    removed.erase(q.answer);
    m.random_mrr += random_reciprocal_rank(q.scores.size() - removed.size());
  }
  m.queries = queries.size();
  if (m.queries) {
    const double n = static_cast<double>(m.queries);
    m.mr /= n;
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    m.random_mrr /= n;
  }
  return m;
}

template <typename T>
RankingMetrics evaluate_kg(const KGModel<T>& model, const KnowledgeGraph& kg, const TripletStore& split) {
  NoGradGuard no_grad;
  const auto entities = kg_encode(model, kg.fact_graph);
  // Known answers per (head, rel) and per (rel, tail) over every split.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> tails_of, heads_of;
  for (const auto* store : {&kg.train, &kg.valid, &kg.test}) {
    for (const auto& t : store->triplets) {
      tails_of[{t.head, t.rel}].push_back(t.tail);
      heads_of[{t.rel, t.tail}].push_back(t.head);
    }
  }
  std::vector<RankingQuery> queries;
  queries.reserve(2 * split.triplets.size());
  for (const auto& t : split.triplets) {
    queries.push_back({kg_candidate_scores(model, entities, t, true), t.tail, tails_of[{t.head, t.rel}]});
    queries.push_back({kg_candidate_scores(model, entities, t, false), t.head, heads_of[{t.rel, t.tail}]});
  }
  return ranking_metrics(queries);
}

double fmax(std::span<const double> scores, std::span<const double> labels, std::size_t num_tasks) {
  if (scores.size() != labels.size() || num_tasks == 0 || scores.size() % num_tasks) {
    throw DimensionError("fmax: scores and labels must both be [P×T]");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("fmax: scores must lie in [0,1]");
  }
  const std::size_t proteins = scores.size() / num_tasks;
  double best = 0.0;
  for (int step = 1; step <= 99; ++step) {
    const double t = step / 100.0;
    double precision_sum = 0, recall_sum = 0;
    std::size_t covered = 0, annotated = 0;
    for (std::size_t p = 0; p < proteins; ++p) {
      std::size_t predicted = 0, positive = 0, hit = 0;
      for (std::size_t j = 0; j < num_tasks; ++j) {
        const bool pred = scores[p * num_tasks + j] >= t;
        const bool pos = labels[p * num_tasks + j] > 0.5;
        predicted += pred;
        positive += pos;
        hit += pred && pos;
      }
      if (predicted) {
        precision_sum += static_cast<double>(hit) / static_cast<double>(predicted);
        ++covered;
      }
      if (positive) {
        recall_sum += static_cast<double>(hit) / static_cast<double>(positive);
        ++annotated;
      }
    }
    const double precision = covered ? precision_sum / static_cast<double>(covered) : 0.0;
    const double recall = annotated ? recall_sum / static_cast<double>(annotated) : 0.0;
    if (precision + recall > 0) best = std::max(best, 2 * precision * recall / (precision + recall));
  }
  return best;
}

ScoreTable read_score_table(std::istream& in) {
  ScoreTable table;
  std::unordered_map<std::string, std::size_t> protein_id, task_id;
  std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("protein_id,", 0) == 0) continue;
    }
    std::stringstream ss(line);
    std::string protein, task, value;
    if (!std::getline(ss, protein, ',') || !std::getline(ss, task, ',') || !std::getline(ss, value)) {
      throw ParseError("expected protein_id,task_id,value", line_no);
    }
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ParseError("bad value '" + value + "'", line_no);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
    auto [pi, pnew] = protein_id.emplace(protein, table.proteins.size());
    if (pnew) table.proteins.push_back(protein);
    auto [ti, tnew] = task_id.emplace(task, table.tasks.size());
    if (tnew) table.tasks.push_back(task);
    cells.emplace_back(pi->second, ti->second, v);
  }
  table.values.assign(table.proteins.size() * table.tasks.size(), 0.0);
  for (auto [p, t, v] : cells) table.values[p * table.tasks.size() + t] = v;
  return table;
}

ScoreTable align_score_table(const ScoreTable& table, const ScoreTable& like) {
  std::unordered_map<std::string, std::size_t> protein_id, task_id;
  for (std::size_t i = 0; i < table.proteins.size(); ++i) protein_id[table.proteins[i]] = i;
  for (std::size_t i = 0; i < table.tasks.size(); ++i) task_id[table.tasks[i]] = i;
  ScoreTable out{like.proteins, like.tasks, std::vector<double>(like.proteins.size() * like.tasks.size(), 0.0)};
  for (std::size_t p = 0; p < like.proteins.size(); ++p) {
    auto pi = protein_id.find(like.proteins[p]);
    if (pi == protein_id.end()) continue;
    for (std::size_t t = 0; t < like.tasks.size(); ++t) {
      auto ti = task_id.find(like.tasks[t]);
      if (ti != task_id.end()) out.values[p * like.tasks.size() + t] = table.values[pi->second * table.tasks.size() + ti->second];
    }
  }
  return out;
}

#define EURNET_INSTANTIATE_MODELS(T)                                                                    \
  template struct ImageModel<T>;                                                                        \
  template struct ProteinModel<T>;                                                                      \
  template struct KGModel<T>;                                                                           \
  template Tensor<T> patchify(const Tensor<T>&, std::size_t);                                           \
  template ImageForwardResult<T> image_forward(const Tensor<T>&, const ImageModel<T>&);                 \
  template ProteinForwardResult<T> protein_forward(const ProteinChain&, const ProteinModel<T>&);         \
  template ProteinForwardResult<T> protein_forward(const ProteinGraph&, const Tensor<T>&,               \
                                                   const ProteinModel<T>&);                             \
  template Tensor<T> edge_relation_features<T>(const RelGraph&);                                        \
  template Tensor<T> kg_encode(const KGModel<T>&, const RelGraph&);                                     \
  template Tensor<T> kg_score(const KGModel<T>&, const Tensor<T>&, std::span<const Triplet>);           \
  template std::vector<double> kg_candidate_scores(const KGModel<T>&, const Tensor<T>&, const Triplet&, \
                                                   bool);                                               \
  template RankingMetrics evaluate_kg(const KGModel<T>&, const KnowledgeGraph&, const TripletStore&);

EURNET_INSTANTIATE_MODELS(float)
EURNET_INSTANTIATE_MODELS(double)

}  // namespace eurnet
