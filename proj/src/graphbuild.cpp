#include "eurnet/graphbuild.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace eurnet {

std::string_view to_string(RangeGroup group) {
  switch (group) {
    case RangeGroup::kShort: return "short";
    case RangeGroup::kMedium: return "medium";
    case RangeGroup::kLong: return "long";
  }
  return "unknown";
}

std::uint32_t RelationRegistry::add(RangeGroup group, std::string name) {
  if (contains(name)) throw std::invalid_argument("relation registered twice: " + name);
  entries_.push_back({std::move(name), group});
  return static_cast<std::uint32_t>(entries_.size() - 1);
}

std::uint32_t RelationRegistry::id(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<std::uint32_t>(i);
  throw std::out_of_range("unknown relation: " + std::string(name));
}

bool RelationRegistry::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::vector<std::uint32_t> RelationRegistry::ids(RangeGroup group) const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].group == group) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Images

template <typename T>
void PatchGrid<T>::validate() const {
  if (height == 0 || width == 0) throw ConfigError("patch grid must be at least 1x1");
  if (features.dim() != 2 || features.rows() != height * width) {
    throw DimensionError("patch grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " needs " + std::to_string(height * width) + " feature rows, got " +
                         shape_str(features.shape()));
  }
}

std::vector<Edge> image_short_edges(std::size_t height, std::size_t width) {
  std::vector<Edge> edges;
  auto id = [width](std::size_t r, std::size_t c) { return static_cast<std::uint32_t>(r * width + c); };
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const auto v = id(r, c);
      if (r > 0) edges.push_back({id(r - 1, c), v, kFromUp});
      if (r + 1 < height) edges.push_back({id(r + 1, c), v, kFromDown});
      if (c > 0) edges.push_back({id(r, c - 1), v, kFromLeft});
      if (c + 1 < width) edges.push_back({id(r, c + 1), v, kFromRight});
    }
  return edges;
}

template <typename T>
std::vector<Edge> image_medium_edges(const PatchGrid<T>& grid, std::size_t k, std::uint32_t rel) {
  grid.validate();
  const std::size_t n = grid.num_patches(), c = grid.channels(), w = grid.width;
  std::vector<Edge> edges;
  if (k == 0) return edges;
  const auto& f = grid.features.values();
  auto window = [w](std::size_t p) { return std::pair{(p / w) / 2, (p % w) / 2}; };

  std::vector<std::pair<double, std::uint32_t>> candidates;
  for (std::size_t v = 0; v < n; ++v) {
    candidates.clear();
    const auto wv = window(v);
    for (std::size_t u = 0; u < n; ++u) {
      if (window(u) == wv) continue;
      double d2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = static_cast<double>(f[v * c + j]) - static_cast<double>(f[u * c + j]);
        d2 += d * d;
      }
      candidates.emplace_back(d2, static_cast<std::uint32_t>(u));
    }
    const std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end());
    for (std::size_t i = 0; i < take; ++i) {
      edges.push_back({candidates[i].second, static_cast<std::uint32_t>(v), rel});
    }
  }
  return edges;
}

std::vector<Edge> LongEdgeSpec::materialize(std::uint32_t global_rel, std::uint32_t context_rel) const {
  std::vector<Edge> edges;
  edges.reserve(global_edges + context_edges);
  for (std::size_t p = 0; p < num_patches; ++p) {
    edges.push_back({static_cast<std::uint32_t>(global_node()), static_cast<std::uint32_t>(p), global_rel});
    edges.push_back({static_cast<std::uint32_t>(context_node(p)), static_cast<std::uint32_t>(p), context_rel});
  }
  return edges;
}

LongEdgeSpec image_long_edge_spec(std::size_t height, std::size_t width) {
  LongEdgeSpec spec;
  spec.num_patches = height * width;
  spec.global_nodes = 1;
  spec.global_edges = spec.num_patches;
  spec.context_nodes = spec.num_patches;
  spec.context_edges = spec.num_patches;
  return spec;
}

template <typename T>
ImageGraph build_image_graph(const PatchGrid<T>& grid, const ImageGraphOptions& options) {
  grid.validate();
  ImageGraph out;
  auto& reg = out.registry;
  reg.add(RangeGroup::kShort, "short.from_up");
  reg.add(RangeGroup::kShort, "short.from_down");
  reg.add(RangeGroup::kShort, "short.from_left");
  reg.add(RangeGroup::kShort, "short.from_right");
  std::vector<Edge> edges = image_short_edges(grid.height, grid.width);
  if (options.use_medium) {
    const auto medium = reg.add(RangeGroup::kMedium, "medium.knn");
    auto knn = image_medium_edges(grid, options.k, medium);
    edges.insert(edges.end(), knn.begin(), knn.end());
  }
  const auto global = reg.add(RangeGroup::kLong, "long.global");
  const auto context = reg.add(RangeGroup::kLong, "long.context");
  out.long_spec = image_long_edge_spec(grid.height, grid.width);
  auto virt = out.long_spec.materialize(global, context);
  edges.insert(edges.end(), virt.begin(), virt.end());
  out.graph = RelGraph::from_edges(out.long_spec.total_nodes(), reg.size(), edges);
  return out;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("patch grid: truncated input");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

PatchGrid<float> read_patch_grid(std::istream& in) {
  if (get_u32(in) != kPatchGridMagic) throw DataError("patch grid: bad magic");
  const std::uint32_t h = get_u32(in), w = get_u32(in), c = get_u32(in);
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  std::vector<float> values(n);
  for (auto& v : values) v = std::bit_cast<float>(get_u32(in));
  PatchGrid<float> grid{h, w, Tensor<float>::from({static_cast<std::size_t>(h) * w, c}, std::move(values))};
  grid.validate();
  return grid;
}

void write_patch_grid(std::ostream& out, const PatchGrid<float>& grid) {
  grid.validate();
  put_u32(out, kPatchGridMagic);
  put_u32(out, static_cast<std::uint32_t>(grid.height));
  put_u32(out, static_cast<std::uint32_t>(grid.width));
  put_u32(out, static_cast<std::uint32_t>(grid.channels()));
  for (float v : grid.features.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// ---------------------------------------------------------------------------
// Proteins

std::size_t amino_acid_index(char code) {
  const auto pos = kAminoAcids.find(code);
  if (pos == std::string_view::npos) throw DataError(std::string("unknown amino acid code '") + code + "'");
  return pos;
}

void ProteinChain::validate() const {
  if (coords.dim() != 2 || coords.cols() != 3 || coords.rows() != sequence.size()) {
    throw DimensionError("protein chain: expected [" + std::to_string(sequence.size()) +
                         "x3] coordinates, got " + shape_str(coords.shape()));
  }
  for (double v : coords.values()) {
    if (!std::isfinite(v)) throw DataError("protein chain: non-finite coordinate");
  }
  for (char code : sequence) amino_acid_index(code);
}

ProteinGraph protein_edges(const ProteinChain& chain, const ProteinGraphOptions& options) {
  chain.validate();
  const std::size_t n = chain.length();
  if (n == 0) throw DataError("protein chain is empty");
  ProteinGraph out;
  out.num_residues = n;
  auto& reg = out.registry;
  const long window = static_cast<long>(options.sequential_window);
  std::vector<std::uint32_t> seq_rel;
  for (long d = -window; d <= window; ++d) {
    seq_rel.push_back(reg.add(RangeGroup::kShort, "short.seq" + std::string(d > 0 ? "+" : "") + std::to_string(d)));
  }
  const auto radius_rel = reg.add(RangeGroup::kShort, "short.radius");
  const auto med_a = reg.add(RangeGroup::kMedium, "medium.rank_first");
  const auto med_b = reg.add(RangeGroup::kMedium, "medium.rank_second");
  const auto virt = reg.add(RangeGroup::kLong, "long.virtual");

  const auto& x = chain.coords.values();
  auto dist2 = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = x[i * 3 + k] - x[j * 3 + k];
      s += d * d;
    }
    return s;
  };
  const double radius2 = options.radius * options.radius;
  const double medium2 = options.medium_min_distance * options.medium_min_distance;

  std::vector<Edge> edges;
  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  for (std::size_t i = 0; i < n; ++i) {
    // Sequential: residue i + d sends to i under relation "seq d".
    for (long d = -window; d <= window; ++d) {
      const long j = static_cast<long>(i) + d;
      if (j < 0 || j >= static_cast<long>(n)) continue;
      edges.push_back({u32(static_cast<std::size_t>(j)), u32(i), seq_rel[static_cast<std::size_t>(d + window)]});
    }
    std::vector<std::pair<double, std::uint32_t>> medium;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = dist2(i, j);
      if (d2 <= radius2) edges.push_back({u32(j), u32(i), radius_rel});
      const std::size_t sep = i > j ? i - j : j - i;
      if (sep > options.medium_min_separation && d2 > medium2) medium.emplace_back(d2, u32(j));
    }
    const std::size_t take = std::min(medium.size(), options.medium_first + options.medium_second);
    std::partial_sort(medium.begin(), medium.begin() + static_cast<std::ptrdiff_t>(take), medium.end());
    for (std::size_t rank = 0; rank < take; ++rank) {
      edges.push_back({medium[rank].second, u32(i), rank < options.medium_first ? med_a : med_b});
    }
    edges.push_back({u32(n), u32(i), virt});
  }
  out.graph = RelGraph::from_edges(n + 1, reg.size(), edges);
  return out;
}

ProteinChain read_protein_chain(std::istream& in) {
  ProteinChain chain;
  std::vector<double> coords;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    long index = 0;
    std::string code;
    double xyz[3];
    std::string extra;
    if (!(fields >> index >> code >> xyz[0] >> xyz[1] >> xyz[2]) || (fields >> extra) || code.size() != 1) {
      throw ParseError("expected `index code x y z`", lineno);
    }
    if (index != static_cast<long>(chain.sequence.size())) {
      throw ParseError("residue indices must be consecutive from 0", lineno);
    }
    try {
      amino_acid_index(code[0]);
    } catch (const DataError& e) {
      throw ParseError(e.what(), lineno);
    }
    for (double v : xyz) {
      if (!std::isfinite(v)) throw ParseError("non-finite coordinate", lineno);
    }
    chain.sequence.push_back(code[0]);
    coords.insert(coords.end(), xyz, xyz + 3);
  }
  chain.coords = Tensor<double>::from({chain.sequence.size(), 3}, std::move(coords));
  return chain;
}

template <typename T>
Tensor<T> residue_features(const ProteinChain& chain) {
  const std::size_t n = chain.length(), types = kAminoAcids.size();
  std::vector<T> values(n * types, T(0));
  for (std::size_t i = 0; i < n; ++i) values[i * types + amino_acid_index(chain.sequence[i])] = T(1);
  return Tensor<T>::from({n, types}, std::move(values));
}

// ---------------------------------------------------------------------------
// Knowledge graphs

std::uint32_t KnowledgeGraph::inverse(std::uint32_t rel) const {
  const auto base = static_cast<std::uint32_t>(base_relations());
  return rel < base ? rel + base : rel - base;
}

RelGraph build_fact_graph(std::size_t num_entities, std::size_t base_relations,
                          const std::vector<Triplet>& triplets) {
  std::vector<Edge> edges;
  edges.reserve(2 * triplets.size());
  const auto base = static_cast<std::uint32_t>(base_relations);
  for (const Triplet& t : triplets) {
    edges.push_back({t.head, t.tail, t.rel});
    edges.push_back({t.tail, t.head, t.rel + base});
  }
  return RelGraph::from_edges(num_entities, 2 * base_relations, edges, true);
}

namespace {

using RawTriplet = std::array<std::string, 3>;

std::vector<RawTriplet> parse_triplets(std::istream& in, const char* split) {
  std::vector<RawTriplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    RawTriplet t;
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const std::size_t tab = line.find('\t', start);
      const bool last = f == 2;
      if (last != (tab == std::string::npos)) {
        throw ParseError(std::string(split) + ": expected `head<TAB>relation<TAB>tail`", lineno);
      }
      t[f] = line.substr(start, last ? std::string::npos : tab - start);
      if (t[f].empty()) throw ParseError(std::string(split) + ": empty field", lineno);
      start = tab + 1;
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

KnowledgeGraph load_triplets(std::istream& train, std::istream& valid, std::istream& test) {
  const auto raw_train = parse_triplets(train, "train");
  const auto raw_valid = parse_triplets(valid, "valid");
  const auto raw_test = parse_triplets(test, "test");
  if (raw_train.empty()) throw DataError("training split is empty");

  KnowledgeGraph kg;
  std::unordered_map<std::string, std::uint32_t> entities, relations;
  auto intern = [](std::unordered_map<std::string, std::uint32_t>& map, std::vector<std::string>& names,
                   const std::string& key) {
    auto [it, inserted] = map.try_emplace(key, static_cast<std::uint32_t>(names.size()));
    if (inserted) names.push_back(key);
    return it->second;
  };
  for (const auto* split : {&raw_train, &raw_valid, &raw_test}) {
    for (const auto& t : *split) {
      intern(entities, kg.entity_names, t[0]);
      intern(relations, kg.relation_names, t[1]);
      intern(entities, kg.entity_names, t[2]);
    }
  }
  auto convert = [&](const std::vector<RawTriplet>& raw, Split split) {
    TripletStore store;
    store.num_entities = kg.entity_names.size();
    store.num_relations = 2 * kg.relation_names.size();
    store.split = split;
    for (const auto& t : raw) store.triplets.push_back({entities.at(t[0]), relations.at(t[1]), entities.at(t[2])});
    return store;
  };
  kg.train = convert(raw_train, Split::kTrain);
  kg.valid = convert(raw_valid, Split::kValid);
  kg.test = convert(raw_test, Split::kTest);
  kg.fact_graph = build_fact_graph(kg.num_entities(), kg.base_relations(), kg.train.triplets);
  return kg;
}

KnowledgeGraph load_triplets(const std::filesystem::path& train, const std::filesystem::path& valid,
                             const std::filesystem::path& test) {
  auto open = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return in;
  };
  auto a = open(train), b = open(valid), c = open(test);
  return load_triplets(a, b, c);
}

template struct PatchGrid<float>;
template struct PatchGrid<double>;
template std::vector<Edge> image_medium_edges(const PatchGrid<float>&, std::size_t, std::uint32_t);
template std::vector<Edge> image_medium_edges(const PatchGrid<double>&, std::size_t, std::uint32_t);
template ImageGraph build_image_graph(const PatchGrid<float>&, const ImageGraphOptions&);
template ImageGraph build_image_graph(const PatchGrid<double>&, const ImageGraphOptions&);
template Tensor<float> residue_features(const ProteinChain&);
template Tensor<double> residue_features(const ProteinChain&);

}  // namespace eurnet
