#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "eurnet/relgraph.hpp"
#include "eurnet/tensor.hpp"

namespace eurnet {

enum class RangeGroup { kShort, kMedium, kLong };

std::string_view to_string(RangeGroup group);

/// Named relation slots with contiguous ids, grouped by interaction range.
class RelationRegistry {
 public:
  struct Entry {
    std::string name;
    RangeGroup group;
  };

  std::uint32_t add(RangeGroup group, std::string name);
  std::uint32_t id(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::uint32_t> ids(RangeGroup group) const;

 private:
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Images

/// H×W patches with row-major features [H·W×C].
template <typename T>
struct PatchGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor<T> features;

  std::size_t num_patches() const { return height * width; }
  std::size_t channels() const { return features.cols(); }
  void validate() const;
};

/// Relation ids produced by image_short_edges: the direction the message comes from.
enum ShortRelation : std::uint32_t { kFromUp = 0, kFromDown = 1, kFromLeft = 2, kFromRight = 3 };

/// One incoming edge per existing 4-neighbor; 2H(W−1) + 2W(H−1) edges.
std::vector<Edge> image_short_edges(std::size_t height, std::size_t width);

/// For each patch, incoming edges from its K nearest patches in feature space
/// (Euclidean, ties to the lower index) outside its 2×2 window, all under `rel`.
template <typename T>
std::vector<Edge> image_medium_edges(const PatchGrid<T>& grid, std::size_t k, std::uint32_t rel = 0);

/// Virtual-node layout for long-range image edges. Node ids, relative to a
/// graph whose first H·W nodes are patches: the whole-image node is H·W, the
/// context node of patch p is H·W + 1 + p.
struct LongEdgeSpec {
  std::size_t num_patches = 0;
  std::size_t global_nodes = 1;
  std::size_t global_edges = 0;   // whole-image node → every patch
  std::size_t context_nodes = 0;  // one per patch
  std::size_t context_edges = 0;  // context node → its patch
  static constexpr std::size_t relation_count = 2;

  std::size_t global_node() const { return num_patches; }
  std::size_t context_node(std::size_t patch) const { return num_patches + 1 + patch; }
  std::size_t total_nodes() const { return num_patches + global_nodes + context_nodes; }
  std::vector<Edge> materialize(std::uint32_t global_rel, std::uint32_t context_rel) const;
};

LongEdgeSpec image_long_edge_spec(std::size_t height, std::size_t width);

struct ImageGraphOptions {
  std::size_t k = 12;
  bool use_medium = true;
};

/// Short + (optional) medium + long relations over patches and virtual nodes.
struct ImageGraph {
  RelGraph graph;
  RelationRegistry registry;
  LongEdgeSpec long_spec;
};

template <typename T>
ImageGraph build_image_graph(const PatchGrid<T>& grid, const ImageGraphOptions& options);

/// Binary patch grid: magic, H, W, C as little-endian u32, then H·W·C
/// little-endian f32 values.
inline constexpr std::uint32_t kPatchGridMagic = 0x44495247;  // "GRID"
PatchGrid<float> read_patch_grid(std::istream& in);
void write_patch_grid(std::ostream& out, const PatchGrid<float>& grid);

// ---------------------------------------------------------------------------
// Proteins

/// 20 standard residues followed by selenocysteine (U) and pyrrolysine (O).
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWYUO";
std::size_t amino_acid_index(char code);

struct ProteinChain {
  std::string sequence;
  Tensor<double> coords;  // [L×3], angstroms

  std::size_t length() const { return sequence.size(); }
  void validate() const;
};

struct ProteinGraphOptions {
  std::size_t sequential_window = 2;   // offsets −w..w, one relation each
  double radius = 10.0;                // radius edges within this distance
  std::size_t medium_min_separation = 5;  // medium candidates need |i−j| > this
  double medium_min_distance = 10.0;      // ... and distance > this
  std::size_t medium_first = 5;        // ranks 1..first
  std::size_t medium_second = 5;       // ranks first+1..first+second
};

/// Cα graph. Nodes 0..L−1 are residues, node L is the whole-protein virtual node.
struct ProteinGraph {
  RelGraph graph;
  RelationRegistry registry;
  std::size_t num_residues = 0;
  std::size_t virtual_node() const { return num_residues; }
};

ProteinGraph protein_edges(const ProteinChain& chain, const ProteinGraphOptions& options = {});

/// `index code x y z` per line; `#` comments ignored.
ProteinChain read_protein_chain(std::istream& in);

/// One-hot residue types, [L×22].
template <typename T>
Tensor<T> residue_features(const ProteinChain& chain);

// ---------------------------------------------------------------------------
// Knowledge graphs

enum class Split { kTrain, kValid, kTest };

struct Triplet {
  std::uint32_t head = 0;
  std::uint32_t rel = 0;
  std::uint32_t tail = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct TripletStore {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;  // doubled: r + base is the inverse of r
  std::vector<Triplet> triplets;
  Split split = Split::kTrain;
};

struct KnowledgeGraph {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;  // base relations only
  TripletStore train, valid, test;
  RelGraph fact_graph;  // train triplets and their inverses

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t base_relations() const { return relation_names.size(); }
  std::size_t num_relations() const { return 2 * relation_names.size(); }
  std::uint32_t inverse(std::uint32_t rel) const;
};

/// Parses `head<TAB>relation<TAB>tail` files. Vocabularies cover all splits in
/// order of first appearance; the fact graph uses training triplets only.
KnowledgeGraph load_triplets(std::istream& train, std::istream& valid, std::istream& test);
KnowledgeGraph load_triplets(const std::filesystem::path& train, const std::filesystem::path& valid,
                             const std::filesystem::path& test);

/// Fact graph edges for a set of triplets: (h→t, r) and (t→h, r⁻¹).
RelGraph build_fact_graph(std::size_t num_entities, std::size_t base_relations,
                          const std::vector<Triplet>& triplets);

}  // namespace eurnet
