#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synprobe/activations.hpp"
#include "synprobe/treebank.hpp"

namespace synprobe {

/// Disjoint sets with path compression and union by size.
class UnionFind {
public:
  explicit UnionFind(int n);
  int find(int x);
  /// False when x and y were already connected.
  bool unite(int x, int y);

private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

/// Undirected spanning tree over words 1..size.
struct PredictedTree {
  int size = 0;
  std::vector<Edge> edges;  // sorted
  std::string source;

  bool contains(const Edge& e) const;
};

/// Kruskal over the complete graph. Equal weights are broken by (i, j)
/// lexicographic order. Throws InvariantError on non-finite entries.
PredictedTree kruskal_mst(const DistanceMatrix& dist, std::string source = "probe");

struct EdgeFlag {
  int head = 0;
  int child = 0;
  bool correct = false;
};

/// One flag per gold edge, ordered by child index. Direction and label are ignored.
std::vector<EdgeFlag> edge_accuracy(const PredictedTree& pred, const DependencyTree& gold);

/// Fraction of gold edges recovered; 1.0 for single-word sentences.
double uuas(const PredictedTree& pred, const DependencyTree& gold);

enum class BaselineType { activation_space, linear_informed, random };

std::string_view to_string(BaselineType b);
BaselineType parse_baseline(std::string_view name);

struct BaselineKind {
  BaselineType type = BaselineType::linear_informed;
  double noise_scale = 0.4;  // upper bound of the uniform perturbation
  std::uint64_t seed = 0;
};

/// ||h_i - h_j||^2 on raw activations.
DistanceMatrix activation_distance(const EmbeddingRecord& record);

/// Baseline prediction for one sentence. The perturbation stream depends on
/// (seed, sentence key) only, so results do not depend on evaluation order.
DistanceMatrix baseline_distance(const BaselineKind& kind, const Sentence& sentence, const EmbeddingRecord* record);

/// "# sent_id = X" followed by one "a<TAB>b" line per edge and a blank line.
void write_edge_list(std::ostream& out, std::string_view sentence_id, const PredictedTree& tree);

/// {"source": ..., "trees": {"<sentence_id>": [[a, b], ...], ...}}
std::string trees_to_json(const std::vector<std::pair<std::string, PredictedTree>>& trees, std::string_view provenance);
std::vector<std::pair<std::string, PredictedTree>> trees_from_json(std::string_view text);

}  // namespace synprobe
