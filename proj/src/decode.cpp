#include "synprobe/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <tuple>

#include <json.hpp>

#include "synprobe/common.hpp"

namespace synprobe {

UnionFind::UnionFind(int n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1) {
  std::iota(parent_.begin(), parent_.end(), 0);
}

int UnionFind::find(int x) {
  int root = x;
  while (parent_[static_cast<std::size_t>(root)] != root) root = parent_[static_cast<std::size_t>(root)];
  while (parent_[static_cast<std::size_t>(x)] != root) {
    int next = parent_[static_cast<std::size_t>(x)];
    parent_[static_cast<std::size_t>(x)] = root;
    x = next;
  }
  return root;
}

bool UnionFind::unite(int x, int y) {
  int a = find(x);
  int b = find(y);
  if (a == b) return false;
  if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)]) std::swap(a, b);
  parent_[static_cast<std::size_t>(b)] = a;
  size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
  return true;
}

bool PredictedTree::contains(const Edge& e) const { return std::binary_search(edges.begin(), edges.end(), e); }

PredictedTree kruskal_mst(const DistanceMatrix& dist, std::string source) {
  const int t = dist.size();
  if (t < 1) throw InvariantError("cannot decode an empty distance matrix");
  struct Candidate {
    double w;
    int i;
    int j;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(t) * static_cast<std::size_t>(t - 1) / 2);
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) {
      const double w = dist(i, j);
      if (!std::isfinite(w)) {
        throw InvariantError("non-finite distance at (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      }
      cands.push_back({w, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.w, a.i, a.j) < std::tie(b.w, b.i, b.j);
  });
  PredictedTree tree;
  tree.size = t;
  tree.source = std::move(source);
  UnionFind uf(t);
  for (const auto& c : cands) {
    if (uf.unite(c.i, c.j)) {
      tree.edges.emplace_back(c.i + 1, c.j + 1);
      if (static_cast<int>(tree.edges.size()) == t - 1) break;
    }
  }
  std::sort(tree.edges.begin(), tree.edges.end());
  return tree;
}

std::vector<EdgeFlag> edge_accuracy(const PredictedTree& pred, const DependencyTree& gold) {
  if (pred.size != gold.size()) {
    throw InvariantError("predicted tree has " + std::to_string(pred.size) + " words, gold has " +
                         std::to_string(gold.size()));
  }
  std::vector<EdgeFlag> flags;
  flags.reserve(static_cast<std::size_t>(gold.size()));
  for (int c = 1; c <= gold.size(); ++c) {
    const int h = gold.head(c);
    if (h == 0) continue;
    flags.push_back({h, c, pred.contains(Edge(h, c))});
  }
  return flags;
}

double uuas(const PredictedTree& pred, const DependencyTree& gold) {
  const auto flags = edge_accuracy(pred, gold);
  if (flags.empty()) return 1.0;
  const auto hits = std::count_if(flags.begin(), flags.end(), [](const EdgeFlag& f) { return f.correct; });
  return static_cast<double>(hits) / static_cast<double>(flags.size());
}

std::string_view to_string(BaselineType b) {
  switch (b) {
    case BaselineType::activation_space: return "activation_space";
    case BaselineType::linear_informed: return "linear_informed";
    case BaselineType::random: return "random";
  }
  return "random";
}

BaselineType parse_baseline(std::string_view name) {
  if (name == "activation_space") return BaselineType::activation_space;
  if (name == "linear_informed") return BaselineType::linear_informed;
  if (name == "random") return BaselineType::random;
  throw std::invalid_argument("unknown baseline '" + std::string(name) + "'");
}

DistanceMatrix activation_distance(const EmbeddingRecord& record) {
  const Eigen::MatrixXd h = record.vectors.cast<double>();
  const int t = static_cast<int>(h.rows());
  DistanceMatrix out(t);
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) out.set(i, j, (h.row(i) - h.row(j)).squaredNorm());
  }
  return out;
}

DistanceMatrix baseline_distance(const BaselineKind& kind, const Sentence& sentence, const EmbeddingRecord* record) {
  if (kind.type == BaselineType::activation_space) {
    if (!record) throw std::invalid_argument("activation_space baseline needs an activation record");
    return activation_distance(*record);
  }
  if (!(kind.noise_scale > 0.0)) throw std::invalid_argument("baseline noise scale must be positive");
  const int t = static_cast<int>(sentence.size());
  Rng rng(derive_seed(kind.seed, sentence_key(sentence)));
  DistanceMatrix out(t);
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) {
      const double eps = rng.uniform(0.0, kind.noise_scale);
      const double base = kind.type == BaselineType::linear_informed ? static_cast<double>(j - i) : 0.0;
      out.set(i, j, base + eps);
    }
  }
  return out;
}

void write_edge_list(std::ostream& out, std::string_view sentence_id, const PredictedTree& tree) {
  out << "# sent_id = " << sentence_id << '\n';
  for (const auto& e : tree.edges) out << e.a << '\t' << e.b << '\n';
  out << '\n';
}

std::string trees_to_json(const std::vector<std::pair<std::string, PredictedTree>>& trees, std::string_view provenance) {
  nlohmann::ordered_json doc;
  doc["provenance"] = std::string(provenance);
  doc["source"] = trees.empty() ? std::string() : trees.front().second.source;
  nlohmann::ordered_json body = nlohmann::ordered_json::object();
  for (const auto& [id, tree] : trees) {
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& e : tree.edges) edges.push_back({e.a, e.b});
    body[id] = {{"size", tree.size}, {"edges", std::move(edges)}};
  }
  doc["trees"] = std::move(body);
  return doc.dump(1);
}

std::vector<std::pair<std::string, PredictedTree>> trees_from_json(std::string_view text) {
  const auto doc = nlohmann::ordered_json::parse(text);
  const std::string source = doc.value("source", std::string());
  std::vector<std::pair<std::string, PredictedTree>> out;
  for (const auto& [id, entry] : doc.at("trees").items()) {
    PredictedTree tree;
    tree.size = entry.at("size").get<int>();
    tree.source = source;
    for (const auto& e : entry.at("edges")) tree.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    std::sort(tree.edges.begin(), tree.edges.end());
    out.emplace_back(id, std::move(tree));
  }
  return out;
}

}  // namespace synprobe
