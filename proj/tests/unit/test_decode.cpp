#include <doctest.h>

#include <cmath>
#include <limits>

#include "../oracles.hpp"
#include "synprobe/decode.hpp"
#include "synprobe/grammar.hpp"
#include "synprobe/probe.hpp"

using namespace synprobe;

namespace {

DistanceMatrix random_matrix(int t, Rng& rng, bool integer_weights = false) {
  DistanceMatrix d(t);
  for (int i = 0; i < t; ++i) {
    for (int j = i + 1; j < t; ++j) {
      d.set(i, j, integer_weights ? static_cast<double>(rng.below(3)) : rng.uniform(0.0, 10.0));
    }
  }
  return d;
}

double weight(const PredictedTree& tree, const DistanceMatrix& d) {
  double w = 0.0;
  for (const auto& e : tree.edges) w += d(e.a - 1, e.b - 1);
  return w;
}

bool is_spanning_tree(const PredictedTree& tree) {
  if (static_cast<int>(tree.edges.size()) != tree.size - 1) return false;
  UnionFind uf(tree.size);
  for (const auto& e : tree.edges) {
    if (!uf.unite(e.a - 1, e.b - 1)) return false;
  }
  return true;
}

Sentence sentence_from_heads(const std::vector<int>& heads, const std::string& id = "1") {
  Sentence s;
  s.id = id;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    Token tok;
    tok.index = static_cast<int>(i) + 1;
    tok.form = "w";
    tok.head = heads[i];
    tok.deprel = "dep";
    s.tokens.push_back(tok);
  }
  return s;
}

}  // namespace

TEST_SUITE("decode") {
  TEST_CASE("pruefer enumeration counts t^(t-2) trees") {
    CHECK(oracle::all_spanning_trees(4).size() == 16);
    CHECK(oracle::all_spanning_trees(5).size() == 125);
    CHECK(oracle::all_spanning_trees(6).size() == 1296);
  }

  TEST_CASE("kruskal matches exhaustive enumeration") {
    Rng rng(31337);
    for (int trial = 0; trial < 300; ++trial) {
      const int t = 1 + static_cast<int>(rng.below(6));
      const auto d = random_matrix(t, rng);
      std::vector<std::pair<int, int>> best;
      const double ref = oracle::brute_force_mst_weight(d.values(), &best);
      const auto tree = kruskal_mst(d);
      CHECK(is_spanning_tree(tree));
      CHECK(weight(tree, d) == doctest::Approx(ref).epsilon(1e-12));
      // Continuous weights: the minimum is unique.
      for (std::size_t k = 0; k < best.size(); ++k) CHECK(tree.edges[k] == Edge(best[k].first + 1, best[k].second + 1));
    }
  }

  TEST_CASE("ties resolve lexicographically") {
    DistanceMatrix d(3);
    d.set(0, 1, 1);
    d.set(0, 2, 1);
    d.set(1, 2, 1);
    const auto tree = kruskal_mst(d);
    REQUIRE(tree.edges.size() == 2);
    CHECK(tree.edges[0] == Edge(1, 2));
    CHECK(tree.edges[1] == Edge(1, 3));
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const auto m = random_matrix(5, rng, true);
      CHECK(weight(kruskal_mst(m), m) == oracle::brute_force_mst_weight(m.values()));
    }
  }

  TEST_CASE("mst is invariant to shifts and positive scaling") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
      const int t = 2 + static_cast<int>(rng.below(10));
      const auto d = random_matrix(t, rng);
      Eigen::MatrixXd shifted = d.values().array() + 3.0;
      shifted.diagonal().setZero();
      const auto base = kruskal_mst(d).edges;
      CHECK(kruskal_mst(DistanceMatrix(shifted)).edges == base);
      CHECK(kruskal_mst(DistanceMatrix(Eigen::MatrixXd(d.values() * 2.5))).edges == base);
    }
  }

  TEST_CASE("non-finite distances are rejected") {
    DistanceMatrix d(2);
    d.set(0, 1, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(kruskal_mst(d), InvariantError);
    CHECK_THROWS_AS(kruskal_mst(DistanceMatrix(0)), InvariantError);
  }

  TEST_CASE("linear distances decode to the chain") {
    DistanceMatrix d(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = i + 1; j < 5; ++j) d.set(i, j, j - i);
    }
    const auto tree = kruskal_mst(d);
    for (int k = 0; k < 4; ++k) CHECK(tree.edges[static_cast<std::size_t>(k)] == Edge(k + 1, k + 2));
  }

  TEST_CASE("gold tree metrics decode to the gold tree") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const int t = 1 + static_cast<int>(rng.below(20));
      const DependencyTree gold(oracle::random_heads(t, rng));
      const auto tree = kruskal_mst(tree_distance_matrix(gold));
      CHECK(tree.edges == gold.edges());
      CHECK(uuas(tree, gold) == 1.0);
    }
  }

  TEST_CASE("edge accuracy flags") {
    const DependencyTree gold({0, 1, 1});  // edges {1,2}, {1,3}
    PredictedTree chain{3, {Edge(1, 2), Edge(2, 3)}, "x"};
    const auto flags = edge_accuracy(chain, gold);
    REQUIRE(flags.size() == 2);
    CHECK(flags[0].correct);
    CHECK_FALSE(flags[1].correct);
    CHECK(uuas(chain, gold) == 0.5);
    PredictedTree wrong_size{4, {}, "x"};
    CHECK_THROWS_AS(edge_accuracy(wrong_size, gold), InvariantError);
  }

  TEST_CASE("linear-informed baseline recovers exactly the adjacent gold edges") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      const int t = 2 + static_cast<int>(rng.below(15));
      const auto heads = oracle::random_heads(t, rng);
      const auto s = sentence_from_heads(heads, std::to_string(trial + 1));
      const DependencyTree gold(heads);
      const BaselineKind kind{BaselineType::linear_informed, 0.4, 5};
      const auto d = baseline_distance(kind, s, nullptr);
      CHECK((d.values() - d.values().transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(d.values().diagonal().cwiseAbs().maxCoeff() == 0.0);
      for (const auto& f : edge_accuracy(kruskal_mst(d), gold)) CHECK(f.correct == (std::abs(f.head - f.child) == 1));
      if (t <= 6) {
        std::vector<std::pair<int, int>> best;
        oracle::brute_force_mst_weight(d.values(), &best);
        for (std::size_t k = 0; k < best.size(); ++k) CHECK(best[k].second == best[k].first + 1);
      }
    }
  }

  TEST_CASE("baseline noise depends only on seed and sentence") {
    const auto s = sentence_from_heads({0, 1, 2, 3}, "42");
    const BaselineKind kind{BaselineType::random, 0.4, 9};
    CHECK(baseline_distance(kind, s, nullptr).values() == baseline_distance(kind, s, nullptr).values());
    BaselineKind other = kind;
    other.seed = 10;
    CHECK(baseline_distance(kind, s, nullptr).values() != baseline_distance(other, s, nullptr).values());
    BaselineKind bad = kind;
    bad.noise_scale = 0.0;
    CHECK_THROWS_AS(baseline_distance(bad, s, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(baseline_distance({BaselineType::activation_space, 0.4, 0}, s, nullptr), std::invalid_argument);
  }

  TEST_CASE("random baseline expected accuracy is 2/t") {
    // Every edge of the complete graph is equally likely to land in the MST
    // of i.i.d. weights, so each gold edge is recovered with probability
    // (t-1) / C(t,2) = 2/t.
    const std::vector<int> heads = {2, 0, 2, 3, 4, 2, 6};
    const DependencyTree gold(heads);
    const int t = static_cast<int>(heads.size());
    const int runs = 20000;
    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < runs; ++r) {
      const auto s = sentence_from_heads(heads);
      const auto acc = uuas(kruskal_mst(baseline_distance({BaselineType::random, 0.4, static_cast<std::uint64_t>(r)}, s,
                                                          nullptr)),
                            gold);
      sum += acc;
      sum_sq += acc * acc;
    }
    const double mean = sum / runs;
    const double se = std::sqrt((sum_sq / runs - mean * mean) / runs);
    CHECK(std::abs(mean - 2.0 / t) < 3.0 * se);
  }

  TEST_CASE("activation-space baseline equals the identity probe") {
    Rng rng(3);
    EmbeddingRecord rec;
    rec.vectors.resize(4, 3);
    for (int i = 0; i < 4; ++i) {
      rec.words.push_back("w");
      rec.surprisals.push_back(1.0f);
      for (int j = 0; j < 3; ++j) rec.vectors(i, j) = static_cast<float>(rng.normal());
    }
    const ProbeParams identity{ProbeKind::structural, Eigen::MatrixXd::Identity(3, 3)};
    const auto s = sentence_from_heads({0, 1, 2, 3});
    CHECK((baseline_distance({BaselineType::activation_space, 0.4, 0}, s, &rec).values() -
           predicted_distance_matrix(identity, rec).values())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  TEST_CASE("trees round-trip through json") {
    std::vector<std::pair<std::string, PredictedTree>> trees = {{"a", {3, {Edge(1, 2), Edge(2, 3)}, "probe"}},
                                                                {"b", {1, {}, "probe"}}};
    const auto text = trees_to_json(trees, "# header");
    const auto back = trees_from_json(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "a");
    CHECK(back[0].second.edges == trees[0].second.edges);
    CHECK(back[1].second.size == 1);
    CHECK(text.find("\"provenance\"") < text.find("\"trees\""));
  }
}
