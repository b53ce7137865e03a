// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "synprobe/activations.hpp"
#include "synprobe/analysis.hpp"
#include "synprobe/decode.hpp"
#include "synprobe/grammar.hpp"
#include "synprobe/probe.hpp"
#include "synprobe/treebank.hpp"

using namespace synprobe;

namespace tol {
constexpr double kOracleUuas = 0.95;
constexpr double kOracleSeconds = 300.0;
constexpr double kFdStep = 1e-4;
constexpr double kFdRelative = 1e-4;
constexpr double kRidgeOracle = 1e-8;
constexpr double kRidgeClosedForm = 1e-15;
constexpr double kSpotValue = 0.0;  // exact
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<Sentence> mixed_corpus(std::size_t per_structure, std::uint64_t seed) {
  GenerationSpec spec;
  spec.seed = seed;
  spec.cells = {{Structure::pp, std::nullopt, 0, per_structure},
                {Structure::ce, std::nullopt, 1, per_structure},
                {Structure::rb, std::nullopt, 1, per_structure},
                {Structure::simple, 0, 2, per_structure}};
  return generate_corpus(spec, Lexicon::builtin());
}

Sentence sentence_from_heads(const std::vector<int>& heads, const std::string& id) {
  Sentence s;
  s.id = id;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    Token t;
    t.index = static_cast<int>(i + 1);
    t.form = "w" + std::to_string(i + 1);
    t.head = heads[i];
    t.deprel = heads[i] == 0 ? "root" : "dep";
    s.tokens.push_back(t);
  }
  return s;
}

ProbeExample random_example(int t, int d, Rng& rng, std::uint64_t id) {
  auto s = sentence_from_heads(oracle::random_heads(t, rng), std::to_string(id));
  const char* labels[] = {"nsubj", "det", "obj"};
  for (auto& tok : s.tokens) {
    if (tok.head != 0) tok.deprel = labels[rng.below(3)];
  }
  EmbeddingRecord r;
  r.sentence_id = id;
  r.vectors.resize(t, d);
  for (int i = 0; i < t; ++i) {
    r.words.push_back(s.tokens[static_cast<std::size_t>(i)].form);
    r.surprisals.push_back(1.0f);
    for (int j = 0; j < d; ++j) r.vectors(i, j) = static_cast<float>(rng.normal());
  }
  return make_example(s, r);
}

// ---------------------------------------------------------------------------

Outcome oracle_recovery() {
  // One corpus of unique sentences, dealt so that every structure appears in
  // both parts: 500 training sentences, 100 dev and 200 held out.
  const auto corpus = mixed_corpus(200, 101);
  const auto oracle = synthesize_oracle(corpus, 64, 303);
  const auto examples = make_examples(align(corpus, oracle.records));
  std::vector<ProbeExample> train_set, dev_set, eval_set;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i % 8 < 5) {
      train_set.push_back(examples[i]);
    } else if (i % 8 == 5) {
      dev_set.push_back(examples[i]);
    } else {
      eval_set.push_back(examples[i]);
    }
  }

  TrainConfig config;
  config.rank = oracle.slots;
  config.seed = 404;
  config.threads = 1;
  const auto start = std::chrono::steady_clock::now();
  const auto result = train(ProbeKind::structural, train_set, dev_set, config);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double score = pooled_uuas(result.probe, eval_set);
  return {score >= tol::kOracleUuas && secs < tol::kOracleSeconds &&
              static_cast<int>(result.history.train_loss.size()) <= 30,
          "rank " + std::to_string(oracle.slots) + ", " + std::to_string(train_set.size()) + " train sentences, held-out UUAS " +
              num(score) + " on " + std::to_string(eval_set.size()) + " sentences, training " + num(secs) + "s"};
}

Outcome gradient_check() {
  Rng rng(2024);
  double worst_structural = 0.0;
  double worst_polar = 0.0;
  auto rel = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& f) {
    return (a - f).cwiseAbs().maxCoeff() / std::max(f.cwiseAbs().maxCoeff(), 1e-8);
  };
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 6;
    std::vector<ProbeExample> batch;
    const int n = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) {
      batch.push_back(random_example(2 + static_cast<int>(rng.below(6)), d, rng, static_cast<std::uint64_t>(i + 1)));
    }
    const ProbeParams p = init_probe(ProbeKind::polar, 4, d, derive_seed(99, static_cast<std::uint64_t>(trial)));
    Rng pair_rng(static_cast<std::uint64_t>(trial));
    const auto pairs = sample_edge_pairs(batch, 5000, pair_rng);

    const auto s = loss_gradient(p, batch, pairs, ProbeKind::structural, 10.0);
    const auto s_fd = oracle::finite_difference(
        [&](const Eigen::MatrixXd& B) { return structural_loss({ProbeKind::structural, B}, batch); }, p.B, tol::kFdStep);
    worst_structural = std::max(worst_structural, rel(s.gradient, s_fd));

    const auto a = loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0);
    const auto a_fd = oracle::finite_difference(
        [&](const Eigen::MatrixXd& B) {
          const ProbeParams q{ProbeKind::polar, B};
          return structural_loss(q, batch) + 10.0 * angular_loss(q, batch, pairs).value;
        },
        p.B, tol::kFdStep);
    worst_polar = std::max(worst_polar, rel(a.gradient, a_fd));
  }
  return {worst_structural <= tol::kFdRelative && worst_polar <= tol::kFdRelative,
          "max relative error structural " + num(worst_structural) + ", structural+angular " + num(worst_polar)};
}

Outcome mst_exactness() {
  Rng rng(7);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = 2 + static_cast<int>(rng.below(5));
    const bool integral = trial % 2 == 0;
    DistanceMatrix w(t);
    for (int i = 0; i < t; ++i) {
      for (int j = i + 1; j < t; ++j) w.set(i, j, integral ? static_cast<double>(rng.below(6)) : rng.uniform());
    }
    const auto tree = kruskal_mst(w);
    double got = 0.0;
    for (const auto& e : tree.edges) got += w(e.a - 1, e.b - 1);
    if (got != oracle::brute_force_mst_weight(w.values())) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 1000 weights differ from exhaustive enumeration (t <= 6)"};
}

Outcome tree_metric_decoding() {
  const auto corpus = mixed_corpus(250, 11);
  std::size_t perfect = 0;
  for (const auto& s : corpus) {
    const auto gold = DependencyTree::from_sentence(s);
    perfect += uuas(kruskal_mst(tree_distance_matrix(gold)), gold) == 1.0;
  }
  return {perfect == corpus.size() && corpus.size() == 1000,
          std::to_string(perfect) + " of " + std::to_string(corpus.size()) + " sentences decoded with UUAS 1.0"};
}

Outcome linear_informed_law() {
  std::vector<Sentence> corpus = mixed_corpus(250, 13);
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    corpus.push_back(sentence_from_heads(oracle::random_heads(2 + static_cast<int>(rng.below(20)), rng),
                                         "random-" + std::to_string(i)));
  }
  std::size_t violations = 0;
  std::size_t edges = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto eval = evaluate(corpus, {}, [&](const Sentence& s, const EmbeddingRecord*) {
      return baseline_distance({BaselineType::linear_informed, 0.4, seed}, s, nullptr);
    }, "linear_informed");
    for (const auto& r : eval.records) {
      ++edges;
      violations += r.correct != (r.linear_distance == 1);
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(edges) + " gold edges, 3 seeds"};
}

Outcome loss_spot_value() {
  Sentence s = sentence_from_heads({2, 0}, "1");
  EmbeddingRecord r;
  r.sentence_id = 1;
  r.words = {"w1", "w2"};
  r.surprisals = {1.0f, 1.0f};
  r.vectors.resize(2, 1);
  r.vectors << 0.0f, 2.0f;  // squared distance 4 under the identity probe
  const ProbeExample ex = make_example(s, r);
  const ProbeParams identity{ProbeKind::structural, Eigen::MatrixXd::Identity(1, 1)};
  const double v = structural_loss(identity, std::span<const ProbeExample>(&ex, 1));
  return {std::abs(v - 1.5) <= tol::kSpotValue, "two-word loss = " + num(v)};
}

Outcome generator_fidelity() {
  std::vector<std::string> problems;
  StimulusSlots slots;
  slots.nouns = {{"the", "mouse", "mouse", Number::singular},
                 {"the", "cat", "cat", Number::singular},
                 {"the", "fox", "fox", Number::singular}};
  slots.verbs = {{"moves", "move", Number::singular}, {"chases", "chase", Number::singular},
                 {"protects", "protect", Number::singular}};
  std::string text = build_stimulus(Structure::ce, 2, slots).text();
  text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  if (text != "The mouse that the cat that the fox protects chases moves") problems.push_back("CE example: " + text);

  for (int n = 1; n <= 3; ++n) {
    GenerationSpec spec;
    spec.seed = static_cast<std::uint64_t>(n);
    spec.cells = {{Structure::pp, n, 0, 200}};
    for (const auto& s : generate_corpus(spec, Lexicon::builtin())) {
      if (std::abs(s.meta->verb_index - s.meta->subject_index) != 3 * n + 1) {
        problems.push_back("PP distance at nestings " + std::to_string(n));
        break;
      }
    }
  }

  const auto spec = GenerationSpec::default_corpus(2025);
  const auto corpus = generate_corpus(spec, Lexicon::builtin());
  if (corpus.size() != 80000) problems.push_back("corpus size " + std::to_string(corpus.size()));
  std::set<std::string> texts;
  std::size_t duplicates = 0, disagreements = 0, invalid = 0;
  for (const auto& s : corpus) {
    duplicates += !texts.insert(s.text()).second;
    try {
      const auto tree = DependencyTree::from_sentence(s);
      (void)tree;
    } catch (const std::exception&) {
      ++invalid;
      continue;
    }
    for (const auto& tok : s.tokens) {
      if (tok.deprel == "nsubj" && tok.number != s.token(tok.head).number) ++disagreements;
    }
    if (!s.meta || s.token(s.meta->verb_index).number != s.token(s.meta->subject_index).number) ++disagreements;
  }
  if (duplicates) problems.push_back(std::to_string(duplicates) + " duplicates");
  if (disagreements) problems.push_back(std::to_string(disagreements) + " agreement errors");
  if (invalid) problems.push_back(std::to_string(invalid) + " invalid trees");
  if (generate_corpus(spec, Lexicon::builtin()) != corpus) problems.push_back("not deterministic");

  std::string detail = problems.empty() ? "CE example matches, PP distance 3n+1, 80000 unique agreeing valid sentences, deterministic"
                                        : problems.front();
  for (std::size_t i = 1; i < problems.size(); ++i) detail += "; " + problems[i];
  return {problems.empty(), detail};
}

Outcome ridge_closed_form() {
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(200));
    const int p = 1 + static_cast<int>(rng.below(8));
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
      y(i) = i % 2 == 0 ? 1.0 : -1.0;
    }
    const double alpha = trial % 5 == 0 ? 0.1 : 100.0;
    worst = std::max(worst, (ridge_fit(X, y, alpha) - oracle::ridge_by_inverse(X, y, alpha)).cwiseAbs().maxCoeff());
  }
  Eigen::VectorXd y2(2);
  y2 << 1, -1;
  const auto w = ridge_fit(Eigen::MatrixXd::Identity(2, 2), y2, 100.0);
  const double closed = std::max(std::abs(w(0) - 1.0 / 101.0), std::abs(w(1) + 1.0 / 101.0));
  return {worst <= tol::kRidgeOracle && closed <= tol::kRidgeClosedForm,
          "max deviation from normal equations " + num(worst) + " over 50 instances; 2x2 case (" + num(w(0)) + ", " +
              num(w(1)) + ")"};
}

Outcome forest_sanity() {
  Rng rng(41);
  std::vector<EvalRecord> records;
  for (int i = 0; i < 6000; ++i) {
    EvalRecord r;
    r.sentence_id = std::to_string(i);
    r.linear_distance = 1 + static_cast<int>(rng.below(10));
    r.head_depth = static_cast<int>(rng.below(6));
    r.head_surprisal = rng.uniform(0.0, 12.0);
    r.child_surprisal = rng.uniform(0.0, 12.0);
    r.correct = r.linear_distance + 1.5 * rng.normal() < 4.0;
    records.push_back(r);
  }
  const auto table = build_features(records);
  ForestParams forest;
  forest.seed = 5;
  const auto rep = importance_cv(table, 5, 100.0, forest, 6);
  const auto lin = static_cast<Eigen::Index>(
      std::find(table.names.begin(), table.names.end(), "linear_distance") - table.names.begin());
  int good_folds = 0;
  std::string values;
  for (const auto& fold : rep.fold_signed) {
    Eigen::Index largest = 0;
    fold.cwiseAbs().maxCoeff(&largest);
    good_folds += largest == lin && fold(lin) < 0.0;
    values += (values.empty() ? "" : ", ") + num(fold(lin));
  }
  return {good_folds == 5 && rep.fold_signed.size() == 5,
          "linear distance largest and negative in " + std::to_string(good_folds) + " of 5 folds (" + values + ")"};
}

Outcome binding_oracle() {
  GenerationSpec spec;
  spec.seed = 51;
  spec.cells = {{Structure::pp, 1, 0, 200}, {Structure::pp, 2, 0, 200}, {Structure::pp, 3, 0, 200}};
  const auto corpus = generate_corpus(spec, Lexicon::builtin());
  const auto oracle = synthesize_oracle(corpus, 32, 52);
  const auto data = align(corpus, oracle.records);
  const auto eval = eval_records(data, ProbeParams{ProbeKind::structural, oracle.basis.transpose()});
  std::map<std::string, PredictedTree> trees(eval.trees.begin(), eval.trees.end());
  const auto rows = binding_profile(data.sentences, trees);
  double worst = 1.0;
  std::size_t total = 0;
  for (const auto& row : rows) {
    worst = std::min(worst, row.proportion(Binding::subject));
    if (row.nestings == 0) total += row.total;
  }
  return {!rows.empty() && worst == 1.0 && total == corpus.size(),
          "lowest subject proportion " + num(worst) + " over " + std::to_string(total) + " grammatical PP sentences"};
}

}  // namespace

int main() {
  report("oracle-recovery", oracle_recovery);
  report("gradient-finite-difference", gradient_check);
  report("mst-exactness", mst_exactness);
  report("tree-metric-decoding", tree_metric_decoding);
  report("linear-informed-baseline", linear_informed_law);
  report("loss-spot-value", loss_spot_value);
  report("generator-fidelity", generator_fidelity);
  report("ridge-closed-form", ridge_closed_form);
  report("forest-importance-sanity", forest_sanity);
  report("binding-oracle", binding_oracle);
  return failures;
}
