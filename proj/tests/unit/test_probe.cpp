#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "../oracles.hpp"
#include "synprobe/grammar.hpp"
#include "synprobe/probe.hpp"

using namespace synprobe;

namespace {

Token tok(int index, const char* form) {
  Token t;
  t.index = index;
  t.form = form;
  return t;
}

// Random sentence with random activations and labels drawn from a tiny set so
// that both same-label and different-label edge pairs occur.
ProbeExample random_example(int t, int d, Rng& rng, std::uint64_t id) {
  Sentence s;
  s.id = std::to_string(id);
  const auto heads = oracle::random_heads(t, rng);
  const char* labels[] = {"nsubj", "det", "obj"};
  for (int i = 0; i < t; ++i) {
    Token tok;
    tok.index = i + 1;
    tok.form = "w" + std::to_string(i);
    tok.head = heads[static_cast<std::size_t>(i)];
    tok.deprel = tok.head == 0 ? "root" : labels[rng.below(3)];
    s.tokens.push_back(tok);
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

double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

std::vector<ProbeExample> oracle_examples(std::size_t count, std::uint64_t seed, Eigen::MatrixXd* basis) {
  GenerationSpec spec;
  spec.seed = seed;
  spec.cells = {{Structure::pp, std::nullopt, 0, count / 2}, {Structure::rb, std::nullopt, 1, count - count / 2}};
  const auto corpus = generate_corpus(spec, Lexicon::builtin());
  const auto oracle = synthesize_oracle(corpus, 24, seed);
  if (basis) *basis = oracle.basis;
  std::vector<ProbeExample> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) out.push_back(make_example(corpus[i], oracle.records[i]));
  return out;
}

}  // namespace

TEST_SUITE("probe") {
  TEST_CASE("init is seeded, bounded and validated") {
    const auto a = init_probe(ProbeKind::structural, 4, 9, 1);
    const auto b = init_probe(ProbeKind::structural, 4, 9, 1);
    CHECK(a.B == b.B);
    CHECK(a.B.cwiseAbs().maxCoeff() <= 1.0 / 3.0);
    CHECK(init_probe(ProbeKind::polar, 6, 6, 2).B.fullPivLu().rank() == 6);
    CHECK_THROWS_AS(init_probe(ProbeKind::structural, 10, 9, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_probe(ProbeKind::structural, 0, 9, 1), std::invalid_argument);
  }

  TEST_CASE("structural loss spot value") {
    Sentence s;
    s.id = "1";
    s.tokens = {tok(1, "a"), tok(2, "b")};
    s.tokens[0].head = 2;
    s.tokens[0].deprel = "nsubj";
    s.tokens[1].deprel = "root";
    EmbeddingRecord r;
    r.sentence_id = 1;
    r.words = {"a", "b"};
    r.surprisals = {1, 1};
    r.vectors.resize(2, 1);
    r.vectors << 0.0f, 2.0f;
    const ProbeParams p{ProbeKind::structural, Eigen::MatrixXd::Ones(1, 1)};
    const std::vector<ProbeExample> batch = {make_example(s, r)};
    CHECK(structural_loss(p, batch) == 1.5);
  }

  TEST_CASE("structural loss vanishes at the oracle and is permutation invariant") {
    Eigen::MatrixXd basis;
    const auto data = oracle_examples(20, 5, &basis);
    const ProbeParams exact{ProbeKind::structural, basis.transpose()};
    CHECK(structural_loss(exact, data) < 1e-5);
    // The loss is an absolute deviation, so the oracle is a kink rather than
    // a stationary point: every nearby probe scores at least as badly.
    Rng perturb(4);
    const double at_oracle = structural_loss(exact, data);
    for (int trial = 0; trial < 10; ++trial) {
      ProbeParams nearby = exact;
      for (Eigen::Index k = 0; k < nearby.B.size(); ++k) nearby.B.data()[k] += 1e-3 * perturb.normal();
      CHECK(structural_loss(nearby, data) > at_oracle);
    }

    Rng rng(3);
    const auto ex = random_example(6, 4, rng, 1);
    const auto p = init_probe(ProbeKind::structural, 3, 4, 9);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.setIdentity();
    std::vector<int> idx = {3, 1, 5, 0, 2, 4};
    for (int i = 0; i < 6; ++i) perm.indices()[i] = idx[static_cast<std::size_t>(i)];
    ProbeExample shuffled = ex;
    shuffled.activations = perm * ex.activations;
    shuffled.gold = perm * ex.gold * perm.transpose();
    CHECK(structural_loss(p, std::vector<ProbeExample>{ex}) ==
          doctest::Approx(structural_loss(p, std::vector<ProbeExample>{shuffled})).epsilon(1e-12));
  }

  TEST_CASE("angular loss reference terms") {
    // Two one-edge sentences, d = 2, B = I: the probed vectors are chosen directly.
    auto single_edge = [](std::uint64_t id, Eigen::Vector2d child, const std::string& label) {
      Sentence s;
      s.id = std::to_string(id);
      s.tokens = {tok(1, "h"), tok(2, "c")};
      s.tokens[0].deprel = "root";
      s.tokens[1].head = 1;
      s.tokens[1].deprel = label;
      EmbeddingRecord r;
      r.sentence_id = id;
      r.words = {"h", "c"};
      r.surprisals = {1, 1};
      r.vectors.resize(2, 2);
      r.vectors.row(0).setZero();
      r.vectors.row(1) = child.cast<float>().transpose();
      return make_example(s, r);
    };
    const ProbeParams id2{ProbeKind::polar, Eigen::MatrixXd::Identity(2, 2)};
    const std::vector<EdgePair> pair = {{0, 0, 1, 0}};
    auto term = [&](Eigen::Vector2d a, const char* la, Eigen::Vector2d b, const char* lb) {
      const std::vector<ProbeExample> batch = {single_edge(1, a, la), single_edge(2, b, lb)};
      return angular_loss(id2, batch, pair);
    };
    CHECK(term({1, 0}, "nsubj", {1, 0}, "nsubj").value == doctest::Approx(0.0));
    CHECK(term({1, 0}, "nsubj", {0, 1}, "obj").value == doctest::Approx(0.0));
    CHECK(term({1, 0}, "nsubj", {-1, 0}, "nsubj").value == doctest::Approx(4.0));
    const auto skipped = term({0, 0}, "nsubj", {1, 0}, "nsubj");
    CHECK(skipped.skipped_pairs == 1);
    CHECK(skipped.used_pairs == 0);
  }

  TEST_CASE("edge pair sampling") {
    Rng rng(1);
    std::vector<ProbeExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_example(5, 3, rng, static_cast<std::uint64_t>(i + 1)));
    // 16 edges -> 120 unordered pairs.
    Rng a(2);
    CHECK(sample_edge_pairs(batch, 5000, a).size() == 120);
    Rng b(2);
    const auto some = sample_edge_pairs(batch, 50, b);
    CHECK(some.size() == 50);
    std::set<std::tuple<int, int, int, int>> seen;
    for (const auto& p : some) {
      const auto key = std::make_tuple(p.example_a, p.edge_a, p.example_b, p.edge_b);
      CHECK(seen.insert(key).second);
      CHECK(std::make_pair(p.example_a, p.edge_a) != std::make_pair(p.example_b, p.edge_b));
    }
  }

  TEST_CASE("analytic gradients match central differences") {
    Rng rng(2718);
    double worst_structural = 0.0;
    double worst_polar = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const int d = 5;
      std::vector<ProbeExample> batch;
      const int n = 1 + static_cast<int>(rng.below(5));
      for (int i = 0; i < n; ++i) {
        batch.push_back(random_example(2 + static_cast<int>(rng.below(6)), d, rng, static_cast<std::uint64_t>(i + 1)));
      }
      const ProbeParams p = init_probe(ProbeKind::polar, 3, d, static_cast<std::uint64_t>(trial));
      Rng pr(static_cast<std::uint64_t>(trial));
      const auto pairs = sample_edge_pairs(batch, 5000, pr);

      const auto s = loss_gradient(p, batch, pairs, ProbeKind::structural, 10.0);
      const auto s_num = oracle::finite_difference(
          [&](const Eigen::MatrixXd& B) { return structural_loss({ProbeKind::structural, B}, batch); }, p.B, 1e-4);
      worst_structural = std::max(worst_structural, max_relative_error(s.gradient, s_num));

      const auto a = loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0);
      const auto a_num = oracle::finite_difference(
          [&](const Eigen::MatrixXd& B) {
            const ProbeParams q{ProbeKind::polar, B};
            return structural_loss(q, batch) + 10.0 * angular_loss(q, batch, pairs).value;
          },
          p.B, 1e-4);
      worst_polar = std::max(worst_polar, max_relative_error(a.gradient, a_num));
      CHECK(a.total == doctest::Approx(a.structural + 10.0 * a.angular));
    }
    CHECK(worst_structural <= 1e-4);
    CHECK(worst_polar <= 1e-4);
  }

  TEST_CASE("threaded gradients agree with the serial reduction") {
    Rng rng(5);
    std::vector<ProbeExample> batch;
    for (int i = 0; i < 9; ++i) batch.push_back(random_example(6, 4, rng, static_cast<std::uint64_t>(i + 1)));
    const auto p = init_probe(ProbeKind::polar, 4, 4, 1);
    Rng pr(1);
    const auto pairs = sample_edge_pairs(batch, 5000, pr);
    const auto one = loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0, 1);
    const auto three = loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0, 3);
    CHECK(one.total == doctest::Approx(three.total).epsilon(1e-12));
    CHECK((one.gradient - three.gradient).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0, 3).gradient == three.gradient);
  }

  TEST_CASE("lambda scales the angular contribution") {
    Rng rng(6);
    std::vector<ProbeExample> batch = {random_example(6, 4, rng, 1), random_example(5, 4, rng, 2)};
    const auto p = init_probe(ProbeKind::polar, 3, 4, 2);
    Rng pr(2);
    const auto pairs = sample_edge_pairs(batch, 5000, pr);
    const auto l10 = loss_gradient(p, batch, pairs, ProbeKind::polar, 10.0);
    const auto l20 = loss_gradient(p, batch, pairs, ProbeKind::polar, 20.0);
    REQUIRE(l10.angular > 0.0);
    CHECK(l20.total > l10.total);
  }

  TEST_CASE("orthogonal rotations of the probe leave predictions unchanged") {
    Rng rng(7);
    const auto ex = random_example(6, 5, rng, 1);
    const auto p = init_probe(ProbeKind::structural, 4, 5, 3);
    Eigen::MatrixXd g(4, 4);
    for (int i = 0; i < 16; ++i) g(i / 4, i % 4) = rng.normal();
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    const ProbeParams rotated{ProbeKind::structural, Q * p.B};
    CHECK(structural_loss(p, std::vector<ProbeExample>{ex}) ==
          doctest::Approx(structural_loss(rotated, std::vector<ProbeExample>{ex})).epsilon(1e-12));
  }

  TEST_CASE("adam behaves like the closed form") {
    Eigen::MatrixXd params = Eigen::MatrixXd::Ones(2, 2);
    AdamState state;
    const AdamConfig cfg;
    adam_step(params, state, Eigen::MatrixXd::Zero(2, 2), cfg);
    CHECK(params == Eigen::MatrixXd::Ones(2, 2));

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
    AdamState s2;
    Eigen::MatrixXd g(1, 1);
    g << 3.0;
    double last = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double before = x(0, 0);
      adam_step(x, s2, g, cfg);
      last = before - x(0, 0);
    }
    CHECK(last == doctest::Approx(cfg.learning_rate).epsilon(1e-3));

    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_WITH_AS(adam_step(x, s2, bad, cfg, "epoch 3 batch 7"), doctest::Contains("epoch 3 batch 7"),
                         InvariantError);
  }

  TEST_CASE("training is reproducible and respects epochs = 0") {
    Eigen::MatrixXd basis;
    const auto data = oracle_examples(60, 9, &basis);
    const std::span<const ProbeExample> train_set(data.data(), 48);
    const std::span<const ProbeExample> dev_set(data.data() + 48, 12);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.rank = 8;
    cfg.seed = 4;
    const auto none = train(ProbeKind::structural, train_set, dev_set, cfg);
    CHECK(none.history.train_loss.empty());
    CHECK(none.probe.B == init_probe(ProbeKind::structural, 8, 24, derive_seed(4, 1)).B);

    cfg.epochs = 3;
    cfg.batch_size = 10;
    const auto a = train(ProbeKind::polar, train_set, dev_set, cfg);
    const auto b = train(ProbeKind::polar, train_set, dev_set, cfg);
    CHECK(a.probe.B == b.probe.B);
    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.dev_loss.size() == 3);
    CHECK(a.history.dev_uuas.size() == 3);
    CHECK(a.history.best_epoch >= 0);
    CHECK_THROWS_AS(train(ProbeKind::structural, {}, dev_set, cfg), std::invalid_argument);
  }

  TEST_CASE("checkpoints round-trip in float precision") {
    const auto p = init_probe(ProbeKind::polar, 3, 5, 8);
    std::stringstream buf;
    write_probe(buf, p, "epochs=30\n");
    const auto back = read_probe(buf);
    CHECK(back.probe.kind == ProbeKind::polar);
    CHECK(back.config == "epochs=30\n");
    CHECK((back.probe.B - p.B).cwiseAbs().maxCoeff() < 1e-7);
    std::istringstream bad("SPRX");
    CHECK_THROWS_AS(read_probe(bad), FormatError);
  }
}
