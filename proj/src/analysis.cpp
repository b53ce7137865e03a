#include "synprobe/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "synprobe/common.hpp"

namespace synprobe {

namespace {

double mean_of(const std::vector<int>& v) {
  if (v.empty()) return 0.0;
  return static_cast<double>(std::accumulate(v.begin(), v.end(), 0L)) / static_cast<double>(v.size());
}

// Sample standard error of a 0/1 mean.
double sem_of(const std::vector<int>& v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (int x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

int clause_level(const DependencyTree& tree, int verb) {
  int level = 0;
  for (int node = verb; node != 0; node = tree.head(node)) {
    const auto& label = tree.label(node);
    if (label == "acl:relcl" || label == "ccomp") ++level;
  }
  return level;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw FormatError("unterminated quote on line " + std::to_string(line_no));
  out.push_back(std::move(cur));
  return out;
}

const std::vector<std::string> kRecordColumns = {
    "source",         "sentence_id",   "head",      "child",     "correct",     "linear_distance",
    "head_depth",     "head_surprisal", "child_surprisal", "deprel", "sentence_length", "structure",
    "nestings",       "fillers",       "grammatical", "congruent", "probed",     "clause_level"};

}  // namespace

// ---------------------------------------------------------------------------
// Evaluation

Evaluation evaluate(const std::vector<Sentence>& sentences, const std::vector<EmbeddingRecord>& records,
                    const DistanceFn& predict, const std::string& source) {
  if (!records.empty() && records.size() != sentences.size()) {
    throw InvariantError("evaluation needs one record per sentence (" + std::to_string(sentences.size()) +
                         " sentences, " + std::to_string(records.size()) + " records)");
  }
  Evaluation eval;
  eval.source = source;
  eval.trees.reserve(sentences.size());
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const Sentence& sentence = sentences[s];
    const EmbeddingRecord* record = records.empty() ? nullptr : &records[s];
    const DependencyTree gold = DependencyTree::from_sentence(sentence);
    const PredictedTree pred = kruskal_mst(predict(sentence, record), source);
    const auto depths = node_depths(gold);
    const Edge probed = sentence.meta ? Edge(sentence.meta->subject_index, sentence.meta->verb_index) : Edge();
    for (const auto& flag : edge_accuracy(pred, gold)) {
      EvalRecord r;
      r.sentence_id = sentence.id;
      r.head = flag.head;
      r.child = flag.child;
      r.correct = flag.correct;
      r.linear_distance = std::abs(flag.head - flag.child);
      r.head_depth = depths[static_cast<std::size_t>(flag.head - 1)];
      if (record && record->has_surprisal(flag.head - 1)) {
        r.head_surprisal = record->surprisals[static_cast<std::size_t>(flag.head - 1)];
      }
      if (record && record->has_surprisal(flag.child - 1)) {
        r.child_surprisal = record->surprisals[static_cast<std::size_t>(flag.child - 1)];
      }
      r.deprel = gold.label(flag.child);
      r.sentence_length = gold.size();
      r.meta = sentence.meta;
      r.probed = sentence.meta && probed == Edge(flag.head, flag.child);
      if (sentence.meta && r.deprel == "nsubj") r.clause_level = clause_level(gold, flag.head);
      r.source = source;
      eval.records.push_back(std::move(r));
    }
    eval.trees.emplace_back(sentence.id, pred);
  }
  return eval;
}

Evaluation eval_records(const AlignedDataset& data, const ProbeParams& probe, const std::string& source) {
  return evaluate(
      data.sentences, data.records,
      [&](const Sentence&, const EmbeddingRecord* rec) {
        if (!rec) throw InvariantError("probe evaluation needs activation records");
        return predicted_distance_matrix(probe, *rec);
      },
      source);
}

Evaluation eval_records(const AlignedDataset& data, const BaselineKind& baseline) {
  return evaluate(
      data.sentences, data.records,
      [&](const Sentence& s, const EmbeddingRecord* rec) { return baseline_distance(baseline, s, rec); },
      std::string(to_string(baseline.type)));
}

void write_records_csv(std::ostream& out, const std::vector<EvalRecord>& records, std::string_view provenance) {
  out << provenance << '\n';
  for (std::size_t i = 0; i < kRecordColumns.size(); ++i) out << (i ? "," : "") << kRecordColumns[i];
  out << '\n';
  for (const auto& r : records) {
    out << csv_field(r.source) << ',' << csv_field(r.sentence_id) << ',' << r.head << ',' << r.child << ','
        << (r.correct ? 1 : 0) << ',' << r.linear_distance << ',' << r.head_depth << ','
        << (r.head_surprisal ? format_double(*r.head_surprisal) : "") << ','
        << (r.child_surprisal ? format_double(*r.child_surprisal) : "") << ',' << csv_field(r.deprel) << ','
        << r.sentence_length << ',';
    if (r.meta) {
      out << to_string(r.meta->structure) << ',' << r.meta->nestings << ',' << r.meta->fillers << ','
          << (r.meta->grammatical ? 1 : 0) << ','
          << (r.meta->congruent ? (*r.meta->congruent ? "1" : "0") : "") << ',';
    } else {
      out << ",,,,,";
    }
    out << (r.probed ? 1 : 0) << ',' << r.clause_level << '\n';
  }
}

std::vector<EvalRecord> read_records_csv(std::istream& in) {
  std::vector<EvalRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto to_int = [&](const std::string& s) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw FormatError("bad integer '" + s + "' on line " + std::to_string(line_no));
    }
    return v;
  };
  auto to_double = [&](const std::string& s) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw FormatError("bad number '" + s + "' on line " + std::to_string(line_no));
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = split_csv(line, line_no);
    if (!header_seen) {
      if (f != kRecordColumns) throw FormatError("unexpected record header on line " + std::to_string(line_no));
      header_seen = true;
      continue;
    }
    if (f.size() != kRecordColumns.size()) {
      throw FormatError("expected " + std::to_string(kRecordColumns.size()) + " columns on line " +
                        std::to_string(line_no));
    }
    EvalRecord r;
    r.source = f[0];
    r.sentence_id = f[1];
    r.head = to_int(f[2]);
    r.child = to_int(f[3]);
    r.correct = to_int(f[4]) != 0;
    r.linear_distance = to_int(f[5]);
    r.head_depth = to_int(f[6]);
    if (!f[7].empty()) r.head_surprisal = to_double(f[7]);
    if (!f[8].empty()) r.child_surprisal = to_double(f[8]);
    r.deprel = f[9];
    r.sentence_length = to_int(f[10]);
    if (!f[11].empty()) {
      StimulusMeta m;
      m.structure = parse_structure(f[11]);
      m.nestings = to_int(f[12]);
      m.fillers = to_int(f[13]);
      m.grammatical = to_int(f[14]) != 0;
      if (!f[15].empty()) m.congruent = to_int(f[15]) != 0;
      r.meta = m;
    }
    r.probed = to_int(f[16]) != 0;
    r.clause_level = to_int(f[17]);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw FormatError("record file has no header");
  return out;
}

// ---------------------------------------------------------------------------
// Binned accuracy

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::linear_distance: return "linear_distance";
    case Feature::head_depth: return "head_depth";
    case Feature::surprisal_quantile_head: return "surprisal_quantile_head";
    case Feature::surprisal_quantile_child: return "surprisal_quantile_child";
    case Feature::nestings: return "nestings";
    case Feature::fillers: return "fillers";
  }
  return "linear_distance";
}

Feature parse_feature(std::string_view name) {
  for (Feature f : {Feature::linear_distance, Feature::head_depth, Feature::surprisal_quantile_head,
                    Feature::surprisal_quantile_child, Feature::nestings, Feature::fillers}) {
    if (to_string(f) == name) return f;
  }
  throw std::invalid_argument("unknown feature '" + std::string(name) + "'");
}

BinnedCurve bin_by(const std::vector<EvalRecord>& records, Feature feature, int quantiles) {
  BinnedCurve curve;
  curve.feature = feature;
  auto push_bin = [&](int bin, std::string label, const std::vector<int>& outcomes) {
    curve.bins.push_back(bin);
    curve.labels.push_back(std::move(label));
    curve.accuracy.push_back(mean_of(outcomes));
    curve.sem.push_back(sem_of(outcomes));
    curve.count.push_back(outcomes.size());
  };

  if (feature == Feature::surprisal_quantile_head || feature == Feature::surprisal_quantile_child) {
    if (quantiles < 1) throw std::invalid_argument("quantile count must be positive");
    std::vector<std::pair<double, int>> values;
    for (const auto& r : records) {
      const auto& s = feature == Feature::surprisal_quantile_head ? r.head_surprisal : r.child_surprisal;
      if (s) values.emplace_back(*s, r.correct ? 1 : 0);
    }
    if (values.empty()) throw std::invalid_argument("no record carries " + std::string(to_string(feature)));
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const auto q = static_cast<std::size_t>(quantiles);
    for (std::size_t b = 0; b < q; ++b) {
      const std::size_t lo = b * n / q;
      const std::size_t hi = (b + 1) * n / q;
      if (lo == hi) continue;
      std::vector<int> outcomes;
      for (std::size_t i = lo; i < hi; ++i) outcomes.push_back(values[i].second);
      push_bin(static_cast<int>(b + 1), format_double(values[lo].first) + ".." + format_double(values[hi - 1].first),
               outcomes);
    }
    return curve;
  }

  std::map<int, std::vector<int>> groups;
  for (const auto& r : records) {
    std::optional<int> key;
    switch (feature) {
      case Feature::linear_distance: key = r.linear_distance; break;
      case Feature::head_depth: key = r.head_depth; break;
      case Feature::nestings:
        if (r.meta) key = r.meta->nestings;
        break;
      case Feature::fillers:
        if (r.meta) key = r.meta->fillers;
        break;
      default: break;
    }
    if (key) groups[*key].push_back(r.correct ? 1 : 0);
  }
  if (groups.empty()) throw std::invalid_argument("no record carries " + std::string(to_string(feature)));
  for (const auto& [key, outcomes] : groups) push_bin(key, std::to_string(key), outcomes);
  return curve;
}

void write_curve_csv(std::ostream& out, const BinnedCurve& curve, std::string_view provenance) {
  out << provenance << '\n' << "bin,label,acc,sem,n\n";
  for (std::size_t i = 0; i < curve.bins.size(); ++i) {
    out << curve.bins[i] << ',' << csv_field(curve.labels[i]) << ',' << format_double(curve.accuracy[i]) << ','
        << format_double(curve.sem[i]) << ',' << curve.count[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Controlled-stimulus analyses

double bootstrap_difference_p(const std::vector<int>& a, const std::vector<int>& b, int resamples, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw std::invalid_argument("bootstrap needs two non-empty groups");
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  std::vector<int> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double observed = std::abs(mean_of(a) - mean_of(b));
  Rng rng(seed);
  auto resample_mean = [&](std::size_t n) {
    long hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += pooled[static_cast<std::size_t>(rng.below(pooled.size()))];
    return static_cast<double>(hits) / static_cast<double>(n);
  };
  long extreme = 0;
  for (int r = 0; r < resamples; ++r) {
    const double diff = std::abs(resample_mean(a.size()) - resample_mean(b.size()));
    if (diff >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + resamples);
}

std::vector<ContrastRow> congruency_contrast(const std::vector<EvalRecord>& records, const std::vector<int>& levels,
                                             int resamples, std::uint64_t seed, std::vector<int>* skipped) {
  std::vector<ContrastRow> rows;
  for (int level : levels) {
    std::vector<int> congruent;
    std::vector<int> incongruent;
    for (const auto& r : records) {
      if (!r.probed || !r.meta || r.meta->structure != Structure::pp || !r.meta->grammatical) continue;
      if (r.meta->nestings != level || !r.meta->congruent) continue;
      (*r.meta->congruent ? congruent : incongruent).push_back(r.correct ? 1 : 0);
    }
    if (congruent.empty() || incongruent.empty()) {
      if (skipped) skipped->push_back(level);
      continue;
    }
    ContrastRow row;
    row.nestings = level;
    row.congruent_accuracy = mean_of(congruent);
    row.congruent_n = congruent.size();
    row.incongruent_accuracy = mean_of(incongruent);
    row.incongruent_n = incongruent.size();
    row.p_value = bootstrap_difference_p(congruent, incongruent, resamples,
                                         derive_seed(seed, static_cast<std::uint64_t>(level)));
    rows.push_back(row);
  }
  return rows;
}

std::string_view to_string(Binding b) {
  switch (b) {
    case Binding::subject: return "subject";
    case Binding::attractor: return "attractor";
    case Binding::both: return "both";
    case Binding::neither: return "neither";
  }
  return "neither";
}

Binding classify_binding(const Sentence& sentence, const PredictedTree& tree) {
  if (!sentence.meta) throw InvariantError("sentence " + sentence.id + " has no stimulus metadata");
  const auto& meta = *sentence.meta;
  if (meta.attractor_indices.empty()) throw InvariantError("sentence " + sentence.id + " has no attractor");
  const bool subj = tree.contains(Edge(meta.verb_index, meta.subject_index));
  const bool attr = tree.contains(Edge(meta.verb_index, meta.attractor_indices.back()));
  if (subj && attr) return Binding::both;
  if (subj) return Binding::subject;
  if (attr) return Binding::attractor;
  return Binding::neither;
}

double BindingRow::proportion(Binding b) const {
  if (total == 0) return 0.0;
  return static_cast<double>(counts[static_cast<std::size_t>(b)]) / static_cast<double>(total);
}

std::vector<BindingRow> binding_profile(const std::vector<Sentence>& sentences,
                                        const std::map<std::string, PredictedTree>& trees) {
  // Keyed by (0 = grammatical / 1 = ungrammatical, nestings).
  std::map<std::pair<int, int>, BindingRow> rows;
  for (const auto& s : sentences) {
    if (!s.meta) throw InvariantError("sentence " + s.id + " has no stimulus metadata");
    if (s.meta->structure != Structure::pp) continue;
    auto it = trees.find(s.id);
    if (it == trees.end()) continue;
    if (it->second.size != static_cast<int>(s.size())) {
      throw InvariantError("tree for sentence " + s.id + " has " + std::to_string(it->second.size) +
                           " words, sentence has " + std::to_string(s.size()));
    }
    const auto b = static_cast<std::size_t>(classify_binding(s, it->second));
    const int g = s.meta->grammatical ? 0 : 1;
    for (int level : {0, s.meta->nestings}) {
      auto& row = rows[{g, level}];
      row.grammatical = g == 0;
      row.nestings = level;
      ++row.counts[b];
      ++row.total;
    }
  }
  std::vector<BindingRow> out;
  out.reserve(rows.size());
  for (auto& [key, row] : rows) out.push_back(row);
  return out;
}

std::vector<ProfileRow> depth_profile(const std::vector<EvalRecord>& records, Structure structure) {
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (const auto& r : records) {
    if (!r.meta || r.meta->structure != structure || r.clause_level < 0 || r.deprel != "nsubj") continue;
    groups[{r.meta->nestings, r.clause_level}].push_back(r.correct ? 1 : 0);
  }
  std::vector<ProfileRow> out;
  for (const auto& [key, outcomes] : groups) {
    out.push_back({key.first, key.second, mean_of(outcomes), sem_of(outcomes), outcomes.size()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifiers

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  Standardizer s;
  s.mean = X.colwise().mean();
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean(j)).square().mean();
    s.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
  if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("ridge needs a non-empty design matrix");
  if (y.size() != X.rows()) throw std::invalid_argument("ridge targets do not match the design matrix");
  if (!(alpha >= 0.0)) throw std::invalid_argument("ridge penalty must be non-negative");
  if ((y.array() == y(0)).all()) throw std::invalid_argument("ridge needs at least two distinct labels");
  Eigen::MatrixXd A = X.transpose() * X;
  A.diagonal().array() += alpha;
  return A.ldlt().solve(X.transpose() * y);
}

RidgeClassifier RidgeClassifier::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
  RidgeClassifier c;
  c.standardizer = Standardizer::fit(X);
  c.intercept = y.mean();
  c.weights = ridge_fit(c.standardizer.apply(X), y.array() - c.intercept, alpha);
  return c;
}

Eigen::VectorXd RidgeClassifier::decision(const Eigen::MatrixXd& X) const {
  return (standardizer.apply(X) * weights).array() + intercept;
}

Eigen::VectorXd RidgeClassifier::predict(const Eigen::MatrixXd& X) const {
  return decision(X).unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const std::vector<int>& y;
  const ForestParams& params;
  int max_features;
  Rng& rng;
  RandomForest::Tree nodes;
  Eigen::VectorXd importance;

  static double gini(double pos, double n) {
    if (n <= 0.0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  int build(std::vector<std::size_t>& idx, int depth) {
    const auto n = static_cast<double>(idx.size());
    double pos = 0.0;
    for (auto i : idx) pos += y[i];
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes.back().positive_rate = pos / n;
    if (depth >= params.max_depth || static_cast<int>(idx.size()) < params.min_samples_split || pos == 0.0 ||
        pos == n) {
      return id;
    }

    std::vector<int> features(static_cast<std::size_t>(X.cols()));
    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < max_features; ++k) {
      const auto j = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng.below(features.size() - k));
      std::swap(features[static_cast<std::size_t>(k)], features[j]);
    }

    const double parent = gini(pos, n);
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, int>> column(idx.size());
    for (int k = 0; k < max_features; ++k) {
      const int f = features[static_cast<std::size_t>(k)];
      for (std::size_t r = 0; r < idx.size(); ++r) column[r] = {X(static_cast<Eigen::Index>(idx[r]), f), y[idx[r]]};
      std::sort(column.begin(), column.end());
      double left_pos = 0.0;
      for (std::size_t r = 0; r + 1 < column.size(); ++r) {
        left_pos += column[r].second;
        if (column[r].first == column[r + 1].first) continue;
        const auto nl = static_cast<double>(r + 1);
        const double nr = n - nl;
        const double child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        const double gain = parent - child;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (column[r].first + column[r + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    importance(best_feature) += n * best_gain;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : idx) (X(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].feature = best_feature;
    nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

}  // namespace

RandomForest random_forest_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const ForestParams& params) {
  if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("forest needs a non-empty design matrix");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw std::invalid_argument("forest labels do not match rows");
  if (params.trees < 1) throw std::invalid_argument("forest needs at least one tree");
  const int p = static_cast<int>(X.cols());
  int max_features = params.max_features > 0 ? params.max_features
                                             : static_cast<int>(std::floor(std::sqrt(static_cast<double>(p))));
  max_features = std::clamp(max_features, 1, p);

  RandomForest forest;
  forest.importances_ = Eigen::VectorXd::Zero(p);
  const auto n = static_cast<std::size_t>(X.rows());
  for (int t = 0; t < params.trees; ++t) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
    TreeBuilder builder{X, y, params, max_features, rng, {}, Eigen::VectorXd::Zero(p)};
    builder.build(sample, 0);
    const double total = builder.importance.sum();
    if (total > 0.0) forest.importances_ += builder.importance / total;
    forest.trees_.push_back(std::move(builder.nodes));
  }
  const double total = forest.importances_.sum();
  if (total > 0.0) forest.importances_ /= total;
  return forest;
}

double RandomForest::predict_proba(const Eigen::RowVectorXd& x) const {
  double sum = 0.0;
  for (const auto& tree : trees_) {
    int node = 0;
    while (tree[static_cast<std::size_t>(node)].feature >= 0) {
      const auto& nd = tree[static_cast<std::size_t>(node)];
      node = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    sum += tree[static_cast<std::size_t>(node)].positive_rate;
  }
  return trees_.empty() ? 0.0 : sum / static_cast<double>(trees_.size());
}

std::vector<int> RandomForest::predict(const Eigen::MatrixXd& X) const {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = predict_proba(X.row(i)) >= 0.5;
  return out;
}

Eigen::VectorXd signed_importance(const Eigen::VectorXd& importances, const Eigen::VectorXd& ridge_weights) {
  if (importances.size() != ridge_weights.size()) {
    throw std::invalid_argument("importance and weight vectors differ in length");
  }
  return importances.binaryExpr(ridge_weights, [](double imp, double w) {
    return w > 0.0 ? imp : (w < 0.0 ? -imp : 0.0);
  });
}

FeatureTable build_features(const std::vector<EvalRecord>& records, const FeatureOptions& options) {
  FeatureTable table;
  table.names = {"linear_distance", "head_depth"};
  if (options.surprisal) {
    table.names.push_back("head_surprisal");
    table.names.push_back("child_surprisal");
  }
  if (options.sentence_length) table.names.push_back("sentence_length");
  std::vector<std::string> deprels;
  if (options.deprel_onehot) {
    for (const auto& r : records) deprels.push_back(r.deprel);
    std::sort(deprels.begin(), deprels.end());
    deprels.erase(std::unique(deprels.begin(), deprels.end()), deprels.end());
    for (const auto& d : deprels) table.names.push_back("deprel=" + d);
  }

  std::vector<const EvalRecord*> kept;
  for (const auto& r : records) {
    if (options.surprisal && (!r.head_surprisal || !r.child_surprisal)) continue;
    kept.push_back(&r);
  }
  table.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(table.names.size()));
  table.y.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& r = *kept[i];
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::Index c = 0;
    table.X(row, c++) = r.linear_distance;
    table.X(row, c++) = r.head_depth;
    if (options.surprisal) {
      table.X(row, c++) = *r.head_surprisal;
      table.X(row, c++) = *r.child_surprisal;
    }
    if (options.sentence_length) table.X(row, c++) = r.sentence_length;
    if (options.deprel_onehot) {
      const auto it = std::lower_bound(deprels.begin(), deprels.end(), r.deprel);
      table.X(row, c + static_cast<Eigen::Index>(it - deprels.begin())) = 1.0;
    }
    table.y.push_back(r.correct ? 1 : 0);
  }
  return table;
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least two folds");
  if (y.size() < static_cast<std::size_t>(folds)) throw std::invalid_argument("fewer rows than folds");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < y.size(); ++i) by_label[y[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  std::size_t next = 0;
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    for (auto i : idx) {
      out[next].push_back(i);
      next = (next + 1) % out.size();
    }
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

ImportanceReport importance_cv(const FeatureTable& table, int folds, double alpha, const ForestParams& forest,
                               std::uint64_t seed) {
  const auto split = stratified_folds(table.y, folds, derive_seed(seed, 0));
  const auto n = table.y.size();
  const auto p = table.X.cols();
  ImportanceReport report;
  report.features = table.names;
  for (std::size_t k = 0; k < split.size(); ++k) {
    std::vector<bool> held(n, false);
    for (auto i : split[k]) held[i] = true;
    const auto n_test = static_cast<Eigen::Index>(split[k].size());
    const auto n_train = static_cast<Eigen::Index>(n) - n_test;
    Eigen::MatrixXd Xtr(n_train, p);
    Eigen::MatrixXd Xte(n_test, p);
    Eigen::VectorXd ytr_signed(n_train);
    std::vector<int> ytr;
    std::vector<int> yte;
    Eigen::Index a = 0;
    Eigen::Index b = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = table.X.row(static_cast<Eigen::Index>(i));
      if (held[i]) {
        Xte.row(b++) = row;
        yte.push_back(table.y[i]);
      } else {
        Xtr.row(a) = row;
        ytr_signed(a++) = table.y[i] ? 1.0 : -1.0;
        ytr.push_back(table.y[i]);
      }
    }
    const auto ridge = RidgeClassifier::fit(Xtr, ytr_signed, alpha);
    ForestParams fp = forest;
    fp.seed = derive_seed(seed, 1 + k);
    const auto rf = random_forest_fit(Xtr, ytr, fp);

    const Eigen::VectorXd ridge_pred = ridge.predict(Xte);
    const auto rf_pred = rf.predict(Xte);
    std::size_t ridge_hits = 0;
    std::size_t rf_hits = 0;
    for (std::size_t i = 0; i < yte.size(); ++i) {
      ridge_hits += (ridge_pred(static_cast<Eigen::Index>(i)) > 0.0) == (yte[i] == 1);
      rf_hits += rf_pred[i] == yte[i];
    }
    report.ridge_accuracy.push_back(static_cast<double>(ridge_hits) / static_cast<double>(yte.size()));
    report.forest_accuracy.push_back(static_cast<double>(rf_hits) / static_cast<double>(yte.size()));
    report.fold_unsigned.push_back(rf.importances());
    report.fold_ridge_weights.push_back(ridge.weights);
    report.fold_signed.push_back(signed_importance(rf.importances(), ridge.weights));
  }
  report.mean = Eigen::VectorXd::Zero(p);
  for (const auto& v : report.fold_signed) report.mean += v;
  report.mean /= static_cast<double>(report.fold_signed.size());
  report.stddev = Eigen::VectorXd::Zero(p);
  for (const auto& v : report.fold_signed) report.stddev.array() += (v - report.mean).array().square();
  report.stddev = (report.stddev / static_cast<double>(report.fold_signed.size())).cwiseSqrt();
  return report;
}

}  // namespace synprobe
