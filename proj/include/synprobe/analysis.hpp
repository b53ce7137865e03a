#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "synprobe/activations.hpp"
#include "synprobe/decode.hpp"
#include "synprobe/probe.hpp"
#include "synprobe/treebank.hpp"

namespace synprobe {

/// One gold edge scored against one predicted tree.
struct EvalRecord {
  std::string sentence_id;
  int head = 0;
  int child = 0;
  bool correct = false;
  int linear_distance = 0;
  int head_depth = 0;
  std::optional<double> head_surprisal;
  std::optional<double> child_surprisal;
  std::string deprel;
  int sentence_length = 0;
  /// Set for controlled stimuli. Index fields are not carried through CSV.
  std::optional<StimulusMeta> meta;
  /// True for the edge between meta.subject_index and meta.verb_index.
  bool probed = false;
  /// For nsubj edges of controlled stimuli: number of clause-embedding edges
  /// (acl:relcl, ccomp) above the verb. -1 otherwise.
  int clause_level = -1;
  std::string source;
};

struct Evaluation {
  std::string source;
  std::vector<EvalRecord> records;
  std::vector<std::pair<std::string, PredictedTree>> trees;  // by sentence id
};

using DistanceFn = std::function<DistanceMatrix(const Sentence&, const EmbeddingRecord*)>;

/// Decodes every sentence with `predict` and scores its gold edges. `records`
/// may be empty when the predictor does not need activations; otherwise it is
/// index-aligned with `sentences`.
Evaluation evaluate(const std::vector<Sentence>& sentences, const std::vector<EmbeddingRecord>& records,
                    const DistanceFn& predict, const std::string& source);

Evaluation eval_records(const AlignedDataset& data, const ProbeParams& probe, const std::string& source = "probe");
Evaluation eval_records(const AlignedDataset& data, const BaselineKind& baseline);

void write_records_csv(std::ostream& out, const std::vector<EvalRecord>& records, std::string_view provenance);
std::vector<EvalRecord> read_records_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Binned accuracy

enum class Feature { linear_distance, head_depth, surprisal_quantile_head, surprisal_quantile_child, nestings, fillers };

std::string_view to_string(Feature f);
Feature parse_feature(std::string_view name);

struct BinnedCurve {
  Feature feature = Feature::linear_distance;
  std::vector<int> bins;  // integer value, or quantile number 1..q
  std::vector<std::string> labels;
  std::vector<double> accuracy;
  std::vector<double> sem;  // sample std / sqrt(n); 0 for single-record bins
  std::vector<std::size_t> count;
};

/// Integer features bin by exact value; surprisal features bin into
/// `quantiles` equal-frequency bins over the records that carry the value.
/// Throws std::invalid_argument when no record carries the feature.
BinnedCurve bin_by(const std::vector<EvalRecord>& records, Feature feature, int quantiles = 5);

/// "bin,label,acc,sem,n" rows after the provenance line.
void write_curve_csv(std::ostream& out, const BinnedCurve& curve, std::string_view provenance);

// ---------------------------------------------------------------------------
// Controlled-stimulus analyses

struct ContrastRow {
  int nestings = 0;
  double congruent_accuracy = 0.0;
  std::size_t congruent_n = 0;
  double incongruent_accuracy = 0.0;
  std::size_t incongruent_n = 0;
  double p_value = 1.0;
};

/// Two-sided bootstrap p-value for a difference in accuracy. Resamples both
/// groups from the pooled outcomes (the null of no difference).
double bootstrap_difference_p(const std::vector<int>& a, const std::vector<int>& b, int resamples, std::uint64_t seed);

/// Subject-verb accuracy in grammatical PP stimuli by congruency of the last
/// attractor, per nesting level. Levels with an empty group are skipped and
/// reported in `skipped`.
std::vector<ContrastRow> congruency_contrast(const std::vector<EvalRecord>& records, const std::vector<int>& levels,
                                             int resamples, std::uint64_t seed, std::vector<int>* skipped = nullptr);

enum class Binding { subject, attractor, both, neither };

std::string_view to_string(Binding b);

/// Which of verb-subject and verb-last-attractor the predicted tree links.
Binding classify_binding(const Sentence& sentence, const PredictedTree& tree);

struct BindingRow {
  bool grammatical = true;
  int nestings = 0;  // 0 aggregates all levels
  std::array<std::size_t, 4> counts{};
  std::size_t total = 0;

  double proportion(Binding b) const;
};

/// Binding distribution over PP sentences, split by grammaticality, overall
/// and per nesting level. Non-PP stimuli and sentences without a tree are
/// ignored. A sentence without metadata, or a tree whose size differs from its
/// sentence, throws InvariantError.
std::vector<BindingRow> binding_profile(const std::vector<Sentence>& sentences,
                                        const std::map<std::string, PredictedTree>& trees);

struct ProfileRow {
  int nestings = 0;
  int level = 0;
  double accuracy = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

/// Accuracy of every subject-verb dependency by clause level, for one structure.
std::vector<ProfileRow> depth_profile(const std::vector<EvalRecord>& records, Structure structure);

// ---------------------------------------------------------------------------
// Classifiers

/// Column standardization fitted on a training fold.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

/// w = (X^T X + alpha I)^-1 X^T y via an LDLT factorization. Throws
/// std::invalid_argument on empty input or when every label is the same.
Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha);

/// Ridge regression on +-1 targets with sign thresholding.
struct RidgeClassifier {
  Standardizer standardizer;
  Eigen::VectorXd weights;
  double intercept = 0.0;

  static RidgeClassifier fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha);
  Eigen::VectorXd decision(const Eigen::MatrixXd& X) const;
  /// +1 / -1 per row.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct ForestParams {
  int trees = 100;
  int max_depth = 10;
  int min_samples_split = 500;
  int max_features = 0;  // 0 means floor(sqrt(p))
  std::uint64_t seed = 0;
};

/// Bootstrap-aggregated CART classifiers with Gini impurity.
class RandomForest {
public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double positive_rate = 0.0;
  };
  using Tree = std::vector<Node>;

  const std::vector<Tree>& trees() const { return trees_; }
  /// Mean impurity decrease, normalized per tree and then over the forest.
  const Eigen::VectorXd& importances() const { return importances_; }
  double predict_proba(const Eigen::RowVectorXd& x) const;
  /// 0/1 per row.
  std::vector<int> predict(const Eigen::MatrixXd& X) const;

private:
  friend RandomForest random_forest_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const ForestParams& params);
  std::vector<Tree> trees_;
  Eigen::VectorXd importances_;
};

/// Throws std::invalid_argument on empty data.
RandomForest random_forest_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const ForestParams& params);

/// importance * sign(weight), with sign(0) = 0.
Eigen::VectorXd signed_importance(const Eigen::VectorXd& importances, const Eigen::VectorXd& ridge_weights);

struct FeatureOptions {
  bool surprisal = true;
  bool deprel_onehot = false;
  bool sentence_length = false;
};

struct FeatureTable {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  std::vector<int> y;  // 1 when the probe recovered the edge
};

/// Linear distance, head depth and (optionally) head/child surprisal per
/// record. Records missing a surprisal are dropped when surprisal is used.
FeatureTable build_features(const std::vector<EvalRecord>& records, const FeatureOptions& options = {});

struct ImportanceReport {
  std::vector<std::string> features;
  std::vector<Eigen::VectorXd> fold_signed;
  std::vector<Eigen::VectorXd> fold_unsigned;
  std::vector<Eigen::VectorXd> fold_ridge_weights;
  std::vector<double> ridge_accuracy;
  std::vector<double> forest_accuracy;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // population std across folds
};

/// Stratified k-fold indices (by label), shuffled with `seed`.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed);

/// For each fold: fit ridge and forest on the other folds, sign the forest
/// importances by the ridge weights, score both on the held-out fold.
ImportanceReport importance_cv(const FeatureTable& table, int folds, double alpha, const ForestParams& forest,
                               std::uint64_t seed);

}  // namespace synprobe
