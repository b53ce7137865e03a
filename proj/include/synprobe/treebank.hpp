#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace synprobe {

enum class Number { unmarked, singular, plural };

std::string_view to_string(Number n);

enum class Structure { simple, pp, ce, rb };

std::string_view to_string(Structure s);
Structure parse_structure(std::string_view text);

/// Controlled-stimulus annotations carried by generated sentences.
struct StimulusMeta {
  Structure structure = Structure::simple;
  int nestings = 0;
  int fillers = 0;
  bool grammatical = true;
  std::optional<bool> congruent;  // empty when there is no attractor
  int subject_index = 0;          // 1-based token indices
  int verb_index = 0;
  std::vector<int> attractor_indices;

  /// Serialized form used on `# meta:` comment lines.
  std::string to_line() const;
  static StimulusMeta parse_line(std::string_view body);

  bool operator==(const StimulusMeta&) const = default;
};

struct Token {
  int index = 0;  // 1-based
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;  // 0 = root
  std::string deprel;
  std::string deps = "_";
  std::string misc = "_";
  Number number = Number::unmarked;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;
  /// Comment lines other than sent_id and meta, without the leading "# ".
  std::vector<std::string> comments;
  std::optional<StimulusMeta> meta;

  std::size_t size() const { return tokens.size(); }
  const Token& token(int index) const { return tokens.at(static_cast<std::size_t>(index - 1)); }
  /// Surface forms joined by single spaces.
  std::string text() const;

  bool operator==(const Sentence&) const = default;
};

/// Numeric key used to join a sentence with its activation record. Purely
/// numeric ids are used as-is; anything else is hashed with FNV-1a.
std::uint64_t sentence_key(const Sentence& s);
std::uint64_t sentence_key(std::string_view id);

/// Unordered edge between two 1-based word indices, stored with a < b.
struct Edge {
  int a = 0;
  int b = 0;

  Edge() = default;
  Edge(int i, int j) : a(i < j ? i : j), b(i < j ? j : i) {}

  auto operator<=>(const Edge&) const = default;
};

/// A validated rooted tree over words 1..t. Heads and labels are kept so the
/// gold direction stays available; decoding only looks at the undirected edges.
class DependencyTree {
public:
  /// heads[i] is the head of word i+1 (0 for the root). Throws InvariantError
  /// unless the heads form a single connected acyclic tree.
  explicit DependencyTree(std::vector<int> heads, std::vector<std::string> labels = {});

  static DependencyTree from_sentence(const Sentence& s);

  int size() const { return static_cast<int>(heads_.size()); }
  int root() const { return root_; }
  int head(int index) const { return heads_.at(static_cast<std::size_t>(index - 1)); }
  const std::string& label(int index) const;
  const std::vector<int>& heads() const { return heads_; }
  /// t - 1 undirected edges, sorted.
  std::vector<Edge> edges() const;
  /// Neighbour lists, 0-based.
  std::vector<std::vector<int>> adjacency() const;

private:
  std::vector<int> heads_;
  std::vector<std::string> labels_;
  int root_ = 0;
};

/// Symmetric, zero-diagonal, non-negative t x t matrix. Indexed 0-based.
class DistanceMatrix {
public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(int t) : values_(Eigen::MatrixXd::Zero(t, t)) {}
  explicit DistanceMatrix(Eigen::MatrixXd values);

  int size() const { return static_cast<int>(values_.rows()); }
  double operator()(int i, int j) const { return values_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }

  /// Sets (i,j) and (j,i).
  void set(int i, int j, double v) {
    values_(i, j) = v;
    values_(j, i) = v;
  }

private:
  Eigen::MatrixXd values_;
};

/// Path lengths between all word pairs (BFS from every node).
DistanceMatrix tree_distance_matrix(const DependencyTree& tree);

/// Edge count from the root to `index` (1-based).
int node_depth(const DependencyTree& tree, int index);
/// Depths for all words, 0-based vector.
std::vector<int> node_depths(const DependencyTree& tree);

// ---------------------------------------------------------------------------
// CoNLL-U

struct DroppedSentence {
  std::string id;
  int line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<Sentence> sentences;
  std::vector<DroppedSentence> dropped;
};

/// Reads CoNLL-U. Multiword ranges and empty nodes are skipped. Malformed
/// lines throw FormatError carrying the line number; sentences whose heads do
/// not form a tree are dropped and listed in `dropped`.
ParseResult parse_conllu(std::istream& in);
ParseResult parse_conllu_file(const std::string& path);

void write_conllu(std::ostream& out, const Sentence& s);
void write_conllu(std::ostream& out, const std::vector<Sentence>& sentences);

// ---------------------------------------------------------------------------
// Corpus filtering

struct LexicalRules {
  bool drop_emails = true;
  bool drop_urls = true;
};

bool looks_like_email(std::string_view form);
bool looks_like_url(std::string_view form);

enum class AlignStatus { aligned, length_mismatch, word_mismatch, missing_record };

std::string_view to_string(AlignStatus s);

using AlignmentReport = std::map<std::uint64_t, AlignStatus>;

/// Drops sentences with email/URL tokens and, when a report is given,
/// sentences it does not mark as aligned.
std::vector<Sentence> filter_corpus(const std::vector<Sentence>& sentences, const LexicalRules& rules,
                                    const AlignmentReport* report);

}  // namespace synprobe
