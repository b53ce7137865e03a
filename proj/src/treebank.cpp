#include "synprobe/treebank.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "synprobe/common.hpp"

namespace synprobe {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

Number number_from_feats(std::string_view feats) {
  if (feats == "_") return Number::unmarked;
  for (auto kv : split(feats, '|')) {
    if (kv == "Number=Sing") return Number::singular;
    if (kv == "Number=Plur") return Number::plural;
  }
  return Number::unmarked;
}

}  // namespace

std::string_view to_string(Number n) {
  switch (n) {
    case Number::singular: return "sing";
    case Number::plural: return "plur";
    case Number::unmarked: break;
  }
  return "unmarked";
}

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::simple: return "simple";
    case Structure::pp: return "pp";
    case Structure::ce: return "ce";
    case Structure::rb: return "rb";
  }
  return "simple";
}

Structure parse_structure(std::string_view text) {
  if (text == "simple") return Structure::simple;
  if (text == "pp") return Structure::pp;
  if (text == "ce") return Structure::ce;
  if (text == "rb") return Structure::rb;
  throw FormatError("unknown structure '" + std::string(text) + "'");
}

std::string_view to_string(AlignStatus s) {
  switch (s) {
    case AlignStatus::aligned: return "aligned";
    case AlignStatus::length_mismatch: return "length_mismatch";
    case AlignStatus::word_mismatch: return "word_mismatch";
    case AlignStatus::missing_record: return "missing_record";
  }
  return "aligned";
}

// ---------------------------------------------------------------------------

std::string StimulusMeta::to_line() const {
  std::ostringstream os;
  os << "structure=" << to_string(structure) << " nestings=" << nestings << " fillers=" << fillers
     << " grammatical=" << (grammatical ? "true" : "false")
     << " congruent=" << (congruent ? (*congruent ? "true" : "false") : "na")
     << " subject_index=" << subject_index << " verb_index=" << verb_index << " attractor_indices=";
  if (attractor_indices.empty()) os << "_";
  for (std::size_t i = 0; i < attractor_indices.size(); ++i) os << (i ? "," : "") << attractor_indices[i];
  return os.str();
}

StimulusMeta StimulusMeta::parse_line(std::string_view body) {
  StimulusMeta meta;
  auto as_int = [](std::string_view key, std::string_view v) {
    auto n = to_int(v);
    if (!n) throw FormatError("meta: bad integer for " + std::string(key) + ": '" + std::string(v) + "'");
    return static_cast<int>(*n);
  };
  auto as_bool = [](std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw FormatError("meta: bad boolean for " + std::string(key) + ": '" + std::string(v) + "'");
  };
  for (auto item : split(trim(body), ' ')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw FormatError("meta: expected key=value, got '" + std::string(item) + "'");
    auto key = item.substr(0, eq);
    auto value = item.substr(eq + 1);
    if (key == "structure") {
      meta.structure = parse_structure(value);
    } else if (key == "nestings") {
      meta.nestings = as_int(key, value);
    } else if (key == "fillers") {
      meta.fillers = as_int(key, value);
    } else if (key == "grammatical") {
      meta.grammatical = as_bool(key, value);
    } else if (key == "congruent") {
      if (value == "na") {
        meta.congruent.reset();
      } else {
        meta.congruent = as_bool(key, value);
      }
    } else if (key == "subject_index") {
      meta.subject_index = as_int(key, value);
    } else if (key == "verb_index") {
      meta.verb_index = as_int(key, value);
    } else if (key == "attractor_indices") {
      meta.attractor_indices.clear();
      if (value != "_" && !value.empty()) {
        for (auto v : split(value, ',')) meta.attractor_indices.push_back(as_int(key, v));
      }
    }
    // Unknown keys are ignored so newer writers stay readable.
  }
  return meta;
}

std::string Sentence::text() const {
  std::string out;
  for (const auto& tok : tokens) {
    if (!out.empty()) out += ' ';
    out += tok.form;
  }
  return out;
}

std::uint64_t sentence_key(std::string_view id) {
  if (!id.empty() && id.size() <= 19 && std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    std::uint64_t v = 0;
    std::from_chars(id.data(), id.data() + id.size(), v);
    return v;
  }
  return fnv1a64(id);
}

std::uint64_t sentence_key(const Sentence& s) { return sentence_key(s.id); }

// ---------------------------------------------------------------------------

DependencyTree::DependencyTree(std::vector<int> heads, std::vector<std::string> labels)
    : heads_(std::move(heads)), labels_(std::move(labels)) {
  const int t = static_cast<int>(heads_.size());
  if (t < 1) throw InvariantError("tree has no words");
  if (!labels_.empty() && static_cast<int>(labels_.size()) != t) throw InvariantError("label count differs from word count");
  int roots = 0;
  for (int i = 1; i <= t; ++i) {
    const int h = heads_[i - 1];
    if (h < 0 || h > t) throw InvariantError("head of word " + std::to_string(i) + " out of range");
    if (h == i) throw InvariantError("word " + std::to_string(i) + " is its own head");
    if (h == 0) {
      ++roots;
      root_ = i;
    }
  }
  if (roots != 1) throw InvariantError("expected exactly one root, found " + std::to_string(roots));
  // Each word must reach the root without revisiting a node.
  std::vector<int> state(t + 1, 0);  // 0 unvisited, 1 on current path, 2 reaches root
  state[root_] = 2;
  std::vector<int> path;
  for (int i = 1; i <= t; ++i) {
    int cur = i;
    path.clear();
    while (state[cur] == 0) {
      state[cur] = 1;
      path.push_back(cur);
      cur = heads_[cur - 1];
    }
    if (state[cur] == 1) throw InvariantError("cycle through word " + std::to_string(cur));
    for (int p : path) state[p] = 2;
  }
}

DependencyTree DependencyTree::from_sentence(const Sentence& s) {
  std::vector<int> heads;
  std::vector<std::string> labels;
  heads.reserve(s.size());
  labels.reserve(s.size());
  for (const auto& tok : s.tokens) {
    heads.push_back(tok.head);
    labels.push_back(tok.deprel);
  }
  return DependencyTree(std::move(heads), std::move(labels));
}

const std::string& DependencyTree::label(int index) const {
  static const std::string empty;
  if (labels_.empty()) return empty;
  return labels_.at(static_cast<std::size_t>(index - 1));
}

std::vector<Edge> DependencyTree::edges() const {
  std::vector<Edge> out;
  out.reserve(heads_.size() - 1);
  for (int i = 1; i <= size(); ++i) {
    if (heads_[i - 1] != 0) out.emplace_back(i, heads_[i - 1]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<int>> DependencyTree::adjacency() const {
  std::vector<std::vector<int>> adj(heads_.size());
  for (int i = 1; i <= size(); ++i) {
    const int h = heads_[i - 1];
    if (h == 0) continue;
    adj[i - 1].push_back(h - 1);
    adj[h - 1].push_back(i - 1);
  }
  return adj;
}

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) throw InvariantError("distance matrix is not square");
}

DistanceMatrix tree_distance_matrix(const DependencyTree& tree) {
  const int t = tree.size();
  const auto adj = tree.adjacency();
  DistanceMatrix out(t);
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(t, t, -1.0);
  std::deque<int> queue;
  for (int src = 0; src < t; ++src) {
    m(src, src) = 0.0;
    queue.assign(1, src);
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u]) {
        if (m(src, v) < 0.0) {
          m(src, v) = m(src, u) + 1.0;
          queue.push_back(v);
        }
      }
    }
  }
  return DistanceMatrix(std::move(m));
}

std::vector<int> node_depths(const DependencyTree& tree) {
  const int t = tree.size();
  std::vector<int> depth(t, -1);
  depth[tree.root() - 1] = 0;
  for (int i = 1; i <= t; ++i) {
    // Walk up to the first word with a known depth, then fill the path back in.
    std::vector<int> path;
    int cur = i;
    while (depth[cur - 1] < 0) {
      path.push_back(cur);
      cur = tree.head(cur);
    }
    int d = depth[cur - 1];
    for (auto it = path.rbegin(); it != path.rend(); ++it) depth[*it - 1] = ++d;
  }
  return depth;
}

int node_depth(const DependencyTree& tree, int index) {
  if (index < 1 || index > tree.size()) {
    throw std::out_of_range("node_depth: index " + std::to_string(index) + " outside 1.." +
                            std::to_string(tree.size()));
  }
  int depth = 0;
  for (int cur = index; tree.head(cur) != 0; cur = tree.head(cur)) ++depth;
  return depth;
}

// ---------------------------------------------------------------------------
// CoNLL-U

namespace {

struct PendingSentence {
  Sentence sentence;
  int first_line = 0;
  bool has_id = false;
  bool empty() const { return sentence.tokens.empty() && sentence.comments.empty() && !has_id && !sentence.meta; }
};

std::string validate_sentence(const Sentence& s) {
  if (s.tokens.empty()) return "sentence has no words";
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const Token& tok = s.tokens[i];
    if (tok.index != static_cast<int>(i + 1)) return "word ids are not sequential at " + std::to_string(tok.index);
    if (tok.deprel.empty() || tok.deprel == "_") return "missing deprel on word " + std::to_string(tok.index);
  }
  try {
    DependencyTree::from_sentence(s);
  } catch (const InvariantError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

ParseResult parse_conllu(std::istream& in) {
  ParseResult result;
  PendingSentence cur;
  std::string raw;
  int line_no = 0;
  int ordinal = 0;

  auto flush = [&]() {
    if (cur.empty()) return;
    ++ordinal;
    if (!cur.has_id) cur.sentence.id = std::to_string(ordinal);
    std::string problem = validate_sentence(cur.sentence);
    if (problem.empty()) {
      result.sentences.push_back(std::move(cur.sentence));
    } else {
      result.dropped.push_back({cur.sentence.id, cur.first_line, problem});
    }
    cur = PendingSentence{};
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (cur.empty()) cur.first_line = line_no;
    if (line.front() == '#') {
      std::string_view body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.starts_with("sent_id")) {
        auto eq = body.find('=');
        if (eq != std::string_view::npos) {
          cur.sentence.id = std::string(trim(body.substr(eq + 1)));
          cur.has_id = true;
          continue;
        }
      }
      if (body.starts_with("meta:")) {
        try {
          cur.sentence.meta = StimulusMeta::parse_line(body.substr(5));
        } catch (const FormatError& e) {
          throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
        continue;
      }
      cur.sentence.comments.emplace_back(body);
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 10) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 10 tab-separated columns, found " +
                        std::to_string(cols.size()));
    }
    const std::string_view id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) {
      continue;  // multiword range or empty node
    }
    auto index = to_int(id);
    if (!index || *index < 1) throw FormatError("line " + std::to_string(line_no) + ": bad word id '" + std::string(id) + "'");
    auto head = to_int(cols[6]);
    if (!head || *head < 0) throw FormatError("line " + std::to_string(line_no) + ": bad head '" + std::string(cols[6]) + "'");
    Token tok;
    tok.index = static_cast<int>(*index);
    tok.form = std::string(cols[1]);
    tok.lemma = std::string(cols[2]);
    tok.upos = std::string(cols[3]);
    tok.xpos = std::string(cols[4]);
    tok.feats = std::string(cols[5]);
    tok.head = static_cast<int>(*head);
    tok.deprel = std::string(cols[7]);
    tok.deps = std::string(cols[8]);
    tok.misc = std::string(cols[9]);
    tok.number = number_from_feats(tok.feats);
    cur.sentence.tokens.push_back(std::move(tok));
  }
  flush();
  return result;
}

ParseResult parse_conllu_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_conllu(in);
}

void write_conllu(std::ostream& out, const Sentence& s) {
  out << "# sent_id = " << s.id << '\n';
  for (const auto& c : s.comments) out << "# " << c << '\n';
  if (s.meta) out << "# meta: " << s.meta->to_line() << '\n';
  for (const auto& t : s.tokens) {
    out << t.index << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << '\t' << t.xpos << '\t' << t.feats << '\t'
        << t.head << '\t' << t.deprel << '\t' << t.deps << '\t' << t.misc << '\n';
  }
  out << '\n';
}

void write_conllu(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) write_conllu(out, s);
}

// ---------------------------------------------------------------------------

bool looks_like_email(std::string_view form) {
  auto at = form.find('@');
  if (at == std::string_view::npos || at == 0) return false;
  auto domain = form.substr(at + 1);
  auto dot = domain.find('.');
  return dot != std::string_view::npos && dot > 0 && dot + 1 < domain.size();
}

bool looks_like_url(std::string_view form) {
  std::string lower(form);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("http://") != std::string::npos || lower.find("https://") != std::string::npos ||
         lower.find("www.") != std::string::npos;
}

std::vector<Sentence> filter_corpus(const std::vector<Sentence>& sentences, const LexicalRules& rules,
                                    const AlignmentReport* report) {
  std::vector<Sentence> kept;
  kept.reserve(sentences.size());
  for (const auto& s : sentences) {
    bool drop = false;
    for (const auto& tok : s.tokens) {
      if ((rules.drop_emails && looks_like_email(tok.form)) || (rules.drop_urls && looks_like_url(tok.form))) {
        drop = true;
        break;
      }
    }
    if (!drop && report) {
      auto it = report->find(sentence_key(s));
      drop = it == report->end() || it->second != AlignStatus::aligned;
    }
    if (!drop) kept.push_back(s);
  }
  return kept;
}

}  // namespace synprobe
