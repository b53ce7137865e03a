#include "synprobe/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "synprobe/common.hpp"

namespace synprobe {

extern const char* const kDefaultLexiconText;

namespace {

std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

Inflected parse_inflected(const std::string& line, int line_no) {
  auto bar = line.find('|');
  if (bar == std::string::npos) {
    throw FormatError("lexicon line " + std::to_string(line_no) + ": expected singular|plural");
  }
  return {trim_copy(std::string_view(line).substr(0, bar)), trim_copy(std::string_view(line).substr(bar + 1))};
}

template <typename T>
void require_unique(const std::vector<T>& items, const char* category) {
  std::set<T> seen;
  for (const auto& item : items) {
    if (!seen.insert(item).second) throw InvariantError(std::string("lexicon: duplicate entry in ") + category);
  }
}

bool is_lowercase(const std::string& s) {
  return std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isupper(c); });
}

bool starts_with_vowel(std::string_view s) {
  return !s.empty() && std::string_view("aeiou").find(static_cast<char>(std::tolower(static_cast<unsigned char>(s.front())))) !=
                           std::string_view::npos;
}

Number flip(Number n) { return n == Number::singular ? Number::plural : Number::singular; }

}  // namespace

// ---------------------------------------------------------------------------
// Lexicon

Lexicon Lexicon::parse(std::istream& in) {
  Lexicon lex;
  lex.complementizer.clear();
  lex.conjunction.clear();
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim_copy(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("lexicon line " + std::to_string(line_no) + ": unterminated section");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section == "nouns") {
      lex.nouns.push_back(parse_inflected(line, line_no));
    } else if (section == "verbs") {
      lex.verbs.push_back(parse_inflected(line, line_no));
    } else if (section == "transitive_verbs") {
      lex.transitive_verbs.push_back(parse_inflected(line, line_no));
    } else if (section == "complement_verbs") {
      lex.complement_verbs.push_back(parse_inflected(line, line_no));
    } else if (section == "determiners") {
      Inflected pair = parse_inflected(line, line_no);
      lex.determiners.push_back({pair.singular == "-" ? "" : pair.singular, pair.plural == "-" ? "" : pair.plural});
    } else if (section == "prepositions") {
      lex.prepositions.push_back(line);
    } else if (section == "adverbs") {
      lex.adverbs.push_back(line);
    } else if (section == "adjectives") {
      lex.adjectives.push_back(line);
    } else if (section == "complementizer") {
      lex.complementizer = line;
    } else if (section == "conjunction") {
      lex.conjunction = line;
    } else {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": entry outside a known section");
    }
  }
  if (lex.complementizer.empty()) lex.complementizer = "that";
  if (lex.conjunction.empty()) lex.conjunction = "and";
  lex.validate();
  return lex;
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon " + path);
  return parse(in);
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = [] {
    std::istringstream in(kDefaultLexiconText);
    return parse(in);
  }();
  return lex;
}

void Lexicon::validate() const {
  auto nonempty = [](bool ok, const char* what) {
    if (!ok) throw InvariantError(std::string("lexicon: empty category ") + what);
  };
  nonempty(!nouns.empty(), "nouns");
  nonempty(!verbs.empty(), "verbs");
  nonempty(!transitive_verbs.empty(), "transitive_verbs");
  nonempty(!complement_verbs.empty(), "complement_verbs");
  nonempty(!prepositions.empty(), "prepositions");
  nonempty(!determiners.empty(), "determiners");
  nonempty(!adverbs.empty(), "adverbs");
  nonempty(!adjectives.empty(), "adjectives");
  nonempty(!determiners_for(Number::singular).empty(), "singular determiners");
  nonempty(!determiners_for(Number::plural).empty(), "plural determiners");

  auto check_inflected = [](const std::vector<Inflected>& items, const char* category) {
    for (const auto& item : items) {
      if (item.singular.empty() || item.plural.empty()) {
        throw InvariantError(std::string("lexicon: missing form in ") + category);
      }
      if (!is_lowercase(item.singular) || !is_lowercase(item.plural)) {
        throw InvariantError(std::string("lexicon: uppercase form in ") + category);
      }
    }
    std::vector<std::string> singulars;
    for (const auto& item : items) singulars.push_back(item.singular);
    require_unique(singulars, category);
  };
  check_inflected(nouns, "nouns");
  check_inflected(verbs, "verbs");
  check_inflected(transitive_verbs, "transitive_verbs");
  check_inflected(complement_verbs, "complement_verbs");
  for (const auto* list : {&prepositions, &adverbs, &adjectives}) {
    for (const auto& w : *list) {
      if (!is_lowercase(w)) throw InvariantError("lexicon: uppercase form '" + w + "'");
    }
  }
  require_unique(prepositions, "prepositions");
  require_unique(adverbs, "adverbs");
  require_unique(adjectives, "adjectives");
  require_unique(determiners, "determiners");
}

std::vector<std::string> Lexicon::determiners_for(Number n) const {
  std::vector<std::string> out;
  for (const auto& d : determiners) {
    const std::string& form = n == Number::plural ? d.plural : d.singular;
    if (!form.empty()) out.push_back(form);
  }
  return out;
}

std::optional<std::string> Lexicon::flip_verb(const std::string& form) const {
  for (const auto* list : {&verbs, &transitive_verbs, &complement_verbs}) {
    for (const auto& v : *list) {
      if (v.singular == v.plural) continue;
      if (v.singular == form) return v.plural;
      if (v.plural == form) return v.singular;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Specs

std::string GenerationCell::name() const {
  std::string n = std::string(to_string(structure)) + "/nestings=" + (nestings ? std::to_string(*nestings) : "uniform") +
                  "/fillers=" + std::to_string(fillers);
  return n;
}

GenerationSpec GenerationSpec::default_corpus(std::uint64_t seed) {
  GenerationSpec spec;
  spec.seed = seed;
  for (Structure s : {Structure::pp, Structure::ce, Structure::rb}) {
    for (int n = 1; n <= 3; ++n) {
      spec.cells.push_back({s, n, 0, n == 3 ? 6666u : 6667u});
    }
  }
  for (int f = 1; f <= 4; ++f) spec.cells.push_back({Structure::simple, 0, f, 5000});
  return spec;
}

std::size_t GenerationSpec::total() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.count;
  return n;
}

void GenerationSpec::validate() const {
  if (total() == 0) throw InvariantError("generation spec requests no sentences");
  for (const auto& c : cells) {
    if (c.structure == Structure::simple) {
      if (c.nestings && *c.nestings != 0) throw InvariantError("simple sentences have no nestings: " + c.name());
    } else if (c.nestings && (*c.nestings < 1 || *c.nestings > 3)) {
      throw InvariantError("nestings must be in {1,2,3}: " + c.name());
    }
    if (c.fillers < 0 || c.fillers > max_fillers) {
      throw InvariantError("fillers must be in [0," + std::to_string(max_fillers) + "]: " + c.name());
    }
  }
}

// ---------------------------------------------------------------------------
// Layout

namespace {

class Builder {
public:
  int add(std::string form, std::string lemma, std::string upos, Number number = Number::unmarked) {
    Token tok;
    tok.index = static_cast<int>(tokens_.size()) + 1;
    tok.form = std::move(form);
    tok.lemma = std::move(lemma);
    tok.upos = std::move(upos);
    set_number(tok, number);
    tokens_.push_back(std::move(tok));
    return tokens_.back().index;
  }

  void attach(int child, int head, std::string deprel) {
    Token& tok = tokens_.at(static_cast<std::size_t>(child - 1));
    tok.head = head;
    tok.deprel = std::move(deprel);
  }

  /// Noun phrase "det [fillers] noun"; returns the noun index.
  int noun_phrase(const NounPhrase& np, const std::vector<std::string>& adjectives, std::string_view conj) {
    const std::string& next = adjectives.empty() ? np.noun : adjectives.front();
    std::string det = np.determiner;
    if (det == "a" && starts_with_vowel(next)) det = "an";
    int d = add(det, np.determiner, "DET");
    std::vector<int> adj = add_fillers(adjectives, "ADJ", conj);
    int n = add(np.noun, np.lemma, "NOUN", np.number);
    attach(d, n, "det");
    link_fillers(adj, n, "amod");
    return n;
  }

  /// Lays out the coordinated filler list "a b ... and z"; returns the
  /// filler indices plus the conjunction index as the last element when present.
  std::vector<int> add_fillers(const std::vector<std::string>& words, const char* upos, std::string_view conj) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words.size() >= 2 && i + 1 == words.size()) conj_ = add(std::string(conj), std::string(conj), "CCONJ");
      idx.push_back(add(words[i], words[i], upos));
    }
    return idx;
  }

  /// First filler modifies the target; the rest are conjuncts of the first.
  void link_fillers(const std::vector<int>& idx, int target, const char* relation) {
    if (idx.empty()) return;
    attach(idx.front(), target, relation);
    for (std::size_t i = 1; i < idx.size(); ++i) attach(idx[i], idx.front(), "conj");
    if (idx.size() >= 2) attach(conj_, idx.back(), "cc");
  }

  int verb(const VerbChoice& v) { return add(v.form, v.lemma, "VERB", v.number); }

  std::vector<Token> take() { return std::move(tokens_); }

private:
  std::vector<Token> tokens_;
  int conj_ = 0;
};

}  // namespace

Sentence build_stimulus(Structure structure, int nestings, const StimulusSlots& slots, std::string_view complementizer,
                        std::string_view conjunction) {
  const int n = structure == Structure::simple ? 0 : nestings;
  if (structure != Structure::simple && (n < 1 || n > 3)) throw InvariantError("nestings must be in {1,2,3}");
  if (static_cast<int>(slots.nouns.size()) != n + 1) throw InvariantError("stimulus needs nestings+1 nouns");
  const int needed_verbs = structure == Structure::simple || structure == Structure::pp ? 1 : n + 1;
  if (static_cast<int>(slots.verbs.size()) != needed_verbs) throw InvariantError("wrong number of verbs for stimulus");
  if (structure == Structure::pp && static_cast<int>(slots.prepositions.size()) != n) {
    throw InvariantError("pp stimulus needs one preposition per nesting");
  }

  Builder b;
  const std::string comp(complementizer);
  const std::vector<std::string> none;
  std::vector<int> noun_idx(n + 1, 0);
  std::vector<int> verb_idx(slots.verbs.size(), 0);

  switch (structure) {
    case Structure::simple:
    case Structure::pp: {
      noun_idx[0] = b.noun_phrase(slots.nouns[0], none, conjunction);
      for (int k = 1; k <= n; ++k) {
        int p = b.add(slots.prepositions[k - 1], slots.prepositions[k - 1], "ADP");
        noun_idx[k] = b.noun_phrase(slots.nouns[k], none, conjunction);
        b.attach(p, noun_idx[k], "case");
        // Each prepositional phrase modifies the noun right before it.
        b.attach(noun_idx[k], noun_idx[k - 1], "nmod");
      }
      auto fillers = b.add_fillers(slots.fillers, "ADV", conjunction);
      verb_idx[0] = b.verb(slots.verbs[0]);
      b.attach(verb_idx[0], 0, "root");
      b.attach(noun_idx[0], verb_idx[0], "nsubj");
      b.link_fillers(fillers, verb_idx[0], "advmod");
      break;
    }
    case Structure::ce: {
      noun_idx[0] = b.noun_phrase(slots.nouns[0], none, conjunction);
      std::vector<int> marks(n + 1, 0);
      for (int k = 1; k <= n; ++k) {
        marks[k] = b.add(comp, comp, "SCONJ");
        noun_idx[k] = b.noun_phrase(slots.nouns[k], none, conjunction);
      }
      auto fillers = b.add_fillers(slots.fillers, "ADV", conjunction);
      for (int k = n; k >= 0; --k) verb_idx[k] = b.verb(slots.verbs[k]);
      b.attach(verb_idx[0], 0, "root");
      for (int k = 0; k <= n; ++k) {
        b.attach(noun_idx[k], verb_idx[k], "nsubj");
        if (k >= 1) {
          b.attach(verb_idx[k], noun_idx[k - 1], "acl:relcl");
          b.attach(marks[k], verb_idx[k], "mark");
        }
      }
      b.link_fillers(fillers, verb_idx[n], "advmod");
      break;
    }
    case Structure::rb: {
      noun_idx[0] = b.noun_phrase(slots.nouns[0], n == 0 ? slots.fillers : none, conjunction);
      verb_idx[0] = b.verb(slots.verbs[0]);
      b.attach(verb_idx[0], 0, "root");
      b.attach(noun_idx[0], verb_idx[0], "nsubj");
      for (int k = 1; k <= n; ++k) {
        int mark = b.add(comp, comp, "SCONJ");
        noun_idx[k] = b.noun_phrase(slots.nouns[k], k == n ? slots.fillers : none, conjunction);
        verb_idx[k] = b.verb(slots.verbs[k]);
        b.attach(noun_idx[k], verb_idx[k], "nsubj");
        b.attach(mark, verb_idx[k], "mark");
        b.attach(verb_idx[k], verb_idx[k - 1], "ccomp");
      }
      break;
    }
  }

  Sentence s;
  s.tokens = b.take();
  StimulusMeta meta;
  meta.structure = structure;
  meta.nestings = n;
  meta.fillers = static_cast<int>(slots.fillers.size());
  meta.grammatical = true;
  meta.subject_index = noun_idx[0];
  meta.verb_index = verb_idx[0];
  for (int k = 1; k <= n; ++k) meta.attractor_indices.push_back(noun_idx[k]);
  if (n > 0) meta.congruent = slots.nouns[0].number == slots.nouns[n].number;
  s.meta = meta;
  s.comments.push_back("text = " + s.text());
  return s;
}

DependencyTree gold_tree(Structure structure, int nestings, const StimulusSlots& slots) {
  return DependencyTree::from_sentence(build_stimulus(structure, nestings, slots));
}

// ---------------------------------------------------------------------------
// Generation

namespace {

/// Falling factorial n (n-1) ... (n-k+1), saturating in double.
double arrangements(std::size_t n, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > n) return 0.0;
  double v = 1.0;
  for (int i = 0; i < k; ++i) v *= static_cast<double>(n - static_cast<std::size_t>(i));
  return v;
}

/// Upper bound on distinct token strings a cell can produce at a nesting level.
double capacity_bound(const Lexicon& lex, Structure s, int n, int fillers) {
  const double dets = static_cast<double>(
      std::max(lex.determiners_for(Number::singular).size(), lex.determiners_for(Number::plural).size()));
  double v = arrangements(lex.nouns.size(), n + 1) * std::pow(2.0 * dets, n + 1);
  switch (s) {
    case Structure::simple:
      v *= arrangements(lex.verbs.size(), 1) * arrangements(lex.adverbs.size(), fillers);
      break;
    case Structure::pp:
      v *= arrangements(lex.prepositions.size(), n) * arrangements(lex.verbs.size(), 1) *
           arrangements(lex.adverbs.size(), fillers);
      break;
    case Structure::ce:
      v *= arrangements(lex.transitive_verbs.size(), n) * arrangements(lex.verbs.size(), 1) *
           arrangements(lex.adverbs.size(), fillers);
      break;
    case Structure::rb:
      v *= arrangements(lex.complement_verbs.size(), n) * arrangements(lex.verbs.size(), 1) *
           arrangements(lex.adjectives.size(), fillers);
      break;
  }
  return v;
}

template <typename T>
std::vector<const T*> pick_distinct(const std::vector<T>& pool, int k, Rng& rng) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<const T*> out;
  for (int i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - static_cast<std::size_t>(i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    out.push_back(&pool[idx[static_cast<std::size_t>(i)]]);
  }
  return out;
}

Number random_number(Rng& rng) { return rng.below(2) == 0 ? Number::singular : Number::plural; }

StimulusSlots sample_slots(const Lexicon& lex, Structure s, int n, int fillers, std::optional<bool> congruent, Rng& rng) {
  StimulusSlots slots;
  auto nouns = pick_distinct(lex.nouns, n + 1, rng);
  for (int k = 0; k <= n; ++k) {
    NounPhrase np;
    np.number = random_number(rng);
    if (k == n && k > 0 && congruent) np.number = *congruent ? slots.nouns[0].number : flip(slots.nouns[0].number);
    np.noun = nouns[static_cast<std::size_t>(k)]->form(np.number);
    np.lemma = nouns[static_cast<std::size_t>(k)]->singular;
    auto dets = lex.determiners_for(np.number);
    np.determiner = dets[static_cast<std::size_t>(rng.below(dets.size()))];
    slots.nouns.push_back(std::move(np));
  }
  auto make_verb = [&](const Inflected& v, Number num) {
    return VerbChoice{v.form(num), v.plural, num};
  };
  switch (s) {
    case Structure::simple:
    case Structure::pp: {
      slots.verbs.push_back(make_verb(*pick_distinct(lex.verbs, 1, rng)[0], slots.nouns[0].number));
      for (const auto* p : pick_distinct(lex.prepositions, n, rng)) slots.prepositions.push_back(*p);
      for (const auto* a : pick_distinct(lex.adverbs, fillers, rng)) slots.fillers.push_back(*a);
      break;
    }
    case Structure::ce: {
      slots.verbs.push_back(make_verb(*pick_distinct(lex.verbs, 1, rng)[0], slots.nouns[0].number));
      auto tv = pick_distinct(lex.transitive_verbs, n, rng);
      for (int k = 1; k <= n; ++k) slots.verbs.push_back(make_verb(*tv[static_cast<std::size_t>(k - 1)], slots.nouns[static_cast<std::size_t>(k)].number));
      for (const auto* a : pick_distinct(lex.adverbs, fillers, rng)) slots.fillers.push_back(*a);
      break;
    }
    case Structure::rb: {
      auto cv = pick_distinct(lex.complement_verbs, n, rng);
      const Inflected& last = *pick_distinct(lex.verbs, 1, rng)[0];
      for (int k = 0; k <= n; ++k) {
        const Inflected& v = k < n ? *cv[static_cast<std::size_t>(k)] : last;
        slots.verbs.push_back(make_verb(v, slots.nouns[static_cast<std::size_t>(k)].number));
      }
      for (const auto* a : pick_distinct(lex.adjectives, fillers, rng)) slots.fillers.push_back(*a);
      break;
    }
  }
  return slots;
}

void capitalize_first(Sentence& s) {
  if (s.tokens.empty() || s.tokens[0].form.empty()) return;
  s.tokens[0].form[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s.tokens[0].form[0])));
  for (auto& c : s.comments) {
    if (c.starts_with("text = ")) c = "text = " + s.text();
  }
}

}  // namespace

std::vector<Sentence> generate_corpus(const GenerationSpec& spec, const Lexicon& lexicon) {
  spec.validate();
  lexicon.validate();

  // Reject impossible requests before sampling anything.
  const std::size_t requested = spec.grammaticality == Grammaticality::both ? 2 * spec.total() : spec.total();
  if (requested > kMaxCorpusSentences) {
    throw CapacityError("requested " + std::to_string(requested) + " sentences, more than the limit of " +
                        std::to_string(kMaxCorpusSentences) + " per corpus");
  }
  for (const auto& cell : spec.cells) {
    double bound = 0.0;
    if (cell.structure == Structure::simple) {
      bound = capacity_bound(lexicon, cell.structure, 0, cell.fillers);
    } else if (cell.nestings) {
      bound = capacity_bound(lexicon, cell.structure, *cell.nestings, cell.fillers);
    } else {
      for (int n = 1; n <= 3; ++n) bound += capacity_bound(lexicon, cell.structure, n, cell.fillers);
    }
    if (static_cast<double>(cell.count) > bound) {
      throw CapacityError("lexicon capacity exhausted for cell " + cell.name() + ": requested " +
                          std::to_string(cell.count) + ", at most " + std::to_string(static_cast<long long>(bound)) +
                          " unique sentences");
    }
  }

  constexpr std::size_t kMaxConsecutiveRejects = 20000;
  Rng rng(spec.seed);
  std::unordered_set<std::string> seen;
  std::vector<Sentence> out;
  out.reserve(requested);

  for (const auto& cell : spec.cells) {
    std::size_t produced = 0;
    std::size_t rejects = 0;
    while (produced < cell.count) {
      const int n = cell.structure == Structure::simple
                        ? 0
                        : (cell.nestings ? *cell.nestings : 1 + static_cast<int>(rng.below(3)));
      std::optional<bool> target;
      if (n > 0 && spec.congruency == CongruencyPolicy::balanced) target = produced % 2 == 0;
      StimulusSlots slots = sample_slots(lexicon, cell.structure, n, cell.fillers, target, rng);
      Sentence s = build_stimulus(cell.structure, n, slots, lexicon.complementizer, lexicon.conjunction);
      if (!seen.insert(s.text()).second) {
        if (++rejects > kMaxConsecutiveRejects) {
          throw CapacityError("lexicon capacity exhausted for cell " + cell.name() + " after " +
                              std::to_string(produced) + " unique sentences");
        }
        continue;
      }
      rejects = 0;
      ++produced;
      if (spec.grammaticality != Grammaticality::ungrammatical) out.push_back(s);
      if (spec.grammaticality != Grammaticality::grammatical) out.push_back(make_ungrammatical(s, lexicon));
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].id = std::to_string(i + 1);
    if (spec.capitalize) capitalize_first(out[i]);
  }
  return out;
}

Sentence make_ungrammatical(const Sentence& sentence, const Lexicon& lexicon) {
  if (!sentence.meta) throw InvariantError("sentence " + sentence.id + " has no stimulus metadata");
  const int v = sentence.meta->verb_index;
  if (v < 1 || v > static_cast<int>(sentence.size())) throw InvariantError("sentence " + sentence.id + " has no main verb");
  Sentence out = sentence;
  Token& verb = out.tokens[static_cast<std::size_t>(v - 1)];
  auto alt = lexicon.flip_verb(verb.form);
  if (!alt) throw InvariantError("verb '" + verb.form + "' has no distinct alternate form");
  verb.form = *alt;
  set_number(verb, flip(verb.number));
  out.meta->grammatical = !sentence.meta->grammatical;
  for (auto& c : out.comments) {
    if (c.starts_with("text = ")) c = "text = " + out.text();
  }
  return out;
}

std::string_view to_string(Congruency c) {
  switch (c) {
    case Congruency::congruent: return "congruent";
    case Congruency::incongruent: return "incongruent";
    case Congruency::not_applicable: break;
  }
  return "na";
}

Congruency congruency(const Sentence& sentence) {
  if (!sentence.meta || sentence.meta->attractor_indices.empty()) return Congruency::not_applicable;
  const Number subj = sentence.token(sentence.meta->subject_index).number;
  const Number last = sentence.token(sentence.meta->attractor_indices.back()).number;
  if (subj == Number::unmarked || last == Number::unmarked) return Congruency::not_applicable;
  return subj == last ? Congruency::congruent : Congruency::incongruent;
}

void set_number(Token& token, Number n) {
  token.number = n;
  std::vector<std::string> parts;
  if (token.feats != "_" && !token.feats.empty()) {
    std::istringstream is(token.feats);
    std::string part;
    while (std::getline(is, part, '|')) {
      if (!part.starts_with("Number=")) parts.push_back(part);
    }
  }
  if (n != Number::unmarked) parts.push_back(n == Number::singular ? "Number=Sing" : "Number=Plur");
  std::sort(parts.begin(), parts.end());
  token.feats.clear();
  for (const auto& p : parts) token.feats += (token.feats.empty() ? "" : "|") + p;
  if (token.feats.empty()) token.feats = "_";
}

}  // namespace synprobe
