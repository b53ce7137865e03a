#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synprobe/treebank.hpp"

namespace synprobe {

/// A word with distinct singular and plural surface forms.
struct Inflected {
  std::string singular;
  std::string plural;

  const std::string& form(Number n) const { return n == Number::plural ? plural : singular; }
  bool operator==(const Inflected&) const = default;
};

struct Determiner {
  std::string singular;  // empty when unusable with singular nouns
  std::string plural;    // empty when unusable with plural nouns
  auto operator<=>(const Determiner&) const = default;
};

/// Word lists the generator samples from.
///
/// The text format has one `[section]` header per category followed by one
/// entry per line. Inflected categories use `singular|plural`; determiners
/// use `-` for a missing number (`a|-`, `-|some`); uninflected categories
/// hold one form per line. Lines starting with `#` are comments.
struct Lexicon {
  std::vector<Inflected> nouns;
  std::vector<Inflected> verbs;             // intransitive, 3rd person present
  std::vector<Inflected> transitive_verbs;
  std::vector<Inflected> complement_verbs;  // believe-type, take a that-clause
  std::vector<std::string> prepositions;
  std::vector<Determiner> determiners;
  std::vector<std::string> adverbs;
  std::vector<std::string> adjectives;
  std::string complementizer = "that";
  std::string conjunction = "and";

  static Lexicon parse(std::istream& in);
  static Lexicon load(const std::string& path);
  /// The lexicon shipped in assets/lexicon.txt, compiled in.
  static const Lexicon& builtin();

  /// Throws InvariantError on empty categories, uppercase forms, or duplicates.
  void validate() const;

  std::vector<std::string> determiners_for(Number n) const;
  /// Alternate number form of a verb in any verb category.
  std::optional<std::string> flip_verb(const std::string& form) const;
};

/// Largest corpus one generate_corpus call will build, counting both
/// grammaticality variants. Larger requests raise CapacityError.
inline constexpr std::size_t kMaxCorpusSentences = 1'000'000;

enum class CongruencyPolicy { balanced, free };
enum class Grammaticality { grammatical, ungrammatical, both };

struct GenerationCell {
  Structure structure = Structure::simple;
  std::optional<int> nestings;  // drawn uniformly from {1,2,3} per sentence when empty
  int fillers = 0;
  std::size_t count = 0;

  std::string name() const;
};

struct GenerationSpec {
  std::vector<GenerationCell> cells;
  CongruencyPolicy congruency = CongruencyPolicy::balanced;
  Grammaticality grammaticality = Grammaticality::grammatical;
  std::uint64_t seed = 0;
  bool capitalize = false;
  int max_fillers = 4;

  /// 80,000 grammatical sentences, 20,000 each for pp, ce, rb and
  /// simple-with-fillers.
  static GenerationSpec default_corpus(std::uint64_t seed);
  void validate() const;
  std::size_t total() const;
};

struct NounPhrase {
  std::string determiner;  // lexical form; "a" becomes "an" before a vowel
  std::string noun;
  std::string lemma;
  Number number = Number::singular;
};

struct VerbChoice {
  std::string form;
  std::string lemma;
  Number number = Number::singular;
};

/// Lexical material for one stimulus.
///
/// nouns[0] is the subject and nouns[k] the k-th attractor in surface order;
/// verbs[0] is the main verb and verbs[k] the verb of the k-th embedded clause.
/// Fillers are adverbs for simple/pp/ce and adjectives for rb.
struct StimulusSlots {
  std::vector<NounPhrase> nouns;
  std::vector<VerbChoice> verbs;
  std::vector<std::string> prepositions;
  std::vector<std::string> fillers;
};

/// Lays out a stimulus with its gold UD tree and metadata.
Sentence build_stimulus(Structure structure, int nestings, const StimulusSlots& slots,
                        std::string_view complementizer = "that", std::string_view conjunction = "and");

/// Labeled gold tree for a template instance.
DependencyTree gold_tree(Structure structure, int nestings, const StimulusSlots& slots);

/// Generates the controlled corpus. Throws CapacityError naming the cell when
/// the lexicon cannot supply enough unique sentences.
std::vector<Sentence> generate_corpus(const GenerationSpec& spec, const Lexicon& lexicon);

/// Flips the number of the main verb. Throws InvariantError when the
/// sentence has no metadata or the verb has no distinct alternate form.
Sentence make_ungrammatical(const Sentence& sentence, const Lexicon& lexicon);

enum class Congruency { congruent, incongruent, not_applicable };

std::string_view to_string(Congruency c);

/// Whether the subject and the last attractor share grammatical number.
Congruency congruency(const Sentence& sentence);

/// Sets the token's number and keeps the FEATS column consistent.
void set_number(Token& token, Number n);

}  // namespace synprobe
