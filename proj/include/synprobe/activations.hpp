#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synprobe/treebank.hpp"

namespace synprobe {

using WordMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Word-level activations of one sentence. Sub-token averaging happens
/// upstream, so there is exactly one row per word.
struct EmbeddingRecord {
  std::uint64_t sentence_id = 0;
  std::vector<std::string> words;
  WordMatrix vectors;            // t x d
  std::vector<float> surprisals; // nats; NaN when unavailable
  std::string model_id;
  std::string layer;

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
  bool has_surprisal(int i) const;
};

/// Field-by-field equality, treating NaN surprisals as equal.
bool same_record(const EmbeddingRecord& a, const EmbeddingRecord& b);

// ---------------------------------------------------------------------------
// SPAF v1, little-endian:
//   "SPAF" u32 version=1 u32 d u32 record_count
//   per record: u64 sentence_id, u32 t, u16+bytes model_id, u16+bytes layer,
//               t*d f32 row-major vectors, t f32 surprisals, t x (u16+bytes) words

inline constexpr std::uint32_t kSpafVersion = 1;

/// Streaming reader. Errors are FormatError with the byte offset.
class SpafReader {
public:
  explicit SpafReader(std::istream& in);

  std::uint32_t dim() const { return dim_; }
  std::uint32_t record_count() const { return count_; }
  /// Next record, or nullopt after the last one.
  std::optional<EmbeddingRecord> next();

private:
  void read_bytes(void* dst, std::size_t n, const char* what);
  std::uint16_t read_u16(const char* what);
  std::uint32_t read_u32(const char* what);
  std::uint64_t read_u64(const char* what);
  float read_f32(const char* what);
  std::string read_string(const char* what);

  std::istream& in_;
  std::uint64_t offset_ = 0;
  std::uint32_t dim_ = 0;
  std::uint32_t count_ = 0;
  std::uint32_t read_ = 0;
};

class SpafWriter {
public:
  SpafWriter(std::ostream& out, std::uint32_t dim, std::uint32_t record_count);

  void write(const EmbeddingRecord& record);
  /// Throws if fewer records were written than announced in the header.
  void finish() const;

private:
  std::ostream& out_;
  std::uint32_t dim_;
  std::uint32_t count_;
  std::uint32_t written_ = 0;
};

std::vector<EmbeddingRecord> read_spaf(std::istream& in);
std::vector<EmbeddingRecord> read_spaf_file(const std::string& path);
/// `dim` is only needed when `records` is empty.
void write_spaf(std::ostream& out, const std::vector<EmbeddingRecord>& records, std::uint32_t dim = 0);
void write_spaf_file(const std::string& path, const std::vector<EmbeddingRecord>& records, std::uint32_t dim = 0);

// ---------------------------------------------------------------------------
// Alignment

/// Sentences paired index-by-index with their records.
struct AlignedDataset {
  std::vector<Sentence> sentences;
  std::vector<EmbeddingRecord> records;
  AlignmentReport report;

  std::size_t size() const { return sentences.size(); }
};

/// Lowercases and strips surrounding whitespace.
std::string normalize_word(std::string_view w);

/// Pairs sentences with records by sentence key. Mismatched word sequences
/// are reported and excluded. Duplicate ids on either side throw InvariantError.
AlignedDataset align(std::vector<Sentence> sentences, std::vector<EmbeddingRecord> records);

// ---------------------------------------------------------------------------
// Synthetic oracle embeddings

/// Root-path indicator vectors: row i has a 1 in slot (c - 1) for every word c
/// on the path from the root down to word i+1, so squared distances between
/// rows equal tree distances.
Eigen::MatrixXd root_path_indicators(const DependencyTree& tree, int slots);

struct SyntheticOracle {
  Eigen::MatrixXd basis;  // d x slots, orthonormal columns
  int slots = 0;
  std::vector<EmbeddingRecord> records;
};

/// Builds embeddings h_i = Q v_i that encode tree distances exactly. `slots`
/// defaults to the longest sentence length. Throws InvariantError if d < slots.
SyntheticOracle synthesize_oracle(const std::vector<Sentence>& sentences, int dim, std::uint64_t seed, int slots = 0);
std::vector<EmbeddingRecord> synth_embeddings(const std::vector<Sentence>& sentences, int dim, std::uint64_t seed);

inline constexpr const char* kSyntheticModelId = "synthetic-oracle";

}  // namespace synprobe
