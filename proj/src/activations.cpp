#include "synprobe/activations.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "synprobe/common.hpp"

namespace synprobe {

bool EmbeddingRecord::has_surprisal(int i) const {
  return i >= 0 && static_cast<std::size_t>(i) < surprisals.size() && !std::isnan(surprisals[static_cast<std::size_t>(i)]);
}

bool same_record(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  if (a.sentence_id != b.sentence_id || a.words != b.words || a.model_id != b.model_id || a.layer != b.layer) return false;
  if (a.vectors.rows() != b.vectors.rows() || a.vectors.cols() != b.vectors.cols()) return false;
  if (a.vectors != b.vectors) return false;
  if (a.surprisals.size() != b.surprisals.size()) return false;
  for (std::size_t i = 0; i < a.surprisals.size(); ++i) {
    const float x = a.surprisals[i];
    const float y = b.surprisals[i];
    if (std::isnan(x) != std::isnan(y)) return false;
    if (!std::isnan(x) && x != y) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Little-endian primitives

namespace {

constexpr char kMagic[4] = {'S', 'P', 'A', 'F'};

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f32(std::ostream& out, float v) {
  // Canonical quiet NaN for unavailable values.
  std::uint32_t bits = std::isnan(v) ? 0x7FC00000u : std::bit_cast<std::uint32_t>(v);
  put_u32(out, bits);
}

void put_string(std::ostream& out, const std::string& s, const char* what) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw FormatError(std::string("SPAF: ") + what + " longer than 65535 bytes");
  }
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Reader

SpafReader::SpafReader(std::istream& in) : in_(in) {
  char magic[4];
  read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("SPAF: bad magic at byte offset 0");
  const std::uint64_t version_at = offset_;
  const std::uint32_t version = read_u32("version");
  if (version != kSpafVersion) {
    throw FormatError("SPAF: unsupported version " + std::to_string(version) + " at byte offset " +
                      std::to_string(version_at));
  }
  dim_ = read_u32("dimension");
  count_ = read_u32("record count");
  if (dim_ == 0 && count_ > 0) throw FormatError("SPAF: zero dimension with records at byte offset 8");
}

void SpafReader::read_bytes(void* dst, std::size_t n, const char* what) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw FormatError(std::string("SPAF: truncated ") + what + " at byte offset " + std::to_string(offset_));
  }
  offset_ += n;
}

std::uint16_t SpafReader::read_u16(const char* what) {
  unsigned char b[2];
  read_bytes(b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t SpafReader::read_u32(const char* what) {
  unsigned char b[4];
  read_bytes(b, 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t SpafReader::read_u64(const char* what) {
  unsigned char b[8];
  read_bytes(b, 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float SpafReader::read_f32(const char* what) { return std::bit_cast<float>(read_u32(what)); }

std::string SpafReader::read_string(const char* what) {
  const std::uint16_t len = read_u16(what);
  std::string s(len, '\0');
  if (len > 0) read_bytes(s.data(), len, what);
  return s;
}

std::optional<EmbeddingRecord> SpafReader::next() {
  if (read_ >= count_) return std::nullopt;
  EmbeddingRecord r;
  r.sentence_id = read_u64("sentence id");
  const std::uint32_t t = read_u32("word count");
  r.model_id = read_string("model id");
  r.layer = read_string("layer label");
  r.vectors.resize(t, dim_);
  for (std::uint32_t i = 0; i < t; ++i) {
    for (std::uint32_t j = 0; j < dim_; ++j) r.vectors(i, j) = read_f32("vector data");
  }
  r.surprisals.resize(t);
  for (std::uint32_t i = 0; i < t; ++i) r.surprisals[i] = read_f32("surprisals");
  r.words.reserve(t);
  for (std::uint32_t i = 0; i < t; ++i) r.words.push_back(read_string("word string"));
  ++read_;
  return r;
}

// ---------------------------------------------------------------------------
// Writer

SpafWriter::SpafWriter(std::ostream& out, std::uint32_t dim, std::uint32_t record_count)
    : out_(out), dim_(dim), count_(record_count) {
  out_.write(kMagic, 4);
  put_u32(out_, kSpafVersion);
  put_u32(out_, dim_);
  put_u32(out_, count_);
}

void SpafWriter::write(const EmbeddingRecord& r) {
  if (written_ >= count_) throw FormatError("SPAF: more records than announced in the header");
  const auto t = static_cast<std::size_t>(r.vectors.rows());
  if (static_cast<std::uint32_t>(r.vectors.cols()) != dim_) {
    throw FormatError("SPAF: record " + std::to_string(r.sentence_id) + " has dimension " +
                      std::to_string(r.vectors.cols()) + ", file has " + std::to_string(dim_));
  }
  if (r.words.size() != t || r.surprisals.size() != t) {
    throw FormatError("SPAF: record " + std::to_string(r.sentence_id) + " has inconsistent word counts");
  }
  put_u64(out_, r.sentence_id);
  put_u32(out_, static_cast<std::uint32_t>(t));
  put_string(out_, r.model_id, "model id");
  put_string(out_, r.layer, "layer label");
  for (Eigen::Index i = 0; i < r.vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.vectors.cols(); ++j) put_f32(out_, r.vectors(i, j));
  }
  for (float s : r.surprisals) put_f32(out_, s);
  for (const auto& w : r.words) put_string(out_, w, "word");
  ++written_;
}

void SpafWriter::finish() const {
  if (written_ != count_) {
    throw FormatError("SPAF: wrote " + std::to_string(written_) + " of " + std::to_string(count_) + " records");
  }
  out_.flush();
}

std::vector<EmbeddingRecord> read_spaf(std::istream& in) {
  SpafReader reader(in);
  std::vector<EmbeddingRecord> out;
  out.reserve(reader.record_count());
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::vector<EmbeddingRecord> read_spaf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_spaf(in);
}

void write_spaf(std::ostream& out, const std::vector<EmbeddingRecord>& records, std::uint32_t dim) {
  if (!records.empty()) dim = static_cast<std::uint32_t>(records.front().dim());
  SpafWriter writer(out, dim, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) writer.write(r);
  writer.finish();
}

void write_spaf_file(const std::string& path, const std::vector<EmbeddingRecord>& records, std::uint32_t dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_spaf(out, records, dim);
}

// ---------------------------------------------------------------------------
// Alignment

std::string normalize_word(std::string_view w) {
  while (!w.empty() && std::isspace(static_cast<unsigned char>(w.front()))) w.remove_prefix(1);
  while (!w.empty() && std::isspace(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
  std::string out(w);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

AlignedDataset align(std::vector<Sentence> sentences, std::vector<EmbeddingRecord> records) {
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  by_id.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!by_id.emplace(records[i].sentence_id, i).second) {
      throw InvariantError("duplicate activation record for sentence id " + std::to_string(records[i].sentence_id));
    }
  }
  AlignedDataset out;
  for (auto& s : sentences) {
    const std::uint64_t key = sentence_key(s);
    if (out.report.count(key)) throw InvariantError("duplicate sentence id " + s.id);
    auto it = by_id.find(key);
    AlignStatus status = AlignStatus::aligned;
    if (it == by_id.end()) {
      status = AlignStatus::missing_record;
    } else {
      const EmbeddingRecord& r = records[it->second];
      if (r.words.size() != s.size() || static_cast<std::size_t>(r.size()) != s.size()) {
        status = AlignStatus::length_mismatch;
      } else {
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (normalize_word(r.words[i]) != normalize_word(s.tokens[i].form)) {
            status = AlignStatus::word_mismatch;
            break;
          }
        }
      }
    }
    out.report.emplace(key, status);
    if (status == AlignStatus::aligned) {
      out.records.push_back(std::move(records[it->second]));
      out.sentences.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic oracle

Eigen::MatrixXd root_path_indicators(const DependencyTree& tree, int slots) {
  const int t = tree.size();
  if (slots < t) throw InvariantError("need at least " + std::to_string(t) + " edge slots, got " + std::to_string(slots));
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(t, slots);
  for (int i = 1; i <= t; ++i) {
    // Every non-root word owns the edge to its head, in slot (index - 1).
    for (int cur = i; tree.head(cur) != 0; cur = tree.head(cur)) v(i - 1, cur - 1) = 1.0;
  }
  return v;
}

SyntheticOracle synthesize_oracle(const std::vector<Sentence>& sentences, int dim, std::uint64_t seed, int slots) {
  int longest = 0;
  for (const auto& s : sentences) longest = std::max(longest, static_cast<int>(s.size()));
  if (slots <= 0) slots = std::max(longest, 1);
  if (slots < longest) throw InvariantError("edge slots must cover the longest sentence (" + std::to_string(longest) + ")");
  if (dim < slots) {
    throw InvariantError("embedding dimension " + std::to_string(dim) + " is smaller than the " + std::to_string(slots) +
                         " edge slots");
  }

  Rng rng(derive_seed(seed, 0x51));
  Eigen::MatrixXd gauss(dim, slots);
  for (int j = 0; j < slots; ++j) {
    for (int i = 0; i < dim; ++i) gauss(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  SyntheticOracle out;
  out.slots = slots;
  out.basis = qr.householderQ() * Eigen::MatrixXd::Identity(dim, slots);

  Rng noise(derive_seed(seed, 0x52));
  out.records.reserve(sentences.size());
  for (const auto& s : sentences) {
    const DependencyTree tree = DependencyTree::from_sentence(s);
    const Eigen::MatrixXd v = root_path_indicators(tree, slots);
    EmbeddingRecord r;
    r.sentence_id = sentence_key(s);
    r.model_id = kSyntheticModelId;
    r.layer = "synthetic";
    r.vectors = (v * out.basis.transpose()).cast<float>();
    for (const auto& tok : s.tokens) {
      r.words.push_back(tok.form);
      r.surprisals.push_back(static_cast<float>(noise.uniform(0.5, 12.0)));
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<EmbeddingRecord> synth_embeddings(const std::vector<Sentence>& sentences, int dim, std::uint64_t seed) {
  return synthesize_oracle(sentences, dim, seed).records;
}

}  // namespace synprobe
