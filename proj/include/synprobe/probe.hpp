#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "synprobe/activations.hpp"
#include "synprobe/common.hpp"
#include "synprobe/decode.hpp"
#include "synprobe/treebank.hpp"

namespace synprobe {

enum class ProbeKind { structural, polar };

std::string_view to_string(ProbeKind k);
ProbeKind parse_probe_kind(std::string_view name);

/// Linear map B (m x d) from activation space to probe space.
struct ProbeParams {
  ProbeKind kind = ProbeKind::structural;
  Eigen::MatrixXd B;

  int rank() const { return static_cast<int>(B.rows()); }
  int dim() const { return static_cast<int>(B.cols()); }
};

/// Entries i.i.d. uniform in [-1/sqrt(d), 1/sqrt(d)]. Throws if m is not in [1, d].
ProbeParams init_probe(ProbeKind kind, int rank, int dim, std::uint64_t seed);

/// ||B (h_i - h_j)||^2 for every word pair.
DistanceMatrix predicted_distance_matrix(const ProbeParams& probe, const EmbeddingRecord& record);

/// A gold edge as the angular objective sees it. The probed vector of the edge
/// is B (h_lo - h_hi) over its two positions; multiplying by `direction`
/// (+1 when the head comes first) orients it head-to-child.
struct EdgeSample {
  int head = 0;
  int child = 0;
  int direction = 1;
  std::string label;

  int lo() const { return head < child ? head : child; }
  int hi() const { return head < child ? child : head; }
};

/// One sentence prepared for training: activations, gold distances, gold edges.
struct ProbeExample {
  std::uint64_t sentence_id = 0;
  Eigen::MatrixXd activations;  // t x d
  Eigen::MatrixXd gold;         // t x t tree distances
  DependencyTree tree;
  std::vector<EdgeSample> edges;

  int size() const { return static_cast<int>(activations.rows()); }
};

ProbeExample make_example(const Sentence& sentence, const EmbeddingRecord& record);
std::vector<ProbeExample> make_examples(const AlignedDataset& data);

/// An unordered pair of gold edges, addressed by (example, edge) indices.
struct EdgePair {
  std::uint32_t example_a = 0;
  std::uint32_t edge_a = 0;
  std::uint32_t example_b = 0;
  std::uint32_t edge_b = 0;
};

/// All distinct unordered pairs of gold edges in the batch when there are at
/// most `max_pairs`, otherwise `max_pairs` distinct pairs drawn uniformly.
std::vector<EdgePair> sample_edge_pairs(std::span<const ProbeExample> batch, std::size_t max_pairs, Rng& rng);

/// Mean over sentences of (1/t^2) * sum_{i != j} |M_ij - Mhat_ij|.
double structural_loss(const ProbeParams& probe, std::span<const ProbeExample> batch);

struct AngularLoss {
  double value = 0.0;
  std::size_t used_pairs = 0;
  std::size_t skipped_pairs = 0;  // pairs with a zero-norm probed vector
};

/// Mean over pairs of (cos(u_e p_e, u_e' p_e') - [c(e) == c(e')])^2.
AngularLoss angular_loss(const ProbeParams& probe, std::span<const ProbeExample> batch, std::span<const EdgePair> pairs);

struct LossAndGradient {
  double structural = 0.0;
  double angular = 0.0;
  double total = 0.0;
  std::size_t skipped_pairs = 0;
  Eigen::MatrixXd gradient;  // m x d
};

/// Objective and analytic gradient. Structural kind ignores `pairs` and
/// `lambda`; polar kind adds lambda times the angular term. The L1
/// subgradient is 0 where M_ij == Mhat_ij. Per-sentence work is split over
/// `threads` workers and reduced in a fixed order.
LossAndGradient loss_gradient(const ProbeParams& probe, std::span<const ProbeExample> batch,
                              std::span<const EdgePair> pairs, ProbeKind kind, double lambda, int threads = 1);

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::MatrixXd first;
  Eigen::MatrixXd second;
  long step = 0;
};

/// Bias-corrected Adam update of `params` in place. Throws InvariantError
/// naming `batch_label` if the gradient has non-finite entries.
void adam_step(Eigen::MatrixXd& params, AdamState& state, const Eigen::MatrixXd& grad, const AdamConfig& config,
               std::string_view batch_label = "");

struct TrainConfig {
  int epochs = 30;
  int batch_size = 200;
  double learning_rate = 0.005;
  double lambda = 10.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool select_best_dev = true;
  int rank = 128;
  std::size_t max_angular_pairs = 5000;
  int threads = 1;

  /// "key=value" lines, echoed into checkpoints.
  std::string describe() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> dev_loss;
  std::vector<double> dev_uuas;
  int best_epoch = -1;  // 0-based; -1 when no epoch ran
};

struct TrainResult {
  ProbeParams probe;
  TrainHistory history;
};

/// Adam training with per-epoch shuffling. Throws std::invalid_argument on
/// an empty split.
TrainResult train(ProbeKind kind, std::span<const ProbeExample> train_set, std::span<const ProbeExample> dev_set,
                  const TrainConfig& config);

/// Mean UUAS over sentences weighted by edge count (i.e. pooled over edges).
double pooled_uuas(const ProbeParams& probe, std::span<const ProbeExample> data);

// ---------------------------------------------------------------------------
// Checkpoints: "SPRB" u32 version u32 kind u32 m u32 d u32 config_len +
// UTF-8 config echo, then m*d f32 row-major.

struct ProbeCheckpoint {
  ProbeParams probe;
  std::string config;
};

void write_probe(std::ostream& out, const ProbeParams& probe, std::string_view config_echo);
void write_probe_file(const std::string& path, const ProbeParams& probe, std::string_view config_echo);
ProbeCheckpoint read_probe(std::istream& in);
ProbeCheckpoint read_probe_file(const std::string& path);

}  // namespace synprobe
