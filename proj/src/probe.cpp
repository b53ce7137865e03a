#include "synprobe/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace synprobe {

namespace {

using BatchRef = std::vector<const ProbeExample*>;

BatchRef refs(std::span<const ProbeExample> batch) {
  BatchRef out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(&ex);
  return out;
}

/// Runs fn(begin, end, worker) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers <= 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t per = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * per);
    const std::size_t end = std::min(n, begin + per);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& th : pool) th.join();
}

Eigen::MatrixXd pairwise_sq_dist(const Eigen::MatrixXd& p) {
  const Eigen::Index t = p.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = i + 1; j < t; ++j) {
      const double v = (p.row(i) - p.row(j)).squaredNorm();
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Structural term of one sentence; adds d(loss)/dP * scale into `coeff`.
double structural_term(const ProbeExample& ex, const Eigen::MatrixXd& p, double scale, Eigen::MatrixXd* coeff) {
  const int t = ex.size();
  const Eigen::MatrixXd pred = pairwise_sq_dist(p);
  const double norm = 1.0 / (static_cast<double>(t) * static_cast<double>(t));
  double loss = 0.0;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(t, t);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      if (i == j) continue;
      const double diff = pred(i, j) - ex.gold(i, j);
      loss += std::abs(diff);
      s(i, j) = sign(diff);
    }
  }
  if (coeff) {
    // sum_{i!=j} s_ij * 2 (p_i - p_j)(h_i - h_j)^T == 4 P^T (D - S) H
    Eigen::MatrixXd lap = -s;
    lap.diagonal() = s.rowwise().sum();
    *coeff += (4.0 * norm * scale) * (lap * p);
  }
  return loss * norm;
}

struct PairTerm {
  bool skipped = true;
  double value = 0.0;
  Eigen::VectorXd grad_a;  // d(term)/d(p_e), already multiplied by u(e)
  Eigen::VectorXd grad_b;
};

PairTerm pair_term(const Eigen::VectorXd& pa, int ua, const Eigen::VectorXd& pb, int ub, bool same_label, bool want_grad) {
  PairTerm out;
  const Eigen::VectorXd a = static_cast<double>(ua) * pa;
  const Eigen::VectorXd b = static_cast<double>(ub) * pb;
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return out;
  out.skipped = false;
  const double c = a.dot(b) / (na * nb);
  const double r = c - (same_label ? 1.0 : 0.0);
  out.value = r * r;
  if (want_grad) {
    const Eigen::VectorXd dc_da = b / (na * nb) - (c / (na * na)) * a;
    const Eigen::VectorXd dc_db = a / (na * nb) - (c / (nb * nb)) * b;
    out.grad_a = (2.0 * r * ua) * dc_da;
    out.grad_b = (2.0 * r * ub) * dc_db;
  }
  return out;
}

Eigen::VectorXd probed_edge(const Eigen::MatrixXd& p, const EdgeSample& e) {
  return (p.row(e.lo() - 1) - p.row(e.hi() - 1)).transpose();
}

std::vector<Eigen::MatrixXd> project_all(const ProbeParams& probe, const BatchRef& batch, int threads) {
  for (const auto* ex : batch) {
    if (ex->activations.cols() != probe.B.cols()) {
      throw InvariantError("activation dimension " + std::to_string(ex->activations.cols()) +
                           " does not match probe dimension " + std::to_string(probe.B.cols()));
    }
  }
  std::vector<Eigen::MatrixXd> proj(batch.size());
  parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) proj[i] = batch[i]->activations * probe.B.transpose();
  });
  return proj;
}

AngularLoss angular_impl(const BatchRef& batch, const std::vector<Eigen::MatrixXd>& proj, std::span<const EdgePair> pairs,
                         double scale, std::vector<Eigen::MatrixXd>* coeff) {
  AngularLoss out;
  // First pass counts usable pairs so the mean can be applied to the gradient.
  std::vector<PairTerm> terms;
  terms.reserve(pairs.size());
  for (const auto& pr : pairs) {
    const ProbeExample& xa = *batch.at(pr.example_a);
    const ProbeExample& xb = *batch.at(pr.example_b);
    const EdgeSample& ea = xa.edges.at(pr.edge_a);
    const EdgeSample& eb = xb.edges.at(pr.edge_b);
    terms.push_back(pair_term(probed_edge(proj[pr.example_a], ea), ea.direction, probed_edge(proj[pr.example_b], eb),
                              eb.direction, ea.label == eb.label, coeff != nullptr));
    if (terms.back().skipped) {
      ++out.skipped_pairs;
    } else {
      ++out.used_pairs;
      out.value += terms.back().value;
    }
  }
  if (out.used_pairs == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.used_pairs);
  out.value *= inv;
  if (coeff) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (terms[k].skipped) continue;
      const auto& pr = pairs[k];
      const EdgeSample& ea = batch[pr.example_a]->edges[pr.edge_a];
      const EdgeSample& eb = batch[pr.example_b]->edges[pr.edge_b];
      Eigen::MatrixXd& ca = (*coeff)[pr.example_a];
      ca.row(ea.lo() - 1) += (scale * inv) * terms[k].grad_a.transpose();
      ca.row(ea.hi() - 1) -= (scale * inv) * terms[k].grad_a.transpose();
      Eigen::MatrixXd& cb = (*coeff)[pr.example_b];
      cb.row(eb.lo() - 1) += (scale * inv) * terms[k].grad_b.transpose();
      cb.row(eb.hi() - 1) -= (scale * inv) * terms[k].grad_b.transpose();
    }
  }
  return out;
}

std::vector<EdgePair> sample_pairs_impl(const BatchRef& batch, std::size_t max_pairs, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t e = 0; e < batch[s]->edges.size(); ++e) {
      edges.emplace_back(static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e));
    }
  }
  const std::uint64_t n = edges.size();
  const std::uint64_t total = n < 2 ? 0 : n * (n - 1) / 2;
  std::vector<EdgePair> out;
  auto make = [&](std::uint64_t i, std::uint64_t j) {
    return EdgePair{edges[i].first, edges[i].second, edges[j].first, edges[j].second};
  };
  if (total <= max_pairs) {
    out.reserve(total);
    for (std::uint64_t i = 0; i < n; ++i) {
      for (std::uint64_t j = i + 1; j < n; ++j) out.push_back(make(i, j));
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  out.reserve(max_pairs);
  while (out.size() < max_pairs) {
    std::uint64_t i = rng.below(n);
    std::uint64_t j = rng.below(n);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (!seen.insert(i * n + j).second) continue;
    out.push_back(make(i, j));
  }
  return out;
}

LossAndGradient loss_gradient_impl(const ProbeParams& probe, const BatchRef& batch, std::span<const EdgePair> pairs,
                                   ProbeKind kind, double lambda, int threads, bool want_grad) {
  LossAndGradient out;
  if (batch.empty()) {
    out.gradient = Eigen::MatrixXd::Zero(probe.B.rows(), probe.B.cols());
    return out;
  }
  const auto proj = project_all(probe, batch, threads);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<Eigen::MatrixXd> coeff;
  if (want_grad) {
    coeff.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) coeff[i] = Eigen::MatrixXd::Zero(proj[i].rows(), proj[i].cols());
  }
  std::vector<double> per_sentence(batch.size(), 0.0);
  parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      per_sentence[i] = structural_term(*batch[i], proj[i], inv_n, want_grad ? &coeff[i] : nullptr);
    }
  });
  for (double v : per_sentence) out.structural += v;
  out.structural *= inv_n;
  out.total = out.structural;

  if (kind == ProbeKind::polar) {
    AngularLoss ang = angular_impl(batch, proj, pairs, lambda, want_grad ? &coeff : nullptr);
    out.angular = ang.value;
    out.skipped_pairs = ang.skipped_pairs;
    out.total += lambda * ang.value;
  }

  if (want_grad) {
    // grad = sum_s C_s^T H_s, accumulated per worker and reduced in worker order.
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), batch.size()));
    std::vector<Eigen::MatrixXd> partial(workers, Eigen::MatrixXd::Zero(probe.B.rows(), probe.B.cols()));
    parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t w) {
      for (std::size_t i = begin; i < end; ++i) partial[w].noalias() += coeff[i].transpose() * batch[i]->activations;
    });
    out.gradient = Eigen::MatrixXd::Zero(probe.B.rows(), probe.B.cols());
    for (const auto& p : partial) out.gradient += p;
  }
  return out;
}

}  // namespace

std::string_view to_string(ProbeKind k) { return k == ProbeKind::polar ? "polar" : "structural"; }

ProbeKind parse_probe_kind(std::string_view name) {
  if (name == "structural") return ProbeKind::structural;
  if (name == "polar") return ProbeKind::polar;
  throw std::invalid_argument("unknown probe kind '" + std::string(name) + "'");
}

ProbeParams init_probe(ProbeKind kind, int rank, int dim, std::uint64_t seed) {
  if (dim < 1 || rank < 1 || rank > dim) {
    throw std::invalid_argument("probe rank must be in [1, d]; got m=" + std::to_string(rank) + " d=" + std::to_string(dim));
  }
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  ProbeParams p;
  p.kind = kind;
  p.B.resize(rank, dim);
  for (int i = 0; i < rank; ++i) {
    for (int j = 0; j < dim; ++j) p.B(i, j) = rng.uniform(-bound, bound);
  }
  return p;
}

DistanceMatrix predicted_distance_matrix(const ProbeParams& probe, const EmbeddingRecord& record) {
  if (record.dim() != probe.dim()) {
    throw InvariantError("record dimension " + std::to_string(record.dim()) + " does not match probe dimension " +
                         std::to_string(probe.dim()));
  }
  const Eigen::MatrixXd p = record.vectors.cast<double>() * probe.B.transpose();
  return DistanceMatrix(pairwise_sq_dist(p));
}

ProbeExample make_example(const Sentence& sentence, const EmbeddingRecord& record) {
  if (static_cast<std::size_t>(record.size()) != sentence.size()) {
    throw InvariantError("sentence " + sentence.id + " has " + std::to_string(sentence.size()) + " words but its record has " +
                         std::to_string(record.size()));
  }
  DependencyTree tree = DependencyTree::from_sentence(sentence);
  std::vector<EdgeSample> edges;
  for (int c = 1; c <= tree.size(); ++c) {
    const int h = tree.head(c);
    if (h == 0) continue;
    edges.push_back({h, c, h < c ? 1 : -1, tree.label(c)});
  }
  Eigen::MatrixXd gold = tree_distance_matrix(tree).values();
  return ProbeExample{sentence_key(sentence), record.vectors.cast<double>(), std::move(gold), std::move(tree),
                      std::move(edges)};
}

std::vector<ProbeExample> make_examples(const AlignedDataset& data) {
  std::vector<ProbeExample> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(make_example(data.sentences[i], data.records[i]));
  return out;
}

std::vector<EdgePair> sample_edge_pairs(std::span<const ProbeExample> batch, std::size_t max_pairs, Rng& rng) {
  return sample_pairs_impl(refs(batch), max_pairs, rng);
}

double structural_loss(const ProbeParams& probe, std::span<const ProbeExample> batch) {
  return loss_gradient_impl(probe, refs(batch), {}, ProbeKind::structural, 0.0, 1, false).structural;
}

AngularLoss angular_loss(const ProbeParams& probe, std::span<const ProbeExample> batch, std::span<const EdgePair> pairs) {
  const BatchRef b = refs(batch);
  return angular_impl(b, project_all(probe, b, 1), pairs, 1.0, nullptr);
}

LossAndGradient loss_gradient(const ProbeParams& probe, std::span<const ProbeExample> batch,
                              std::span<const EdgePair> pairs, ProbeKind kind, double lambda, int threads) {
  return loss_gradient_impl(probe, refs(batch), pairs, kind, lambda, threads, true);
}

void adam_step(Eigen::MatrixXd& params, AdamState& state, const Eigen::MatrixXd& grad, const AdamConfig& config,
               std::string_view batch_label) {
  if (grad.rows() != params.rows() || grad.cols() != params.cols()) throw InvariantError("gradient shape mismatch");
  if (!grad.allFinite()) {
    throw InvariantError("non-finite gradient" + (batch_label.empty() ? std::string() : " in " + std::string(batch_label)));
  }
  if (state.step == 0) {
    state.first = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.second = Eigen::MatrixXd::Zero(params.rows(), params.cols());
  }
  ++state.step;
  state.first = config.beta1 * state.first + (1.0 - config.beta1) * grad;
  state.second = config.beta2 * state.second + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.first.array() / c1) /
                    ((state.second.array() / c2).sqrt() + config.epsilon);
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "epochs=" << epochs << "\nbatch_size=" << batch_size << "\nlearning_rate=" << learning_rate
     << "\nlambda=" << lambda << "\nseed=" << seed << "\nbeta1=" << beta1 << "\nbeta2=" << beta2
     << "\nepsilon=" << epsilon << "\nselect_best_dev=" << (select_best_dev ? "true" : "false") << "\nrank=" << rank
     << "\nmax_angular_pairs=" << max_angular_pairs << '\n';
  return os.str();
}

double pooled_uuas(const ProbeParams& probe, std::span<const ProbeExample> data) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& ex : data) {
    const Eigen::MatrixXd p = ex.activations * probe.B.transpose();
    const PredictedTree tree = kruskal_mst(DistanceMatrix(pairwise_sq_dist(p)));
    for (const auto& f : edge_accuracy(tree, ex.tree)) {
      hits += f.correct ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

TrainResult train(ProbeKind kind, std::span<const ProbeExample> train_set, std::span<const ProbeExample> dev_set,
                  const TrainConfig& config) {
  if (train_set.empty()) throw std::invalid_argument("training split is empty");
  if (dev_set.empty()) throw std::invalid_argument("dev split is empty");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (config.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  const int dim = static_cast<int>(train_set.front().activations.cols());

  TrainResult result{init_probe(kind, std::min(config.rank, dim), dim, derive_seed(config.seed, 1)), {}};
  if (config.epochs == 0) return result;

  Rng shuffle_rng(derive_seed(config.seed, 2));
  Rng pair_rng(derive_seed(config.seed, 3));
  Rng dev_pair_rng(derive_seed(config.seed, 4));
  const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  AdamState state;

  const BatchRef dev_refs = refs(dev_set);
  std::vector<EdgePair> dev_pairs;
  if (kind == ProbeKind::polar) dev_pairs = sample_edge_pairs(dev_set, config.max_angular_pairs, dev_pair_rng);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  ProbeParams current = result.probe;
  double best_dev = std::numeric_limits<double>::infinity();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      BatchRef batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);

      std::vector<EdgePair> pairs;
      if (kind == ProbeKind::polar) pairs = sample_pairs_impl(batch, config.max_angular_pairs, pair_rng);

      LossAndGradient lg = loss_gradient_impl(current, batch, pairs, kind, config.lambda, config.threads, true);
      adam_step(current.B, state, lg.gradient, adam,
                "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      epoch_loss += lg.total * static_cast<double>(batch.size());
    }
    result.history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const LossAndGradient dev = loss_gradient_impl(current, dev_refs, dev_pairs, kind, config.lambda, config.threads, false);
    result.history.dev_loss.push_back(dev.total);
    result.history.dev_uuas.push_back(pooled_uuas(current, dev_set));

    if (!config.select_best_dev || dev.total < best_dev) {
      best_dev = std::min(best_dev, dev.total);
      result.probe = current;
      result.history.best_epoch = epoch;
    }
  }
  if (!config.select_best_dev) result.history.best_epoch = config.epochs - 1;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kProbeMagic[4] = {'S', 'P', 'R', 'B'};
constexpr std::uint32_t kProbeVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, std::uint64_t& offset, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError(std::string("SPRB: truncated ") + what + " at byte offset " + std::to_string(offset));
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_probe(std::ostream& out, const ProbeParams& probe, std::string_view config_echo) {
  out.write(kProbeMagic, 4);
  put_u32(out, kProbeVersion);
  put_u32(out, probe.kind == ProbeKind::polar ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(probe.rank()));
  put_u32(out, static_cast<std::uint32_t>(probe.dim()));
  put_u32(out, static_cast<std::uint32_t>(config_echo.size()));
  out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  for (int i = 0; i < probe.rank(); ++i) {
    for (int j = 0; j < probe.dim(); ++j) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(probe.B(i, j))));
  }
}

void write_probe_file(const std::string& path, const ProbeParams& probe, std::string_view config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_probe(out, probe, config_echo);
}

ProbeCheckpoint read_probe(std::istream& in) {
  std::uint64_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kProbeMagic, 4) != 0) throw FormatError("SPRB: bad magic at byte offset 0");
  offset = 4;
  const std::uint32_t version = get_u32(in, offset, "version");
  if (version != kProbeVersion) throw FormatError("SPRB: unsupported version " + std::to_string(version) + " at byte offset 4");
  const std::uint32_t kind = get_u32(in, offset, "kind");
  if (kind > 1) throw FormatError("SPRB: unknown probe kind at byte offset 8");
  const std::uint32_t m = get_u32(in, offset, "rank");
  const std::uint32_t d = get_u32(in, offset, "dimension");
  if (m == 0 || m > d) throw FormatError("SPRB: invalid shape " + std::to_string(m) + "x" + std::to_string(d));
  const std::uint32_t len = get_u32(in, offset, "config length");
  ProbeCheckpoint ck;
  ck.config.resize(len);
  in.read(ck.config.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len) {
    throw FormatError("SPRB: truncated config echo at byte offset " + std::to_string(offset));
  }
  offset += len;
  ck.probe.kind = kind == 1 ? ProbeKind::polar : ProbeKind::structural;
  ck.probe.B.resize(m, d);
  for (std::uint32_t i = 0; i < m; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) ck.probe.B(i, j) = std::bit_cast<float>(get_u32(in, offset, "weights"));
  }
  return ck;
}

ProbeCheckpoint read_probe_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_probe(in);
}

}  // namespace synprobe
