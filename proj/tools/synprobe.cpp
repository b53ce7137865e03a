// synprobe: generate stimuli, ingest activations, train and evaluate probes,
// analyze the per-edge records and render the figures.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "synprobe/activations.hpp"
#include "synprobe/analysis.hpp"
#include "synprobe/common.hpp"
#include "synprobe/decode.hpp"
#include "synprobe/grammar.hpp"
#include "synprobe/probe.hpp"
#include "synprobe/report.hpp"
#include "synprobe/treebank.hpp"

namespace fs = std::filesystem;
using namespace synprobe;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

/// Input missing or unusable: exit code 2.
class MissingInput : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;
  std::string provenance;
};

void log(const std::string& msg) { std::cerr << "synprobe: " << msg << '\n'; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out_dir) / name; }

std::string resolve_input(const Globals& g, const std::string& given, const std::string& fallback) {
  const std::string path = given.empty() ? out_path(g, fallback).string() : given;
  if (!fs::exists(path)) throw MissingInput("input not found: " + path);
  return path;
}

std::ofstream open_output(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw MissingInput("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  log("wrote " + path.string());
}

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<Sentence> read_treebank(const std::string& path) {
  auto parsed = parse_conllu_file(path);
  for (const auto& d : parsed.dropped) log("dropped sentence " + d.id + " (line " + std::to_string(d.line) + "): " + d.reason);
  return std::move(parsed.sentences);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string structure = "default";
  int nestings = 0;
  int fillers = 0;
  std::size_t count = 100;
  std::string grammaticality = "grammatical";
  std::string congruency = "balanced";
  bool capitalize = false;
  std::string lexicon;
  std::string output;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  GenerationSpec spec;
  if (a.structure == "default") {
    spec = GenerationSpec::default_corpus(g.seed);
  } else {
    spec.seed = g.seed;
    GenerationCell cell;
    cell.structure = parse_structure(a.structure);
    if (a.nestings > 0) cell.nestings = a.nestings;
    cell.fillers = a.fillers;
    cell.count = a.count;
    spec.cells.push_back(cell);
  }
  spec.capitalize = a.capitalize;
  spec.congruency = a.congruency == "free" ? CongruencyPolicy::free : CongruencyPolicy::balanced;
  if (a.grammaticality == "ungrammatical") {
    spec.grammaticality = Grammaticality::ungrammatical;
  } else if (a.grammaticality == "both") {
    spec.grammaticality = Grammaticality::both;
  }
  const Lexicon lexicon = a.lexicon.empty() ? Lexicon::builtin() : Lexicon::load(resolve_input(g, a.lexicon, ""));
  const auto corpus = generate_corpus(spec, lexicon);
  const fs::path path = a.output.empty() ? out_path(g, "stimuli.conllu") : fs::path(a.output);
  auto out = open_output(path);
  out << g.provenance << '\n';
  write_conllu(out, corpus);
  log("wrote " + std::to_string(corpus.size()) + " sentences to " + path.string());
  return 0;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string treebank;
  std::string activations;
  int synth_dim = 0;
  bool keep_emails = false;
  bool keep_urls = false;
};

int cmd_ingest(const Globals& g, const IngestArgs& a) {
  if (a.activations.empty() == (a.synth_dim == 0)) {
    throw MissingInput("ingest needs exactly one of --activations or --synth-dim");
  }
  auto sentences = read_treebank(resolve_input(g, a.treebank, "stimuli.conllu"));
  LexicalRules rules;
  rules.drop_emails = !a.keep_emails;
  rules.drop_urls = !a.keep_urls;
  sentences = filter_corpus(sentences, rules, nullptr);

  std::vector<EmbeddingRecord> records;
  std::optional<SyntheticOracle> oracle;
  if (a.synth_dim > 0) {
    oracle = synthesize_oracle(sentences, a.synth_dim, derive_seed(g.seed, 20));
    records = std::move(oracle->records);
  } else {
    records = read_spaf_file(resolve_input(g, a.activations, ""));
  }
  const std::uint32_t dim = records.empty() ? static_cast<std::uint32_t>(a.synth_dim)
                                            : static_cast<std::uint32_t>(records.front().dim());
  auto data = align(std::move(sentences), std::move(records));

  std::ostringstream report;
  report << g.provenance << "\nsentence_key,status\n";
  std::size_t excluded = 0;
  for (const auto& [key, status] : data.report) {
    report << key << ',' << to_string(status) << '\n';
    excluded += status != AlignStatus::aligned;
  }
  write_text(out_path(g, "alignment.csv"), report.str());
  log(std::to_string(data.size()) + " aligned sentences, " + std::to_string(excluded) + " excluded");

  auto corpus_out = open_output(out_path(g, "corpus.conllu"));
  corpus_out << g.provenance << '\n';
  write_conllu(corpus_out, data.sentences);
  write_spaf_file(out_path(g, "activations.spaf").string(), data.records, dim);
  log("wrote " + out_path(g, "activations.spaf").string());
  if (oracle) {
    const ProbeParams exact{ProbeKind::structural, oracle->basis.transpose()};
    write_probe_file(out_path(g, "oracle_probe.sprb").string(), exact, g.provenance + "\nsource=synthetic-oracle\n");
    log("wrote " + out_path(g, "oracle_probe.sprb").string());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus;
  std::string activations;
  std::string probe = "structural";
  TrainConfig config;
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
};

AlignedDataset load_dataset(const Globals& g, const std::string& corpus, const std::string& activations) {
  auto sentences = read_treebank(resolve_input(g, corpus, "corpus.conllu"));
  auto records = read_spaf_file(resolve_input(g, activations, "activations.spaf"));
  auto data = align(std::move(sentences), std::move(records));
  if (data.size() == 0) throw MissingInput("no aligned sentences between treebank and activations");
  return data;
}

int cmd_train(const Globals& g, TrainArgs a) {
  const auto data = load_dataset(g, a.corpus, a.activations);
  const auto examples = make_examples(data);
  const std::size_t n = examples.size();
  const auto n_test = static_cast<std::size_t>(a.test_fraction * static_cast<double>(n));
  const auto n_dev = std::max<std::size_t>(1, static_cast<std::size_t>(a.dev_fraction * static_cast<double>(n)));
  if (n_test + n_dev >= n) throw MissingInput("too few sentences to split into train/dev/test");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(g.seed, 10));
  rng.shuffle(order);
  std::vector<ProbeExample> train_set, dev_set;
  std::ostringstream split;
  split << g.provenance << "\nsentence_id,split\n";
  std::vector<std::string> assignment(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (k < n_test) {
      assignment[i] = "test";
    } else if (k < n_test + n_dev) {
      assignment[i] = "dev";
      dev_set.push_back(examples[i]);
    } else {
      assignment[i] = "train";
      train_set.push_back(examples[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) split << data.sentences[i].id << ',' << assignment[i] << '\n';
  write_text(out_path(g, "split.csv"), split.str());

  a.config.seed = g.seed;
  a.config.threads = g.threads;
  const ProbeKind kind = parse_probe_kind(a.probe);
  log("training " + a.probe + " probe on " + std::to_string(train_set.size()) + " sentences");
  const auto result = train(kind, train_set, dev_set, a.config);

  std::ostringstream hist;
  hist << g.provenance << "\nepoch,train_loss,dev_loss,dev_uuas,best\n";
  for (std::size_t e = 0; e < result.history.train_loss.size(); ++e) {
    hist << e + 1 << ',' << fmt(result.history.train_loss[e]) << ',' << fmt(result.history.dev_loss[e]) << ','
         << fmt(result.history.dev_uuas[e]) << ',' << (static_cast<int>(e) == result.history.best_epoch) << '\n';
  }
  write_text(out_path(g, "history.csv"), hist.str());
  const fs::path probe_path = out_path(g, "probe.sprb");
  write_probe_file(probe_path.string(), result.probe, g.provenance + '\n' + a.config.describe());
  log("wrote " + probe_path.string());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string corpus;
  std::string activations;
  std::string probe_file;
  std::string name = "probe";
  std::vector<std::string> baselines;
  double noise = 0.4;
  std::string split = "auto";
};

AlignedDataset restrict_split(const Globals& g, AlignedDataset data, const std::string& split) {
  if (split == "all") return data;
  const fs::path split_path = out_path(g, "split.csv");
  if (!fs::exists(split_path)) {
    if (split == "auto") return data;
    throw MissingInput("split requested but " + split_path.string() + " is missing");
  }
  const std::string wanted = split == "auto" ? "test" : split;
  std::set<std::string> keep;
  std::ifstream in(split_path);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (line.empty() || line[0] == '#' || comma == std::string::npos) continue;
    if (line.substr(comma + 1) == wanted) keep.insert(line.substr(0, comma));
  }
  AlignedDataset out;
  out.report = data.report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (keep.count(data.sentences[i].id)) {
      out.sentences.push_back(std::move(data.sentences[i]));
      out.records.push_back(std::move(data.records[i]));
    }
  }
  if (out.size() == 0) throw MissingInput("no sentences in split '" + wanted + "'");
  return out;
}

void write_evaluation(const Globals& g, const Evaluation& eval) {
  const fs::path records = out_path(g, "records_" + eval.source + ".csv");
  auto out = open_output(records);
  write_records_csv(out, eval.records, g.provenance);
  log("wrote " + records.string());
  write_text(out_path(g, "trees_" + eval.source + ".json"), trees_to_json(eval.trees, g.provenance));
  std::size_t hits = 0;
  for (const auto& r : eval.records) hits += r.correct;
  const double score = eval.records.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(eval.records.size());
  log(eval.source + ": pooled UUAS " + fmt(score) + " over " + std::to_string(eval.records.size()) + " edges");
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (a.probe_file.empty() && a.baselines.empty()) throw MissingInput("eval needs --probe-file and/or --baseline");
  const auto data = restrict_split(g, load_dataset(g, a.corpus, a.activations), a.split);
  log("evaluating " + std::to_string(data.size()) + " sentences");
  if (!a.probe_file.empty()) {
    const auto ckpt = read_probe_file(resolve_input(g, a.probe_file, ""));
    write_evaluation(g, eval_records(data, ckpt.probe, a.name));
  }
  for (const auto& name : a.baselines) {
    BaselineKind kind;
    kind.type = parse_baseline(name);
    kind.noise_scale = a.noise;
    kind.seed = derive_seed(g.seed, 30);
    write_evaluation(g, eval_records(data, kind));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::vector<std::string> records;
  std::string treebank;
  int quantiles = 5;
  int resamples = 10000;
  int folds = 5;
  double alpha = 100.0;
  ForestParams forest;
  bool deprel_features = false;
  bool length_feature = false;
};

std::string source_of(const std::vector<EvalRecord>& records, const std::string& path) {
  if (!records.empty() && !records.front().source.empty()) return records.front().source;
  return fs::path(path).stem().string();
}

void analyze_curves(const Globals& g, const std::vector<EvalRecord>& records, const std::string& source, int quantiles) {
  for (Feature f : {Feature::linear_distance, Feature::head_depth, Feature::surprisal_quantile_head,
                    Feature::surprisal_quantile_child, Feature::nestings, Feature::fillers}) {
    try {
      const auto curve = bin_by(records, f, quantiles);
      const fs::path path = out_path(g, "curve_" + std::string(to_string(f)) + "_" + source + ".csv");
      auto out = open_output(path);
      write_curve_csv(out, curve, g.provenance);
    } catch (const std::invalid_argument&) {
      log(source + ": no records carry " + std::string(to_string(f)) + ", curve skipped");
    }
  }
}

void analyze_controlled(const Globals& g, const std::vector<EvalRecord>& records, const std::string& source,
                        const AnalyzeArgs& a) {
  std::vector<int> skipped;
  const auto rows = congruency_contrast(records, {1, 2, 3}, a.resamples, derive_seed(g.seed, 40), &skipped);
  for (int level : skipped) log(source + ": congruency contrast skipped at nestings=" + std::to_string(level));
  if (!rows.empty()) {
    std::ostringstream out;
    out << g.provenance << "\nnestings,congruent_acc,congruent_n,incongruent_acc,incongruent_n,p_value\n";
    for (const auto& r : rows) {
      out << r.nestings << ',' << fmt(r.congruent_accuracy) << ',' << r.congruent_n << ','
          << fmt(r.incongruent_accuracy) << ',' << r.incongruent_n << ',' << fmt(r.p_value) << '\n';
    }
    write_text(out_path(g, "contrast_" + source + ".csv"), out.str());
  }
  for (Structure s : {Structure::pp, Structure::ce, Structure::rb}) {
    const auto profile = depth_profile(records, s);
    if (profile.empty()) continue;
    std::ostringstream out;
    out << g.provenance << "\nnestings,level,acc,sem,n\n";
    for (const auto& r : profile) {
      out << r.nestings << ',' << r.level << ',' << fmt(r.accuracy) << ',' << fmt(r.sem) << ',' << r.n << '\n';
    }
    write_text(out_path(g, "profile_" + std::string(to_string(s)) + "_" + source + ".csv"), out.str());
  }
}

void analyze_binding(const Globals& g, const std::vector<Sentence>& sentences, const fs::path& trees_path,
                     const std::string& source) {
  std::ifstream in(trees_path);
  std::stringstream text;
  text << in.rdbuf();
  std::map<std::string, PredictedTree> trees;
  for (auto& [id, tree] : trees_from_json(text.str())) trees[id] = std::move(tree);
  const auto rows = binding_profile(sentences, trees);
  if (rows.empty()) return;
  std::ostringstream out;
  out << g.provenance << "\ngrammatical,nestings,subject,attractor,both,neither,total\n";
  for (const auto& r : rows) {
    out << (r.grammatical ? 1 : 0) << ',' << r.nestings;
    for (Binding b : {Binding::subject, Binding::attractor, Binding::both, Binding::neither}) out << ',' << fmt(r.proportion(b));
    out << ',' << r.total << '\n';
  }
  write_text(out_path(g, "binding_" + source + ".csv"), out.str());
}

void analyze_importance(const Globals& g, const std::vector<EvalRecord>& records, const std::string& source,
                        const AnalyzeArgs& a) {
  FeatureOptions opts;
  opts.deprel_onehot = a.deprel_features;
  opts.sentence_length = a.length_feature;
  auto table = build_features(records, opts);
  if (table.X.rows() == 0) {
    opts.surprisal = false;
    table = build_features(records, opts);
    log(source + ": no surprisals available, importance uses distance and depth only");
  }
  ForestParams forest = a.forest;
  forest.seed = derive_seed(g.seed, 50);
  ImportanceReport report;
  try {
    report = importance_cv(table, a.folds, a.alpha, forest, derive_seed(g.seed, 51));
  } catch (const std::invalid_argument& e) {
    log(source + ": importance skipped: " + e.what());
    return;
  }
  std::ostringstream out;
  out << g.provenance << "\nfeature,mean,std";
  for (std::size_t k = 0; k < report.fold_signed.size(); ++k) out << ",fold" << k + 1;
  out << '\n';
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    out << report.features[f] << ',' << fmt(report.mean(static_cast<Eigen::Index>(f))) << ','
        << fmt(report.stddev(static_cast<Eigen::Index>(f)));
    for (const auto& fold : report.fold_signed) out << ',' << fmt(fold(static_cast<Eigen::Index>(f)));
    out << '\n';
  }
  out << "# ridge_accuracy";
  for (double v : report.ridge_accuracy) out << ',' << fmt(v);
  out << "\n# forest_accuracy";
  for (double v : report.forest_accuracy) out << ',' << fmt(v);
  out << '\n';
  write_text(out_path(g, "importance_" + source + ".csv"), out.str());
}

int cmd_analyze(const Globals& g, const AnalyzeArgs& a) {
  std::vector<std::string> inputs = a.records;
  if (inputs.empty()) {
    if (fs::is_directory(g.out_dir)) {
      for (const auto& entry : fs::directory_iterator(g.out_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("records_", 0) == 0 && entry.path().extension() == ".csv") inputs.push_back(entry.path().string());
      }
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw MissingInput("no records_*.csv in " + g.out_dir + " and no --records given");
  }
  std::vector<Sentence> sentences;
  if (!a.treebank.empty()) sentences = read_treebank(resolve_input(g, a.treebank, ""));

  for (const auto& path : inputs) {
    std::ifstream in(resolve_input(g, path, ""));
    const auto records = read_records_csv(in);
    const std::string source = source_of(records, path);
    log("analyzing " + std::to_string(records.size()) + " records from " + source);
    analyze_curves(g, records, source, a.quantiles);
    analyze_controlled(g, records, source, a);
    const fs::path trees_path = fs::path(path).parent_path() / ("trees_" + source + ".json");
    if (!sentences.empty() && fs::exists(trees_path)) {
      analyze_binding(g, sentences, trees_path, source);
    } else if (sentences.empty()) {
      log(source + ": binding profile needs --treebank, skipped");
    }
    analyze_importance(g, records, source, a);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("missing column '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
  double number(std::size_t row, const std::string& name) const { return std::stod(rows[row][static_cast<std::size_t>(column(name))]); }
  const std::string& text(std::size_t row, const std::string& name) const { return rows[row][static_cast<std::size_t>(column(name))]; }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split_csv_line(line);
    } else {
      t.rows.push_back(split_csv_line(line));
    }
  }
  return t;
}

/// Files named prefix + <middle> + ".csv" in dir, keyed by the middle part.
std::map<std::string, fs::path> find_tables(const fs::path& dir, const std::string& prefix) {
  std::map<std::string, fs::path> found;
  if (!fs::is_directory(dir)) return found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ".csv") {
      found[name.substr(prefix.size(), name.size() - prefix.size() - 4)] = entry.path();
    }
  }
  return found;
}

std::size_t report_curves(const Globals& g, const fs::path& dir) {
  std::size_t written = 0;
  for (Feature f : {Feature::linear_distance, Feature::head_depth, Feature::surprisal_quantile_head,
                    Feature::surprisal_quantile_child, Feature::nestings, Feature::fillers}) {
    const std::string feature(to_string(f));
    std::vector<Series> series;
    std::vector<std::string> ticks;
    const bool quantile = f == Feature::surprisal_quantile_head || f == Feature::surprisal_quantile_child;
    for (const auto& [source, path] : find_tables(dir, "curve_" + feature + "_")) {
      const auto t = read_table(path);
      Series s;
      s.name = source;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        s.x.push_back(t.number(r, "bin"));
        s.y.push_back(t.number(r, "acc"));
        s.err.push_back(t.number(r, "sem"));
        if (quantile && series.empty()) ticks.push_back("Q" + t.text(r, "bin"));
      }
      series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    ChartText text{"Edge accuracy by " + feature, feature, "accuracy"};
    write_text(out_path(g, "curve_" + feature + ".svg"), line_chart_svg(text, series, g.provenance, ticks));
    ++written;
  }
  return written;
}

std::size_t report_importance(const Globals& g, const fs::path& dir) {
  std::size_t written = 0;
  for (const auto& [source, path] : find_tables(dir, "importance_")) {
    const auto t = read_table(path);
    std::vector<std::string> features;
    Series s{"signed importance", {}, {}, {}};
    double extent = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      features.push_back(t.text(r, "feature"));
      s.y.push_back(t.number(r, "mean"));
      s.err.push_back(t.number(r, "std"));
      extent = std::max(extent, std::abs(s.y.back()) + s.err.back());
    }
    extent = std::max(0.1, std::ceil(extent * 10.0) / 10.0);
    ChartText text{"Signed feature importance (" + source + ")", "feature", "importance", -extent, extent};
    write_text(out_path(g, "importance_" + source + ".svg"), bar_chart_svg(text, features, {s}, g.provenance));
    ++written;
  }
  return written;
}

std::size_t report_binding(const Globals& g, const fs::path& dir) {
  std::size_t written = 0;
  for (const auto& [source, path] : find_tables(dir, "binding_")) {
    const auto t = read_table(path);
    std::vector<std::string> categories;
    std::vector<Series> series;
    for (const char* cls : {"subject", "attractor", "both", "neither"}) series.push_back({cls, {}, {}, {}});
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const bool grammatical = t.text(r, "grammatical") == "1";
      const std::string level = t.text(r, "nestings") == "0" ? "all" : "n=" + t.text(r, "nestings");
      categories.push_back(std::string(grammatical ? "gram " : "ungram ") + level);
      for (auto& s : series) s.y.push_back(t.number(r, s.name));
    }
    ChartText text{"Verb binding in PP stimuli (" + source + ")", "condition", "proportion"};
    write_text(out_path(g, "binding_" + source + ".svg"), bar_chart_svg(text, categories, series, g.provenance));
    ++written;
  }
  return written;
}

std::size_t report_contrast(const Globals& g, const fs::path& dir) {
  std::size_t written = 0;
  for (const auto& [source, path] : find_tables(dir, "contrast_")) {
    const auto t = read_table(path);
    std::vector<std::string> categories;
    Series congruent{"congruent", {}, {}, {}};
    Series incongruent{"incongruent", {}, {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double p = t.number(r, "p_value");
      const std::string stars = p < 0.001 ? " ***" : p < 0.01 ? " **" : p < 0.05 ? " *" : "";
      categories.push_back("n=" + t.text(r, "nestings") + stars);
      congruent.y.push_back(t.number(r, "congruent_acc"));
      incongruent.y.push_back(t.number(r, "incongruent_acc"));
    }
    ChartText text{"Subject-verb accuracy by congruency (" + source + ")", "nestings", "accuracy"};
    write_text(out_path(g, "contrast_" + source + ".svg"),
               bar_chart_svg(text, categories, {congruent, incongruent}, g.provenance));
    ++written;
  }
  return written;
}

std::size_t report_profiles(const Globals& g, const fs::path& dir) {
  std::size_t written = 0;
  for (const auto& [key, path] : find_tables(dir, "profile_")) {
    const auto t = read_table(path);
    std::map<int, Series> by_nesting;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const int n = static_cast<int>(t.number(r, "nestings"));
      auto& s = by_nesting[n];
      s.name = "nestings=" + std::to_string(n);
      s.x.push_back(t.number(r, "level"));
      s.y.push_back(t.number(r, "acc"));
      s.err.push_back(t.number(r, "sem"));
    }
    std::vector<Series> series;
    for (auto& [n, s] : by_nesting) series.push_back(std::move(s));
    ChartText text{"Subject-verb accuracy by clause level (" + key + ")", "clause level", "accuracy"};
    write_text(out_path(g, "profile_" + key + ".svg"), line_chart_svg(text, series, g.provenance));
    ++written;
  }
  return written;
}

int cmd_report(const Globals& g, const std::string& in_dir) {
  const fs::path dir = in_dir.empty() ? fs::path(g.out_dir) : fs::path(in_dir);
  if (!fs::is_directory(dir)) throw MissingInput("analysis directory not found: " + dir.string());
  const std::size_t n = report_curves(g, dir) + report_importance(g, dir) + report_binding(g, dir) +
                        report_contrast(g, dir) + report_profiles(g, dir);
  if (n == 0) throw MissingInput("no analysis tables in " + dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural and polar probes for syntactic trees in model activations"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key=value configuration file; command-line flags take precedence");

  Globals g;
  g.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and default inputs")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads; 1 guarantees bit-reproducibility")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate controlled stimuli as CoNLL-U");
  generate->add_option("--structure", gen.structure, "pp, ce, rb, simple, or default for the full corpus")
      ->check(CLI::IsMember({"default", "pp", "ce", "rb", "simple"}))
      ->capture_default_str();
  generate->add_option("--nestings", gen.nestings, "1..3; 0 draws uniformly per sentence")->check(CLI::Range(0, 3));
  generate->add_option("--fillers", gen.fillers, "Filler words per sentence")->check(CLI::NonNegativeNumber);
  generate->add_option("--count", gen.count, "Sentences to generate")->capture_default_str();
  generate->add_option("--grammaticality", gen.grammaticality)
      ->check(CLI::IsMember({"grammatical", "ungrammatical", "both"}))
      ->capture_default_str();
  generate->add_option("--congruency", gen.congruency)->check(CLI::IsMember({"balanced", "free"}))->capture_default_str();
  generate->add_flag("--capitalize", gen.capitalize, "Capitalize the first word");
  generate->add_option("--lexicon", gen.lexicon, "Lexicon file (default: built in)");
  generate->add_option("-o,--output", gen.output, "Output path (default: <out-dir>/stimuli.conllu)");

  IngestArgs ing;
  auto* ingest = app.add_subcommand("ingest", "Filter and align a treebank with its activations");
  ingest->add_option("--treebank", ing.treebank, "CoNLL-U (default: <out-dir>/stimuli.conllu)");
  ingest->add_option("--activations", ing.activations, "SPAF activations");
  ingest->add_option("--synth-dim", ing.synth_dim, "Synthesize oracle activations of this width instead")
      ->check(CLI::PositiveNumber);
  ingest->add_flag("--keep-emails", ing.keep_emails);
  ingest->add_flag("--keep-urls", ing.keep_urls);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a probe");
  train_cmd->add_option("--corpus", tr.corpus, "CoNLL-U (default: <out-dir>/corpus.conllu)");
  train_cmd->add_option("--activations", tr.activations, "SPAF (default: <out-dir>/activations.spaf)");
  train_cmd->add_option("--probe", tr.probe)->check(CLI::IsMember({"structural", "polar"}))->capture_default_str();
  train_cmd->add_option("--epochs", tr.config.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.config.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate)->capture_default_str();
  train_cmd->add_option("--lambda", tr.config.lambda, "Angular loss weight (polar only)")->capture_default_str();
  train_cmd->add_option("--rank", tr.config.rank, "Probe rank, clamped to the activation width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--max-pairs", tr.config.max_angular_pairs)->capture_default_str();
  train_cmd->add_flag("!--last-epoch", tr.config.select_best_dev, "Keep the final epoch instead of the best dev epoch");
  train_cmd->add_option("--dev-fraction", tr.dev_fraction)->check(CLI::Range(0.0, 0.5))->capture_default_str();
  train_cmd->add_option("--test-fraction", tr.test_fraction)->check(CLI::Range(0.0, 0.5))->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Decode trees and score gold edges");
  eval_cmd->add_option("--corpus", ev.corpus, "CoNLL-U (default: <out-dir>/corpus.conllu)");
  eval_cmd->add_option("--activations", ev.activations, "SPAF (default: <out-dir>/activations.spaf)");
  eval_cmd->add_option("--probe-file", ev.probe_file, "Probe checkpoint");
  eval_cmd->add_option("--name", ev.name, "Source name for the probe's outputs")->capture_default_str();
  eval_cmd->add_option("--baseline", ev.baselines, "activation_space, linear_informed or random (repeatable)")
      ->check(CLI::IsMember({"activation_space", "linear_informed", "random"}));
  eval_cmd->add_option("--noise", ev.noise, "Upper bound of the baseline perturbation")->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "Sentences to evaluate; auto uses the test split when one exists")
      ->check(CLI::IsMember({"auto", "all", "train", "dev", "test"}))
      ->capture_default_str();

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Accuracy curves, contrasts, binding and feature importance");
  analyze->add_option("--records", an.records, "Record CSVs (default: <out-dir>/records_*.csv)");
  analyze->add_option("--treebank", an.treebank, "Evaluated CoNLL-U, needed for the binding profile");
  analyze->add_option("--quantiles", an.quantiles)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--resamples", an.resamples)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--folds", an.folds)->check(CLI::Range(2, 100))->capture_default_str();
  analyze->add_option("--alpha", an.alpha, "Ridge penalty")->capture_default_str();
  analyze->add_option("--forest-trees", an.forest.trees)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--max-depth", an.forest.max_depth)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--min-samples-split", an.forest.min_samples_split)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_flag("--deprel-features", an.deprel_features, "Add one-hot relation labels to the classifier features");
  analyze->add_flag("--length-feature", an.length_feature, "Add sentence length to the classifier features");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Render SVG figures from analysis tables");
  report->add_option("--in-dir", report_dir, "Directory with analysis CSVs (default: <out-dir>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  // Output location and the config path itself do not change any result.
  std::istringstream effective(app.config_to_str(true, false));
  std::string config_text;
  for (std::string line; std::getline(effective, line);) {
    if (line.rfind("out-dir", 0) == 0 || line.rfind("config", 0) == 0) continue;
    config_text += line + '\n';
  }
  g.provenance = std::string("# synprobe ") + kVersion + " seed=" + std::to_string(g.seed) +
                 " config=" + hex64(fnv1a64(config_text));

  try {
    if (*generate) return cmd_generate(g, gen);
    if (*ingest) return cmd_ingest(g, ing);
    if (*train_cmd) return cmd_train(g, tr);
    if (*eval_cmd) return cmd_eval(g, ev);
    if (*analyze) return cmd_analyze(g, an);
    if (*report) return cmd_report(g, report_dir);
  } catch (const CapacityError& e) {
    log(std::string("capacity error: ") + e.what());
    return kExitUsage;
  } catch (const MissingInput& e) {
    log(e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    log(std::string("format error: ") + e.what());
    return kExitInvariant;
  } catch (const InvariantError& e) {
    log(std::string("invariant violation: ") + e.what());
    return kExitInvariant;
  } catch (const std::invalid_argument& e) {
    log(std::string("invalid argument: ") + e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kExitInvariant;
  }
  return kExitUsage;
}
