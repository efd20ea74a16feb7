// lol: desk-scale pseudo-relevance-feedback retrieval and training toolkit.
//
// Subcommands: build-index, search, train, evaluate, sweep, ablate, synth-gen.
// Every run writes a manifest (resolved settings, seed, input/output hashes)
// into the output directory so results are reproducible from the manifest.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 partial failure.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lol/lol.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

// invalid inputs are usage problems; anything else mid-run is a runtime error
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[info] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_log_level >= 2) std::cerr << "[debug] " << msg << '\n';
}

// FNV-1a 64 over file bytes, hex-encoded; stable artifact fingerprint
std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw lol::io_error("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Per-run bookkeeping: resolved settings plus artifact hashes.
class Manifest {
 public:
  Manifest(std::string subcommand, std::string output_dir)
      : subcommand_(std::move(subcommand)), output_dir_(std::move(output_dir)) {
    fs::create_directories(output_dir_);
  }

  void set(const std::string& key, const std::string& value) { settings_[key] = value; }
  void set(const std::string& key, double value) { settings_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { settings_[key] = std::to_string(value); }
  void set(const std::string& key, uint64_t value) { settings_[key] = std::to_string(value); }

  void input(const std::string& path) { inputs_[path] = file_hash(path); }
  void output(const std::string& path) { outputs_[path] = file_hash(path); }

  std::string path_in_outdir(const std::string& name) const {
    return (fs::path(output_dir_) / name).string();
  }

  void write() const {
    json doc;
    doc["schema_version"] = 1;
    doc["subcommand"] = subcommand_;
    doc["settings"] = settings_;
    doc["inputs"] = inputs_;
    doc["outputs"] = outputs_;
    const std::string path = path_in_outdir(subcommand_ + "_manifest.json");
    std::ofstream f(path);
    f << doc.dump(2) << '\n';
    if (!f) throw lol::io_error("write failed: " + path);
    log_info("manifest written to " + path);
  }

 private:
  std::string subcommand_, output_dir_;
  std::map<std::string, std::string> settings_, inputs_, outputs_;
};

// Settings in a --config file override command-line flags.
void apply_config_overrides(const std::string& config_path,
                            const std::map<std::string, std::string*>& str_slots,
                            const std::map<std::string, double*>& num_slots,
                            const std::map<std::string, int*>& int_slots) {
  if (config_path.empty()) return;
  const auto kv = lol::read_config(config_path);
  for (const auto& [k, v] : kv) {
    if (k == "schema_version") continue;
    if (auto it = str_slots.find(k); it != str_slots.end()) {
      *it->second = v;
    } else if (auto nit = num_slots.find(k); nit != num_slots.end()) {
      *nit->second = std::stod(v);
    } else if (auto iit = int_slots.find(k); iit != int_slots.end()) {
      *iit->second = std::stoi(v);
    } else {
      throw usage_error("config key '" + k + "' is not a recognized setting");
    }
    log_debug("config override: " + k + "=" + v);
  }
}

std::vector<lol::Document> docs_from_vectors(const std::string& path) {
  auto [ids, vecs] = lol::read_vectors(path);
  std::vector<lol::Document> out;
  out.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], {}, std::move(vecs[i])});
  return out;
}

std::vector<lol::Query> queries_from_vectors(const std::string& path) {
  auto [ids, vecs] = lol::read_vectors(path);
  std::vector<lol::Query> out;
  out.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], {}, std::move(vecs[i])});
  return out;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw usage_error("missing required flag " + flag);
  if (!fs::exists(path))
    throw usage_error("file for " + flag + " not found: " + path +
                      " (generate inputs with synth-gen or point " + flag +
                      " at an existing artifact)");
}

std::vector<int> parse_depths(const std::string& spec) {
  std::vector<int> out;
  std::istringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto dash = tok.find('-');
    if (dash != std::string::npos) {
      const int lo = std::stoi(tok.substr(0, dash));
      const int hi = std::stoi(tok.substr(dash + 1));
      for (int k = lo; k <= hi; ++k) out.push_back(k);
    } else {
      out.push_back(std::stoi(tok));
    }
  }
  if (out.empty()) throw usage_error("--depths parsed to an empty set");
  return out;
}

// First-pass runs are frozen artifacts; cache them keyed by the corpus and
// query files so sweeps and ablations never recompute or drift.
std::vector<lol::RankedList> first_pass_cached(const lol::DocumentMatrix& matrix,
                                               const std::vector<lol::Query>& queries,
                                               size_t top_n, const std::string& corpus_path,
                                               const std::string& queries_path,
                                               const std::string& output_dir) {
  const fs::path cache_dir = fs::path(output_dir) / "cache";
  fs::create_directories(cache_dir);
  const std::string key = file_hash(corpus_path) + "_" + file_hash(queries_path) + "_" +
                          std::to_string(top_n);
  const std::string cache_path = (cache_dir / ("firstpass_" + key + ".run")).string();
  if (fs::exists(cache_path)) {
    log_info("first-pass cache hit: " + cache_path);
    return lol::read_run(cache_path);
  }
  std::vector<lol::RankedList> runs;
  runs.reserve(queries.size());
  for (const auto& q : queries)
    runs.push_back(lol::search(matrix, q.vector, top_n, q.query_id, "base"));
  lol::write_run(runs, "base", cache_path);
  log_info("first-pass cache miss, wrote " + cache_path);
  return runs;
}

std::string metric_table(const std::vector<lol::DepthSweepRow>& rows) {
  std::ostringstream out;
  out << "depth\tmrr@10\tndcg@10\trecall\tri_vs_base\tri_vs_prev\texcluded\n";
  for (const auto& r : rows) {
    out << r.depth << '\t' << lol::detail::fmt_double(r.mrr.mean, "%.6f") << '\t'
        << lol::detail::fmt_double(r.ndcg.mean, "%.6f") << '\t'
        << lol::detail::fmt_double(r.recall.mean, "%.6f") << '\t'
        << lol::detail::fmt_double(r.ri_vs_base.ri, "%.6f") << '\t'
        << (r.has_prev ? lol::detail::fmt_double(r.ri_vs_prev.ri, "%.6f") : std::string("-"))
        << '\t' << r.mrr.excluded << '\n';
  }
  return out.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  f << content;
  if (!f) throw lol::io_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// subcommand settings
// ---------------------------------------------------------------------------
struct GlobalFlags {
  uint64_t seed = 0;
  std::string config;
  std::string output_dir = "out";
  std::string log_level = "info";
};

struct SynthFlags {
  int topics = 10, docs_per_topic = 20, distractors = 50, queries_per_topic = 2;
  int dense_dim = 16, vocab_size = 500;
  double ambiguity = 0.0, noise = 0.1;
  std::string kind = "dense";
};

struct TrainFlags {
  std::string corpus, train_queries, dev_queries, qrels;
  std::string variant = "standard";
  std::string depths = "0-5";
  double lambda = 1.0, lr = 1e-4;
  int k_size = 2, batch = 8, budget = 12, width = 32, layers = 1, heads = 2;
  int selection_depth = -1;
};

lol::Variant parse_variant(const std::string& name) {
  if (name == "standard") return lol::Variant::standard;
  if (name == "no_reg") return lol::Variant::no_reg;
  if (name == "no_par") return lol::Variant::no_par;
  throw usage_error("--variant must be standard, no_reg, or no_par, got '" + name + "'");
}

lol::TrainConfig resolve_train_config(const TrainFlags& tf, const GlobalFlags& gf) {
  lol::TrainConfig cfg;
  cfg.depth_set_A = parse_depths(tf.depths);
  cfg.k_size = tf.k_size;
  cfg.lambda = tf.lambda;
  cfg.learning_rate = tf.lr;
  cfg.batch_queries = tf.batch;
  cfg.revision_budget = tf.budget;
  cfg.seed = gf.seed;
  cfg.variant = parse_variant(tf.variant);
  cfg.selection_depth = tf.selection_depth;
  cfg.model_width = tf.width;
  cfg.model_layers = tf.layers;
  cfg.model_heads = tf.heads;
  if (cfg.variant == lol::Variant::no_par) {  // forced degenerate setting
    cfg.k_size = 1;
    cfg.lambda = 0.0;
  } else if (cfg.variant == lol::Variant::no_reg) {
    cfg.lambda = 0.0;
  }
  try {
    cfg.validate();
  } catch (const lol::contract_error& e) {
    throw usage_error(e.what());
  }
  return cfg;
}

std::string train_log_tsv(const lol::TrainResult& r, const std::vector<int>& depths) {
  std::ostringstream out;
  out << "epoch\tselection\ttrain_rf\ttrain_cr\ttrain_total\tprobe_cr";
  for (int k : depths) out << "\tdev_mrr@" << k;
  out << '\n';
  for (const auto& e : r.log) {
    out << e.epoch << '\t' << lol::detail::fmt_double(e.selection_metric, "%.6f") << '\t'
        << lol::detail::fmt_double(e.train_mean_rf, "%.6f") << '\t'
        << lol::detail::fmt_double(e.train_mean_cr, "%.6f") << '\t'
        << lol::detail::fmt_double(e.train_mean_total, "%.6f") << '\t'
        << lol::detail::fmt_double(e.probe_cr, "%.6f");
    for (int k : depths) out << '\t' << lol::detail::fmt_double(e.dev_mrr_by_depth.at(k), "%.6f");
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// subcommand implementations
// ---------------------------------------------------------------------------
int cmd_synth_gen(const GlobalFlags& gf, const SynthFlags& sf) {
  lol::SynthConfig cfg;
  cfg.n_topics = sf.topics;
  cfg.docs_per_topic = sf.docs_per_topic;
  cfg.n_distractors = sf.distractors;
  cfg.queries_per_topic = sf.queries_per_topic;
  cfg.dense_dim = sf.dense_dim;
  cfg.vocab_size = sf.vocab_size;
  cfg.ambiguity_rate = sf.ambiguity;
  cfg.noise_sigma = sf.noise;
  cfg.seed = gf.seed;
  if (sf.kind == "dense")
    cfg.kind = lol::VectorKind::dense;
  else if (sf.kind == "sparse")
    cfg.kind = lol::VectorKind::sparse;
  else
    throw usage_error("--kind must be dense or sparse");

  const lol::SynthData data = lol::generate(cfg);

  Manifest m("synth-gen", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("topics", sf.topics);
  m.set("docs_per_topic", sf.docs_per_topic);
  m.set("distractors", sf.distractors);
  m.set("queries_per_topic", sf.queries_per_topic);
  m.set("ambiguity", sf.ambiguity);
  m.set("noise", sf.noise);
  m.set("kind", sf.kind);

  std::vector<std::string> doc_ids, q_ids, train_ids, dev_ids;
  std::vector<lol::VectorRepr> doc_vecs, q_vecs, train_vecs, dev_vecs;
  for (const auto& d : data.corpus) {
    doc_ids.push_back(d.doc_id);
    doc_vecs.push_back(d.vector);
  }
  for (size_t i = 0; i < data.queries.size(); ++i) {
    q_ids.push_back(data.queries[i].query_id);
    q_vecs.push_back(data.queries[i].vector);
    if (i % 2 == 0) {
      train_ids.push_back(data.queries[i].query_id);
      train_vecs.push_back(data.queries[i].vector);
    } else {
      dev_ids.push_back(data.queries[i].query_id);
      dev_vecs.push_back(data.queries[i].vector);
    }
  }
  const std::string corpus_path = m.path_in_outdir("corpus.vec");
  const std::string queries_path = m.path_in_outdir("queries.vec");
  const std::string train_path = m.path_in_outdir("queries_train.vec");
  const std::string dev_path = m.path_in_outdir("queries_dev.vec");
  const std::string qrels_path = m.path_in_outdir("qrels.txt");
  lol::write_vectors(doc_ids, doc_vecs, corpus_path);
  lol::write_vectors(q_ids, q_vecs, queries_path);
  lol::write_vectors(train_ids, train_vecs, train_path);
  lol::write_vectors(dev_ids, dev_vecs, dev_path);
  {
    std::ofstream f(qrels_path);
    for (const auto& [qid, docs] : data.judgments.all())
      for (const auto& [did, grade] : docs) f << qid << " 0 " << did << ' ' << grade << '\n';
    if (!f) throw lol::io_error("write failed: " + qrels_path);
  }
  for (const auto& p : {corpus_path, queries_path, train_path, dev_path, qrels_path}) m.output(p);
  m.write();
  log_info("generated " + std::to_string(data.corpus.size()) + " docs, " +
           std::to_string(data.queries.size()) + " queries");
  return kExitOk;
}

int cmd_build_index(const GlobalFlags& gf, const std::string& corpus_path) {
  require_file(corpus_path, "--corpus");
  const auto docs = docs_from_vectors(corpus_path);
  const auto matrix = lol::DocumentMatrix::build(docs);  // validates kinds/dims/ids

  Manifest m("build-index", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("docs", static_cast<int>(matrix.size()));
  m.set("dim", matrix.dim());
  m.set("kind", matrix.kind() == lol::VectorKind::dense ? "dense" : "sparse");
  m.input(corpus_path);
  const std::string index_path = m.path_in_outdir("index.vec");
  std::vector<std::string> ids;
  std::vector<lol::VectorRepr> vecs;
  for (size_t i = 0; i < matrix.size(); ++i) {
    ids.push_back(matrix.doc_ids()[i]);
    vecs.push_back(matrix.row(i));
  }
  lol::write_vectors(ids, vecs, index_path);
  m.output(index_path);
  m.write();
  log_info("indexed " + std::to_string(matrix.size()) + " documents");
  return kExitOk;
}

int cmd_search(const GlobalFlags& gf, const std::string& index_path,
               const std::string& queries_path, int top_n, const std::string& tag) {
  require_file(index_path, "--index");
  require_file(queries_path, "--queries");
  if (top_n <= 0) throw usage_error("--top-n must be positive");
  const auto docs = docs_from_vectors(index_path);
  const auto queries = queries_from_vectors(queries_path);
  const auto matrix = lol::DocumentMatrix::build(docs);

  std::vector<lol::RankedList> runs;
  for (const auto& q : queries)
    runs.push_back(lol::search(matrix, q.vector, static_cast<size_t>(top_n), q.query_id, tag));

  Manifest m("search", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("top_n", top_n);
  m.set("tag", tag);
  m.input(index_path);
  m.input(queries_path);
  const std::string run_path = m.path_in_outdir("run.txt");
  lol::write_run(runs, tag, run_path);
  m.output(run_path);
  m.write();
  log_info("searched " + std::to_string(queries.size()) + " queries");
  return kExitOk;
}

int cmd_train(const GlobalFlags& gf, const TrainFlags& tf) {
  require_file(tf.corpus, "--corpus");
  require_file(tf.train_queries, "--train-queries");
  require_file(tf.dev_queries, "--dev-queries");
  require_file(tf.qrels, "--qrels");
  const lol::TrainConfig cfg = resolve_train_config(tf, gf);

  const auto corpus = docs_from_vectors(tf.corpus);
  const auto train_q = queries_from_vectors(tf.train_queries);
  const auto dev_q = queries_from_vectors(tf.dev_queries);
  const auto qrels = lol::read_qrels(tf.qrels);

  log_info("training variant " + lol::variant_name(cfg.variant) + ": " + cfg.fingerprint());
  const lol::TrainResult result = lol::train(cfg, corpus, train_q, qrels, dev_q, qrels);

  Manifest m("train", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("fingerprint", cfg.fingerprint());
  m.set("variant", lol::variant_name(cfg.variant));
  m.set("lambda", cfg.lambda);
  m.set("k_size", cfg.k_size);
  m.set("budget", cfg.revision_budget);
  m.set("learning_rate", cfg.learning_rate);
  m.set("best_epoch", result.best.epoch);
  m.set("best_dev_mrr", result.best.dev_mrr_at_10);
  m.set("skipped_queries", static_cast<int>(result.skipped_queries.size()));
  m.input(tf.corpus);
  m.input(tf.train_queries);
  m.input(tf.dev_queries);
  m.input(tf.qrels);
  const std::string ckpt_path = m.path_in_outdir("best.ckpt");
  const std::string log_path = m.path_in_outdir("train_log.tsv");
  lol::save_checkpoint(result.best.params, ckpt_path);
  write_text(log_path, train_log_tsv(result, cfg.depth_set_A));
  m.output(ckpt_path);
  m.output(log_path);
  m.write();
  log_info("best epoch " + std::to_string(result.best.epoch) + ", dev MRR@10 " +
           lol::detail::fmt_double(result.best.dev_mrr_at_10, "%.4f"));
  return kExitOk;
}

int cmd_evaluate(const GlobalFlags& gf, const std::string& run_path, const std::string& qrels_path,
                 int cutoff, bool graded_recall) {
  require_file(run_path, "--run");
  require_file(qrels_path, "--qrels");
  const auto runs = lol::read_run(run_path);
  const auto qrels = lol::read_qrels(qrels_path);
  const auto mrr = lol::mrr_at_k(runs, qrels, cutoff);
  const auto ndcg = lol::ndcg_at_k(runs, qrels, cutoff);
  const auto recall = lol::recall_at_k(runs, qrels, cutoff, graded_recall);

  std::ostringstream table;
  table << "metric\tcutoff\tmean\tqueries\texcluded\n";
  for (const auto* r : {&mrr, &ndcg, &recall})
    table << r->name << '\t' << r->cutoff << '\t' << lol::detail::fmt_double(r->mean, "%.6f")
          << '\t' << r->per_query.size() << '\t' << r->excluded << '\n';
  std::cout << table.str();

  Manifest m("evaluate", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("cutoff", cutoff);
  m.set("graded_recall", graded_recall ? "true" : "false");
  m.input(run_path);
  m.input(qrels_path);
  const std::string out_path = m.path_in_outdir("metrics.tsv");
  write_text(out_path, table.str());
  m.output(out_path);
  m.write();
  return kExitOk;
}

int cmd_sweep(const GlobalFlags& gf, const std::string& ckpt_path, const std::string& corpus_path,
              const std::string& queries_path, const std::string& qrels_path,
              const std::string& depths_spec, int top_n, bool graded_recall) {
  require_file(ckpt_path, "--checkpoint");
  require_file(corpus_path, "--corpus");
  require_file(queries_path, "--queries");
  require_file(qrels_path, "--qrels");
  const auto params = lol::load_checkpoint(ckpt_path);
  const std::vector<int> depths = parse_depths(depths_spec);
  for (int k : depths)
    if (k < 0 || k > params.config.max_depth)
      throw usage_error("depth " + std::to_string(k) + " outside the checkpoint's range [0, " +
                        std::to_string(params.config.max_depth) + "]");
  const auto corpus = docs_from_vectors(corpus_path);
  const auto queries = queries_from_vectors(queries_path);
  const auto qrels = lol::read_qrels(qrels_path);
  const auto matrix = lol::DocumentMatrix::build(corpus);

  const int max_depth = *std::max_element(depths.begin(), depths.end());
  const size_t first_pass_len = std::min(matrix.size(), static_cast<size_t>(
                                                            std::max(max_depth, 10)));
  const auto first_pass = first_pass_cached(matrix, queries, first_pass_len, corpus_path,
                                            queries_path, gf.output_dir);
  const auto rows = lol::depth_sweep(params, queries, matrix, first_pass, qrels, depths,
                                     static_cast<size_t>(top_n), graded_recall);
  const std::string table = metric_table(rows);
  std::cout << table;

  Manifest m("sweep", gf.output_dir);
  m.set("seed", gf.seed);
  m.set("depths", depths_spec);
  m.set("top_n", top_n);
  m.set("graded_recall", graded_recall ? "true" : "false");
  m.input(ckpt_path);
  m.input(corpus_path);
  m.input(queries_path);
  m.input(qrels_path);
  const std::string out_path = m.path_in_outdir("sweep.tsv");
  write_text(out_path, table);
  m.output(out_path);
  m.write();
  return kExitOk;
}

int cmd_ablate(const GlobalFlags& gf, const TrainFlags& tf, int top_n) {
  require_file(tf.corpus, "--corpus");
  require_file(tf.train_queries, "--train-queries");
  require_file(tf.dev_queries, "--dev-queries");
  require_file(tf.qrels, "--qrels");

  const auto corpus = docs_from_vectors(tf.corpus);
  const auto train_q = queries_from_vectors(tf.train_queries);
  const auto dev_q = queries_from_vectors(tf.dev_queries);
  const auto qrels = lol::read_qrels(tf.qrels);
  const auto matrix = lol::DocumentMatrix::build(corpus);
  const std::vector<int> depths = parse_depths(tf.depths);
  const int max_depth = *std::max_element(depths.begin(), depths.end());
  const size_t first_pass_len = std::min(matrix.size(), static_cast<size_t>(
                                                            std::max(max_depth, 10)));
  const auto first_pass = first_pass_cached(matrix, dev_q, first_pass_len, tf.corpus,
                                            tf.dev_queries, gf.output_dir);

  Manifest m("ablate", gf.output_dir);
  m.set("seed", gf.seed);  // one seed, shared across all variants
  m.set("budget", tf.budget);
  m.set("depths", tf.depths);
  m.input(tf.corpus);
  m.input(tf.train_queries);
  m.input(tf.dev_queries);
  m.input(tf.qrels);

  std::ostringstream table;
  table << "variant\t" << "depth\tmrr@10\tndcg@10\trecall\tri_vs_base\tri_vs_prev\n";
  int failures = 0;
  for (lol::Variant variant :
       {lol::Variant::standard, lol::Variant::no_reg, lol::Variant::no_par}) {
    TrainFlags vf = tf;
    vf.variant = lol::variant_name(variant);
    try {
      const lol::TrainConfig cfg = resolve_train_config(vf, gf);
      log_info("ablation variant " + lol::variant_name(variant));
      const lol::TrainResult result = lol::train(cfg, corpus, train_q, qrels, dev_q, qrels);
      const auto rows = lol::depth_sweep(result.best.params, dev_q, matrix, first_pass, qrels,
                                         depths, static_cast<size_t>(top_n));
      for (const auto& r : rows) {
        table << lol::variant_name(variant) << '\t' << r.depth << '\t'
              << lol::detail::fmt_double(r.mrr.mean, "%.6f") << '\t'
              << lol::detail::fmt_double(r.ndcg.mean, "%.6f") << '\t'
              << lol::detail::fmt_double(r.recall.mean, "%.6f") << '\t'
              << lol::detail::fmt_double(r.ri_vs_base.ri, "%.6f") << '\t'
              << (r.has_prev ? lol::detail::fmt_double(r.ri_vs_prev.ri, "%.6f")
                             : std::string("-"))
              << '\n';
      }
      const std::string ckpt = m.path_in_outdir("best_" + lol::variant_name(variant) + ".ckpt");
      lol::save_checkpoint(result.best.params, ckpt);
      m.output(ckpt);
    } catch (const std::exception& e) {
      ++failures;
      table << lol::variant_name(variant) << "\tFAILED: " << e.what() << '\n';
      log_info("variant " + lol::variant_name(variant) + " failed: " + e.what());
    }
  }
  std::cout << table.str();
  const std::string out_path = m.path_in_outdir("ablation.tsv");
  write_text(out_path, table.str());
  m.output(out_path);
  m.write();
  if (failures == 3) return kExitRuntime;
  return failures > 0 ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale PRF retrieval: loss-comparative query reformulation toolkit"};
  app.require_subcommand(1);

  GlobalFlags gf;
  app.add_option("--seed", gf.seed, "global random seed")->capture_default_str();
  app.add_option("--config", gf.config, "key=value settings file; overrides flags");
  app.add_option("--output-dir", gf.output_dir, "artifact directory")->capture_default_str();
  app.add_option("--log-level", gf.log_level, "quiet|info|debug")->capture_default_str();

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic retrieval benchmark");
  synth->add_option("--topics", sf.topics)->capture_default_str();
  synth->add_option("--docs-per-topic", sf.docs_per_topic)->capture_default_str();
  synth->add_option("--distractors", sf.distractors)->capture_default_str();
  synth->add_option("--queries-per-topic", sf.queries_per_topic)->capture_default_str();
  synth->add_option("--dim", sf.dense_dim, "dense vector dimension")->capture_default_str();
  synth->add_option("--vocab", sf.vocab_size, "sparse vocabulary size")->capture_default_str();
  synth->add_option("--ambiguity", sf.ambiguity, "fraction of two-topic queries")
      ->capture_default_str();
  synth->add_option("--noise", sf.noise, "perturbation sigma")->capture_default_str();
  synth->add_option("--kind", sf.kind, "dense|sparse")->capture_default_str();

  std::string bi_corpus;
  auto* build_index = app.add_subcommand("build-index", "validate and freeze a corpus index");
  build_index->add_option("--corpus", bi_corpus, "corpus vectors file");

  std::string se_index, se_queries, se_tag = "bf";
  int se_top_n = 100;
  auto* search_cmd = app.add_subcommand("search", "brute-force top-n retrieval");
  search_cmd->add_option("--index", se_index, "index vectors file");
  search_cmd->add_option("--queries", se_queries, "query vectors file");
  search_cmd->add_option("--top-n", se_top_n)->capture_default_str();
  search_cmd->add_option("--tag", se_tag, "run tag")->capture_default_str();

  TrainFlags tf;
  auto add_train_flags = [&tf](CLI::App* cmd) {
    cmd->add_option("--corpus", tf.corpus, "corpus vectors file");
    cmd->add_option("--train-queries", tf.train_queries, "training query vectors");
    cmd->add_option("--dev-queries", tf.dev_queries, "development query vectors");
    cmd->add_option("--qrels", tf.qrels, "relevance judgments");
    cmd->add_option("--depths", tf.depths, "depth set A, e.g. 0-5 or 0,1,3")
        ->capture_default_str();
    cmd->add_option("--lambda", tf.lambda, "regularization strength")->capture_default_str();
    cmd->add_option("--k-size", tf.k_size, "parallel revisions |K| per query")
        ->capture_default_str();
    cmd->add_option("--lr", tf.lr, "learning rate")->capture_default_str();
    cmd->add_option("--batch", tf.batch, "queries per optimizer step")->capture_default_str();
    cmd->add_option("--budget", tf.budget, "revision budget; epochs = budget/|K|")
        ->capture_default_str();
    cmd->add_option("--width", tf.width, "encoder width")->capture_default_str();
    cmd->add_option("--layers", tf.layers, "encoder layers")->capture_default_str();
    cmd->add_option("--heads", tf.heads, "attention heads")->capture_default_str();
    cmd->add_option("--selection-depth", tf.selection_depth,
                    "checkpoint selection depth; -1 = mean over A")
        ->capture_default_str();
  };
  auto* train_cmd = app.add_subcommand("train", "train the query reformulator");
  add_train_flags(train_cmd);
  train_cmd->add_option("--variant", tf.variant, "standard|no_reg|no_par")
      ->capture_default_str();

  std::string ev_run, ev_qrels;
  int ev_cutoff = 10;
  bool ev_graded = false;
  auto* evaluate = app.add_subcommand("evaluate", "score a run file against qrels");
  evaluate->add_option("--run", ev_run, "run file");
  evaluate->add_option("--qrels", ev_qrels, "relevance judgments");
  evaluate->add_option("--cutoff", ev_cutoff)->capture_default_str();
  evaluate->add_flag("--graded-recall", ev_graded, "recall counts grade >= 2 only");

  std::string sw_ckpt, sw_corpus, sw_queries, sw_qrels, sw_depths = "0-5";
  int sw_top_n = 100;
  bool sw_graded = false;
  auto* sweep = app.add_subcommand("sweep", "per-depth metric and robustness tables");
  sweep->add_option("--checkpoint", sw_ckpt, "trained checkpoint");
  sweep->add_option("--corpus", sw_corpus, "corpus vectors file");
  sweep->add_option("--queries", sw_queries, "query vectors file");
  sweep->add_option("--qrels", sw_qrels, "relevance judgments");
  sweep->add_option("--depths", sw_depths)->capture_default_str();
  sweep->add_option("--top-n", sw_top_n)->capture_default_str();
  sweep->add_flag("--graded-recall", sw_graded);

  int ab_top_n = 100;
  auto* ablate = app.add_subcommand("ablate", "train all variants under one seed and compare");
  add_train_flags(ablate);
  ablate->add_option("--top-n", ab_top_n)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gf.log_level == "quiet")
    g_log_level = 0;
  else if (gf.log_level == "info")
    g_log_level = 1;
  else if (gf.log_level == "debug")
    g_log_level = 2;
  else {
    std::cerr << "usage error: --log-level must be quiet, info, or debug\n";
    return kExitUsage;
  }

  try {
    apply_config_overrides(
        gf.config,
        {{"output_dir", &gf.output_dir},
         {"variant", &tf.variant},
         {"depths", &tf.depths},
         {"kind", &sf.kind}},
        {{"lambda", &tf.lambda}, {"lr", &tf.lr}, {"ambiguity", &sf.ambiguity},
         {"noise", &sf.noise}},
        {{"k_size", &tf.k_size}, {"batch", &tf.batch}, {"budget", &tf.budget},
         {"width", &tf.width}, {"topics", &sf.topics},
         {"docs_per_topic", &sf.docs_per_topic}});

    if (synth->parsed()) return cmd_synth_gen(gf, sf);
    if (build_index->parsed()) return cmd_build_index(gf, bi_corpus);
    if (search_cmd->parsed()) return cmd_search(gf, se_index, se_queries, se_top_n, se_tag);
    if (train_cmd->parsed()) return cmd_train(gf, tf);
    if (evaluate->parsed()) return cmd_evaluate(gf, ev_run, ev_qrels, ev_cutoff, ev_graded);
    if (sweep->parsed())
      return cmd_sweep(gf, sw_ckpt, sw_corpus, sw_queries, sw_qrels, sw_depths, sw_top_n,
                       sw_graded);
    if (ablate->parsed()) return cmd_ablate(gf, tf, ab_top_n);
    std::cerr << "usage error: no subcommand given\n";
    return kExitUsage;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const lol::contract_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
