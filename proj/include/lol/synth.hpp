#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "lol/core.hpp"

namespace lol {

struct SynthConfig {
  int n_topics = 10;
  int docs_per_topic = 20;       // grade-2 docs per topic
  int n_distractors = 50;        // unjudged corpus noise, drawn from random prototypes
  int queries_per_topic = 2;
  int vocab_size = 500;          // sparse mode
  int dense_dim = 16;            // dense mode
  double ambiguity_rate = 0.0;   // fraction of queries mixing two topic prototypes
  double noise_sigma = 0.1;
  uint64_t seed = 0;
  VectorKind kind = VectorKind::dense;
};

struct SynthData {
  std::vector<Document> corpus;
  std::vector<Query> queries;
  RelevanceJudgments judgments;
  std::map<std::string, int> topic_of_query;
  std::map<std::string, int> topic_of_doc;  // judged docs only
};

namespace detail {

inline std::string pad_id(const std::string& prefix, int i, int width = 5) {
  std::string s = std::to_string(i);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return prefix + s;
}

}  // namespace detail

// Each topic has a latent prototype; relevant docs are noisy copies of it,
// near-topic docs (grade 1) mix in a neighboring topic, distractors are
// unjudged noise. Ambiguous queries mix two prototypes so the first-pass
// top-k blends on-topic and off-topic documents.
inline SynthData generate(const SynthConfig& cfg) {
  if (cfg.n_topics <= 0 || cfg.docs_per_topic <= 0 || cfg.queries_per_topic <= 0 ||
      cfg.n_distractors < 0)
    throw contract_error("generate: counts must be positive");
  if (cfg.ambiguity_rate < 0.0 || cfg.ambiguity_rate > 1.0)
    throw contract_error("generate: ambiguity_rate outside [0,1]");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int shared_terms = std::max(2, cfg.vocab_size / 10);
  const int core_terms = (cfg.vocab_size - shared_terms) / cfg.n_topics;
  if (cfg.kind == VectorKind::sparse && core_terms < 3)
    throw contract_error("generate: vocabulary too small for topic count");
  if (cfg.kind == VectorKind::dense && cfg.dense_dim < 2)
    throw contract_error("generate: dense dimension too small");

  const int dim = cfg.kind == VectorKind::dense ? cfg.dense_dim : cfg.vocab_size;

  // topic prototypes
  std::vector<Eigen::VectorXd> proto(static_cast<size_t>(cfg.n_topics));
  for (int t = 0; t < cfg.n_topics; ++t) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(dim);
    if (cfg.kind == VectorKind::dense) {
      for (int j = 0; j < dim; ++j) p[j] = gauss(rng);
    } else {
      const int base = t * core_terms;
      for (int j = 0; j < core_terms; ++j) p[base + j] = 0.5 + unit(rng);
      // shared ambiguous terms live at the top of the vocabulary
      for (int j = 0; j < shared_terms; ++j)
        if (unit(rng) < 0.3) p[cfg.vocab_size - 1 - j] = 0.25 + 0.5 * unit(rng);
    }
    p.normalize();
    proto[static_cast<size_t>(t)] = p;
  }

  auto perturb = [&](const Eigen::VectorXd& base, double sigma) {
    Eigen::VectorXd v = base;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += sigma * gauss(rng);
    if (cfg.kind == VectorKind::sparse) v = v.cwiseMax(0.0);
    const double n = v.norm();
    if (n > 0.0) v /= n;
    return v;
  };

  auto to_repr = [&](const Eigen::VectorXd& v) {
    if (cfg.kind == VectorKind::dense) return VectorRepr::make_dense(v);
    std::map<int, double> e;
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (v[j] > 0.0) e[static_cast<int>(j)] = v[j];
    return VectorRepr::make_sparse(dim, std::move(e));
  };

  SynthData data;
  const int near_per_topic = std::max(1, cfg.docs_per_topic / 5);
  int doc_counter = 0;
  std::vector<std::vector<std::string>> topic_rel(static_cast<size_t>(cfg.n_topics));
  std::vector<std::vector<std::string>> topic_near(static_cast<size_t>(cfg.n_topics));

  for (int t = 0; t < cfg.n_topics; ++t) {
    for (int d = 0; d < cfg.docs_per_topic; ++d) {
      Document doc;
      doc.doc_id = detail::pad_id("d", doc_counter++);
      doc.text = {t};
      doc.vector = to_repr(perturb(proto[static_cast<size_t>(t)], cfg.noise_sigma));
      topic_rel[static_cast<size_t>(t)].push_back(doc.doc_id);
      data.topic_of_doc[doc.doc_id] = t;
      data.corpus.push_back(std::move(doc));
    }
    const int other = (t + 1) % cfg.n_topics;
    for (int d = 0; d < near_per_topic; ++d) {
      Document doc;
      doc.doc_id = detail::pad_id("d", doc_counter++);
      doc.text = {t, other};
      Eigen::VectorXd mix =
          0.6 * proto[static_cast<size_t>(t)] + 0.4 * proto[static_cast<size_t>(other)];
      mix.normalize();
      doc.vector = to_repr(perturb(mix, cfg.noise_sigma));
      topic_near[static_cast<size_t>(t)].push_back(doc.doc_id);
      data.topic_of_doc[doc.doc_id] = t;
      data.corpus.push_back(std::move(doc));
    }
  }
  std::uniform_int_distribution<int> pick_topic(0, cfg.n_topics - 1);
  for (int d = 0; d < cfg.n_distractors; ++d) {
    Document doc;
    doc.doc_id = detail::pad_id("d", doc_counter++);
    const int t = pick_topic(rng);
    doc.text = {t};
    doc.vector = to_repr(perturb(proto[static_cast<size_t>(t)], 4.0 * cfg.noise_sigma + 0.3));
    data.corpus.push_back(std::move(doc));
  }

  int query_counter = 0;
  for (int t = 0; t < cfg.n_topics; ++t) {
    for (int i = 0; i < cfg.queries_per_topic; ++i) {
      Query q;
      q.query_id = detail::pad_id("q", query_counter++);
      const bool ambiguous = unit(rng) < cfg.ambiguity_rate;
      Eigen::VectorXd base = proto[static_cast<size_t>(t)];
      if (ambiguous) {
        int other = pick_topic(rng);
        if (other == t) other = (t + 1) % cfg.n_topics;
        base = 0.5 * proto[static_cast<size_t>(t)] + 0.5 * proto[static_cast<size_t>(other)];
        base.normalize();
        q.text = {t, other};
      } else {
        q.text = {t};
      }
      q.vector = to_repr(perturb(base, cfg.noise_sigma * 0.5));
      data.topic_of_query[q.query_id] = t;
      for (const auto& did : topic_rel[static_cast<size_t>(t)])
        data.judgments.set(q.query_id, did, 2);
      for (const auto& did : topic_near[static_cast<size_t>(t)])
        data.judgments.set(q.query_id, did, 1);
      data.queries.push_back(std::move(q));
    }
  }
  return data;
}

// Mean over queries of |relevant docs in the top-k prefix| / k, per depth.
// Depth 0 has no defined value and is omitted.
inline std::map<int, double> drift_profile(const std::vector<RankedList>& runs,
                                           const RelevanceJudgments& judgments,
                                           const std::vector<int>& depths, int threshold = 1) {
  std::map<int, double> out;
  for (int k : depths) {
    if (k <= 0) continue;
    double sum = 0.0;
    for (const auto& run : runs) {
      if (static_cast<size_t>(k) > run.entries.size())
        throw contract_error("drift_profile: run shorter than depth " + std::to_string(k));
      int rel = 0;
      for (int i = 0; i < k; ++i)
        if (judgments.grade(run.query_id, run.entries[static_cast<size_t>(i)].doc_id) >= threshold)
          ++rel;
      sum += static_cast<double>(rel) / static_cast<double>(k);
    }
    out[k] = runs.empty() ? 0.0 : sum / static_cast<double>(runs.size());
  }
  return out;
}

}  // namespace lol
