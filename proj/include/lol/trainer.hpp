#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lol/core.hpp"
#include "lol/eval.hpp"
#include "lol/index.hpp"
#include "lol/loss.hpp"
#include "lol/reformulator.hpp"

namespace lol {

enum class Variant { standard, no_reg, no_par };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::no_reg: return "no_reg";
    case Variant::no_par: return "no_par";
  }
  return "?";
}

struct TrainConfig {
  std::vector<int> depth_set_A = {0, 1, 2, 3, 4, 5};
  int k_size = 2;                // |K|, parallel revisions per query
  double lambda = 1.0;
  double learning_rate = 1e-4;
  int batch_queries = 8;
  int revision_budget = 12;      // epochs = budget / |K|
  uint64_t seed = 0;
  Variant variant = Variant::standard;
  int selection_depth = -1;      // -1: mean dev MRR@10 over all depths in A
  int negative_pool_cap = 200;   // per-query mined-negative cap
  size_t eval_top_n = 100;       // second-pass cutoff for dev evaluation
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8, weight_decay = 0.01;
  int model_width = 32, model_layers = 1, model_heads = 2, model_ffn_mult = 2;

  void validate() const {
    if (depth_set_A.empty()) throw contract_error("train config: empty depth set A");
    if (k_size < 1 || static_cast<size_t>(k_size) > depth_set_A.size())
      throw contract_error("train config: |K| must be in [1, |A|]");
    if (lambda < 0.0) throw contract_error("train config: negative lambda");
    if (variant == Variant::no_par && k_size != 1)
      throw contract_error("train config: variant no_par requires |K| = 1");
    if ((variant == Variant::no_reg || variant == Variant::no_par) && lambda != 0.0)
      throw contract_error("train config: variant " + variant_name(variant) +
                           " requires lambda = 0");
    if (revision_budget < k_size) throw contract_error("train config: budget below |K|");
  }

  std::string fingerprint() const {
    std::ostringstream ss;
    ss << variant_name(variant) << " K=" << k_size << " lambda=" << lambda
       << " lr=" << learning_rate << " batch=" << batch_queries << " budget=" << revision_budget
       << " seed=" << seed << " A=";
    for (int a : depth_set_A) ss << a << ',';
    return ss.str();
  }
};

struct Checkpoint {
  ReformulatorParams params;
  int epoch = -1;
  double dev_mrr_at_10 = -1.0;
  std::string config_fingerprint;
};

// Uniform size-subset of A without replacement, returned sorted.
inline std::vector<int> sample_depths(const std::vector<int>& A, int size, std::mt19937_64& rng) {
  if (size < 0 || static_cast<size_t>(size) > A.size())
    throw contract_error("sample_depths: size exceeds |A|");
  std::vector<int> pool = A;
  for (int i = 0; i < size; ++i) {
    std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<size_t>(size));
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Union of top-ranked ids across retriever runs, minus judged-relevant ids,
// ordered by (best rank, doc_id) and truncated to pool_cap.
inline std::vector<std::string> mine_negatives(const std::string& query_id,
                                               const std::vector<const RankedList*>& retrievers,
                                               const RelevanceJudgments& judgments,
                                               size_t pool_cap) {
  std::set<std::string> relevant;
  for (const auto& did : judgments.relevant_docs(query_id, 1)) relevant.insert(did);
  std::map<std::string, size_t> best_rank;
  for (const RankedList* run : retrievers) {
    if (run->query_id != query_id)
      throw contract_error("mine_negatives: run belongs to query " + run->query_id);
    for (size_t r = 0; r < run->entries.size(); ++r) {
      const auto& did = run->entries[r].doc_id;
      if (relevant.count(did)) continue;
      auto [it, fresh] = best_rank.emplace(did, r);
      if (!fresh) it->second = std::min(it->second, r);
    }
  }
  std::vector<std::pair<size_t, std::string>> order;
  order.reserve(best_rank.size());
  for (const auto& [did, r] : best_rank) order.emplace_back(r, did);
  std::sort(order.begin(), order.end());
  if (order.size() > pool_cap) order.resize(pool_cap);
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto& [r, did] : order) out.push_back(std::move(did));
  return out;
}

struct AdamWState {
  ParamStore m, v;
  long step = 0;
};

// Decoupled weight decay adaptive-moment update.
inline void adamw_update(ReformulatorParams& params, const ParamStore& grads, AdamWState& state,
                         double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                         double weight_decay = 0.01) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.tensors) {
    auto git = grads.find(name);
    if (git == grads.end()) throw contract_error("adamw_update: missing gradient for " + name);
    const Eigen::MatrixXd& g = git->second;
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw contract_error("adamw_update: gradient shape mismatch for " + name);
    auto [mit, mf] = state.m.emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    auto [vit, vf] = state.v.emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    mit->second = beta1 * mit->second + (1.0 - beta1) * g;
    vit->second = beta2 * vit->second + (1.0 - beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd mhat = mit->second / bc1;
    const Eigen::MatrixXd vhat = vit->second / bc2;
    p -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    p -= lr * weight_decay * p;
  }
}

// Frozen per-query training material: one positive, the shared document
// pool, and the pool indices that act as negatives for each query.
struct TrainingPool {
  std::vector<std::string> ids;
  std::vector<VectorRepr> vectors;
  std::map<std::string, size_t> index;

  struct PerQuery {
    std::string positive_id;
    size_t positive_idx = 0;
    std::vector<size_t> negative_idx;  // all pool docs except the query's relevants
  };
  std::map<std::string, PerQuery> per_query;
  std::vector<std::string> skipped;  // queries with no usable positive or no negatives
};

inline TrainingPool build_training_pool(const std::vector<Query>& queries,
                                        const std::map<std::string, const RankedList*>& first_pass,
                                        const RelevanceJudgments& judgments,
                                        const std::unordered_map<std::string, const Document*>& corpus,
                                        size_t pool_cap_per_query) {
  TrainingPool pool;
  auto intern = [&pool, &corpus](const std::string& did) -> std::optional<size_t> {
    auto cit = corpus.find(did);
    if (cit == corpus.end()) return std::nullopt;
    auto [it, fresh] = pool.index.emplace(did, pool.ids.size());
    if (fresh) {
      pool.ids.push_back(did);
      pool.vectors.push_back(cit->second->vector);
    }
    return it->second;
  };

  struct Mined {
    std::string positive;
    std::vector<std::string> negatives;
  };
  std::map<std::string, Mined> mined;
  for (const auto& q : queries) {
    auto rit = first_pass.find(q.query_id);
    if (rit == first_pass.end()) throw contract_error("no first-pass run for " + q.query_id);
    auto relevants = judgments.relevant_docs(q.query_id, 1);
    std::sort(relevants.begin(), relevants.end());
    std::string positive;
    for (const auto& did : relevants)
      if (corpus.count(did)) {
        positive = did;  // lowest doc_id relevant present in the corpus
        break;
      }
    auto negatives = mine_negatives(q.query_id, {rit->second}, judgments, pool_cap_per_query);
    if (positive.empty() || negatives.empty()) {
      pool.skipped.push_back(q.query_id);
      continue;
    }
    mined[q.query_id] = {positive, std::move(negatives)};
  }
  for (const auto& [qid, m] : mined) {
    (void)intern(m.positive);
    for (const auto& did : m.negatives) (void)intern(did);
  }
  for (const auto& q : queries) {
    auto mit = mined.find(q.query_id);
    if (mit == mined.end()) continue;
    TrainingPool::PerQuery pq;
    pq.positive_id = mit->second.positive;
    pq.positive_idx = pool.index.at(pq.positive_id);
    std::set<std::string> relevant;
    for (const auto& did : judgments.relevant_docs(q.query_id, 1)) relevant.insert(did);
    for (size_t i = 0; i < pool.ids.size(); ++i)
      if (!relevant.count(pool.ids[i])) pq.negative_idx.push_back(i);
    if (pq.negative_idx.empty()) {
      pool.skipped.push_back(q.query_id);
      continue;
    }
    pool.per_query[q.query_id] = std::move(pq);
  }
  return pool;
}

inline ReformulationLoss pool_reformulation_loss(const VectorRepr& q_vec,
                                                 const TrainingPool& pool,
                                                 const TrainingPool::PerQuery& pq) {
  std::vector<VectorRepr> negatives;
  negatives.reserve(pq.negative_idx.size());
  for (size_t i : pq.negative_idx) negatives.push_back(pool.vectors[i]);
  return reformulation_loss(q_vec, pool.vectors[pq.positive_idx], negatives);
}

struct StepStats {
  double mean_total = 0.0;
  double mean_rf = 0.0;
  double mean_cr = 0.0;
  size_t queries = 0;
  size_t revisions = 0;
};

// One optimizer step over a batch of original queries: sample K per query,
// revise at each depth, combine per-depth losses with the comparative term,
// backprop every tape, average gradients over the batch, AdamW update.
inline StepStats train_step(ReformulatorParams& params, const std::vector<const Query*>& batch,
                            const std::map<std::string, const RankedList*>& first_pass,
                            const std::unordered_map<std::string, const Document*>& corpus,
                            const TrainingPool& pool, const TrainConfig& config, AdamWState& opt,
                            std::mt19937_64& rng) {
  ParamStore grad_sum;
  for (const auto& [name, t] : params.tensors)
    grad_sum[name] = Eigen::MatrixXd::Zero(t.rows(), t.cols());

  StepStats stats;
  size_t effective = 0;
  for (const Query* q : batch) {
    const std::vector<int> K = sample_depths(config.depth_set_A, config.k_size, rng);
    auto pit = pool.per_query.find(q->query_id);
    if (pit == pool.per_query.end()) continue;  // skipped at mining time
    auto rit = first_pass.find(q->query_id);
    if (rit == first_pass.end()) throw contract_error("no first-pass run for " + q->query_id);

    std::map<int, RevisedQuery> revised;
    std::map<int, ReformulationLoss> per_depth;
    for (int k : K) {
      const FeedbackSet fs = take_feedback(*rit->second, k, corpus);
      RevisedQuery rq = reformulate(params, *q, fs, ForwardMode::training);
      ReformulationLoss l = pool_reformulation_loss(rq.vector, pool, pit->second);
      if (!std::isfinite(l.value))
        throw numeric_error("non-finite reformulation loss for query " + q->query_id +
                            " at depth " + std::to_string(k));
      per_depth.emplace(k, std::move(l));
      revised.emplace(k, std::move(rq));
    }
    std::map<int, double> values;
    for (const auto& [k, l] : per_depth) values[k] = l.value;
    const LossBreakdown breakdown = total_loss(values, config.lambda);

    const auto q_grads = loss_gradient(per_depth, config.lambda);
    for (const auto& [k, g] : q_grads) {
      GradientSet gs = reformulator_backward(revised.at(k), g);
      for (auto& [name, pg] : gs.params) grad_sum[name] += pg;
    }
    double rf_mean = 0.0;
    for (const auto& [k, v] : values) rf_mean += v;
    rf_mean /= static_cast<double>(values.size());
    stats.mean_total += breakdown.total;
    stats.mean_rf += rf_mean;
    stats.mean_cr += breakdown.comparative;
    stats.revisions += K.size();
    ++effective;
  }
  stats.queries = effective;
  if (effective == 0) return stats;
  const double inv = 1.0 / static_cast<double>(effective);
  for (auto& [name, g] : grad_sum) g *= inv;
  stats.mean_total *= inv;
  stats.mean_rf *= inv;
  stats.mean_cr *= inv;
  adamw_update(params, grad_sum, opt, config.learning_rate, config.beta1, config.beta2,
               config.adam_eps, config.weight_decay);
  return stats;
}

struct EpochRecord {
  int epoch = 0;
  std::map<int, double> dev_mrr_by_depth;
  double selection_metric = 0.0;
  double train_mean_rf = 0.0;
  double train_mean_cr = 0.0;
  double train_mean_total = 0.0;
  double probe_cr = 0.0;  // comparative term over all depths on a fixed probe set
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  std::vector<std::string> skipped_queries;
};

namespace detail {

inline std::map<std::string, const RankedList*> index_runs(const std::vector<RankedList>& runs) {
  std::map<std::string, const RankedList*> m;
  for (const auto& r : runs) m[r.query_id] = &r;
  return m;
}

}  // namespace detail

// Per-depth reformulation losses for fixed queries under the current params.
inline std::map<std::string, std::map<int, double>> per_query_depth_losses(
    const ReformulatorParams& params, const std::vector<const Query*>& queries,
    const std::map<std::string, const RankedList*>& first_pass,
    const std::unordered_map<std::string, const Document*>& corpus, const TrainingPool& pool,
    const std::vector<int>& depths) {
  std::map<std::string, std::map<int, double>> out;
  for (const Query* q : queries) {
    auto pit = pool.per_query.find(q->query_id);
    auto rit = first_pass.find(q->query_id);
    if (pit == pool.per_query.end() || rit == first_pass.end()) continue;
    for (int k : depths) {
      const FeedbackSet fs = take_feedback(*rit->second, k, corpus);
      const RevisedQuery rq = reformulate(params, *q, fs);
      out[q->query_id][k] = pool_reformulation_loss(rq.vector, pool, pit->second).value;
    }
  }
  return out;
}

// Fraction of (query, adjacent-depth) pairs where the deeper revision has the
// larger reformulation loss.
inline double ordering_violation_rate(
    const std::map<std::string, std::map<int, double>>& losses) {
  size_t pairs = 0, violations = 0;
  for (const auto& [qid, by_depth] : losses) {
    for (auto it = by_depth.begin(); it != by_depth.end(); ++it) {
      auto next = std::next(it);
      if (next == by_depth.end()) break;
      ++pairs;
      if (next->second > it->second) ++violations;
    }
  }
  return pairs == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(pairs);
}

// End-to-end LoL training. First-pass runs are computed once with the base
// query vectors and stay frozen; the best checkpoint by dev MRR@10 wins.
inline TrainResult train(const TrainConfig& config, const std::vector<Document>& corpus,
                         const std::vector<Query>& train_queries,
                         const RelevanceJudgments& train_qrels,
                         const std::vector<Query>& dev_queries,
                         const RelevanceJudgments& dev_qrels) {
  config.validate();
  const auto by_id = corpus_by_id(corpus);
  const DocumentMatrix matrix = DocumentMatrix::build(corpus);
  const int max_depth = *std::max_element(config.depth_set_A.begin(), config.depth_set_A.end());
  const size_t first_pass_len =
      std::min(matrix.size(), static_cast<size_t>(std::max(max_depth, 10)));

  std::vector<RankedList> train_runs, dev_runs;
  for (const auto& q : train_queries)
    train_runs.push_back(search(matrix, q.vector, first_pass_len, q.query_id, "base"));
  for (const auto& q : dev_queries)
    dev_runs.push_back(search(matrix, q.vector, first_pass_len, q.query_id, "base"));
  const auto train_run_by_qid = detail::index_runs(train_runs);
  const auto dev_run_by_qid = detail::index_runs(dev_runs);

  const TrainingPool pool =
      build_training_pool(train_queries, train_run_by_qid, train_qrels, by_id,
                          static_cast<size_t>(config.negative_pool_cap));

  ReformulatorParams params = [&] {
    ModelConfig mc;
    mc.kind = matrix.kind();
    mc.vec_dim = matrix.dim();
    mc.max_depth = max_depth;
    mc.width = config.model_width;
    mc.layers = config.model_layers;
    mc.heads = config.model_heads;
    mc.ffn_mult = config.model_ffn_mult;
    return init_params(mc, config.seed);
  }();

  // fixed probe set for comparable L_cr curves across epochs and variants
  std::vector<const Query*> probe;
  for (const auto& q : train_queries) {
    if (pool.per_query.count(q.query_id)) probe.push_back(&q);
    if (probe.size() >= 16) break;
  }

  AdamWState opt;
  TrainResult result;
  result.skipped_queries = pool.skipped;
  const int epochs = config.revision_budget / config.k_size;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::mt19937_64 rng(config.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch + 1)));
    EpochRecord rec;
    rec.epoch = epoch;
    size_t steps = 0;
    std::vector<const Query*> order;
    for (const auto& q : train_queries) order.push_back(&q);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_queries)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_queries));
      std::vector<const Query*> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(stop));
      const StepStats s =
          train_step(params, batch, train_run_by_qid, by_id, pool, config, opt, rng);
      if (s.queries == 0) continue;
      rec.train_mean_rf += s.mean_rf;
      rec.train_mean_cr += s.mean_cr;
      rec.train_mean_total += s.mean_total;
      ++steps;
    }
    if (steps > 0) {
      rec.train_mean_rf /= static_cast<double>(steps);
      rec.train_mean_cr /= static_cast<double>(steps);
      rec.train_mean_total /= static_cast<double>(steps);
    }

    const auto probe_losses = per_query_depth_losses(params, probe, train_run_by_qid, by_id, pool,
                                                     config.depth_set_A);
    double probe_cr = 0.0;
    size_t probe_n = 0;
    for (const auto& [qid, by_depth] : probe_losses)
      if (by_depth.size() >= 2) {
        probe_cr += comparative_regularization(by_depth);
        ++probe_n;
      }
    rec.probe_cr = probe_n == 0 ? 0.0 : probe_cr / static_cast<double>(probe_n);

    // dev MRR@10 at every depth in A with the current params
    double selection = 0.0;
    for (int k : config.depth_set_A) {
      std::vector<RankedList> second;
      for (const auto& q : dev_queries) {
        const FeedbackSet fs = take_feedback(*dev_run_by_qid.at(q.query_id), k, by_id);
        const RevisedQuery rq = reformulate(params, q, fs);
        second.push_back(search(matrix, rq.vector, config.eval_top_n, q.query_id, "dev"));
      }
      rec.dev_mrr_by_depth[k] = mrr_at_k(second, dev_qrels).mean;
    }
    if (config.selection_depth >= 0) {
      auto it = rec.dev_mrr_by_depth.find(config.selection_depth);
      if (it == rec.dev_mrr_by_depth.end())
        throw contract_error("selection depth not in depth set A");
      selection = it->second;
    } else {
      for (const auto& [k, v] : rec.dev_mrr_by_depth) selection += v;
      selection /= static_cast<double>(rec.dev_mrr_by_depth.size());
    }
    rec.selection_metric = selection;
    result.log.push_back(rec);

    if (selection > result.best.dev_mrr_at_10) {
      result.best.params = params;
      result.best.epoch = epoch;
      result.best.dev_mrr_at_10 = selection;
      result.best.config_fingerprint = config.fingerprint();
    }
  }
  if (result.best.epoch < 0) {
    result.best.params = params;
    result.best.epoch = 0;
    result.best.config_fingerprint = config.fingerprint();
  }
  return result;
}

}  // namespace lol
