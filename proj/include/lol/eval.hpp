#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lol/core.hpp"
#include "lol/index.hpp"
#include "lol/reformulator.hpp"

namespace lol {

struct MetricResult {
  std::string name;
  int cutoff = 0;
  std::map<std::string, double> per_query;
  double mean = 0.0;
  int excluded = 0;  // queries with no qualifying relevant docs
};

struct RobustnessReport {
  int n_improved = 0;
  int n_degraded = 0;
  int n_total = 0;
  double ri = 0.0;
  std::map<std::string, double> per_query_delta;
};

namespace detail {

inline void finish(MetricResult& r) {
  double s = 0.0;
  for (const auto& [q, v] : r.per_query) s += v;
  r.mean = r.per_query.empty() ? 0.0 : s / static_cast<double>(r.per_query.size());
}

}  // namespace detail

inline MetricResult mrr_at_k(const std::vector<RankedList>& runs,
                             const RelevanceJudgments& judgments, int cutoff = 10,
                             int threshold = 1) {
  MetricResult r;
  r.name = "MRR";
  r.cutoff = cutoff;
  for (const auto& run : runs) {
    if (judgments.relevant_docs(run.query_id, threshold).empty()) {
      ++r.excluded;
      continue;
    }
    double v = 0.0;
    const int n = std::min<int>(cutoff, static_cast<int>(run.entries.size()));
    for (int i = 0; i < n; ++i)
      if (judgments.grade(run.query_id, run.entries[static_cast<size_t>(i)].doc_id) >= threshold) {
        v = 1.0 / static_cast<double>(i + 1);
        break;
      }
    r.per_query[run.query_id] = v;
  }
  detail::finish(r);
  return r;
}

// DCG gain 2^grade - 1, discount log2(rank + 1); ideal DCG over all judged docs.
inline MetricResult ndcg_at_k(const std::vector<RankedList>& runs,
                              const RelevanceJudgments& judgments, int cutoff = 10) {
  MetricResult r;
  r.name = "NDCG";
  r.cutoff = cutoff;
  for (const auto& run : runs) {
    std::vector<int> judged_grades;
    auto it = judgments.all().find(run.query_id);
    if (it != judgments.all().end())
      for (const auto& [did, g] : it->second)
        if (g > 0) judged_grades.push_back(g);
    if (judged_grades.empty()) {
      ++r.excluded;
      continue;
    }
    std::sort(judged_grades.rbegin(), judged_grades.rend());
    double ideal = 0.0;
    for (size_t i = 0; i < judged_grades.size() && static_cast<int>(i) < cutoff; ++i)
      ideal += (std::pow(2.0, judged_grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    double dcg = 0.0;
    const int n = std::min<int>(cutoff, static_cast<int>(run.entries.size()));
    for (int i = 0; i < n; ++i) {
      const int g = judgments.grade(run.query_id, run.entries[static_cast<size_t>(i)].doc_id);
      dcg += (std::pow(2.0, g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    r.per_query[run.query_id] = dcg / ideal;
  }
  detail::finish(r);
  return r;
}

// graded_mode treats grade 1 as irrelevant (threshold 2)
inline MetricResult recall_at_k(const std::vector<RankedList>& runs,
                                const RelevanceJudgments& judgments, int cutoff = 1000,
                                bool graded_mode = false) {
  const int threshold = graded_mode ? 2 : 1;
  MetricResult r;
  r.name = "Recall";
  r.cutoff = cutoff;
  for (const auto& run : runs) {
    const auto relevant = judgments.relevant_docs(run.query_id, threshold);
    if (relevant.empty()) {
      ++r.excluded;
      continue;
    }
    int hit = 0;
    const int n = std::min<int>(cutoff, static_cast<int>(run.entries.size()));
    for (int i = 0; i < n; ++i)
      if (judgments.grade(run.query_id, run.entries[static_cast<size_t>(i)].doc_id) >= threshold)
        ++hit;
    r.per_query[run.query_id] = static_cast<double>(hit) / static_cast<double>(relevant.size());
  }
  detail::finish(r);
  return r;
}

// RI = (N+ - N-)/|Q|; ties count to neither side.
inline RobustnessReport robustness_index(const std::map<std::string, double>& candidate,
                                         const std::map<std::string, double>& reference) {
  if (candidate.size() != reference.size())
    throw contract_error("robustness_index: query sets differ in size");
  RobustnessReport rep;
  for (const auto& [qid, c] : candidate) {
    auto it = reference.find(qid);
    if (it == reference.end())
      throw contract_error("robustness_index: query missing from reference: " + qid);
    const double delta = c - it->second;
    rep.per_query_delta[qid] = delta;
    if (delta > 0.0) ++rep.n_improved;
    if (delta < 0.0) ++rep.n_degraded;
  }
  rep.n_total = static_cast<int>(candidate.size());
  rep.ri = rep.n_total == 0
               ? 0.0
               : static_cast<double>(rep.n_improved - rep.n_degraded) / rep.n_total;
  return rep;
}

namespace detail {

// regularized incomplete beta via Lentz continued fraction (NR style)
inline double betacf(double a, double b, double x) {
  const int max_iter = 300;
  const double eps = 3e-16, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero difference variance; p undefined
};

inline TTestResult paired_t_test(const std::map<std::string, double>& a,
                                 const std::map<std::string, double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw contract_error("paired_t_test: need matching samples, n >= 2");
  std::vector<double> diff;
  diff.reserve(a.size());
  for (const auto& [qid, va] : a) {
    auto it = b.find(qid);
    if (it == b.end()) throw contract_error("paired_t_test: query sets differ: " + qid);
    diff.push_back(va - it->second);
  }
  const double n = static_cast<double>(diff.size());
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  var /= (n - 1.0);
  TTestResult res;
  if (var == 0.0) {
    res.degenerate = true;
    return res;
  }
  res.t = mean / std::sqrt(var / n);
  const double nu = n - 1.0;
  res.p = detail::incomplete_beta(nu / 2.0, 0.5, nu / (nu + res.t * res.t));
  return res;
}

struct DepthSweepRow {
  int depth = 0;
  MetricResult mrr;
  MetricResult ndcg;
  MetricResult recall;
  RobustnessReport ri_vs_base;
  RobustnessReport ri_vs_prev;  // undefined at the smallest depth
  bool has_prev = false;
};

// Reformulate every query at each depth in A, run the second pass, and
// report metrics plus RI against the base run and the previous depth.
inline std::vector<DepthSweepRow> depth_sweep(const ReformulatorParams& params,
                                              const std::vector<Query>& queries,
                                              const DocumentMatrix& matrix,
                                              const std::vector<RankedList>& first_pass,
                                              const RelevanceJudgments& judgments,
                                              const std::vector<int>& depths, size_t top_n,
                                              bool graded_recall = false) {
  std::map<std::string, const RankedList*> run_by_qid;
  for (const auto& r : first_pass) run_by_qid[r.query_id] = &r;
  std::vector<Document> feedback_docs;
  feedback_docs.reserve(matrix.size());
  for (size_t i = 0; i < matrix.size(); ++i)
    feedback_docs.push_back({matrix.doc_ids()[i], {}, matrix.row(i)});
  const auto by_id = corpus_by_id(feedback_docs);

  MetricResult base_mrr = mrr_at_k(first_pass, judgments);
  std::vector<DepthSweepRow> rows;
  for (int k : depths) {
    std::vector<RankedList> second;
    second.reserve(queries.size());
    for (const auto& q : queries) {
      auto it = run_by_qid.find(q.query_id);
      if (it == run_by_qid.end())
        throw contract_error("depth_sweep: no first-pass run for query " + q.query_id);
      const FeedbackSet fs = take_feedback(*it->second, k, by_id);
      const RevisedQuery rq = reformulate(params, q, fs);
      second.push_back(search(matrix, rq.vector, top_n, q.query_id, "sweep"));
    }
    DepthSweepRow row;
    row.depth = k;
    row.mrr = mrr_at_k(second, judgments);
    row.ndcg = ndcg_at_k(second, judgments);
    row.recall = recall_at_k(second, judgments, static_cast<int>(top_n), graded_recall);
    row.ri_vs_base = robustness_index(row.mrr.per_query, base_mrr.per_query);
    rows.push_back(row);
  }
  for (size_t i = 1; i < rows.size(); ++i) {
    rows[i].ri_vs_prev = robustness_index(rows[i].mrr.per_query, rows[i - 1].mrr.per_query);
    rows[i].has_prev = true;
  }
  if (!rows.empty()) rows[0].has_prev = false;
  return rows;
}

}  // namespace lol
