#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "lol/core.hpp"

namespace lol {

// Read-only document matrix for exact brute-force retrieval.
class DocumentMatrix {
 public:
  static DocumentMatrix build(const std::vector<Document>& corpus) {
    if (corpus.empty()) throw contract_error("build_matrix: empty corpus");
    DocumentMatrix m;
    m.kind_ = corpus.front().vector.kind();
    m.dim_ = corpus.front().vector.dim();
    m.doc_ids_.reserve(corpus.size());
    for (const auto& d : corpus) {
      if (d.vector.kind() != m.kind_) throw contract_error("build_matrix: mixed vector kinds");
      if (d.vector.dim() != m.dim_) throw contract_error("build_matrix: mixed dimensions");
      m.doc_ids_.push_back(d.doc_id);
    }
    m.rows_.reserve(corpus.size());
    for (const auto& d : corpus) m.rows_.push_back(d.vector);
    return m;
  }

  VectorKind kind() const { return kind_; }
  int dim() const { return dim_; }
  size_t size() const { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }

  const VectorRepr& row(size_t i) const { return rows_[i]; }

  // all dot products against q, in row order; per-row dot keeps scores
  // bit-identical to scoring documents one at a time
  Eigen::VectorXd score_all(const VectorRepr& q) const {
    if (q.kind() != kind_) throw contract_error("search: query kind mismatch");
    if (q.dim() != dim_) throw contract_error("search: query dimension mismatch");
    Eigen::VectorXd s(static_cast<Eigen::Index>(rows_.size()));
    for (size_t i = 0; i < rows_.size(); ++i) s[static_cast<Eigen::Index>(i)] = dot(rows_[i], q);
    return s;
  }

 private:
  VectorKind kind_ = VectorKind::dense;
  int dim_ = 0;
  std::vector<std::string> doc_ids_;
  std::vector<VectorRepr> rows_;
};

// Exact top-n by dot product; ties broken by ascending doc_id.
inline RankedList search(const DocumentMatrix& matrix, const VectorRepr& q, size_t top_n,
                         const std::string& query_id = "", const std::string& tag = "bf") {
  if (top_n == 0) throw contract_error("search: top_n must be positive");
  const Eigen::VectorXd scores = matrix.score_all(q);
  std::vector<size_t> order(matrix.size());
  std::iota(order.begin(), order.end(), size_t{0});
  auto better = [&](size_t a, size_t b) {
    if (scores[static_cast<Eigen::Index>(a)] != scores[static_cast<Eigen::Index>(b)])
      return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
    return matrix.doc_ids()[a] < matrix.doc_ids()[b];
  };
  const size_t n = std::min(top_n, matrix.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    better);
  RankedList out;
  out.query_id = query_id;
  out.produced_by = tag;
  out.entries.reserve(n);
  for (size_t i = 0; i < n; ++i)
    out.entries.push_back({matrix.doc_ids()[order[i]], scores[static_cast<Eigen::Index>(order[i])]});
  return out;
}

inline std::vector<RankedList> batch_search(const DocumentMatrix& matrix,
                                            const std::vector<VectorRepr>& queries, size_t top_n,
                                            const std::vector<std::string>& query_ids = {},
                                            const std::string& tag = "bf") {
  std::vector<RankedList> out;
  out.reserve(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    const std::string qid = i < query_ids.size() ? query_ids[i] : "";
    out.push_back(search(matrix, queries[i], top_n, qid, tag));
  }
  return out;
}

}  // namespace lol
