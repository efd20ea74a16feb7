#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lol {

// Contract violations (bad arguments, mismatched shapes).
struct contract_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values produced inside a numeric pipeline.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File parsing and serialization problems.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class VectorKind { dense, sparse };

// A query/document representation. Dense vectors are fixed-dimension;
// sparse vectors map term ids to strictly positive weights over a
// vocabulary of size dim.
class VectorRepr {
 public:
  VectorRepr() : kind_(VectorKind::dense), dim_(0) {}

  static VectorRepr make_dense(Eigen::VectorXd values) {
    VectorRepr v;
    v.kind_ = VectorKind::dense;
    v.dim_ = static_cast<int>(values.size());
    v.dense_ = std::move(values);
    if (!v.dense_.allFinite()) throw contract_error("dense vector has non-finite entries");
    return v;
  }

  static VectorRepr make_sparse(int dim, std::map<int, double> entries) {
    VectorRepr v;
    v.kind_ = VectorKind::sparse;
    v.dim_ = dim;
    for (auto it = entries.begin(); it != entries.end();) {
      if (it->first < 0 || it->first >= dim)
        throw contract_error("sparse term id out of range: " + std::to_string(it->first));
      if (!std::isfinite(it->second)) throw contract_error("sparse weight not finite");
      if (it->second < 0.0) throw contract_error("sparse weight negative");
      if (it->second == 0.0)
        it = entries.erase(it);
      else
        ++it;
    }
    v.sparse_ = std::move(entries);
    return v;
  }

  // Densify a sparse vector (dense vectors pass through).
  Eigen::VectorXd to_dense() const {
    if (kind_ == VectorKind::dense) return dense_;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    for (const auto& [t, w] : sparse_) out[t] = w;
    return out;
  }

  VectorKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Eigen::VectorXd& dense_values() const { return dense_; }
  const std::map<int, double>& sparse_entries() const { return sparse_; }

  double norm() const {
    if (kind_ == VectorKind::dense) return dense_.norm();
    double s = 0.0;
    for (const auto& [t, w] : sparse_) s += w * w;
    return std::sqrt(s);
  }

  bool operator==(const VectorRepr& o) const {
    if (kind_ != o.kind_ || dim_ != o.dim_) return false;
    if (kind_ == VectorKind::dense) return dense_ == o.dense_;
    return sparse_ == o.sparse_;
  }

 private:
  VectorKind kind_;
  int dim_;
  Eigen::VectorXd dense_;
  std::map<int, double> sparse_;
};

inline double dot(const VectorRepr& a, const VectorRepr& b) {
  if (a.kind() != b.kind()) throw contract_error("dot: vector kind mismatch");
  if (a.dim() != b.dim()) throw contract_error("dot: dimension mismatch");
  if (a.kind() == VectorKind::dense) return a.dense_values().dot(b.dense_values());
  const auto& small = a.sparse_entries().size() <= b.sparse_entries().size()
                          ? a.sparse_entries()
                          : b.sparse_entries();
  const auto& big = a.sparse_entries().size() <= b.sparse_entries().size()
                        ? b.sparse_entries()
                        : a.sparse_entries();
  double s = 0.0;
  for (const auto& [t, w] : small) {
    auto it = big.find(t);
    if (it != big.end()) s += w * it->second;
  }
  return s;
}

inline VectorRepr l2_normalize(const VectorRepr& v) {
  const double n = v.norm();
  if (n == 0.0) throw contract_error("l2_normalize: zero vector");
  if (v.kind() == VectorKind::dense) return VectorRepr::make_dense(v.dense_values() / n);
  std::map<int, double> entries = v.sparse_entries();
  for (auto& [t, w] : entries) w /= n;
  return VectorRepr::make_sparse(v.dim(), std::move(entries));
}

// alpha*a + beta*b, same kind and dim
inline VectorRepr axpy(double alpha, const VectorRepr& a, double beta, const VectorRepr& b) {
  if (a.kind() != b.kind()) throw contract_error("axpy: vector kind mismatch");
  if (a.dim() != b.dim()) throw contract_error("axpy: dimension mismatch");
  if (a.kind() == VectorKind::dense)
    return VectorRepr::make_dense(alpha * a.dense_values() + beta * b.dense_values());
  std::map<int, double> out;
  for (const auto& [t, w] : a.sparse_entries()) out[t] += alpha * w;
  for (const auto& [t, w] : b.sparse_entries()) out[t] += beta * w;
  for (auto it = out.begin(); it != out.end();) {
    if (it->second <= 0.0)
      it = out.erase(it);
    else
      ++it;
  }
  return VectorRepr::make_sparse(a.dim(), std::move(out));
}

using TokenSeq = std::vector<int>;

struct Document {
  std::string doc_id;
  TokenSeq text;
  VectorRepr vector;
};

struct Query {
  std::string query_id;
  TokenSeq text;
  VectorRepr vector;
};

struct RankedEntry {
  std::string doc_id;
  double score;
  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
  std::string produced_by;
};

// Prefix of a ranked list used as pseudo-relevant feedback.
struct FeedbackSet {
  int depth_k = 0;
  std::vector<const Document*> docs;
};

inline FeedbackSet take_feedback(const RankedList& run, int k,
                                 const std::unordered_map<std::string, const Document*>& by_id) {
  if (k < 0) throw contract_error("feedback depth must be non-negative");
  if (static_cast<size_t>(k) > run.entries.size())
    throw contract_error("feedback depth exceeds ranked list length");
  FeedbackSet fs;
  fs.depth_k = k;
  for (int i = 0; i < k; ++i) {
    auto it = by_id.find(run.entries[i].doc_id);
    if (it == by_id.end())
      throw contract_error("feedback doc not in corpus: " + run.entries[i].doc_id);
    fs.docs.push_back(it->second);
  }
  return fs;
}

// qrels: absent pairs mean grade 0.
class RelevanceJudgments {
 public:
  void set(const std::string& qid, const std::string& did, int grade) {
    if (grade < 0) throw contract_error("negative relevance grade");
    grades_[qid][did] = grade;
  }

  int grade(const std::string& qid, const std::string& did) const {
    auto q = grades_.find(qid);
    if (q == grades_.end()) return 0;
    auto d = q->second.find(did);
    return d == q->second.end() ? 0 : d->second;
  }

  // judged docs for one query, grade >= threshold
  std::vector<std::string> relevant_docs(const std::string& qid, int threshold = 1) const {
    std::vector<std::string> out;
    auto q = grades_.find(qid);
    if (q == grades_.end()) return out;
    for (const auto& [did, g] : q->second)
      if (g >= threshold) out.push_back(did);
    return out;
  }

  const std::map<std::string, std::map<std::string, int>>& all() const { return grades_; }

 private:
  std::map<std::string, std::map<std::string, int>> grades_;
};

inline std::unordered_map<std::string, const Document*> corpus_by_id(
    const std::vector<Document>& corpus) {
  std::unordered_map<std::string, const Document*> m;
  m.reserve(corpus.size());
  for (const auto& d : corpus) {
    if (!m.emplace(d.doc_id, &d).second)
      throw contract_error("duplicate doc_id in corpus: " + d.doc_id);
  }
  return m;
}

}  // namespace lol
