#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lol/core.hpp"
#include "lol/reformulator.hpp"

namespace lol {

// Fixed whitespace + lowercase tokenization over a growable vocabulary.
class Tokenizer {
 public:
  int add(const std::string& word) {
    auto [it, fresh] = ids_.emplace(word, static_cast<int>(words_.size()));
    if (fresh) words_.push_back(word);
    return it->second;
  }

  TokenSeq encode(const std::string& line) {
    TokenSeq seq;
    std::istringstream ss(line);
    std::string w;
    while (ss >> w) {
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      seq.push_back(add(w));
    }
    return seq;
  }

  size_t vocab_size() const { return words_.size(); }
  const std::string& word(int id) const { return words_[static_cast<size_t>(id)]; }

 private:
  std::map<std::string, int> ids_;
  std::vector<std::string> words_;
};

namespace detail {

inline std::string fmt_double(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

[[noreturn]] inline void parse_fail(const std::string& path, int line, const std::string& msg) {
  throw io_error(path + ":" + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& s, const std::string& path, int line,
                           const std::string& field) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) parse_fail(path, line, "malformed " + field + " field: '" + s + "'");
    return v;
  } catch (const io_error&) {
    throw;
  } catch (...) {
    parse_fail(path, line, "malformed " + field + " field: '" + s + "'");
  }
}

inline int parse_int(const std::string& s, const std::string& path, int line,
                     const std::string& field) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) parse_fail(path, line, "malformed " + field + " field: '" + s + "'");
    return v;
  } catch (const io_error&) {
    throw;
  } catch (...) {
    parse_fail(path, line, "malformed " + field + " field: '" + s + "'");
  }
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open file for reading: " + path);
  return f;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error("cannot open file for writing: " + path);
  return f;
}

}  // namespace detail

// corpus TSV: doc_id<TAB>text. Vectors are attached separately.
inline std::vector<Document> read_corpus(const std::string& path, Tokenizer& tokenizer) {
  auto f = detail::open_in(path);
  std::vector<Document> out;
  std::set<std::string> seen;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) detail::parse_fail(path, ln, "expected doc_id<TAB>text");
    Document d;
    d.doc_id = line.substr(0, tab);
    if (d.doc_id.empty()) detail::parse_fail(path, ln, "empty doc_id");
    if (!seen.insert(d.doc_id).second)
      detail::parse_fail(path, ln, "duplicate doc_id: " + d.doc_id);
    d.text = tokenizer.encode(line.substr(tab + 1));
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Query> read_queries(const std::string& path, Tokenizer& tokenizer) {
  auto f = detail::open_in(path);
  std::vector<Query> out;
  std::set<std::string> seen;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) detail::parse_fail(path, ln, "expected query_id<TAB>text");
    Query q;
    q.query_id = line.substr(0, tab);
    if (q.query_id.empty()) detail::parse_fail(path, ln, "empty query_id");
    if (!seen.insert(q.query_id).second)
      detail::parse_fail(path, ln, "duplicate query_id: " + q.query_id);
    q.text = tokenizer.encode(line.substr(tab + 1));
    out.push_back(std::move(q));
  }
  return out;
}

// qrels: query_id 0 doc_id grade, space-delimited
inline RelevanceJudgments read_qrels(const std::string& path) {
  auto f = detail::open_in(path);
  RelevanceJudgments j;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, iter, did, grade_s, extra;
    if (!(ss >> qid >> iter >> did >> grade_s))
      detail::parse_fail(path, ln, "expected 'query_id 0 doc_id grade'");
    if (ss >> extra) detail::parse_fail(path, ln, "trailing field: '" + extra + "'");
    const int grade = detail::parse_int(grade_s, path, ln, "grade");
    if (grade < 0) detail::parse_fail(path, ln, "negative grade");
    j.set(qid, did, grade);
  }
  return j;
}

// run: query_id Q0 doc_id rank score tag, space-delimited, rank 1-based
inline std::vector<RankedList> read_run(const std::string& path) {
  auto f = detail::open_in(path);
  std::map<std::string, RankedList> by_qid;
  std::vector<std::string> order;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, q0, did, rank_s, score_s, tag, extra;
    if (!(ss >> qid >> q0 >> did >> rank_s >> score_s >> tag))
      detail::parse_fail(path, ln, "expected 'query_id Q0 doc_id rank score tag'");
    if (ss >> extra) detail::parse_fail(path, ln, "trailing field: '" + extra + "'");
    if (q0 != "Q0") detail::parse_fail(path, ln, "second field must be Q0, got '" + q0 + "'");
    const int rank = detail::parse_int(rank_s, path, ln, "rank");
    const double score = detail::parse_double(score_s, path, ln, "score");
    auto [it, fresh] = by_qid.try_emplace(qid);
    if (fresh) {
      it->second.query_id = qid;
      it->second.produced_by = tag;
      order.push_back(qid);
    }
    if (rank != static_cast<int>(it->second.entries.size()) + 1)
      detail::parse_fail(path, ln,
                         "rank field out of sequence: expected " +
                             std::to_string(it->second.entries.size() + 1) + ", got " + rank_s);
    for (const auto& e : it->second.entries)
      if (e.doc_id == did) detail::parse_fail(path, ln, "duplicate doc_id in run: " + did);
    it->second.entries.push_back({did, score});
  }
  std::vector<RankedList> out;
  out.reserve(order.size());
  for (const auto& qid : order) out.push_back(std::move(by_qid[qid]));
  return out;
}

inline void write_run(const std::vector<RankedList>& runs, const std::string& tag,
                      const std::string& path) {
  auto f = detail::open_out(path);
  for (const auto& r : runs)
    for (size_t i = 0; i < r.entries.size(); ++i)
      f << r.query_id << " Q0 " << r.entries[i].doc_id << ' ' << (i + 1) << ' '
        << detail::fmt_double(r.entries[i].score, "%.6f") << ' ' << tag << '\n';
  if (!f) throw io_error("write failed: " + path);
}

// vectors file: header 'vectors <kind> <dim> <count>', one id + row per line;
// sparse rows are term:weight pairs
inline void write_vectors(const std::vector<std::string>& ids,
                          const std::vector<VectorRepr>& vectors, const std::string& path) {
  if (ids.size() != vectors.size()) throw contract_error("write_vectors: id/vector count mismatch");
  auto f = detail::open_out(path);
  const VectorKind kind = vectors.empty() ? VectorKind::dense : vectors.front().kind();
  const int dim = vectors.empty() ? 0 : vectors.front().dim();
  f << "vectors " << (kind == VectorKind::dense ? "dense" : "sparse") << ' ' << dim << ' '
    << ids.size() << '\n';
  for (size_t i = 0; i < ids.size(); ++i) {
    if (vectors[i].kind() != kind || vectors[i].dim() != dim)
      throw contract_error("write_vectors: mixed kinds or dims");
    f << ids[i];
    if (kind == VectorKind::dense) {
      const auto& v = vectors[i].dense_values();
      for (Eigen::Index j = 0; j < v.size(); ++j) f << ' ' << detail::fmt_double(v[j]);
    } else {
      for (const auto& [t, w] : vectors[i].sparse_entries())
        f << ' ' << t << ':' << detail::fmt_double(w);
    }
    f << '\n';
  }
  if (!f) throw io_error("write failed: " + path);
}

inline std::pair<std::vector<std::string>, std::vector<VectorRepr>> read_vectors(
    const std::string& path) {
  auto f = detail::open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw io_error(path + ":1: missing vectors header");
  std::istringstream hs(line);
  std::string magic, kind_s;
  int dim = 0;
  size_t count = 0;
  if (!(hs >> magic >> kind_s >> dim >> count) || magic != "vectors" ||
      (kind_s != "dense" && kind_s != "sparse"))
    detail::parse_fail(path, 1, "malformed vectors header");
  const VectorKind kind = kind_s == "dense" ? VectorKind::dense : VectorKind::sparse;
  std::vector<std::string> ids;
  std::vector<VectorRepr> vecs;
  int ln = 1;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    if (!(ss >> id)) detail::parse_fail(path, ln, "missing id");
    if (kind == VectorKind::dense) {
      Eigen::VectorXd v(dim);
      std::string tok;
      for (int j = 0; j < dim; ++j) {
        if (!(ss >> tok)) detail::parse_fail(path, ln, "expected " + std::to_string(dim) + " values");
        v[j] = detail::parse_double(tok, path, ln, "value");
      }
      if (ss >> tok) detail::parse_fail(path, ln, "trailing field: '" + tok + "'");
      ids.push_back(id);
      vecs.push_back(VectorRepr::make_dense(std::move(v)));
    } else {
      std::map<int, double> entries;
      std::string tok;
      while (ss >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos)
          detail::parse_fail(path, ln, "expected term:weight, got '" + tok + "'");
        const int t = detail::parse_int(tok.substr(0, colon), path, ln, "term");
        entries[t] = detail::parse_double(tok.substr(colon + 1), path, ln, "weight");
      }
      ids.push_back(id);
      vecs.push_back(VectorRepr::make_sparse(dim, std::move(entries)));
    }
  }
  if (ids.size() != count)
    throw io_error(path + ": header declares " + std::to_string(count) + " vectors, found " +
                   std::to_string(ids.size()));
  return {std::move(ids), std::move(vecs)};
}

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const ReformulatorParams& params, const std::string& path) {
  auto f = detail::open_out(path);
  const auto& c = params.config;
  f << "lolckpt " << kCheckpointVersion << '\n';
  f << "config " << (c.kind == VectorKind::dense ? "dense" : "sparse") << ' ' << c.vec_dim << ' '
    << c.width << ' ' << c.layers << ' ' << c.heads << ' ' << c.ffn_mult << ' ' << c.max_depth
    << '\n';
  for (const auto& [name, t] : params.tensors) {
    f << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        if (j) f << ' ';
        f << detail::fmt_double(t(i, j));
      }
      f << '\n';
    }
  }
  f << "end\n";
  if (!f) throw io_error("write failed: " + path);
}

inline ReformulatorParams load_checkpoint(const std::string& path) {
  auto f = detail::open_in(path);
  std::string magic;
  int version = -1;
  if (!(f >> magic >> version) || magic != "lolckpt")
    throw io_error(path + ": not a checkpoint file");
  if (version != kCheckpointVersion)
    throw io_error(path + ": checkpoint version " + std::to_string(version) +
                   " unsupported, expected " + std::to_string(kCheckpointVersion));
  ReformulatorParams p;
  std::string tok, kind_s;
  if (!(f >> tok >> kind_s >> p.config.vec_dim >> p.config.width >> p.config.layers >>
        p.config.heads >> p.config.ffn_mult >> p.config.max_depth) ||
      tok != "config" || (kind_s != "dense" && kind_s != "sparse"))
    throw io_error(path + ": malformed checkpoint config line");
  p.config.kind = kind_s == "dense" ? VectorKind::dense : VectorKind::sparse;
  bool terminated = false;
  while (f >> tok) {
    if (tok == "end") {
      terminated = true;
      break;
    }
    if (tok != "tensor") throw io_error(path + ": expected tensor record, got '" + tok + "'");
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(f >> name >> rows >> cols)) throw io_error(path + ": malformed tensor header");
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(f >> t(i, j))) throw io_error(path + ": truncated tensor " + name);
    p.tensors[name] = std::move(t);
  }
  if (!terminated) throw io_error(path + ": truncated checkpoint (missing end marker)");
  validate_params(p);
  return p;
}

inline constexpr int kConfigSchemaVersion = 1;

// flat key=value config document
inline void write_config(const std::map<std::string, std::string>& kv, const std::string& path) {
  auto f = detail::open_out(path);
  f << "schema_version=" << kConfigSchemaVersion << '\n';
  for (const auto& [k, v] : kv)
    if (k != "schema_version") f << k << '=' << v << '\n';
  if (!f) throw io_error("write failed: " + path);
}

inline std::map<std::string, std::string> read_config(const std::string& path) {
  auto f = detail::open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) detail::parse_fail(path, ln, "expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto it = kv.find("schema_version");
  if (it == kv.end()) throw io_error(path + ": missing schema_version");
  if (it->second != std::to_string(kConfigSchemaVersion))
    throw io_error(path + ": schema_version " + it->second + " unsupported, expected " +
                   std::to_string(kConfigSchemaVersion));
  return kv;
}

}  // namespace lol
