#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lol/autodiff.hpp"
#include "lol/core.hpp"

namespace lol {

using ParamStore = std::map<std::string, Eigen::MatrixXd>;

struct ModelConfig {
  VectorKind kind = VectorKind::dense;
  int vec_dim = 16;   // D for dense, vocabulary size V for sparse
  int width = 32;     // encoder width W
  int layers = 1;
  int heads = 2;
  int ffn_mult = 2;
  int max_depth = 5;  // A_max

  bool operator==(const ModelConfig&) const = default;
};

// Learnable weights of the QR model. Tensor names double as checkpoint keys.
struct ReformulatorParams {
  ModelConfig config;
  ParamStore tensors;

  const Eigen::MatrixXd& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw contract_error("missing parameter tensor: " + name);
    return it->second;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& [k, v] : tensors) n += static_cast<size_t>(v.size());
    return n;
  }
};

namespace detail {

inline void expect_shape(const ReformulatorParams& p, const std::string& name, int rows, int cols) {
  const auto& t = p.at(name);
  if (t.rows() != rows || t.cols() != cols)
    throw contract_error("parameter " + name + " has wrong shape");
  if (!t.allFinite()) throw contract_error("parameter " + name + " has non-finite entries");
}

}  // namespace detail

inline void validate_params(const ReformulatorParams& p) {
  const auto& c = p.config;
  const int W = c.width, F = c.width * c.ffn_mult, D = c.vec_dim;
  detail::expect_shape(p, "adapter.query.W", D, W);
  detail::expect_shape(p, "adapter.query.b", 1, W);
  detail::expect_shape(p, "adapter.doc.W", D, W);
  detail::expect_shape(p, "adapter.doc.b", 1, W);
  detail::expect_shape(p, "pos", c.max_depth + 1, W);
  for (int l = 0; l < c.layers; ++l) {
    const std::string e = "enc" + std::to_string(l) + ".";
    for (const char* n : {"attn.Wq", "attn.Wk", "attn.Wv", "attn.Wo"})
      detail::expect_shape(p, e + n, W, W);
    for (const char* n : {"attn.bq", "attn.bk", "attn.bv", "attn.bo", "ln1.gain", "ln1.bias",
                          "ln2.gain", "ln2.bias"})
      detail::expect_shape(p, e + n, 1, W);
    detail::expect_shape(p, e + "ffn.W1", W, F);
    detail::expect_shape(p, e + "ffn.b1", 1, F);
    detail::expect_shape(p, e + "ffn.W2", F, W);
    detail::expect_shape(p, e + "ffn.b2", 1, W);
  }
  if (c.kind == VectorKind::dense) {
    detail::expect_shape(p, "proj.W", W, D);
    detail::expect_shape(p, "proj.b", 1, D);
    detail::expect_shape(p, "proj.ln.gain", 1, D);
    detail::expect_shape(p, "proj.ln.bias", 1, D);
  } else {
    detail::expect_shape(p, "proj.W1", W, W);
    detail::expect_shape(p, "proj.b1", 1, W);
    detail::expect_shape(p, "proj.ln.gain", 1, W);
    detail::expect_shape(p, "proj.ln.bias", 1, W);
    detail::expect_shape(p, "proj.W2", W, D);
    detail::expect_shape(p, "proj.b2", 1, D);
  }
}

// Scaled uniform init (bound 1/sqrt(fan_in)); layer-norm gains 1, all biases 0.
inline ReformulatorParams init_params(const ModelConfig& config, uint64_t seed) {
  if (config.width <= 0 || config.layers <= 0 || config.heads <= 0 || config.vec_dim <= 0 ||
      config.max_depth < 0 || config.width % config.heads != 0)
    throw contract_error("init_params: invalid model configuration");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](int rows, int cols, int fan_in) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-b, b);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    return m;
  };
  ReformulatorParams p;
  p.config = config;
  const int W = config.width, F = config.width * config.ffn_mult, D = config.vec_dim;
  auto zeros = [](int r, int c) { return Eigen::MatrixXd::Zero(r, c); };
  auto ones = [](int r, int c) { return Eigen::MatrixXd::Ones(r, c); };
  auto& t = p.tensors;
  t["adapter.query.W"] = uniform(D, W, D);
  t["adapter.query.b"] = zeros(1, W);
  t["adapter.doc.W"] = uniform(D, W, D);
  t["adapter.doc.b"] = zeros(1, W);
  t["pos"] = uniform(config.max_depth + 1, W, W);
  for (int l = 0; l < config.layers; ++l) {
    const std::string e = "enc" + std::to_string(l) + ".";
    t[e + "attn.Wq"] = uniform(W, W, W);
    t[e + "attn.Wk"] = uniform(W, W, W);
    t[e + "attn.Wv"] = uniform(W, W, W);
    t[e + "attn.Wo"] = uniform(W, W, W);
    t[e + "attn.bq"] = zeros(1, W);
    t[e + "attn.bk"] = zeros(1, W);
    t[e + "attn.bv"] = zeros(1, W);
    t[e + "attn.bo"] = zeros(1, W);
    t[e + "ln1.gain"] = ones(1, W);
    t[e + "ln1.bias"] = zeros(1, W);
    t[e + "ffn.W1"] = uniform(W, F, W);
    t[e + "ffn.b1"] = zeros(1, F);
    t[e + "ffn.W2"] = uniform(F, W, F);
    t[e + "ffn.b2"] = zeros(1, W);
    t[e + "ln2.gain"] = ones(1, W);
    t[e + "ln2.bias"] = zeros(1, W);
  }
  if (config.kind == VectorKind::dense) {
    t["proj.W"] = uniform(W, D, W);
    t["proj.b"] = zeros(1, D);
    t["proj.ln.gain"] = ones(1, D);
    t["proj.ln.bias"] = zeros(1, D);
  } else {
    t["proj.W1"] = uniform(W, W, W);
    t["proj.b1"] = zeros(1, W);
    t["proj.ln.gain"] = ones(1, W);
    t["proj.ln.bias"] = zeros(1, W);
    t["proj.W2"] = uniform(W, D, W);
    t["proj.b2"] = zeros(1, D);
  }
  validate_params(p);
  return p;
}

enum class ForwardMode { inference, training };

struct RevisedQuery {
  std::string query_id;
  int depth_k = 0;
  VectorRepr vector;
  std::shared_ptr<Tape> tape;  // training mode only
  Tape::Id output_node = -1;
};

namespace detail {

inline Tape::Id linear(Tape& t, Tape::Id x, Tape::Id W, Tape::Id b) {
  return t.add_bias(t.matmul(x, W), b);
}

inline Tape::Id attention(Tape& t, Tape::Id x, const std::string& prefix,
                          const std::map<std::string, Tape::Id>& pn, int heads) {
  auto P = [&](const std::string& n) { return pn.at(prefix + n); };
  const int n = static_cast<int>(t.value(x).rows());
  const int W = static_cast<int>(t.value(x).cols());
  const int dh = W / heads;
  Tape::Id Q = linear(t, x, P("attn.Wq"), P("attn.bq"));
  Tape::Id K = linear(t, x, P("attn.Wk"), P("attn.bk"));
  Tape::Id V = linear(t, x, P("attn.Wv"), P("attn.bv"));
  std::vector<Tape::Id> ctx;
  for (int h = 0; h < heads; ++h) {
    Tape::Id Qh = t.block(Q, 0, h * dh, n, dh);
    Tape::Id Kh = t.block(K, 0, h * dh, n, dh);
    Tape::Id Vh = t.block(V, 0, h * dh, n, dh);
    Tape::Id S = t.scale(t.matmul(Qh, t.transpose(Kh)), 1.0 / std::sqrt(double(dh)));
    Tape::Id A = t.softmax_rows(S);
    ctx.push_back(t.matmul(A, Vh));
  }
  return linear(t, t.hconcat(ctx), P("attn.Wo"), P("attn.bo"));
}

}  // namespace detail

// QR(q, F^(k)): slot 0 carries the adapted original query, slots 1..k the
// adapted feedback documents in rank order. A transformer encoder mixes the
// slots; the projector/pooler maps back into the retrieval vector space.
inline RevisedQuery reformulate(const ReformulatorParams& params, const Query& q,
                                const FeedbackSet& feedback,
                                ForwardMode mode = ForwardMode::inference) {
  const auto& cfg = params.config;
  if (feedback.depth_k > cfg.max_depth)
    throw contract_error("reformulate: feedback depth " + std::to_string(feedback.depth_k) +
                         " exceeds max depth " + std::to_string(cfg.max_depth));
  if (q.vector.kind() != cfg.kind || q.vector.dim() != cfg.vec_dim)
    throw contract_error("reformulate: query vector does not match model configuration");
  for (const Document* d : feedback.docs)
    if (d->vector.kind() != cfg.kind || d->vector.dim() != cfg.vec_dim)
      throw contract_error("reformulate: feedback vector does not match model configuration");

  auto tape = std::make_shared<Tape>();
  Tape& t = *tape;
  std::map<std::string, Tape::Id> pn;
  for (const auto& [name, value] : params.tensors) pn[name] = t.named(name, value);

  const int n = 1 + feedback.depth_k;
  std::vector<Tape::Id> rows;
  rows.push_back(t.named("input.slot0", q.vector.to_dense().transpose()));
  for (int i = 0; i < feedback.depth_k; ++i)
    rows.push_back(t.named("input.slot" + std::to_string(i + 1),
                           feedback.docs[static_cast<size_t>(i)]->vector.to_dense().transpose()));

  Tape::Id q_adapted = detail::linear(t, rows[0], pn["adapter.query.W"], pn["adapter.query.b"]);
  std::vector<Tape::Id> adapted = {q_adapted};
  for (int i = 1; i < n; ++i)
    adapted.push_back(detail::linear(t, rows[static_cast<size_t>(i)], pn["adapter.doc.W"],
                                     pn["adapter.doc.b"]));
  Tape::Id x = t.add(t.vconcat(adapted), t.block(pn["pos"], 0, 0, n, cfg.width));

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string e = "enc" + std::to_string(l) + ".";
    Tape::Id attn = detail::attention(t, x, e, pn, cfg.heads);
    x = t.layer_norm_rows(t.add(x, attn), pn[e + "ln1.gain"], pn[e + "ln1.bias"]);
    Tape::Id h = t.gelu(detail::linear(t, x, pn[e + "ffn.W1"], pn[e + "ffn.b1"]));
    Tape::Id f = detail::linear(t, h, pn[e + "ffn.W2"], pn[e + "ffn.b2"]);
    x = t.layer_norm_rows(t.add(x, f), pn[e + "ln2.gain"], pn[e + "ln2.bias"]);
    t.check_finite(x, "encoder layer " + std::to_string(l));
  }

  Tape::Id out;
  VectorRepr out_vec;
  if (cfg.kind == VectorKind::dense) {
    Tape::Id slot0 = t.block(x, 0, 0, 1, cfg.width);
    Tape::Id y = detail::linear(t, slot0, pn["proj.W"], pn["proj.b"]);
    out = t.layer_norm_rows(y, pn["proj.ln.gain"], pn["proj.ln.bias"]);
    t.check_finite(out, "dense projector");
    out_vec = VectorRepr::make_dense(t.value(out).row(0).transpose());
  } else {
    Tape::Id h = t.layer_norm_rows(t.gelu(detail::linear(t, x, pn["proj.W1"], pn["proj.b1"])),
                                   pn["proj.ln.gain"], pn["proj.ln.bias"]);
    Tape::Id logits = detail::linear(t, h, pn["proj.W2"], pn["proj.b2"]);
    Tape::Id pooled = t.relu(t.colwise_max(logits));
    t.check_finite(pooled, "sparse projector");
    out = t.l2_normalize_row(pooled);
    std::map<int, double> entries;
    const auto& row = t.value(out);
    for (Eigen::Index j = 0; j < row.cols(); ++j)
      if (row(0, j) != 0.0) entries[static_cast<int>(j)] = row(0, j);
    out_vec = VectorRepr::make_sparse(cfg.vec_dim, std::move(entries));
  }

  RevisedQuery rq;
  rq.query_id = q.query_id;
  rq.depth_k = feedback.depth_k;
  rq.vector = out_vec;
  rq.output_node = out;
  if (mode == ForwardMode::training) rq.tape = tape;
  return rq;
}

struct GradientSet {
  ParamStore params;                      // d(objective)/d(tensor), by name
  std::vector<Eigen::VectorXd> inputs;    // per slot, slot 0 = query
};

// Exact reverse-mode gradients of any scalar with output-gradient
// d(scalar)/d(output vector) through one recorded forward pass.
inline GradientSet reformulator_backward(const RevisedQuery& rq,
                                         const Eigen::VectorXd& output_gradient) {
  if (!rq.tape) throw contract_error("backward: revised query carries no tape");
  Tape& t = *rq.tape;
  if (output_gradient.size() != t.value(rq.output_node).cols())
    throw contract_error("backward: output gradient length mismatch");
  t.backward(rq.output_node, output_gradient.transpose());
  GradientSet gs;
  auto named = t.named_gradients();
  for (auto& [name, g] : named) {
    if (name.rfind("input.slot", 0) == 0) {
      const size_t slot = static_cast<size_t>(std::stoi(name.substr(10)));
      if (gs.inputs.size() <= slot) gs.inputs.resize(slot + 1);
      gs.inputs[slot] = g.row(0).transpose();
    } else {
      gs.params[name] = std::move(g);
    }
  }
  return gs;
}

// Rocchio baseline: alpha*q + (beta/k) * sum of feedback vectors.
inline RevisedQuery rocchio_reformulate(const Query& q, const FeedbackSet& feedback, double alpha,
                                        double beta) {
  VectorRepr v = axpy(alpha, q.vector, 0.0, q.vector);
  if (feedback.depth_k > 0) {
    const double w = beta / static_cast<double>(feedback.depth_k);
    for (const Document* d : feedback.docs) v = axpy(1.0, v, w, d->vector);
  }
  RevisedQuery rq;
  rq.query_id = q.query_id;
  rq.depth_k = feedback.depth_k;
  rq.vector = std::move(v);
  return rq;
}

}  // namespace lol
