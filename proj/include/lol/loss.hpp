#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lol/core.hpp"

namespace lol {

// Per-depth losses, the comparative term, and the combined objective for
// one original query.
struct LossBreakdown {
  std::map<int, double> per_depth;   // k -> L_rf(q^(k))
  double comparative = 0.0;          // L_cr
  double lambda = 0.0;
  double total = 0.0;
  std::map<int, double> weights;     // k -> effective weight in the re-weighted form
};

struct ReformulationLoss {
  double value = 0.0;
  Eigen::VectorXd grad_q;  // dL/d(q_vec), dense, length = q dim
};

// Softmax ranking loss of a revised query against one positive and a set of
// negatives: -log(e^{s+} / (e^{s+} + sum e^{s-})). Log-sum-exp is computed
// with max subtraction; summation order is fixed left to right.
inline ReformulationLoss reformulation_loss(const VectorRepr& q_vec, const VectorRepr& positive,
                                            const std::vector<VectorRepr>& negatives) {
  if (negatives.empty()) throw contract_error("reformulation_loss: no negatives");
  const double s_pos = dot(q_vec, positive);
  std::vector<double> s_neg;
  s_neg.reserve(negatives.size());
  double m = s_pos;
  for (const auto& d : negatives) {
    s_neg.push_back(dot(q_vec, d));
    m = std::max(m, s_neg.back());
  }
  double z = std::exp(s_pos - m);
  for (double s : s_neg) z += std::exp(s - m);
  const double log_z = m + std::log(z);
  ReformulationLoss out;
  out.value = log_z - s_pos;

  // dL/ds_i = p_i - [i == positive], dL/dq = sum_i dL/ds_i * d_i
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q_vec.dim());
  auto add_doc = [&g](const VectorRepr& d, double coeff) {
    if (d.kind() == VectorKind::dense) {
      g += coeff * d.dense_values();
    } else {
      for (const auto& [t, w] : d.sparse_entries()) g[t] += coeff * w;
    }
  };
  add_doc(positive, std::exp(s_pos - log_z) - 1.0);
  for (size_t i = 0; i < negatives.size(); ++i)
    add_doc(negatives[i], std::exp(s_neg[i] - log_z));
  out.grad_q = std::move(g);
  return out;
}

// Mean pairwise hinge over per-depth losses: deeper revisions with larger
// loss are penalized, ties are not.
inline double comparative_regularization(const std::map<int, double>& losses) {
  if (losses.size() < 2) throw contract_error("comparative_regularization: need >= 2 depths");
  double sum = 0.0;
  int pairs = 0;
  for (auto j = losses.begin(); j != losses.end(); ++j)
    for (auto k = std::next(j); k != losses.end(); ++k) {
      sum += std::max(0.0, k->second - j->second);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

inline int cmp(int k, int j, double Lk, double Lj) {
  if (j == k) throw contract_error("cmp: depths must differ");
  if (j < k && Lj < Lk) return 1;
  if (j > k && Lj > Lk) return -1;
  return 0;
}

// Re-weighted equivalent of the total objective:
// w_k = 1 + (2*lambda/(|K|-1)) * sum_{j != k} cmp(k, j, L^k, L^j)
inline std::pair<std::map<int, double>, double> reweighted_form(
    const std::map<int, double>& losses, double lambda) {
  if (losses.size() < 2) throw contract_error("reweighted_form: need >= 2 depths");
  const double n = static_cast<double>(losses.size());
  std::map<int, double> weights;
  double total = 0.0;
  for (const auto& [k, Lk] : losses) {
    int s = 0;
    for (const auto& [j, Lj] : losses)
      if (j != k) s += cmp(k, j, Lk, Lj);
    const double w = 1.0 + (2.0 * lambda / (n - 1.0)) * static_cast<double>(s);
    weights[k] = w;
    total += w * Lk;
  }
  return {weights, total / n};
}

// Combined objective: mean of per-depth losses plus lambda * L_cr.
// A single depth degenerates to the plain per-depth loss.
inline LossBreakdown total_loss(const std::map<int, double>& losses, double lambda) {
  if (losses.empty()) throw contract_error("total_loss: no losses");
  if (lambda < 0.0) throw contract_error("total_loss: negative lambda");
  LossBreakdown b;
  b.per_depth = losses;
  b.lambda = lambda;
  double mean = 0.0;
  for (const auto& [k, L] : losses) mean += L;
  mean /= static_cast<double>(losses.size());
  if (losses.size() == 1) {
    b.comparative = 0.0;
    b.total = losses.begin()->second;
    b.weights[losses.begin()->first] = 1.0;
    return b;
  }
  b.comparative = comparative_regularization(losses);
  b.total = mean + lambda * b.comparative;
  b.weights = reweighted_form(losses, lambda).first;
  return b;
}

// d(total)/d(L^(k)) for every depth: the per-depth mean term plus the hinge
// subgradient of each active pair (zero at exact ties).
inline std::map<int, double> loss_scalar_gradients(const std::map<int, double>& losses,
                                                   double lambda) {
  std::map<int, double> g;
  const double inv_n = 1.0 / static_cast<double>(losses.size());
  for (const auto& [k, L] : losses) g[k] = inv_n;
  if (losses.size() < 2) return g;
  const double pairs =
      static_cast<double>(losses.size() * (losses.size() - 1)) / 2.0;
  for (auto j = losses.begin(); j != losses.end(); ++j)
    for (auto k = std::next(j); k != losses.end(); ++k)
      if (k->second > j->second) {  // active pair: deeper has larger loss
        g[k->first] += lambda / pairs;
        g[j->first] -= lambda / pairs;
      }
  return g;
}

// Gradients of the total objective w.r.t. every revised-query vector, given
// the per-depth losses and their q-vector gradients.
inline std::map<int, Eigen::VectorXd> loss_gradient(
    const std::map<int, ReformulationLoss>& per_depth, double lambda) {
  std::map<int, double> values;
  for (const auto& [k, l] : per_depth) values[k] = l.value;
  const auto coeff = loss_scalar_gradients(values, lambda);
  std::map<int, Eigen::VectorXd> out;
  for (const auto& [k, l] : per_depth) out[k] = coeff.at(k) * l.grad_q;
  return out;
}

}  // namespace lol
