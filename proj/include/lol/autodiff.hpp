#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lol/core.hpp"

namespace lol {

// Reverse-mode tape over Eigen matrices. A forward pass builds the graph;
// backward() seeds the output and walks the nodes in reverse. Leaf nodes
// tagged with a name (parameters, inputs) expose their gradients afterwards.
class Tape {
 public:
  using Id = int;
  using Mat = Eigen::MatrixXd;

  Id constant(Mat v) { return push(std::move(v), {}, ""); }
  Id named(const std::string& name, Mat v) { return push(std::move(v), {}, name); }

  const Mat& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat& gradient(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }

  Id matmul(Id a, Id b) {
    Mat v = value(a) * value(b);
    return push(std::move(v), [this, a, b](const Mat& g) {
      acc(a, g * value(b).transpose());
      acc(b, value(a).transpose() * g);
    });
  }

  Id add(Id a, Id b) {
    Mat v = value(a) + value(b);
    return push(std::move(v), [this, a, b](const Mat& g) {
      acc(a, g);
      acc(b, g);
    });
  }

  Id scale(Id a, double c) {
    Mat v = value(a) * c;
    return push(std::move(v), [this, a, c](const Mat& g) { acc(a, g * c); });
  }

  Id transpose(Id a) {
    Mat v = value(a).transpose();
    return push(std::move(v), [this, a](const Mat& g) { acc(a, g.transpose()); });
  }

  // broadcast-add a 1 x C row to every row of a
  Id add_bias(Id a, Id bias) {
    Mat v = value(a).rowwise() + value(bias).row(0);
    return push(std::move(v), [this, a, bias](const Mat& g) {
      acc(a, g);
      acc(bias, g.colwise().sum());
    });
  }

  Id block(Id a, int i0, int j0, int rows, int cols) {
    Mat v = value(a).block(i0, j0, rows, cols);
    return push(std::move(v), [this, a, i0, j0, rows, cols](const Mat& g) {
      Mat full = Mat::Zero(value(a).rows(), value(a).cols());
      full.block(i0, j0, rows, cols) = g;
      acc(a, full);
    });
  }

  Id vconcat(const std::vector<Id>& parts) {
    if (parts.empty()) throw contract_error("vconcat: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    for (Id p : parts) rows += value(p).rows();
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (Id p : parts) {
      v.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return push(std::move(v), [this, parts](const Mat& g) {
      Eigen::Index r = 0;
      for (Id p : parts) {
        acc(p, g.middleRows(r, value(p).rows()));
        r += value(p).rows();
      }
    });
  }

  Id hconcat(const std::vector<Id>& parts) {
    if (parts.empty()) throw contract_error("hconcat: no parts");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Id p : parts) cols += value(p).cols();
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (Id p : parts) {
      v.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return push(std::move(v), [this, parts](const Mat& g) {
      Eigen::Index c = 0;
      for (Id p : parts) {
        acc(p, g.middleCols(c, value(p).cols()));
        c += value(p).cols();
      }
    });
  }

  Id gelu(Id a) {
    const Mat& x = value(a);
    Mat v = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t / std::sqrt(2.0))); });
    return push(std::move(v), [this, a](const Mat& g) {
      const Mat& x = value(a);
      Mat d = x.unaryExpr([](double t) {
        const double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
        const double Phi = 0.5 * (1.0 + std::erf(t / std::sqrt(2.0)));
        return Phi + t * phi;
      });
      acc(a, g.cwiseProduct(d));
    });
  }

  Id relu(Id a) {
    Mat v = value(a).cwiseMax(0.0);
    return push(std::move(v), [this, a](const Mat& g) {
      Mat mask = (value(a).array() > 0.0).cast<double>().matrix();
      acc(a, g.cwiseProduct(mask));
    });
  }

  Id softmax_rows(Id a) {
    const Mat& x = value(a);
    Mat v(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
      v.row(i) = e / e.sum();
    }
    Id out = push(std::move(v), {});
    nodes_[static_cast<size_t>(out)].back = [this, a, out](const Mat& g) {
      const Mat& y = value(out);
      Mat dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double s = g.row(i).dot(y.row(i));
        dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - s).matrix());
      }
      acc(a, dx);
    };
    return out;
  }

  // per-row layer normalization with learnable gain/bias (1 x C each)
  Id layer_norm_rows(Id a, Id gain, Id bias, double eps = 1e-6) {
    const Mat& x = value(a);
    const Eigen::Index C = x.cols();
    Mat xhat(x.rows(), C);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).mean();
      const double var = (x.row(i).array() - m).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[i] = is;
      xhat.row(i) = (x.row(i).array() - m) * is;
    }
    Mat v = (xhat.array().rowwise() * value(gain).row(0).array()).matrix().rowwise() +
            value(bias).row(0);
    return push(std::move(v),
                [this, a, gain, bias, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](const Mat& g) {
                  const Eigen::Index C = g.cols();
                  Mat dxhat = g.array().rowwise() * value(gain).row(0).array();
                  Mat dx(g.rows(), C);
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const double mean_d = dxhat.row(i).mean();
                    const double mean_dx = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                    dx.row(i) = inv_std[i] *
                                (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
                  }
                  acc(a, dx);
                  acc(gain, (g.cwiseProduct(xhat)).colwise().sum());
                  acc(bias, g.colwise().sum());
                });
  }

  // column-wise max over rows -> 1 x C; gradient routed to the argmax row,
  // ties to the lowest row index
  Id colwise_max(Id a) {
    const Mat& x = value(a);
    const Eigen::Index C = x.cols();
    Mat v(1, C);
    std::vector<Eigen::Index> arg(static_cast<size_t>(C));
    for (Eigen::Index j = 0; j < C; ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < x.rows(); ++i)
        if (x(i, j) > x(best, j)) best = i;
      arg[static_cast<size_t>(j)] = best;
      v(0, j) = x(best, j);
    }
    return push(std::move(v), [this, a, arg = std::move(arg)](const Mat& g) {
      Mat dx = Mat::Zero(value(a).rows(), value(a).cols());
      for (Eigen::Index j = 0; j < g.cols(); ++j) dx(arg[static_cast<size_t>(j)], j) = g(0, j);
      acc(a, dx);
    });
  }

  // normalize a 1 x C row to unit Euclidean norm
  Id l2_normalize_row(Id a) {
    const Mat& x = value(a);
    const double n = x.norm();
    if (n == 0.0) throw numeric_error("l2_normalize_row: zero vector");
    Mat v = x / n;
    Id out = push(std::move(v), {});
    nodes_[static_cast<size_t>(out)].back = [this, a, out, n](const Mat& g) {
      const Mat& y = value(out);
      const double gy = (g.cwiseProduct(y)).sum();
      acc(a, (g - gy * y) / n);
    };
    return out;
  }

  // Seed the output node and propagate gradients through the whole tape.
  void backward(Id output, const Mat& seed) {
    if (seed.rows() != value(output).rows() || seed.cols() != value(output).cols())
      throw contract_error("backward: seed shape mismatch");
    for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    nodes_[static_cast<size_t>(output)].grad = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (it->back && it->grad.cwiseAbs().sum() != 0.0) it->back(it->grad);
  }

  // gradients of all named leaves after backward()
  std::map<std::string, Mat> named_gradients() const {
    std::map<std::string, Mat> out;
    for (const auto& n : nodes_)
      if (!n.name.empty()) {
        auto [it, fresh] = out.emplace(n.name, n.grad);
        if (!fresh) it->second += n.grad;
      }
    return out;
  }

  void check_finite(Id id, const std::string& where) const {
    if (!value(id).allFinite()) throw numeric_error("non-finite activation in " + where);
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(const Mat&)> back;
    std::string name;
  };

  Id push(Mat v, std::function<void(const Mat&)> back, std::string name = "") {
    Node n;
    n.value = std::move(v);
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  void acc(Id id, const Mat& g) { nodes_[static_cast<size_t>(id)].grad += g; }

  std::vector<Node> nodes_;
};

}  // namespace lol
