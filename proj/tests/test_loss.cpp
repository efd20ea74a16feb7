#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lol/loss.hpp"

using namespace lol;

namespace {

VectorRepr dense(std::initializer_list<double> vals) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return VectorRepr::make_dense(v);
}

}  // namespace

TEST_CASE("reformulation loss, uniform scores") {
  // q orthogonal to everything: all scores 0 -> -log(1/4) = ln 4
  auto q = dense({0, 0, 1});
  auto pos = dense({1, 0, 0});
  std::vector<VectorRepr> negs = {dense({0, 1, 0}), dense({1, 1, 0}), dense({-1, 0, 0})};
  auto l = reformulation_loss(q, pos, negs);
  CHECK(l.value == Catch::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(l.value == Catch::Approx(1.386294).margin(1e-6));
}

TEST_CASE("reformulation loss, hand-computed scores") {
  // s+ = 2, negatives score 1 and 0
  auto q = dense({1});
  auto pos = dense({2});
  std::vector<VectorRepr> negs = {dense({1}), dense({0})};
  auto l = reformulation_loss(q, pos, negs);
  CHECK(l.value == Catch::Approx(0.40761).margin(5e-6));
}

TEST_CASE("reformulation loss vanishes as the positive dominates") {
  auto pos = dense({1, 0});
  std::vector<VectorRepr> negs = {dense({0, 1})};
  double prev = 1e300;
  for (double s : {1.0, 5.0, 20.0, 100.0}) {
    auto l = reformulation_loss(dense({s, 0}), pos, negs);
    CHECK(l.value < prev);
    prev = l.value;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("reformulation loss requires negatives") {
  CHECK_THROWS_AS(reformulation_loss(dense({1}), dense({1}), {}), contract_error);
}

TEST_CASE("reformulation loss gradient matches finite differences") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  const int dim = 6;
  auto rand_vec = [&] {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = g(rng);
    return v;
  };
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd qv = rand_vec();
    auto pos = VectorRepr::make_dense(rand_vec());
    std::vector<VectorRepr> negs;
    for (int i = 0; i < 5; ++i) negs.push_back(VectorRepr::make_dense(rand_vec()));
    auto l = reformulation_loss(VectorRepr::make_dense(qv), pos, negs);
    const double h = 1e-6;
    for (int i = 0; i < dim; ++i) {
      Eigen::VectorXd qp = qv, qm = qv;
      qp[i] += h;
      qm[i] -= h;
      const double fd = (reformulation_loss(VectorRepr::make_dense(qp), pos, negs).value -
                         reformulation_loss(VectorRepr::make_dense(qm), pos, negs).value) /
                        (2 * h);
      CHECK(l.grad_q[i] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("comparative regularization hand cases") {
  CHECK(comparative_regularization({{1, 0.5}, {3, 0.5}}) == 0.0);
  CHECK(comparative_regularization({{1, 0.5}, {3, 0.8}}) == Catch::Approx(0.3));
  CHECK(comparative_regularization({{1, 0.5}, {3, 0.7}, {5, 0.4}}) ==
        Catch::Approx(0.2 / 3.0).epsilon(1e-9));
  CHECK_THROWS_AS(comparative_regularization({{1, 0.5}}), contract_error);
}

TEST_CASE("cmp function") {
  CHECK(cmp(3, 1, 0.8, 0.5) == 1);
  CHECK(cmp(1, 3, 0.5, 0.8) == -1);
  CHECK(cmp(3, 1, 0.5, 0.5) == 0);
  CHECK(cmp(1, 3, 0.5, 0.2) == 0);
  CHECK_THROWS_AS(cmp(2, 2, 0.1, 0.2), contract_error);
}

TEST_CASE("total loss hand cases") {
  CHECK(total_loss({{1, 0.4}, {3, 0.6}}, 0.0).total == Catch::Approx(0.5));
  auto b = total_loss({{1, 0.5}, {3, 0.8}}, 1.0);
  CHECK(b.total == Catch::Approx(0.95));
  CHECK(b.comparative == Catch::Approx(0.3));
  CHECK(total_loss({{2, 0.7}}, 5.0).total == 0.7);
  CHECK_THROWS_AS(total_loss({{1, 0.5}}, -1.0), contract_error);
  CHECK_THROWS_AS(total_loss({}, 0.0), contract_error);
}

TEST_CASE("total equals mean plus lambda times comparative") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    std::map<int, double> losses;
    const int n = 2 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) losses[k] = u(rng);
    const double lambda = u(rng);
    auto b = total_loss(losses, lambda);
    double mean = 0.0;
    for (auto& [k, v] : losses) mean += v;
    mean /= n;
    CHECK(b.total == Catch::Approx(mean + lambda * b.comparative).epsilon(1e-12));
  }
}

TEST_CASE("reweighted form hand case and degenerate weights") {
  auto [w, total] = reweighted_form({{1, 0.5}, {3, 0.8}}, 1.0);
  CHECK(w.at(1) == Catch::Approx(-1.0));
  CHECK(w.at(3) == Catch::Approx(3.0));
  CHECK(total == Catch::Approx(0.95));

  auto [we, te] = reweighted_form({{1, 0.5}, {3, 0.5}, {5, 0.5}}, 2.0);
  for (auto& [k, v] : we) CHECK(v == 1.0);
  CHECK(te == Catch::Approx(0.5));

  auto [wz, tz] = reweighted_form({{1, 0.2}, {3, 0.9}}, 0.0);
  for (auto& [k, v] : wz) CHECK(v == 1.0);
}

TEST_CASE("re-weighted identity over random draws") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng() % 4);
    std::map<int, double> losses;
    while (static_cast<int>(losses.size()) < n) losses[static_cast<int>(rng() % 9)] = u(rng);
    const double lambda = 2.0 * u(rng);
    auto b = total_loss(losses, lambda);
    auto [w, total] = reweighted_form(losses, lambda);
    CHECK(b.total == Catch::Approx(total).epsilon(1e-9));
  }
}

TEST_CASE("L_cr is zero iff losses are non-increasing in depth") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::map<int, double> losses;
    for (int k = 0; k < 4; ++k) losses[k] = u(rng);
    bool non_increasing = true;
    double prev = 1e300;
    for (auto& [k, v] : losses) {
      if (v > prev) non_increasing = false;
      prev = v;
    }
    CHECK((comparative_regularization(losses) == 0.0) == non_increasing);
  }
}

TEST_CASE("scalar gradient of total matches reweighted weights at non-tie points") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::map<int, double> losses;
    while (losses.size() < 3) losses[static_cast<int>(rng() % 7)] = u(rng);
    const double lambda = u(rng);
    auto g = loss_scalar_gradients(losses, lambda);
    auto [w, total] = reweighted_form(losses, lambda);
    const double h = 1e-7;
    for (auto& [k, v] : losses) {
      auto lp = losses, lm = losses;
      lp[k] += h;
      lm[k] -= h;
      const double fd = (total_loss(lp, lambda).total - total_loss(lm, lambda).total) / (2 * h);
      CHECK(g.at(k) == Catch::Approx(fd).margin(1e-6));
      CHECK(g.at(k) == Catch::Approx(w.at(k) / static_cast<double>(losses.size())).margin(1e-9));
    }
  }
}

TEST_CASE("loss_gradient composition: lambda 0 and single active pair") {
  std::map<int, ReformulationLoss> per_depth;
  per_depth[1] = {0.5, Eigen::Vector2d(1.0, 2.0)};
  per_depth[3] = {0.8, Eigen::Vector2d(-1.0, 0.5)};

  auto g0 = loss_gradient(per_depth, 0.0);
  CHECK(g0.at(1) == 0.5 * Eigen::Vector2d(1.0, 2.0));
  CHECK(g0.at(3) == 0.5 * Eigen::Vector2d(-1.0, 0.5));

  // |K| = 2, one violated pair: penalized coefficient 1/2 + 1, rewarded 1/2 - 1
  auto g1 = loss_gradient(per_depth, 1.0);
  CHECK(g1.at(3).isApprox(1.5 * Eigen::Vector2d(-1.0, 0.5), 1e-12));
  CHECK(g1.at(1).isApprox(-0.5 * Eigen::Vector2d(1.0, 2.0), 1e-12));
}

TEST_CASE("full loss gradient matches finite differences through the pipeline") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  const int dim = 4;
  auto rand_vec = [&] {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = g(rng);
    return v;
  };
  auto pos = VectorRepr::make_dense(rand_vec());
  std::vector<VectorRepr> negs;
  for (int i = 0; i < 4; ++i) negs.push_back(VectorRepr::make_dense(rand_vec()));
  const double lambda = 0.7;

  std::map<int, Eigen::VectorXd> qs;
  qs[1] = rand_vec();
  qs[3] = rand_vec();
  qs[5] = rand_vec();

  auto objective = [&](const std::map<int, Eigen::VectorXd>& q_vecs) {
    std::map<int, double> values;
    for (auto& [k, qv] : q_vecs)
      values[k] = reformulation_loss(VectorRepr::make_dense(qv), pos, negs).value;
    return total_loss(values, lambda).total;
  };

  std::map<int, ReformulationLoss> per_depth;
  for (auto& [k, qv] : qs)
    per_depth[k] = reformulation_loss(VectorRepr::make_dense(qv), pos, negs);
  auto grads = loss_gradient(per_depth, lambda);

  const double h = 1e-6;
  for (auto& [k, qv] : qs) {
    for (int i = 0; i < dim; ++i) {
      auto qp = qs, qm = qs;
      qp[k][i] += h;
      qm[k][i] -= h;
      const double fd = (objective(qp) - objective(qm)) / (2 * h);
      CHECK(grads.at(k)[i] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("total loss is insensitive to insertion order") {
  std::map<int, double> a;
  a[5] = 0.3;
  a[1] = 0.9;
  a[3] = 0.6;
  std::map<int, double> b;
  b[1] = 0.9;
  b[3] = 0.6;
  b[5] = 0.3;
  CHECK(total_loss(a, 1.3).total == total_loss(b, 1.3).total);
}
