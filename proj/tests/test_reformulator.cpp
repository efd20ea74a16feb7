#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lol/loss.hpp"
#include "lol/reformulator.hpp"

using namespace lol;

namespace {

struct Fixture {
  ModelConfig config;
  ReformulatorParams params;
  Query query;
  std::vector<Document> docs;
  FeedbackSet feedback;

  Fixture(VectorKind kind, int vec_dim, int width, int depth, uint64_t seed, int layers = 1)
      : config{} {
    config.kind = kind;
    config.vec_dim = vec_dim;
    config.width = width;
    config.layers = layers;
    config.heads = 2;
    config.max_depth = 5;
    params = init_params(config, seed);
    std::mt19937_64 rng(seed + 1);
    query = {"q1", {}, random_vec(rng, kind, vec_dim)};
    for (int i = 0; i < depth; ++i)
      docs.push_back({"d" + std::to_string(i), {}, random_vec(rng, kind, vec_dim)});
    feedback.depth_k = depth;
    for (const auto& d : docs) feedback.docs.push_back(&d);
  }

  static VectorRepr random_vec(std::mt19937_64& rng, VectorKind kind, int dim) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = g(rng);
    if (kind == VectorKind::dense) return VectorRepr::make_dense(v);
    std::map<int, double> e;
    for (int i = 0; i < dim; ++i)
      if (v[i] > 0.4) e[i] = v[i];
    if (e.empty()) e[0] = 1.0;
    return VectorRepr::make_sparse(dim, std::move(e));
  }
};

}  // namespace

TEST_CASE("init_params is reproducible and seed-sensitive") {
  ModelConfig c;
  auto a = init_params(c, 7);
  auto b = init_params(c, 7);
  auto d = init_params(c, 8);
  for (const auto& [name, t] : a.tensors) {
    CHECK(t == b.tensors.at(name));
  }
  bool any_diff = false;
  for (const auto& [name, t] : a.tensors)
    if (t != d.tensors.at(name)) any_diff = true;
  CHECK(any_diff);
  CHECK(a.tensors.at("enc0.ln1.gain").isOnes());
  CHECK(a.tensors.at("enc0.ln1.bias").isZero());
  CHECK(a.tensors.at("adapter.query.b").isZero());
}

TEST_CASE("init_params rejects invalid shapes") {
  ModelConfig c;
  c.width = 0;
  CHECK_THROWS_AS(init_params(c, 0), contract_error);
  ModelConfig c2;
  c2.heads = 3;  // does not divide width 32
  CHECK_THROWS_AS(init_params(c2, 0), contract_error);
}

TEST_CASE("reformulate at depth 0 uses only the query") {
  Fixture f(VectorKind::dense, 8, 16, 3, 5);
  FeedbackSet empty;
  auto a = reformulate(f.params, f.query, empty);
  // another query at depth 0 differs
  std::mt19937_64 rng(99);
  Query other{"q2", {}, Fixture::random_vec(rng, VectorKind::dense, 8)};
  auto b = reformulate(f.params, other, empty);
  CHECK(a.vector.dense_values() != b.vector.dense_values());
  CHECK(a.depth_k == 0);
}

TEST_CASE("reformulate is deterministic") {
  Fixture f(VectorKind::dense, 8, 16, 3, 5);
  auto a = reformulate(f.params, f.query, f.feedback);
  auto b = reformulate(f.params, f.query, f.feedback);
  CHECK(a.vector.dense_values() == b.vector.dense_values());
}

TEST_CASE("depth above A_max is rejected") {
  Fixture f(VectorKind::dense, 8, 16, 3, 5);
  FeedbackSet fs = f.feedback;
  fs.depth_k = 6;
  fs.docs.resize(3);
  CHECK_THROWS_AS(reformulate(f.params, f.query, fs), contract_error);
}

TEST_CASE("sparse output is non-negative with unit norm, property") {
  std::mt19937_64 seed_rng(123);
  Fixture f(VectorKind::sparse, 60, 16, 4, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::mt19937_64 rng(seed_rng());
    Query q{"q", {}, Fixture::random_vec(rng, VectorKind::sparse, 60)};
    auto out = reformulate(f.params, q, f.feedback);
    double norm2 = 0.0;
    for (const auto& [t, w] : out.vector.sparse_entries()) {
      CHECK(w >= 0.0);
      norm2 += w * w;
    }
    CHECK(std::sqrt(norm2) == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("training mode attaches a tape, inference does not") {
  Fixture f(VectorKind::dense, 8, 16, 2, 5);
  CHECK(reformulate(f.params, f.query, f.feedback).tape == nullptr);
  CHECK(reformulate(f.params, f.query, f.feedback, ForwardMode::training).tape != nullptr);
}

TEST_CASE("backward: zero output gradient gives zero gradients") {
  Fixture f(VectorKind::dense, 8, 16, 2, 5);
  auto rq = reformulate(f.params, f.query, f.feedback, ForwardMode::training);
  auto gs = reformulator_backward(rq, Eigen::VectorXd::Zero(8));
  for (const auto& [name, g] : gs.params) CHECK(g.isZero());
  for (const auto& in : gs.inputs) CHECK(in.isZero());
}

TEST_CASE("backward gradients match central finite differences, dense") {
  Fixture f(VectorKind::dense, 8, 16, 5, 11);
  const int out_dim = 8;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Eigen::VectorXd seed(out_dim);
  for (int i = 0; i < out_dim; ++i) seed[i] = g(rng);

  auto scalar = [&](const ReformulatorParams& p) {
    auto rq = reformulate(p, f.query, f.feedback);
    return seed.dot(rq.vector.to_dense());
  };

  auto rq = reformulate(f.params, f.query, f.feedback, ForwardMode::training);
  auto gs = reformulator_backward(rq, seed);

  const double h = 1e-5;
  std::vector<std::string> names;
  for (const auto& [name, t] : f.params.tensors) names.push_back(name);
  std::uniform_int_distribution<size_t> pick_name(0, names.size() - 1);
  int checked = 0;
  while (checked < 120) {
    const std::string& name = names[pick_name(rng)];
    auto& t = f.params.tensors[name];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.rows()));
    const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.cols()));
    ReformulatorParams pp = f.params, pm = f.params;
    pp.tensors[name](i, j) += h;
    pm.tensors[name](i, j) -= h;
    const double fd = (scalar(pp) - scalar(pm)) / (2 * h);
    const double an = gs.params.at(name)(i, j);
    const double tol = 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(an)});
    CHECK(std::fabs(an - fd) < tol);
    ++checked;
  }

  // input gradients too
  for (int slot = 0; slot <= f.feedback.depth_k; ++slot) {
    Eigen::VectorXd base = slot == 0 ? f.query.vector.to_dense()
                                     : f.docs[static_cast<size_t>(slot - 1)].vector.to_dense();
    for (int i = 0; i < 8; ++i) {
      auto eval_with = [&](double delta) {
        Query q = f.query;
        std::vector<Document> docs = f.docs;
        Eigen::VectorXd v = base;
        v[i] += delta;
        if (slot == 0)
          q.vector = VectorRepr::make_dense(v);
        else
          docs[static_cast<size_t>(slot - 1)].vector = VectorRepr::make_dense(v);
        FeedbackSet fs;
        fs.depth_k = f.feedback.depth_k;
        for (const auto& d : docs) fs.docs.push_back(&d);
        auto r = reformulate(f.params, q, fs);
        return seed.dot(r.vector.to_dense());
      };
      const double fd = (eval_with(h) - eval_with(-h)) / (2 * h);
      CHECK(gs.inputs[static_cast<size_t>(slot)][i] == Catch::Approx(fd).margin(1e-5));
    }
  }
}

TEST_CASE("backward gradients match finite differences, sparse head") {
  Fixture f(VectorKind::sparse, 40, 16, 3, 19);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::VectorXd seed(40);
  for (int i = 0; i < 40; ++i) seed[i] = g(rng);

  auto scalar = [&](const ReformulatorParams& p) {
    auto rq = reformulate(p, f.query, f.feedback);
    return seed.dot(rq.vector.to_dense());
  };
  auto rq = reformulate(f.params, f.query, f.feedback, ForwardMode::training);
  auto gs = reformulator_backward(rq, seed);

  const double h = 1e-5;
  std::vector<std::string> names;
  for (const auto& [name, t] : f.params.tensors) names.push_back(name);
  std::uniform_int_distribution<size_t> pick_name(0, names.size() - 1);
  for (int checked = 0; checked < 80; ++checked) {
    const std::string& name = names[pick_name(rng)];
    auto& t = f.params.tensors[name];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.rows()));
    const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.cols()));
    ReformulatorParams pp = f.params, pm = f.params;
    pp.tensors[name](i, j) += h;
    pm.tensors[name](i, j) -= h;
    const double fd = (scalar(pp) - scalar(pm)) / (2 * h);
    const double an = gs.params.at(name)(i, j);
    const double tol = 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(an)});
    CHECK(std::fabs(an - fd) < tol);
  }
}

TEST_CASE("sparse max-pooled output is invariant to feedback order without positions") {
  Fixture f(VectorKind::sparse, 40, 16, 3, 23);
  f.params.tensors["pos"].setZero();
  auto a = reformulate(f.params, f.query, f.feedback);
  FeedbackSet perm;
  perm.depth_k = 3;
  perm.docs = {f.feedback.docs[2], f.feedback.docs[0], f.feedback.docs[1]};
  auto b = reformulate(f.params, f.query, perm);
  auto av = a.vector.to_dense();
  auto bv = b.vector.to_dense();
  CHECK((av - bv).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rocchio baseline") {
  std::vector<Document> docs;
  docs.push_back({"a", {}, VectorRepr::make_dense(Eigen::Vector2d(0, 2))});
  docs.push_back({"b", {}, VectorRepr::make_dense(Eigen::Vector2d(0, 0))});
  Query q{"q", {}, VectorRepr::make_dense(Eigen::Vector2d(1, 0))};
  FeedbackSet fs;
  fs.depth_k = 2;
  fs.docs = {&docs[0], &docs[1]};

  // beta = 0: original query exactly
  auto r0 = rocchio_reformulate(q, fs, 1.0, 0.0);
  CHECK(r0.vector.dense_values() == Eigen::Vector2d(1, 0));

  // alpha = 0, identical docs: the doc vector
  FeedbackSet same;
  same.depth_k = 2;
  same.docs = {&docs[0], &docs[0]};
  auto r1 = rocchio_reformulate(q, same, 0.0, 1.0);
  CHECK(r1.vector.dense_values().isApprox(Eigen::Vector2d(0, 2)));

  // alpha = beta = 1 hand case
  auto r2 = rocchio_reformulate(q, fs, 1.0, 1.0);
  CHECK(r2.vector.dense_values().isApprox(Eigen::Vector2d(1, 1)));

  // k = 0: alpha * q
  FeedbackSet empty;
  auto r3 = rocchio_reformulate(q, empty, 0.5, 3.0);
  CHECK(r3.vector.dense_values().isApprox(Eigen::Vector2d(0.5, 0)));
  CHECK(r3.tape == nullptr);
}

TEST_CASE("gradient check of the full objective over 200 sampled parameters") {
  // width-16, 1-layer model with 5 feedback vectors; loss = total_loss over
  // two depths with the comparative term active
  Fixture f(VectorKind::dense, 8, 16, 5, 31);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  auto rand_vec = [&] {
    Eigen::VectorXd v(8);
    for (int i = 0; i < 8; ++i) v[i] = g(rng);
    return VectorRepr::make_dense(v);
  };
  const VectorRepr pos = rand_vec();
  std::vector<VectorRepr> negs;
  for (int i = 0; i < 6; ++i) negs.push_back(rand_vec());
  const std::vector<int> K = {2, 5};
  const double lambda = 1.0;

  auto objective = [&](const ReformulatorParams& p) {
    std::map<int, double> values;
    for (int k : K) {
      FeedbackSet fs;
      fs.depth_k = k;
      for (int i = 0; i < k; ++i) fs.docs.push_back(f.feedback.docs[static_cast<size_t>(i)]);
      auto rq = reformulate(p, f.query, fs);
      values[k] = reformulation_loss(rq.vector, pos, negs).value;
    }
    return total_loss(values, lambda).total;
  };

  // analytic gradient
  std::map<int, ReformulationLoss> per_depth;
  std::map<int, RevisedQuery> revised;
  for (int k : K) {
    FeedbackSet fs;
    fs.depth_k = k;
    for (int i = 0; i < k; ++i) fs.docs.push_back(f.feedback.docs[static_cast<size_t>(i)]);
    auto rq = reformulate(f.params, f.query, fs, ForwardMode::training);
    per_depth[k] = reformulation_loss(rq.vector, pos, negs);
    revised.emplace(k, std::move(rq));
  }
  auto q_grads = loss_gradient(per_depth, lambda);
  ParamStore analytic;
  for (const auto& [name, t] : f.params.tensors)
    analytic[name] = Eigen::MatrixXd::Zero(t.rows(), t.cols());
  for (const auto& [k, qg] : q_grads) {
    auto gs = reformulator_backward(revised.at(k), qg);
    for (auto& [name, pg] : gs.params) analytic[name] += pg;
  }

  REQUIRE(per_depth.at(2).value != per_depth.at(5).value);  // non-tie hinge point

  std::vector<std::string> names;
  for (const auto& [name, t] : f.params.tensors) names.push_back(name);
  std::uniform_int_distribution<size_t> pick(0, names.size() - 1);
  const double h = 1e-5;
  for (int checked = 0; checked < 200; ++checked) {
    const std::string& name = names[pick(rng)];
    auto& t = f.params.tensors[name];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.rows()));
    const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(t.cols()));
    ReformulatorParams pp = f.params, pm = f.params;
    pp.tensors[name](i, j) += h;
    pm.tensors[name](i, j) -= h;
    const double fd = (objective(pp) - objective(pm)) / (2 * h);
    const double an = analytic.at(name)(i, j);
    CHECK(std::fabs(an - fd) <= 1e-4 * std::max(1e-3, std::max(std::fabs(an), std::fabs(fd))) +
                                    1e-7);
  }
}
