#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "clvqa/errors.hpp"
#include "clvqa/gradcheck.hpp"
#include "clvqa/graph.hpp"
#include "clvqa/optim.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace clvqa;
using testing::random_tensor;

namespace {

// independent oracle: brute-force triple loop
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and annihilation") {
  Graph g;
  const NodeId eye = g.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const NodeId m = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor& prod = g.value(g.matmul(eye, m));
  CHECK(prod.data == std::vector<double>{1, 2, 3, 4});

  Graph g2;
  const NodeId a = g2.leaf(Tensor({2, 2}, {1, 0, 0, 0}));
  const NodeId b = g2.leaf(Tensor({2, 2}, {0, 0, 0, 1}));
  for (double v : g2.value(g2.matmul(a, b)).data) CHECK(v == 0.0);
}

TEST_CASE("matmul matches the brute-force triple loop on random shapes") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 1 + rng.index(5), k = 1 + rng.index(5), n = 1 + rng.index(5);
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    Graph g;
    const Tensor& got = g.value(g.matmul(g.leaf(a), g.leaf(b)));
    const Tensor want = matmul_oracle(a, b);
    for (std::size_t i = 0; i < want.numel(); ++i) {
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul dimension error names both shapes") {
  Graph g;
  const NodeId a = g.leaf(Tensor({2, 3}));
  const NodeId b = g.leaf(Tensor({2, 3}));
  CHECK_THROWS_WITH_AS(g.matmul(a, b),
                       "matmul: inner dimensions disagree: [2x3] vs [2x3]", contract_error);
}

TEST_CASE("softmax_temp basics") {
  Graph g;
  const NodeId z = g.leaf(Tensor({1, 2}, {0.0, 0.0}));
  const Tensor& p = g.value(g.softmax_temp(z, 3.7));
  CHECK(p.data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data[1] == doctest::Approx(0.5).epsilon(1e-12));

  // scalar hand computation: softmax([2,0]/2) = softmax([1,0]) = [e/(1+e), 1/(1+e)]
  Graph g2;
  const Tensor& q = g2.value(g2.softmax_temp(g2.leaf(Tensor({1, 2}, {2.0, 0.0})), 2.0));
  const double e = std::exp(1.0);
  CHECK(q.data[0] == doctest::Approx(e / (1 + e)).epsilon(1e-9));
  CHECK(q.data[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(q.data[1] == doctest::Approx(0.2689).epsilon(1e-4));

  // large temperature flattens toward uniform
  Graph g3;
  const Tensor& u = g3.value(g3.softmax_temp(g3.leaf(Tensor({1, 3}, {5.0, 1.0, 1.0})), 100.0));
  const double mx = *std::max_element(u.data.begin(), u.data.end());
  const double mn = *std::min_element(u.data.begin(), u.data.end());
  CHECK(mx - mn < 0.05);

  Graph g4;
  CHECK_THROWS_AS(g4.softmax_temp(g4.leaf(Tensor({1, 2})), 0.0), contract_error);
  CHECK_THROWS_AS(g4.softmax_temp(g4.leaf(Tensor({1, 2})), -1.0), contract_error);
}

TEST_CASE("softmax_temp rows sum to one and stay positive") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 1 + rng.index(4), k = 1 + rng.index(6);
    const Tensor z = random_tensor({rows, k}, rng, -30.0, 30.0);
    Graph g;
    const Tensor& p = g.value(g.softmax_temp(g.leaf(z), 0.5 + rng.uniform() * 3));
    for (int r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        CHECK(p.at(r, j) > 0.0);
        sum += p.at(r, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("gather rows and additive scatter") {
  Rng rng(3);
  const Tensor table = random_tensor({5, 3}, rng);

  Graph g;
  const NodeId t = g.leaf(table);
  const Tensor& first = g.value(g.gather_rows(t, {0}));
  for (int j = 0; j < 3; ++j) CHECK(first.at(0, j) == table.at(0, j));

  // duplicated id accumulates gradient additively into the shared row
  Graph g3;
  const NodeId t3 = g3.leaf(table);
  const NodeId rows3 = g3.gather_rows(t3, {2, 2});
  Tensor zero({2, 3}, 0.0);
  const NodeId target = g3.constant(zero);
  const NodeId mse = g3.masked_mse(rows3, target, {1.0, 1.0});
  g3.backward(mse);
  const Tensor& gt = g3.grad(t3);
  for (int j = 0; j < 3; ++j) {
    // d/dx of mean((x)^2) over 2x3 entries, row gathered twice: 2 * 2x/(6)
    const double expect = 2.0 * 2.0 * table.at(2, j) / 6.0;
    CHECK(gt.at(2, j) == doctest::Approx(expect).epsilon(1e-12));
  }

  // out-of-range id names the offender
  Graph g4;
  const NodeId t4 = g4.leaf(table);
  CHECK_THROWS_WITH_AS(g4.gather_rows(t4, {7}), "gather_rows: id 7 out of range [0,5)",
                       contract_error);

  // random gather matches a naive copy loop
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(rng.index(5));
    Graph g5;
    const Tensor& got = g5.value(g5.gather_rows(g5.leaf(table), ids));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (int j = 0; j < 3; ++j) CHECK(got.at(static_cast<int>(i), j) == table.at(ids[i], j));
    }
  }
}

TEST_CASE("masked cross entropy values") {
  // saturated correct prediction
  Graph g;
  Tensor z({1, 3}, {30.0, 0.0, 0.0});
  const double loss = g.value(g.masked_cross_entropy(g.leaf(z), {0}, {1.0})).data[0];
  CHECK(loss < 1e-9);

  // uniform logits over K=4
  Graph g2;
  Tensor u({2, 4}, 0.0);
  const double l2 = g2.value(g2.masked_cross_entropy(g2.leaf(u), {1, 3}, {1.0, 1.0})).data[0];
  CHECK(l2 == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // mixed mask equals a per-token loop oracle
  Rng rng(11);
  const Tensor logits = random_tensor({6, 5}, rng, -2.0, 2.0);
  const std::vector<int> targets = {1, 4, 0, 2, 3, 2};
  const std::vector<double> mask = {1, 0, 1, 1, 0, 1};
  Graph g3;
  const double got =
      g3.value(g3.masked_cross_entropy(g3.leaf(logits), targets, mask)).data[0];
  double want = 0.0;
  int m = 0;
  for (int r = 0; r < 6; ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0.0) continue;
    ++m;
    double denom = 0.0, mx = -1e300;
    for (int j = 0; j < 5; ++j) mx = std::max(mx, logits.at(r, j));
    for (int j = 0; j < 5; ++j) denom += std::exp(logits.at(r, j) - mx);
    want += -(logits.at(r, targets[static_cast<std::size_t>(r)]) - mx - std::log(denom));
  }
  want /= m;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // degenerate batch
  Graph g4;
  CHECK_THROWS_AS(g4.masked_cross_entropy(g4.leaf(logits), targets, {0, 0, 0, 0, 0, 0}),
                  contract_error);
}

TEST_CASE("masked cross entropy ignores logits at masked positions") {
  Rng rng(13);
  Tensor logits = random_tensor({4, 3}, rng);
  const std::vector<int> targets = {0, 1, 2, 0};
  const std::vector<double> mask = {1, 0, 1, 0};
  Graph g;
  const double base = g.value(g.masked_cross_entropy(g.leaf(logits), targets, mask)).data[0];
  logits.at(1, 0) = 99.0;
  logits.at(3, 2) = -99.0;
  Graph g2;
  const double perturbed =
      g2.value(g2.masked_cross_entropy(g2.leaf(logits), targets, mask)).data[0];
  CHECK(base == perturbed);
}

TEST_CASE("backward of x*x at x=3 is 6") {
  Graph g;
  Tensor x({1, 1}, {3.0}, true);
  const NodeId leaf = g.leaf(x);
  const NodeId square = g.matmul(leaf, leaf);
  g.backward(square);
  CHECK(g.grad(leaf).data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar root and runs once") {
  Graph g;
  const NodeId a = g.leaf(Tensor({2, 2}, 1.0, true));
  const NodeId b = g.leaf(Tensor({2, 2}, 2.0, true));
  const NodeId sum = g.add(a, b);
  CHECK_THROWS_AS(g.backward(sum), contract_error);
}

TEST_CASE("constant inputs get no gradient buffer") {
  Graph g;
  Tensor c({2, 2}, 1.5, false);
  Tensor x({2, 2}, 0.5, true);
  const NodeId cn = g.leaf(c);
  const NodeId xn = g.leaf(x);
  const NodeId mse = g.masked_mse(xn, cn, {1.0, 1.0});
  g.backward(mse);
  CHECK(g.has_grad(xn));
  CHECK_FALSE(g.has_grad(cn));
}

TEST_CASE("backward is deterministic") {
  Rng rng(5);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  auto run = [&]() {
    Graph g;
    const NodeId an = g.leaf(a);
    const NodeId bn = g.leaf(b);
    const NodeId prod = g.matmul(an, bn);
    const NodeId soft = g.softmax_temp(prod, 2.0);
    const NodeId loss = g.masked_cross_entropy(soft, {0, 1, 0}, {1, 1, 1});
    g.backward(loss);
    return std::make_pair(g.grad(an).data, g.grad(bn).data);
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);    // bit-identical
  CHECK(first.second == second.second);
}

TEST_CASE("gradient check: every op against central finite differences") {
  Rng rng(99);

  SUBCASE("matmul chain with softmax and cross entropy") {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 5}, rng);
    const auto report = grad_check(
        [](Graph& g, const std::vector<NodeId>& in) {
          const NodeId z = g.matmul(in[0], in[1]);
          const NodeId p = g.softmax_temp(z, 2.0);
          // route through another differentiable op to keep the chain deep
          return g.masked_mse(p, g.constant(Tensor({3, 5}, 0.1)), {1, 1, 1});
        },
        {a, b});
    CHECK(report.ok);
    CHECK(report.max_rel_err < 1e-4);
  }

  SUBCASE("gather, mean, concat, repeat, tanh, rowvec") {
    const Tensor table = random_tensor({6, 3}, rng);
    const Tensor w = random_tensor({6, 4}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const auto report = grad_check(
        [](Graph& g, const std::vector<NodeId>& in) {
          const NodeId rows = g.gather_rows(in[0], {0, 2, 2, 5});
          const NodeId mean = g.masked_mean_rows(rows, {1, 1, 0, 1});
          const NodeId rep = g.repeat_row(mean, 2);
          const NodeId cat = g.concat_cols(rep, rep);
          const NodeId h = g.tanh(g.add_rowvec(g.matmul(cat, in[1]), in[2]));
          return g.masked_cross_entropy(h, {1, 3}, {1, 1});
        },
        {table, w, bias});
    CHECK(report.ok);
  }

  SUBCASE("concat_rows and add") {
    const Tensor a = random_tensor({2, 3}, rng);
    const Tensor b = random_tensor({1, 3}, rng);
    const Tensor c = random_tensor({3, 3}, rng);
    const auto report = grad_check(
        [](Graph& g, const std::vector<NodeId>& in) {
          const NodeId cat = g.concat_rows({in[0], in[1]});
          const NodeId sum = g.add(cat, g.scale(in[2], 0.5));
          return g.masked_mse(sum, g.constant(Tensor({3, 3}, 0.2)), {1, 0, 1});
        },
        {a, b, c});
    CHECK(report.ok);
  }

  SUBCASE("replay blend") {
    const Tensor z = random_tensor({4, 5}, rng);
    Tensor teacher = random_tensor({4, 5}, rng, -1.0, 1.0, false);
    // turn the teacher rows into distributions
    for (int r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int j = 0; j < 5; ++j) {
        teacher.at(r, j) = std::exp(teacher.at(r, j));
        sum += teacher.at(r, j);
      }
      for (int j = 0; j < 5; ++j) teacher.at(r, j) /= sum;
    }
    const std::vector<int> targets = {1, 0, 4, 2};
    const std::vector<double> mask = {1, 1, 0, 1};
    const std::vector<double> alphas = {0.0, 0.35, 0.7, 0.5};
    const auto report = grad_check(
        [&](Graph& g, const std::vector<NodeId>& in) {
          return g.replay_blend(in[0], teacher, targets, mask, alphas, 2.0);
        },
        {z});
    CHECK(report.ok);
  }
}

TEST_CASE("adamw steps") {
  SUBCASE("zero gradient, zero weight decay leaves parameters unchanged") {
    ParameterStore params;
    params.add("w", Tensor({2, 2}, {1, 2, 3, 4}, true));
    AdamW opt(AdamWConfig{1e-3, 0.0, 0.9, 0.999, 1e-8});
    opt.step(params, {{"w", Tensor({2, 2}, 0.0)}});
    CHECK(params.get("w").data == std::vector<double>{1, 2, 3, 4});
    CHECK(opt.step_count() == 1);
  }

  SUBCASE("zero gradient with decay scales by (1 - lr*wd)") {
    ParameterStore params;
    params.add("w", Tensor({1, 2}, {2.0, -4.0}, true));
    AdamW opt(AdamWConfig{1e-4, 0.05, 0.9, 0.999, 1e-8});
    opt.step(params, {{"w", Tensor({1, 2}, 0.0)}});
    CHECK(params.get("w").data[0] == doctest::Approx(2.0 * (1 - 1e-4 * 0.05)).epsilon(1e-15));
    CHECK(params.get("w").data[1] == doctest::Approx(-4.0 * (1 - 1e-4 * 0.05)).epsilon(1e-15));
  }

  SUBCASE("single scalar parameter follows the hand recurrence") {
    const double lr = 0.01, wd = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::vector<double> grads = {0.5, -0.2, 0.8, 0.1, -0.9};
    ParameterStore params;
    params.add("w", Tensor({1}, {1.0}, true));
    AdamW opt(AdamWConfig{lr, wd, b1, b2, eps});

    double theta = 1.0, m = 0.0, v = 0.0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      const double gi = grads[t - 1];
      opt.step(params, {{"w", Tensor({1}, {gi})}});
      m = b1 * m + (1 - b1) * gi;
      v = b2 * v + (1 - b2) * gi * gi;
      const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
      const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
      theta -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta);
      CHECK(params.get("w").data[0] == doctest::Approx(theta).epsilon(1e-12));
    }
  }

  SUBCASE("frozen parameters are skipped") {
    ParameterStore params;
    params.add("w", Tensor({1}, {1.0}, true), /*frozen=*/true);
    AdamW opt;
    opt.step(params, {{"w", Tensor({1}, {5.0})}});
    CHECK(params.get("w").data[0] == 1.0);
  }

  SUBCASE("shape mismatch is a contract error") {
    ParameterStore params;
    params.add("w", Tensor({2}, 0.0, true));
    AdamW opt;
    std::map<std::string, Tensor> grads{{"w", Tensor({3}, 0.0)}};
    CHECK_THROWS_AS(opt.step(params, grads), contract_error);
  }
}
