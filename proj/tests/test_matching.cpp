#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "exprtree/errors.hpp"
#include "exprtree/matching.hpp"
#include "testutil.hpp"

using namespace exprtree;
using testutil::uniform;

namespace {

// log-probability rows that put `mass` on `hot` and spread the rest
Tensor peaked(int n, int hot, double mass = 0.97) {
  std::vector<double> p(n, (1.0 - mass) / (n - 1));
  p[hot] = mass;
  for (double& x : p) x = std::log(x);
  return Tensor::from(p, 1, n);
}

Tensor uniform_log(int n) {
  return Tensor::from(std::vector<double>(n, std::log(1.0 / n)), 1, n);
}

QueryPrediction make_pred(int ops, int vocab, int op_hot, int l_hot, int r_hot) {
  return {peaked(ops, op_hot), peaked(vocab, l_hot), peaked(vocab, r_hot)};
}

PredictionSet uniform_preds(int k, int n_numbers, int n_constants) {
  PredictionSet ps;
  ps.n_numbers = n_numbers;
  ps.n_constants = n_constants;
  int v = n_numbers + n_constants;
  for (int i = 0; i < k; ++i)
    ps.queries.push_back({uniform_log(6), uniform_log(v), uniform_log(v)});
  return ps;
}

std::pair<double, std::vector<int>> brute_force(const std::vector<std::vector<double>>& cost) {
  int n = static_cast<int>(cost.size());
  std::vector<int> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = 0;
  bool first = true;
  do {
    double c = 0;
    for (int i = 0; i < n; ++i) c += cost[i][perm[i]];
    if (first || c < best_cost) {
      best_cost = c;
      best = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_cost, best};
}

}  // namespace

TEST_CASE("hungarian oracles") {
  CHECK(hungarian({{0, 1}, {1, 0}}) == std::vector<int>{0, 1});
  CHECK(hungarian({{5.0}}) == std::vector<int>{0});
  std::vector<std::vector<double>> m = {{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  auto beta = hungarian(m);
  CHECK(beta == std::vector<int>{1, 0, 2});
  CHECK(assignment_cost(m, beta) == 5.0);
}

TEST_CASE("hungarian ties break to the lexicographically smallest assignment") {
  // all-equal costs: identity is the smallest of the 6 optimal assignments
  std::vector<std::vector<double>> flat(3, std::vector<double>(3, 1.0));
  CHECK(hungarian(flat) == std::vector<int>{0, 1, 2});
  // two optima: (0,1) and (1,0) both cost 2 -> pick (0,1)
  std::vector<std::vector<double>> two = {{1, 1}, {1, 1}};
  CHECK(hungarian(two) == std::vector<int>{0, 1});
  std::vector<std::vector<double>> mixed = {{0, 0, 5}, {0, 0, 5}, {5, 5, 0}};
  CHECK(hungarian(mixed) == std::vector<int>{0, 1, 2});
}

TEST_CASE("hungarian equals brute force on random matrices") {
  std::mt19937_64 rng(2024);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 60; ++trial) {
      std::vector<std::vector<double>> cost(n, std::vector<double>(n));
      for (auto& row : cost)
        for (double& x : row) x = uniform(rng, -5, 5);
      auto [want, want_beta] = brute_force(cost);
      auto beta = hungarian(cost);
      CHECK(assignment_cost(cost, beta) == want);
      CHECK(beta == want_beta);
    }
  }
}

TEST_CASE("hungarian rejects bad input") {
  CHECK(hungarian({}).empty());  // trivial bijection
  CHECK_THROWS_AS(hungarian({{1, 2}}), Error);  // not square
  double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian({{inf, 1}, {1, 0}}), Error);
}

TEST_CASE("match_cost oracles") {
  // one-hot correct prediction: cost -3
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(1))};
  QueryPrediction exact{peaked(6, 0, 1.0 - 1e-15), peaked(5, 0, 1.0 - 1e-15),
                        peaked(5, 1, 1.0 - 1e-15)};
  CHECK(match_cost(gold.triples[0], exact, 2, 3) == doctest::Approx(-3.0).epsilon(1e-9));

  // gold None: cost 0 regardless of prediction
  CHECK(match_cost(ExpressionTriple::padding(), exact, 2, 3) == 0.0);

  // uniform distributions over |V_n|=5 and 6 ops: -(1/6 + 1/5 + 1/5)
  QueryPrediction unif{uniform_log(6), uniform_log(5), uniform_log(5)};
  CHECK(match_cost(gold.triples[0], unif, 2, 3) ==
        doctest::Approx(-(1.0 / 6 + 1.0 / 5 + 1.0 / 5)).epsilon(1e-12));
  CHECK(match_cost(gold.triples[0], unif, 2, 3) == doctest::Approx(-0.5667).epsilon(1e-3));
}

TEST_CASE("build_cost_matrix is rows=gold, cols=pred") {
  LabelSet gold;
  gold.layer_index = 0;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)),
                  ExpressionTriple::padding()};
  PredictionSet ps;
  ps.n_numbers = 2;
  ps.n_constants = 3;
  ps.queries = {make_pred(6, 5, 2, 0, 1), make_pred(6, 5, 0, 3, 3)};
  auto m = build_cost_matrix(gold, ps);
  REQUIRE(m.size() == 2);
  REQUIRE(m[0].size() == 2);
  CHECK(m[1][0] == 0.0);  // None row
  CHECK(m[1][1] == 0.0);
  CHECK(m[0][0] < m[0][1]);  // query 0 predicts Mul(N0,N1) with high prob
}

TEST_CASE("set_loss is zero for one-hot correct predictions") {
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)),
                  ExpressionTriple::padding()};
  PredictionSet ps;
  ps.n_numbers = 2;
  ps.n_constants = 3;
  double tight = 1.0 - 1e-12;
  ps.queries = {
      QueryPrediction{peaked(6, 2, tight), peaked(5, 0, tight), peaked(5, 1, tight)},
      QueryPrediction{peaked(6, kNoneOpIndex, tight), uniform_log(5), uniform_log(5)}};
  LossPolicy policy;
  Tensor loss = set_loss(gold, ps, policy);
  CHECK(loss.value() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("None rows contribute only the operator term under defaults") {
  LabelSet gold;
  gold.triples = {ExpressionTriple::padding(), ExpressionTriple::padding()};
  PredictionSet ps = uniform_preds(2, 2, 3);
  LossPolicy policy;  // operator_none_loss on, operand_none_loss off
  Tensor loss = set_loss(gold, ps, policy);
  // two rows, each -log(1/6) for the operator, nothing else
  CHECK(loss.value() == doctest::Approx(2 * std::log(6.0)).epsilon(1e-12));

  LossPolicy no_none = policy;
  no_none.operator_none_loss = false;
  CHECK(set_loss(gold, ps, no_none).value() == doctest::Approx(0.0));
}

TEST_CASE("operand_none_loss adds pad-class terms on None rows") {
  LabelSet gold;
  gold.triples = {ExpressionTriple::padding()};
  PredictionSet ps;
  ps.n_numbers = 2;
  ps.n_constants = 3;
  ps.has_pad = true;  // vocab widened to 6, pad is the last column
  ps.queries = {QueryPrediction{uniform_log(6), uniform_log(6), uniform_log(6)}};
  LossPolicy policy;
  policy.operand_none_loss = true;
  Tensor loss = set_loss(gold, ps, policy);
  CHECK(loss.value() == doctest::Approx(3 * std::log(6.0)).epsilon(1e-12));

  // valid gold rows never use the pad column
  LabelSet g2;
  g2.triples = {ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(1))};
  Tensor l2 = set_loss(g2, ps, policy);
  CHECK(l2.value() == doctest::Approx(3 * std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("bipartite loss is permutation invariant, sequence loss is not") {
  std::mt19937_64 rng(77);
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)),
                  ExpressionTriple::of(Operand::number(2), Op::Mul, Operand::number(3)),
                  ExpressionTriple::padding()};
  PredictionSet ps;
  ps.n_numbers = 4;
  ps.n_constants = 1;
  // query 0 likes the SECOND gold expression, query 1 the first
  ps.queries = {make_pred(6, 5, 2, 2, 3), make_pred(6, 5, 2, 0, 1),
                make_pred(6, kNoneOpIndex, 1, 4, 4)};

  LossPolicy bi;
  std::vector<int> beta;
  double l1 = set_loss(gold, ps, bi, nullptr, &beta).value();
  CHECK(beta == std::vector<int>{1, 0, 2});

  PredictionSet shuffled = ps;
  std::swap(shuffled.queries[0], shuffled.queries[1]);
  double l2 = set_loss(gold, shuffled, bi).value();
  CHECK(std::fabs(l1 - l2) <= 1e-12);

  LossPolicy seq;
  seq.matching = MatchingMode::Sequence;
  double s1 = set_loss(gold, ps, seq).value();
  double s2 = set_loss(gold, shuffled, seq).value();
  CHECK(std::fabs(s1 - s2) > 1e-6);
  CHECK(s2 < s1);  // aligned order scores better
  CHECK(l1 == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("random matching needs an rng and stays within bounds") {
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(1)),
                  ExpressionTriple::padding()};
  PredictionSet ps = uniform_preds(2, 2, 3);
  LossPolicy rnd;
  rnd.matching = MatchingMode::Random;
  CHECK_THROWS_AS((void)set_loss(gold, ps, rnd), Error);
  std::mt19937_64 rng(5);
  std::vector<int> beta;
  Tensor loss = set_loss(gold, ps, rnd, &rng, &beta);
  CHECK(std::isfinite(loss.value()));
  std::vector<int> sorted = beta;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1});
}

TEST_CASE("set_loss validates inputs") {
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(3))};
  PredictionSet ps = uniform_preds(1, 2, 1);  // vocab 3: N3 out of range
  LossPolicy policy;
  CHECK_THROWS_AS((void)set_loss(gold, ps, policy), Error);

  LabelSet two;
  two.triples = {ExpressionTriple::padding(), ExpressionTriple::padding()};
  CHECK_THROWS_AS((void)set_loss(two, uniform_preds(3, 2, 1), policy), Error);  // K mismatch
}

TEST_CASE("gradients flow through the matched terms only") {
  Tape tape;
  auto tracked_log = [&](std::vector<double> logits, int n) {
    Tensor t = testutil::leaf(tape, std::move(logits), 1, n);
    return log_softmax_rows(t);
  };
  LabelSet gold;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(1))};
  PredictionSet ps;
  ps.n_numbers = 2;
  ps.n_constants = 0;
  ps.queries = {QueryPrediction{tracked_log({0.5, 0.1, 0, 0, 0, 0.2}, 6),
                                tracked_log({0.3, -0.1}, 2), tracked_log({0, 0.4}, 2)}};
  LossPolicy policy;
  Tensor loss = set_loss(gold, ps, policy);
  CHECK(loss.tracked());
  tape.backward(loss);  // just must not throw
}

TEST_CASE("total_loss sums layers") {
  Tensor a = Tensor::scalar(1.25), b = Tensor::scalar(2.5);
  CHECK(total_loss({a}).value() == 1.25);
  CHECK(total_loss({a, a}).value() == 2.5);
  CHECK(total_loss({a, b, a}).value() == doctest::Approx(5.0));
  CHECK_THROWS_AS((void)total_loss({}), Error);
}

TEST_CASE("mode names round-trip") {
  CHECK(matching_mode_from_name("bipartite") == MatchingMode::Bipartite);
  CHECK(matching_mode_from_name("sequence") == MatchingMode::Sequence);
  CHECK(matching_mode_from_name("random") == MatchingMode::Random);
  CHECK(matching_mode_name(MatchingMode::Bipartite) == std::string("bipartite"));
  CHECK_THROWS_AS(matching_mode_from_name("hungarian"), Error);
}
