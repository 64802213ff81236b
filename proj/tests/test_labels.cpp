#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <string>
#include <vector>

#include "exprtree/equation.hpp"
#include "exprtree/labels.hpp"

using namespace exprtree;

namespace {

ExprPtr parse(const std::string& s, ConstantTable& c) { return parse_infix(s, 8, c); }

std::vector<Value> nums(std::initializer_list<int64_t> xs) {
  std::vector<Value> out;
  for (auto x : xs) out.emplace_back(Rational(x));
  return out;
}

}  // namespace

TEST_CASE("two-branch tree compiles to two layers") {
  ConstantTable c;
  auto r = compile_label_sets(parse("N0*N1+N2*N3", c), 6);
  CHECK(!r.overflowed);
  REQUIRE(r.layers.size() == 2);
  REQUIRE(r.layers[0].triples.size() == 6);
  CHECK(r.layers[0].triples[0] ==
        ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)));
  CHECK(r.layers[0].triples[1] ==
        ExpressionTriple::of(Operand::number(2), Op::Mul, Operand::number(3)));
  for (int i = 2; i < 6; ++i) CHECK(r.layers[0].triples[i].is_padding());
  CHECK(r.layers[0].valid_count() == 2);

  CHECK(r.layers[1].triples[0] ==
        ExpressionTriple::of(Operand::result(0), Op::Add, Operand::result(1)));
  CHECK(r.layers[1].valid_count() == 1);
  CHECK(r.layers[0].layer_index == 0);
  CHECK(r.layers[1].layer_index == 1);
}

TEST_CASE("single expression compiles to one layer") {
  ConstantTable c;
  auto r = compile_label_sets(parse("N0+N1", c), 6);
  REQUIRE(r.layers.size() == 1);
  CHECK(r.layers[0].triples[0] ==
        ExpressionTriple::of(Operand::number(0), Op::Add, Operand::number(1)));
  CHECK(r.layers[0].valid_count() == 1);
}

TEST_CASE("chain compiles depth-first into sequential layers") {
  ConstantTable c;
  auto r = compile_label_sets(parse("(N0-N1)/N2", c), 6);
  REQUIRE(r.layers.size() == 2);
  CHECK(r.layers[0].triples[0] ==
        ExpressionTriple::of(Operand::number(0), Op::Sub, Operand::number(1)));
  CHECK(r.layers[1].triples[0] ==
        ExpressionTriple::of(Operand::result(0), Op::Div, Operand::number(2)));
}

TEST_CASE("K=1 defers extra ready nodes and flags overflow") {
  ConstantTable c;
  auto r = compile_label_sets(parse("N0*N1+N2*N3", c), 1);
  CHECK(r.overflowed);
  REQUIRE(r.layers.size() == 3);
  CHECK(r.layers[0].triples[0] ==
        ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)));
  CHECK(r.layers[1].triples[0] ==
        ExpressionTriple::of(Operand::number(2), Op::Mul, Operand::number(3)));
  CHECK(r.layers[2].triples[0] ==
        ExpressionTriple::of(Operand::result(0), Op::Add, Operand::result(1)));
  // deferred schedule still replays to the same value
  auto vals = replay_label_sets(r.layers, nums({50, 5, 60, 4}), c);
  CHECK(vals.back() == Value(Rational(490)));
}

TEST_CASE("shared subtree object compiles as distinct steps") {
  ExprPtr shared = make_node(Op::Add, make_leaf(Operand::number(0)),
                             make_leaf(Operand::number(1)));
  ExprPtr t = make_node(Op::Mul, shared, shared);  // same pointer both sides
  auto r = compile_label_sets(t, 6);
  REQUIRE(r.layers.size() == 2);
  CHECK(r.layers[0].valid_count() == 2);
  CHECK(r.layers[1].triples[0] ==
        ExpressionTriple::of(Operand::result(0), Op::Mul, Operand::result(1)));
  ConstantTable c;
  auto vals = replay_label_sets(r.layers, nums({2, 3}), c);
  CHECK(vals.back() == Value(Rational(25)));
}

TEST_CASE("replay matches evaluate across assorted equations") {
  for (const char* s : {"N0*N1+N2*N3", "(N0-N1)/N2", "N0+N1*N2-N3", "N0^N1+N2",
                        "(N0+N1)*(N2+N3)/N4", "N0-(N1-(N2-N3))"}) {
    ConstantTable c;
    ExprPtr t = parse(s, c);
    auto nums8 = nums({5, 3, 7, 2, 4, 9, 11, 13});
    auto r = compile_label_sets(t, 6);
    CHECK(!r.overflowed);
    CHECK(static_cast<int>(r.layers.size()) == tree_height(t));
    auto vals = replay_label_sets(r.layers, nums8, c);
    CHECK(static_cast<int>(vals.size()) == internal_node_count(t));
    CHECK(vals.back() == evaluate(t, nums8, c));
  }
}

TEST_CASE("result indices are global across layers") {
  ConstantTable c;
  // ((N0+N1)*(N2+N3)) + (N4+N5): three ready at layer 0 with K=2 -> deferral
  ExprPtr t = parse("(N0+N1)*(N2+N3)+(N4+N5)", c);
  auto r = compile_label_sets(t, 2);
  CHECK(r.overflowed);
  auto vals = replay_label_sets(r.layers, nums({1, 2, 3, 4, 5, 6}), c);
  CHECK(vals.back() == Value(Rational(32)));
}

TEST_CASE("step_stats oracles") {
  ConstantTable c;
  StepStats a = step_stats(parse("N0*N1+N2*N3", c), 6);
  CHECK(a.seq2seq_steps == 7);
  CHECK(a.seq2tree_steps == 7);
  CHECK(a.seq2exp_steps == 3);
  CHECK(a.exprtree_steps == 2);

  StepStats b = step_stats(parse("N0+N1", c), 6);
  CHECK(b.seq2seq_steps == 3);
  CHECK(b.seq2tree_steps == 3);
  CHECK(b.seq2exp_steps == 1);
  CHECK(b.exprtree_steps == 1);

  StepStats d = step_stats(parse("(N0-N1)/N2", c), 6);
  CHECK(d.seq2seq_steps == 7);
  CHECK(d.seq2tree_steps == 5);
  CHECK(d.seq2exp_steps == 2);
  CHECK(d.exprtree_steps == 2);
}

TEST_CASE("corpus report aggregates and orders methods") {
  ConstantTable c;
  std::vector<ExprPtr> corpus = {parse("N0*N1+N2*N3", c), parse("(N0-N1)/N2", c)};
  auto rows = corpus_step_report(corpus, 6);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "seq2seq");
  CHECK(rows[1].method == "seq2tree");
  CHECK(rows[2].method == "seq2exp");
  CHECK(rows[3].method == "exprtree");
  CHECK(rows[3].avg == doctest::Approx(2.0));
  CHECK(rows[0].avg == doctest::Approx(7.0));
}

TEST_CASE("corpus report exact numbers for a tree+single corpus") {
  ConstantTable c;
  std::vector<ExprPtr> corpus = {parse("N0*N1+N2*N3", c), parse("N0+N1", c)};
  auto rows = corpus_step_report(corpus, 6);
  CHECK(rows[3].avg == doctest::Approx(1.5));  // layers: 2 and 1
  CHECK(rows[2].avg == doctest::Approx(2.0));  // expressions: 3 and 1
  CHECK(rows[0].max == 7);
  // singleton corpus: all stds zero
  auto one = corpus_step_report({parse("N0+N1", c)}, 6);
  for (const auto& row : one) CHECK(row.stddev == 0.0);
}

TEST_CASE("csv has header and one row per method") {
  ConstantTable c;
  auto rows = corpus_step_report({parse("N0+N1", c)}, 6);
  std::string csv = step_report_csv(rows);
  CHECK(csv.find("method,avg,std,max") == 0);
  size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 5);  // header + 4 methods
  CHECK(csv.find("seq2seq,") != std::string::npos);
  CHECK(csv.find("exprtree,") != std::string::npos);
}
