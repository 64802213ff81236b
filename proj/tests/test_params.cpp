#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "exprtree/errors.hpp"
#include "exprtree/gradcheck.hpp"
#include "exprtree/params.hpp"
#include "exprtree/tensor.hpp"

using namespace exprtree;

namespace {
std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("initialization is deterministic per seed and creation order") {
  ParamStore a(7), b(7), c(8);
  a.weight("w", 4, 3);
  a.embedding("e", 5, 3);
  b.weight("w", 4, 3);
  b.embedding("e", 5, 3);
  c.weight("w", 4, 3);
  c.embedding("e", 5, 3);
  CHECK(a.value(0) == b.value(0));
  CHECK(a.value(1) == b.value(1));
  CHECK(a.value(0) != c.value(0));

  // ranges: weight +-1/sqrt(d_in), bias zero, gain one
  ParamStore s(1);
  s.weight("w", 16, 8);
  for (double v : s.value(0)) CHECK(std::fabs(v) <= 0.25);
  s.bias("b", 8);
  for (double v : s.value(1)) CHECK(v == 0.0);
  s.ln_gain("g", 8);
  for (double v : s.value(2)) CHECK(v == 1.0);
}

TEST_CASE("duplicate or missing names throw") {
  ParamStore s(1);
  s.weight("w", 2, 2);
  CHECK_THROWS_AS(s.weight("w", 2, 2), Error);
  CHECK_THROWS_AS(s.use("nope"), Error);
  CHECK(s.has("w"));
  CHECK(!s.has("nope"));
}

TEST_CASE("bind routes gradients into the store") {
  ParamStore s(3);
  s.weight("w", 2, 2);
  Tape tape;
  s.bind(tape);
  Tensor w = s.use("w");
  CHECK(w.tracked());
  Tensor loss = sum_all(mul(w, w));
  tape.backward(loss);
  s.collect_grads();
  s.unbind();
  for (int i = 0; i < 4; ++i)
    CHECK(s.grad(0)[i] == doctest::Approx(2 * s.value(0)[i]).epsilon(1e-12));
  CHECK(s.grad_norm() > 0);
  s.zero_grads();
  CHECK(s.grad_norm() == 0);

  // unbound use() returns untracked values
  Tensor w2 = s.use("w");
  CHECK(!w2.tracked());
}

TEST_CASE("snapshot and restore round-trip values") {
  ParamStore s(5);
  s.weight("w", 3, 3);
  auto snap = s.snapshot();
  double orig = s.value(0)[0];
  s.value(0)[0] = 123.0;
  s.restore(snap);
  CHECK(s.value(0)[0] == orig);
}

TEST_CASE("checkpoint round-trips bytes and values") {
  std::string path = tmp_path("exprtree_params_rt.ckpt");
  ParamStore a(11);
  a.weight("alpha", 4, 2);
  a.embedding("beta", 3, 5);
  a.bias("gamma", 6);
  a.save(path);

  ParamStore b(99);  // different seed: values must come from the file
  b.weight("alpha", 4, 2);
  b.embedding("beta", 3, 5);
  b.bias("gamma", 6);
  b.load(path);
  for (int i = 0; i < a.count(); ++i) CHECK(a.value(i) == b.value(i));

  // byte determinism: saving the loaded store reproduces the file
  std::string path2 = tmp_path("exprtree_params_rt2.ckpt");
  b.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(s1.substr(0, 8) == "XTREECKP");
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("load rejects mismatched stores") {
  std::string path = tmp_path("exprtree_params_mm.ckpt");
  ParamStore a(1);
  a.weight("w", 2, 2);
  a.save(path);

  ParamStore wrong_shape(1);
  wrong_shape.weight("w", 2, 3);
  CHECK_THROWS_AS(wrong_shape.load(path), Error);

  ParamStore wrong_name(1);
  wrong_name.weight("v", 2, 2);
  CHECK_THROWS_AS(wrong_name.load(path), Error);

  ParamStore wrong_count(1);
  wrong_count.weight("w", 2, 2);
  wrong_count.weight("extra", 1, 1);
  CHECK_THROWS_AS(wrong_count.load(path), Error);

  ParamStore ok(2);
  ok.weight("w", 2, 2);
  CHECK_NOTHROW(ok.load(path));
  CHECK_THROWS_AS(ok.load(tmp_path("exprtree_params_nofile.ckpt")), Error);
  std::remove(path.c_str());
}

TEST_CASE("grad_check is exact on a quadratic") {
  ParamStore s(21);
  s.weight("w", 3, 3);
  auto loss_fn = [&s](Tape*) { return sum_all(mul(s.use("w"), s.use("w"))); };
  auto rep = grad_check(s, loss_fn, 9, 1e-5);
  CHECK(rep.checked == 9);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad_check on softmax cross-entropy") {
  ParamStore s(22);
  s.weight("w", 4, 3);
  s.bias("b", 3);
  Tensor x = Tensor::from({0.3, -0.2, 0.7, 0.1}, 1, 4);
  auto loss_fn = [&](Tape*) {
    Tensor logits = add_rowvec(matmul(x, s.use("w")), s.use("b"));
    return scale(pick(log_softmax_rows(logits), 0, 1), -1.0);
  };
  auto rep = grad_check(s, loss_fn, 6, 1e-5);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad_check covers every entry of small params") {
  ParamStore s(23);
  s.bias("b", 2);
  // loss = sum(b^2): FD on both entries
  auto rep = grad_check(s, [&s](Tape*) { return sum_all(mul(s.use("b"), s.use("b"))); }, 10);
  CHECK(rep.checked == 2);
}
