#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "exprtree/data.hpp"
#include "exprtree/equation.hpp"
#include "exprtree/labels.hpp"
#include "exprtree/matching.hpp"
#include "exprtree/model.hpp"
#include "exprtree/tensor.hpp"

using namespace exprtree;

namespace {

std::vector<std::vector<double>> random_cost(int n, std::mt19937_64& rng) {
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (auto& row : cost)
    for (double& c : row) c = (rng() >> 11) * 0x1.0p-53 * 10.0 - 5.0;
  return cost;
}

ProblemInstance bench_instance() {
  return make_instance("bench",
                       {"find", "(", "(", "N0", "times", "N1", ")", "plus", "(",
                        "N2", "times", "N3", ")", ")", "now"},
                       {Rational(50), Rational(5), Rational(60), Rational(4)},
                       "( N0 * N1 ) + ( N2 * N3 )", Value(Rational(490)));
}

Model bench_model(int d, int k) {
  ModelConfig mc;
  mc.d = d;
  mc.k = k;
  mc.n_heads = 4;
  mc.encoder_depth = 2;
  mc.max_layers = 8;
  mc.seed = 7;
  static Vocabulary vocab;
  return Model(mc, vocab);
}

}  // namespace

static void BM_Hungarian(benchmark::State& state) {
  std::mt19937_64 rng(99);
  int n = static_cast<int>(state.range(0));
  std::vector<std::vector<std::vector<double>>> mats;
  for (int i = 0; i < 64; ++i) mats.push_back(random_cost(n, rng));
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hungarian(mats[i++ & 63]));
  }
}
BENCHMARK(BM_Hungarian)->Arg(6)->Arg(16)->Arg(64);

static void BM_CompileLabels(benchmark::State& state) {
  auto inst = bench_instance();
  for (auto _ : state) {
    benchmark::DoNotOptimize(compile_label_sets(inst.tree, 6));
  }
}
BENCHMARK(BM_CompileLabels);

static void BM_MatMul(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::vector<double> a(n * n), b(n * n);
  for (double& x : a) x = (rng() >> 11) * 0x1.0p-53;
  for (double& x : b) x = (rng() >> 11) * 0x1.0p-53;
  Tensor ta = Tensor::from(a, n, n);
  Tensor tb = Tensor::from(b, n, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(ta, tb));
  }
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(128);

static void BM_ForwardTrain(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  Model model = bench_model(d, 6);
  auto inst = bench_instance();
  auto labels = compile_label_sets(inst.tree, 6);
  LossPolicy policy;
  for (auto _ : state) {
    Tape tape;
    model.params().bind(tape);
    auto fwd = model.forward_train(inst, labels.layers);
    std::vector<Tensor> losses;
    for (size_t l = 0; l < labels.layers.size(); ++l)
      losses.push_back(set_loss(labels.layers[l], fwd.layers[l], policy));
    Tensor loss = total_loss(losses);
    tape.backward(loss);
    model.params().collect_grads();
    model.params().unbind();
    benchmark::DoNotOptimize(loss.value());
  }
}
BENCHMARK(BM_ForwardTrain)->Arg(32)->Arg(64);

static void BM_Infer(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  Model model = bench_model(d, 6);
  auto inst = bench_instance();
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.infer(inst));
  }
}
BENCHMARK(BM_Infer)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
