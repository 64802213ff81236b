#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "exprtree/data.hpp"
#include "exprtree/matching.hpp"
#include "exprtree/metrics.hpp"
#include "exprtree/model.hpp"
#include "exprtree/params.hpp"

namespace exprtree {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;  // mean per-instance loss
  double dev_answer_acc = 0;
  double dev_equation_acc = 0;
  double lr = 0;
};

struct TrainConfig {
  double lr = 3e-4;
  double warmup_frac = 0.05;  // linear warmup, constant afterwards
  int batch_size = 16;
  int epochs = 30;
  std::vector<uint64_t> seeds = {1};
  LossPolicy policy;
  ModelConfig model;
  double grad_clip = 1.0;  // global norm; 0 disables
  double weight_decay = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  // Stop once dev answer accuracy reaches this (0 disables).
  double early_stop_dev_acc = 0.0;
  double answer_rel_tol = 1e-4;
  // Progress hook, called after each epoch's dev evaluation.
  std::function<void(uint64_t seed, const EpochStats&)> on_epoch;
};

struct SeedRun {
  uint64_t seed = 0;
  std::vector<EpochStats> curve;
  double best_dev_answer_acc = 0;
  int best_epoch = -1;
  EvalReport final_dev;  // at the best-dev parameters
  std::string checkpoint_path;
};

struct RunReport {
  std::vector<SeedRun> runs;
  double mean_best_dev = 0;
  double std_best_dev = 0;  // population std; 0 for a single seed
};

// Decoupled weight decay Adam. Moments live here; values/grads in the store.
class AdamW {
 public:
  AdamW(ParamStore& store, double beta1, double beta2, double eps,
        double weight_decay);
  void step(double lr);

 private:
  ParamStore* store_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// One training run per seed: teacher-forced forward, per-layer set loss
// summed, gradient averaging over the batch, AdamW with warmup and clipping,
// per-epoch dev evaluation, best-dev checkpointing. When out_dir is non-empty
// writes model-seed<S>.ckpt, model-seed<S>.cfg and curve-seed<S>.csv there.
RunReport train(const TrainConfig& config, const std::vector<ProblemInstance>& train_set,
                const std::vector<ProblemInstance>& dev_set,
                const std::string& out_dir = "");

std::string curve_csv(const SeedRun& run);

struct SweepRow {
  int k = 0;
  double dev_accuracy = 0;
  std::string error;  // non-empty when this cell's training failed
};

// Trains one model per k with the first seed of the base config.
std::vector<SweepRow> sweep_queries(const TrainConfig& base, const std::vector<int>& k_values,
                                    const std::vector<ProblemInstance>& train_set,
                                    const std::vector<ProblemInstance>& dev_set);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace exprtree
