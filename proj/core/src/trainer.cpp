#include "exprtree/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "exprtree/config.hpp"
#include "exprtree/errors.hpp"
#include "exprtree/labels.hpp"

namespace exprtree {

AdamW::AdamW(ParamStore& store, double beta1, double beta2, double eps,
             double weight_decay)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
  m_.resize(store.count());
  v_.resize(store.count());
  for (int i = 0; i < store.count(); ++i) {
    m_[i].assign(store.value(i).size(), 0.0);
    v_[i].assign(store.value(i).size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int p = 0; p < store_->count(); ++p) {
    auto& w = store_->value(p);
    auto& g = store_->grad(p);
    auto& m = m_[p];
    auto& v = v_[p];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[i]);
    }
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

SeedRun train_one_seed(const TrainConfig& config, uint64_t seed,
                       const std::vector<ProblemInstance>& train_set,
                       const std::vector<ProblemInstance>& dev_set,
                       const std::string& out_dir, const Vocabulary& vocab) {
  ModelConfig mc = config.model;
  mc.seed = seed;
  mc.operand_pad = config.policy.operand_none_loss;
  Model model(mc, vocab);

  std::vector<std::vector<LabelSet>> labels;
  labels.reserve(train_set.size());
  for (const ProblemInstance& inst : train_set) {
    LabelCompileResult compiled = compile_label_sets(inst.tree, mc.k);
    if (static_cast<int>(compiled.layers.size()) > mc.max_layers) {
      throw Error(ErrorCode::LayerLimitExceeded,
                  "instance " + inst.id + " needs " +
                      std::to_string(compiled.layers.size()) + " layers");
    }
    // Inference stops on an all-None layer, so teach one: append a terminal
    // all-padding set when depth allows.
    if (static_cast<int>(compiled.layers.size()) < mc.max_layers) {
      LabelSet stop;
      stop.layer_index = static_cast<int>(compiled.layers.size());
      stop.triples.assign(mc.k, ExpressionTriple::padding());
      compiled.layers.push_back(stop);
    }
    labels.push_back(std::move(compiled.layers));
  }

  std::mt19937_64 run_rng(seed ^ 0xD1B54A32D192ED03ULL);
  AdamW opt(model.params(), config.beta1, config.beta2, config.adam_eps,
            config.weight_decay);

  int n = static_cast<int>(train_set.size());
  int batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  int64_t total_steps = static_cast<int64_t>(batches_per_epoch) * config.epochs;
  int64_t warmup_steps =
      std::max<int64_t>(1, static_cast<int64_t>(config.warmup_frac * total_steps));

  SeedRun run;
  run.seed = seed;
  std::vector<std::vector<double>> best_snapshot;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, run_rng);
    double loss_sum = 0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      int lo = b * config.batch_size;
      int hi = std::min(n, lo + config.batch_size);
      Tape tape;
      model.params().zero_grads();
      model.params().bind(tape);
      std::vector<Tensor> instance_losses;
      instance_losses.reserve(hi - lo);
      for (int i = lo; i < hi; ++i) {
        const ProblemInstance& inst = train_set[order[i]];
        const std::vector<LabelSet>& sets = labels[order[i]];
        Model::TrainForward fwd = model.forward_train(inst, sets);
        std::vector<Tensor> layer_losses;
        layer_losses.reserve(sets.size());
        for (size_t l = 0; l < sets.size(); ++l) {
          layer_losses.push_back(
              set_loss(sets[l], fwd.layers[l], config.policy, &run_rng));
        }
        instance_losses.push_back(total_loss(layer_losses));
      }
      Tensor batch_loss =
          scale(sum_scalars(instance_losses), 1.0 / static_cast<double>(hi - lo));
      double loss_value = batch_loss.value();
      if (!std::isfinite(loss_value)) {
        throw Error(ErrorCode::DivergedLoss,
                    "non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss_value * (hi - lo);
      tape.backward(batch_loss);
      model.params().collect_grads();
      model.params().unbind();

      if (config.grad_clip > 0) {
        double norm = model.params().grad_norm();
        if (norm > config.grad_clip) {
          double f = config.grad_clip / norm;
          for (int p = 0; p < model.params().count(); ++p) {
            for (double& g : model.params().grad(p)) g *= f;
          }
        }
      }
      double lr = step < warmup_steps
                      ? config.lr * static_cast<double>(step + 1) / warmup_steps
                      : config.lr;
      opt.step(lr);
      ++step;
    }

    EvalReport dev = evaluate_model(model, dev_set, config.answer_rel_tol);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / n;
    stats.dev_answer_acc = dev.answer_accuracy;
    stats.dev_equation_acc = dev.equation_accuracy;
    stats.lr = step < warmup_steps ? config.lr * static_cast<double>(step) / warmup_steps
                                   : config.lr;
    run.curve.push_back(stats);
    if (config.on_epoch) config.on_epoch(seed, stats);

    if (run.best_epoch < 0 || dev.answer_accuracy > run.best_dev_answer_acc) {
      run.best_dev_answer_acc = dev.answer_accuracy;
      run.best_epoch = epoch;
      best_snapshot = model.params().snapshot();
    }
    if (config.early_stop_dev_acc > 0 &&
        dev.answer_accuracy >= config.early_stop_dev_acc) {
      break;
    }
  }

  model.params().restore(best_snapshot);
  run.final_dev = evaluate_model(model, dev_set, config.answer_rel_tol);

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::string base = out_dir + "/model-seed" + std::to_string(seed);
    model.params().save(base + ".ckpt");
    write_kv_file(base + ".cfg", model_config_kv(mc));
    std::ofstream os(out_dir + "/curve-seed" + std::to_string(seed) + ".csv",
                     std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write curve CSV");
    os << curve_csv(run);
    run.checkpoint_path = base + ".ckpt";
  }
  return run;
}

}  // namespace

RunReport train(const TrainConfig& config, const std::vector<ProblemInstance>& train_set,
                const std::vector<ProblemInstance>& dev_set, const std::string& out_dir) {
  if (train_set.empty() || dev_set.empty()) {
    throw Error(ErrorCode::EmptyInput, "train/dev sets must be non-empty");
  }
  if (config.epochs < 1 || config.seeds.empty()) {
    throw Error(ErrorCode::UsageError, "need epochs >= 1 and at least one seed");
  }
  if (config.batch_size < 1) {
    throw Error(ErrorCode::UsageError, "batch_size must be >= 1");
  }
  Vocabulary vocab;
  RunReport report;
  for (uint64_t seed : config.seeds) {
    report.runs.push_back(
        train_one_seed(config, seed, train_set, dev_set, out_dir, vocab));
  }
  double sum = 0;
  for (const SeedRun& r : report.runs) sum += r.best_dev_answer_acc;
  report.mean_best_dev = sum / report.runs.size();
  double var = 0;
  for (const SeedRun& r : report.runs) {
    double d = r.best_dev_answer_acc - report.mean_best_dev;
    var += d * d;
  }
  report.std_best_dev = std::sqrt(var / report.runs.size());
  return report;
}

std::string curve_csv(const SeedRun& run) {
  std::string out = "epoch,train_loss,dev_answer_acc,dev_equation_acc,lr\n";
  for (const EpochStats& s : run.curve) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.8f\n", s.epoch, s.train_loss,
                  s.dev_answer_acc, s.dev_equation_acc, s.lr);
    out += buf;
  }
  return out;
}

std::vector<SweepRow> sweep_queries(const TrainConfig& base, const std::vector<int>& k_values,
                                    const std::vector<ProblemInstance>& train_set,
                                    const std::vector<ProblemInstance>& dev_set) {
  if (k_values.empty()) throw Error(ErrorCode::UsageError, "no k values");
  std::vector<SweepRow> rows;
  for (int k : k_values) {
    SweepRow row;
    row.k = k;
    TrainConfig c = base;
    c.model.k = k;
    c.seeds = {base.seeds.front()};
    try {
      RunReport rep = train(c, train_set, dev_set);
      row.dev_accuracy = rep.runs.front().best_dev_answer_acc;
    } catch (const Error& e) {
      row.error = e.what();
      row.dev_accuracy = std::nan("");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "k,dev_accuracy\n";
  for (const SweepRow& r : rows) {
    out += std::to_string(r.k) + "," + (r.error.empty() ? fmt(r.dev_accuracy) : "nan") + "\n";
  }
  return out;
}

}  // namespace exprtree
