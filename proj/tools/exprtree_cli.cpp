// exprtree command-line front end. Machine-readable output goes to stdout,
// progress and diagnostics to stderr (level via EXPRTREE_LOG=quiet|info|debug).
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "exprtree/config.hpp"
#include "exprtree/data.hpp"
#include "exprtree/errors.hpp"
#include "exprtree/gradcheck.hpp"
#include "exprtree/labels.hpp"
#include "exprtree/matching.hpp"
#include "exprtree/metrics.hpp"
#include "exprtree/model.hpp"
#include "exprtree/trainer.hpp"

using namespace exprtree;

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("EXPRTREE_LOG");
  if (!env) return LogLevel::Info;
  std::string v = env;
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << msg << "\n";
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::UsageError:
      return 1;
    case ErrorCode::IoError:
    case ErrorCode::MalformedRecord:
    case ErrorCode::AnswerMismatch:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::EmptyInput:
      return 2;
    default:
      return 3;
  }
}

Model load_model(const std::string& config_path, const std::string& checkpoint_path,
                 const Vocabulary& vocab) {
  ModelConfig mc = model_config_from_kv(read_kv_file(config_path));
  Model model(mc, vocab);
  model.params().load(checkpoint_path);
  return model;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int cmd_synth(const std::string& out, int n, uint64_t seed, int max_nodes,
              double branch_bias, int number_min, int number_max,
              const std::string& template_set) {
  SynthSpec spec;
  spec.n_instances = n;
  spec.seed = seed;
  spec.max_internal_nodes = max_nodes;
  spec.branch_bias = branch_bias;
  spec.number_min = number_min;
  spec.number_max = number_max;
  spec.template_set = template_set;
  SynthResult res = synth_generate(spec);
  save_jsonl(out, res.instances);
  log_info("wrote " + std::to_string(res.instances.size()) + " instances to " + out);
  std::cout << "structure,count\n"
            << "single," << res.n_single << "\n"
            << "chain," << res.n_chain << "\n"
            << "tree," << res.n_tree << "\n";
  return 0;
}

int cmd_compile_labels(const std::string& input, int k, const std::string& out) {
  auto data = load_jsonl(input);
  std::string csv = "id,layers,expressions,overflowed\n";
  for (const auto& inst : data) {
    auto compiled = compile_label_sets(inst.tree, k);
    int exprs = 0;
    for (const auto& layer : compiled.layers) exprs += layer.valid_count();
    csv += inst.id + "," + std::to_string(compiled.layers.size()) + "," +
           std::to_string(exprs) + "," + (compiled.overflowed ? "1" : "0") + "\n";
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write: " + out);
    os << csv;
    log_info("wrote label summary to " + out);
  }
  return 0;
}

int cmd_stats(const std::string& input, int k) {
  auto data = load_jsonl(input);
  std::vector<ExprPtr> trees;
  trees.reserve(data.size());
  for (const auto& inst : data) trees.push_back(inst.tree);
  std::cout << step_report_csv(corpus_step_report(trees, k));
  return 0;
}

int cmd_train(const std::string& input, const std::string& dev_path,
              const std::string& config_path, const std::string& out_dir,
              const std::string& sweep_ks) {
  auto train_set = load_jsonl(input);
  auto dev_set = load_jsonl(dev_path);
  TrainConfig tc;
  if (!config_path.empty()) tc = train_config_from_kv(read_kv_file(config_path));
  tc.on_epoch = [](uint64_t seed, const EpochStats& s) {
    log_info("seed " + std::to_string(seed) + " epoch " + std::to_string(s.epoch) +
             ": loss " + fmt6(s.train_loss) + ", dev acc " + fmt6(s.dev_answer_acc));
  };

  if (!sweep_ks.empty()) {
    std::vector<int> ks;
    std::stringstream ss(sweep_ks);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        ks.push_back(std::stoi(part));
      } catch (const std::exception&) {
        throw Error(ErrorCode::UsageError, "bad --sweep-k entry: " + part);
      }
    }
    if (ks.empty()) throw Error(ErrorCode::UsageError, "--sweep-k needs values");
    auto rows = sweep_queries(tc, ks, train_set, dev_set);
    std::cout << sweep_csv(rows);
    return 0;
  }

  RunReport rep = train(tc, train_set, dev_set, out_dir);
  std::cout << "seed,best_dev_answer_acc,best_epoch,epochs_run\n";
  for (const auto& run : rep.runs) {
    std::cout << run.seed << "," << fmt6(run.best_dev_answer_acc) << ","
              << run.best_epoch << "," << run.curve.size() << "\n";
  }
  std::cout << "mean," << fmt6(rep.mean_best_dev) << ",,\n";
  std::cout << "std," << fmt6(rep.std_best_dev) << ",,\n";
  if (!out_dir.empty()) log_info("artifacts in " + out_dir);
  return 0;
}

int cmd_eval(const std::string& input, const std::string& checkpoint,
             const std::string& config_path, double tol) {
  Vocabulary vocab;
  Model model = load_model(config_path, checkpoint, vocab);
  auto data = load_jsonl(input);
  EvalReport rep = evaluate_model(model, data, tol);
  std::cout << report_csv(rep);
  return 0;
}

int cmd_infer(const std::string& input, const std::string& checkpoint,
              const std::string& config_path, const std::string& only_id, double tol) {
  Vocabulary vocab;
  Model model = load_model(config_path, checkpoint, vocab);
  auto data = load_jsonl(input);
  std::cout << "id,predicted_equation,predicted_answer,gold_answer,answer_ok,layers\n";
  for (const auto& inst : data) {
    if (!only_id.empty() && inst.id != only_id) continue;
    std::string eq = "-", ans = "-", ok = "0", layers = "0";
    try {
      auto res = model.infer(inst);
      eq = serialize_infix(res.tree, inst.constants);
      std::vector<Value> vals(inst.numbers.begin(), inst.numbers.end());
      Value v = evaluate(res.tree, vals, inst.constants);
      ans = v.str();
      ok = v.close_to(inst.answer, tol) ? "1" : "0";
      layers = std::to_string(res.layers_used);
    } catch (const Error& e) {
      log_debug(std::string("infer failed for ") + inst.id + ": " + e.what());
    }
    std::cout << inst.id << ",\"" << eq << "\"," << ans << "," << inst.answer.str()
              << "," << ok << "," << layers << "\n";
  }
  return 0;
}

int cmd_match_demo(int k, uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::UsageError, "--k must be >= 2 for the demo");
  std::mt19937_64 rng(seed);
  auto logits = [&rng](int n) {
    std::vector<double> v(n);
    for (double& x : v) x = ((rng() >> 11) * 0x1.0p-53) * 4.0 - 2.0;
    return log_softmax_rows(Tensor::from(v, 1, n));
  };

  // gold: two parallel expressions plus padding
  LabelSet gold;
  gold.layer_index = 0;
  gold.triples = {ExpressionTriple::of(Operand::number(0), Op::Mul, Operand::number(1)),
                  ExpressionTriple::of(Operand::number(2), Op::Mul, Operand::number(3)),
                  ExpressionTriple::padding()};
  while (static_cast<int>(gold.triples.size()) < k)
    gold.triples.push_back(ExpressionTriple::padding());

  PredictionSet preds;
  preds.n_numbers = 4;
  preds.n_constants = 3;
  for (int i = 0; i < k; ++i) preds.queries.push_back({logits(6), logits(7), logits(7)});

  auto cost = build_cost_matrix(gold, preds);
  std::cout << "cost_matrix\n";
  for (const auto& row : cost) {
    for (size_t j = 0; j < row.size(); ++j) std::cout << (j ? "," : "") << fmt6(row[j]);
    std::cout << "\n";
  }
  std::vector<int> beta = hungarian(cost);
  std::cout << "assignment";
  for (int b : beta) std::cout << "," << b;
  std::cout << "\ntotal_cost," << fmt6(assignment_cost(cost, beta)) << "\n";

  std::cout << "policy,loss\n";
  for (MatchingMode mode :
       {MatchingMode::Bipartite, MatchingMode::Sequence, MatchingMode::Random}) {
    LossPolicy policy;
    policy.matching = mode;
    std::mt19937_64 loss_rng(seed + 1);
    Tensor loss = set_loss(gold, preds, policy, &loss_rng);
    std::cout << matching_mode_name(mode) << "," << fmt6(loss.value()) << "\n";
  }
  return 0;
}

int cmd_grad_check(int d, int k, uint64_t seed, int samples, double tol) {
  ModelConfig mc;
  mc.d = d;
  mc.k = k;
  mc.n_heads = d % 4 == 0 ? 4 : 2;
  mc.encoder_depth = 1;
  mc.max_layers = 4;
  mc.seed = seed;
  Vocabulary vocab;
  Model model(mc, vocab);

  auto inst = make_instance("gc", {"N0", "times", "N1", "plus", "N2", "times", "N3"},
                            {Rational(3), Rational(4), Rational(5), Rational(6)},
                            "N0*N1+N2*N3", Value(Rational(42)));
  auto labels = compile_label_sets(inst.tree, k);
  LossPolicy policy;
  auto loss_fn = [&](Tape*) {
    auto fwd = model.forward_train(inst, labels.layers);
    std::vector<Tensor> layer_losses;
    for (size_t l = 0; l < labels.layers.size(); ++l)
      layer_losses.push_back(set_loss(labels.layers[l], fwd.layers[l], policy));
    return total_loss(layer_losses);
  };
  auto rep = grad_check(model.params(), loss_fn, samples, 1e-5, seed);
  std::cout << "checked,max_rel_err,worst_param\n"
            << rep.checked << "," << rep.max_rel_err << "," << rep.worst_param << "\n";
  if (tol > 0 && rep.max_rel_err >= tol) {
    log_info("gradient check FAILED tolerance " + std::to_string(tol));
    return 3;
  }
  return 0;
}

int cmd_export_attn(const std::string& input, const std::string& checkpoint,
                    const std::string& config_path, const std::string& out_prefix,
                    const std::string& only_id) {
  Vocabulary vocab;
  Model model = load_model(config_path, checkpoint, vocab);
  auto data = load_jsonl(input);
  const ProblemInstance* chosen = nullptr;
  for (const auto& inst : data) {
    if (only_id.empty() || inst.id == only_id) {
      chosen = &inst;
      break;
    }
  }
  if (!chosen) throw Error(ErrorCode::UsageError, "no instance matches --id " + only_id);
  auto files = export_query_similarity(model, *chosen, out_prefix);
  for (const auto& f : files) std::cout << f << "\n";
  log_info("wrote " + std::to_string(files.size()) + " similarity matrices");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expression-tree decoder for math word problems"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_out;
  int synth_n = 100, synth_nodes = 3, synth_min = 2, synth_max = 20;
  uint64_t synth_seed = 1;
  double synth_bias = 0.5;
  std::string synth_templates = "ts1";
  synth->add_option("--out", synth_out, "output JSONL path")->required();
  synth->add_option("--n", synth_n, "number of instances");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--max-nodes", synth_nodes, "max internal nodes per tree");
  synth->add_option("--branch-bias", synth_bias, "two-branch split probability");
  synth->add_option("--number-min", synth_min, "smallest sampled integer");
  synth->add_option("--number-max", synth_max, "largest sampled integer");
  synth->add_option("--template-set", synth_templates, "template set name");

  // compile-labels
  auto* compile = app.add_subcommand("compile-labels", "compile gold label sets");
  std::string compile_input, compile_out;
  int compile_k = 6;
  compile->add_option("--input", compile_input, "JSONL corpus")->required();
  compile->add_option("--k", compile_k, "queries per layer");
  compile->add_option("--out", compile_out, "write CSV here instead of stdout");

  // stats
  auto* stats = app.add_subcommand("stats", "decoding-step statistics per method");
  std::string stats_input;
  int stats_k = 6;
  stats->add_option("--input", stats_input, "JSONL corpus")->required();
  stats->add_option("--k", stats_k, "queries per layer");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_input, train_dev, train_config, train_out_dir, train_sweep;
  train_cmd->add_option("--input", train_input, "training JSONL")->required();
  train_cmd->add_option("--dev", train_dev, "dev JSONL")->required();
  train_cmd->add_option("--config", train_config, "key=value training config");
  train_cmd->add_option("--out-dir", train_out_dir, "artifact directory");
  train_cmd->add_option("--sweep-k", train_sweep, "comma list of k values to sweep");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_input, eval_ckpt, eval_config;
  double eval_tol = 1e-4;
  eval_cmd->add_option("--input", eval_input, "JSONL corpus")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model .ckpt")->required();
  eval_cmd->add_option("--config", eval_config, "model .cfg")->required();
  eval_cmd->add_option("--answer-tol", eval_tol, "relative answer tolerance");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "decode instances");
  std::string infer_input, infer_ckpt, infer_config, infer_id;
  double infer_tol = 1e-4;
  infer_cmd->add_option("--input", infer_input, "JSONL corpus")->required();
  infer_cmd->add_option("--checkpoint", infer_ckpt, "model .ckpt")->required();
  infer_cmd->add_option("--config", infer_config, "model .cfg")->required();
  infer_cmd->add_option("--id", infer_id, "only this instance id");
  infer_cmd->add_option("--answer-tol", infer_tol, "relative answer tolerance");

  // match-demo
  auto* demo = app.add_subcommand("match-demo", "show the bipartite matching step");
  int demo_k = 4;
  uint64_t demo_seed = 1;
  demo->add_option("--k", demo_k, "query count");
  demo->add_option("--seed", demo_seed, "rng seed");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
  int gc_d = 16, gc_k = 4, gc_samples = 4;
  uint64_t gc_seed = 1;
  double gc_tol = 0.0;
  gc->add_option("--d", gc_d, "model width");
  gc->add_option("--k", gc_k, "query count");
  gc->add_option("--seed", gc_seed, "model seed");
  gc->add_option("--samples", gc_samples, "entries sampled per parameter");
  gc->add_option("--tol", gc_tol, "fail (exit 3) if max rel err >= tol; 0 = report only");

  // export-attn
  auto* attn = app.add_subcommand("export-attn", "query/position similarity matrices");
  std::string attn_input, attn_ckpt, attn_config, attn_prefix, attn_id;
  attn->add_option("--input", attn_input, "JSONL corpus")->required();
  attn->add_option("--checkpoint", attn_ckpt, "model .ckpt")->required();
  attn->add_option("--config", attn_config, "model .cfg")->required();
  attn->add_option("--out-prefix", attn_prefix, "output path prefix")->required();
  attn->add_option("--id", attn_id, "instance id (default: first)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    {
      // CLI11 prints help to stdout for --help; usage errors land on stderr
      int rc = app.exit(e, std::cout, std::cerr);
      return rc == 0 ? 0 : 1;
    }
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_n, synth_seed, synth_nodes, synth_bias,
                       synth_min, synth_max, synth_templates);
    if (compile->parsed()) return cmd_compile_labels(compile_input, compile_k, compile_out);
    if (stats->parsed()) return cmd_stats(stats_input, stats_k);
    if (train_cmd->parsed())
      return cmd_train(train_input, train_dev, train_config, train_out_dir, train_sweep);
    if (eval_cmd->parsed()) return cmd_eval(eval_input, eval_ckpt, eval_config, eval_tol);
    if (infer_cmd->parsed())
      return cmd_infer(infer_input, infer_ckpt, infer_config, infer_id, infer_tol);
    if (demo->parsed()) return cmd_match_demo(demo_k, demo_seed);
    if (gc->parsed()) return cmd_grad_check(gc_d, gc_k, gc_seed, gc_samples, gc_tol);
    if (attn->parsed())
      return cmd_export_attn(attn_input, attn_ckpt, attn_config, attn_prefix, attn_id);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
