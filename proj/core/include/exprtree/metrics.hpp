#pragma once

#include <string>
#include <vector>

#include "exprtree/data.hpp"
#include "exprtree/model.hpp"

namespace exprtree {

struct InstanceEval {
  std::string id;
  bool answer_ok = false;
  bool equation_ok = false;
  bool failed = false;  // inference threw (counted as wrong)
  StructureClass structure = StructureClass::Single;
  int layers_used = 0;
  int layer0_emitted = 0;   // valid triples the model emitted at layer 0
  int gold_layer0 = 0;      // expressions in the gold first label set
  std::string predicted;    // canonical infix of the predicted tree, if any
};

struct EvalReport {
  std::vector<InstanceEval> records;
  double answer_accuracy = 0;
  double equation_accuracy = 0;
  double acc_single = 0, acc_chain = 0, acc_tree = 0;
  int n_single = 0, n_chain = 0, n_tree = 0;
  double avg_layers = 0, std_layers = 0;
  int max_layers_used = 0;
  // Fraction of instances whose gold layer-0 set has >= 2 expressions where
  // the model emitted >= 2 valid triples at layer 0.
  double parallelism_rate = 0;
  std::vector<int> layer_histogram;  // index = layers_used
};

// Aggregates are pure functions of the records (recomputable).
EvalReport aggregate_report(std::vector<InstanceEval> records);

// Greedy inference per instance; errors count as failures, not crashes.
// Layer stats cover instances whose inference succeeded.
EvalReport evaluate_model(const Model& model, const std::vector<ProblemInstance>& data,
                          double answer_rel_tol = 1e-4);

// Deterministic CSV with a metric,value header.
std::string report_csv(const EvalReport& report);

// Row-wise cosine similarity: result[i][j] = cos(a_i, b_j); zero vectors
// give similarity 0.
std::vector<std::vector<double>> cosine_matrix(const Tensor& a, const Tensor& b);

// Runs inference and writes one K x seq_len cosine matrix per used layer to
// "<out_prefix>layer<l>.csv" (query rows vs the P the layer attended to).
// Returns the file paths.
std::vector<std::string> export_query_similarity(const Model& model,
                                                 const ProblemInstance& inst,
                                                 const std::string& out_prefix);

}  // namespace exprtree
