#pragma once

#include <random>
#include <vector>

#include "exprtree/equation.hpp"
#include "exprtree/labels.hpp"
#include "exprtree/tensor.hpp"

namespace exprtree {

enum class MatchingMode { Bipartite, Sequence, Random };

const char* matching_mode_name(MatchingMode m);
MatchingMode matching_mode_from_name(const std::string& name);

struct LossPolicy {
  MatchingMode matching = MatchingMode::Bipartite;
  bool operand_none_loss = false;
  bool operator_none_loss = true;
};

// What one query predicts at one layer: log-probabilities over the six
// operator classes and over the operand vocabulary V_n (left/right share the
// vocabulary). When has_pad is set the last operand column is the reserved
// pad class used by the operand_none_loss ablation; gold operands never map
// to it.
struct QueryPrediction {
  Tensor op_log_probs;     // 1 x 6
  Tensor left_log_probs;   // 1 x |V_n| (+1 with pad)
  Tensor right_log_probs;  // 1 x |V_n| (+1 with pad)
};

struct PredictionSet {
  std::vector<QueryPrediction> queries;  // size K
  int n_numbers = 0;
  int n_constants = 0;
  bool has_pad = false;
};

// Minimum-cost bijection gold row -> prediction column. Among equal-cost
// optima returns the lexicographically smallest assignment by gold index.
// Cost entries must be finite.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

// Total cost of an assignment, summed in gold-row order (matches how the
// brute-force oracle accumulates, so equality checks stay exact).
double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& beta);

// Eq-style pair matching cost: 0 for a None gold row, otherwise
// -(p_op + p_left + p_right) using raw probabilities.
double match_cost(const ExpressionTriple& gold, const QueryPrediction& pred,
                  int n_numbers, int n_constants);

// K x K matrix of match costs; rows = gold triples, cols = predictions.
std::vector<std::vector<double>> build_cost_matrix(const LabelSet& gold,
                                                   const PredictionSet& preds);

// Negative log-likelihood of the gold set under the policy's assignment.
// rng is required for MatchingMode::Random. Returns a 1x1 tensor tracked on
// the predictions' tape. If beta_out is given, the assignment used is written
// there.
Tensor set_loss(const LabelSet& gold, const PredictionSet& preds,
                const LossPolicy& policy, std::mt19937_64* rng = nullptr,
                std::vector<int>* beta_out = nullptr);

// Unweighted sum of per-layer losses.
Tensor total_loss(const std::vector<Tensor>& layer_losses);

}  // namespace exprtree
