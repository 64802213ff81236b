#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exprtree/data.hpp"
#include "exprtree/equation.hpp"
#include "exprtree/labels.hpp"
#include "exprtree/matching.hpp"
#include "exprtree/params.hpp"
#include "exprtree/tensor.hpp"

namespace exprtree {

struct ModelConfig {
  int d = 64;
  int k = 6;
  int max_layers = 8;
  int n_heads = 4;
  bool layer_shared = false;
  int encoder_depth = 2;
  uint64_t seed = 1;
  bool positional = true;   // sinusoidal position encodings on the encoder
  bool operand_pad = false; // reserve a pad operand class in distributions
  int d_ff = 0;             // feed-forward width; 0 means 2*d
};

// Layer-wise parallel decoder over K learnable queries. One decode layer:
// query self-attention, cross-attention into the problem sequence P, and a
// feed-forward block; three heads then score operator/left/right against the
// operator table and the dynamic operand vocabulary V_n. Realized expression
// embeddings are appended to P (and V_n) between layers.
class Model {
 public:
  Model(const ModelConfig& config, const Vocabulary& vocab);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int n_constants() const { return n_constants_; }

  struct Encoding {
    Tensor p;   // seq_len x d
    Tensor vn;  // (n_numbers + n_constants) x d
    int n_numbers = 0;
    int n_constants = 0;
  };
  // Token embeddings (+ positions) through encoder_depth self-attention
  // blocks; V_n gathered from P at the N<i> positions, constants appended
  // from the learned table.
  Encoding encode_problem(const ProblemInstance& inst) const;

  struct LayerOut {
    Tensor q;                 // K x d after this layer
    Tensor s_op, s_l, s_r;    // K x d head outputs
    PredictionSet preds;
  };
  LayerOut decode_layer(const Tensor& q_prev, const Tensor& p_prev, const Tensor& vn,
                        int layer_index, int n_numbers, int n_constants) const;

  // Eq.-5-style expression embedding from an operator row and two operand
  // rows (head outputs, gold embeddings, or chosen embeddings — all 1 x d).
  Tensor realize_var(const Tensor& op_row, const Tensor& left_row,
                     const Tensor& right_row) const;

  // Appends the position-wise transform of each var to P and V_n.
  std::pair<Tensor, Tensor> update_state(const Tensor& p_prev, const Tensor& vn,
                                         const std::vector<Tensor>& vars) const;

  // Teacher forcing: exactly |labels| layers; vars realized from gold
  // operator/operand embeddings regardless of predictions.
  struct TrainForward {
    std::vector<PredictionSet> layers;
  };
  TrainForward forward_train(const ProblemInstance& inst,
                             const std::vector<LabelSet>& labels) const;

  // Greedy layer-wise decode: argmax each query, drop None triples, stop on
  // an all-None layer or at max_layers. tree is rebuilt from the final DAG
  // (last emitted result is the root).
  struct InferResult {
    std::vector<std::vector<ExpressionTriple>> layers;  // non-None, query order
    std::vector<ExpressionTriple> emitted;              // flattened emission order
    int layers_used = 0;
    ExprPtr tree;
    std::vector<Tensor> query_trace;  // K x d per executed layer
    std::vector<Tensor> p_trace;      // P before each executed layer
  };
  InferResult infer(const ProblemInstance& inst) const;

  // Operand embedding row for a gold operand out of (vn | operator table).
  Tensor operand_row(const Tensor& vn, const Operand& operand, int n_numbers,
                     int n_constants) const;

 private:
  Tensor token_embeddings(const ProblemInstance& inst) const;
  Tensor encoder_block(const Tensor& x, int block) const;
  Tensor attention(const std::string& prefix, const Tensor& q_in,
                   const Tensor& kv_in) const;
  Tensor ffn(const std::string& prefix, const Tensor& x) const;
  Tensor mlp2(const std::string& prefix, const Tensor& x) const;  // two-layer head
  std::string dec_prefix(int layer_index) const;

  ModelConfig config_;
  const Vocabulary* vocab_;
  int n_constants_ = 0;
  ConstantTable constants_;
  ParamStore params_;
};

// Rebuilds an expression tree from triples in emission order; ExprResult j
// refers to the j-th emitted triple, the last triple is the root. Throws
// NoExpressionProduced when empty.
ExprPtr dag_to_tree(const std::vector<ExpressionTriple>& emitted);

// Operand for a V_n column index (inverse of operand_vocab_index).
Operand operand_from_vocab_index(int index, int n_numbers, int n_constants);

}  // namespace exprtree
