#include "exprtree/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int j = 1; j < t.cols; ++j) {
    if (t.at(row, j) > t.at(row, best)) best = j;  // ties keep the lowest index
  }
  return best;
}

}  // namespace

Model::Model(const ModelConfig& config, const Vocabulary& vocab)
    : config_(config), vocab_(&vocab), params_(config.seed) {
  if (config_.d < 1 || config_.k < 1 || config_.max_layers < 1 ||
      config_.n_heads < 1 || config_.encoder_depth < 0) {
    throw Error(ErrorCode::UsageError, "bad model config");
  }
  if (config_.d % config_.n_heads != 0) {
    throw Error(ErrorCode::UsageError, "d must be divisible by n_heads");
  }
  if (config_.d_ff == 0) config_.d_ff = 2 * config_.d;
  n_constants_ = constants_.size();

  int d = config_.d, dff = config_.d_ff;
  params_.embedding("tok_emb", vocab.size(), d);
  params_.embedding("const_emb", n_constants_, d);
  params_.embedding("op_emb", kNumOperatorClasses, d);
  params_.embedding("queries", config_.k, d);
  params_.embedding("pad_emb", 1, d);

  auto attn_params = [&](const std::string& prefix) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) params_.weight(prefix + w, d, d);
    for (const char* b : {"bq", "bk", "bv", "bo"}) params_.bias(prefix + b, d);
  };
  auto ln_params = [&](const std::string& prefix) {
    params_.ln_gain(prefix + "g", d);
    params_.bias(prefix + "b", d);
  };
  auto ffn_params = [&](const std::string& prefix) {
    params_.weight(prefix + "w1", d, dff);
    params_.bias(prefix + "b1", dff);
    params_.weight(prefix + "w2", dff, d);
    params_.bias(prefix + "b2", d);
  };
  auto mlp2_params = [&](const std::string& prefix, int d_in, int d_hidden, int d_out) {
    params_.weight(prefix + "w1", d_in, d_hidden);
    params_.bias(prefix + "b1", d_hidden);
    params_.weight(prefix + "w2", d_hidden, d_out);
    params_.bias(prefix + "b2", d_out);
  };

  for (int b = 0; b < config_.encoder_depth; ++b) {
    std::string p = "enc." + std::to_string(b) + ".";
    attn_params(p + "self.");
    ln_params(p + "ln1.");
    ffn_params(p + "ff.");
    ln_params(p + "ln2.");
  }
  int dec_count = config_.layer_shared ? 1 : config_.max_layers;
  for (int l = 0; l < dec_count; ++l) {
    std::string p = config_.layer_shared ? "dec.shared." : "dec." + std::to_string(l) + ".";
    attn_params(p + "self.");
    ln_params(p + "ln1.");
    attn_params(p + "cross.");
    ln_params(p + "ln2.");
    ffn_params(p + "ff.");
    ln_params(p + "ln3.");
  }
  mlp2_params("head.op.", d, d, d);
  mlp2_params("head.left.", d, d, d);
  mlp2_params("head.right.", d, d, d);
  mlp2_params("var.", 4 * d, d, d);
  mlp2_params("upd.", d, d, d);
}

std::string Model::dec_prefix(int layer_index) const {
  return config_.layer_shared ? "dec.shared."
                              : "dec." + std::to_string(layer_index) + ".";
}

Tensor Model::attention(const std::string& prefix, const Tensor& q_in,
                        const Tensor& kv_in) const {
  int h = config_.n_heads;
  Tensor q = add_rowvec(matmul(q_in, params_.use(prefix + "wq")), params_.use(prefix + "bq"));
  Tensor k = add_rowvec(matmul(kv_in, params_.use(prefix + "wk")), params_.use(prefix + "bk"));
  Tensor v = add_rowvec(matmul(kv_in, params_.use(prefix + "wv")), params_.use(prefix + "bv"));
  Tensor o = multi_head_attention(q, k, v, h);
  return add_rowvec(matmul(o, params_.use(prefix + "wo")), params_.use(prefix + "bo"));
}

Tensor Model::ffn(const std::string& prefix, const Tensor& x) const {
  Tensor h = tanh_t(add_rowvec(matmul(x, params_.use(prefix + "w1")),
                               params_.use(prefix + "b1")));
  return add_rowvec(matmul(h, params_.use(prefix + "w2")), params_.use(prefix + "b2"));
}

Tensor Model::mlp2(const std::string& prefix, const Tensor& x) const {
  return ffn(prefix, x);  // same two-layer shape, different parameter sets
}

Tensor Model::encoder_block(const Tensor& x, int block) const {
  std::string p = "enc." + std::to_string(block) + ".";
  Tensor a = attention(p + "self.", x, x);
  Tensor x1 = layer_norm_rows(add(x, a), params_.use(p + "ln1.g"), params_.use(p + "ln1.b"));
  Tensor f = ffn(p + "ff.", x1);
  return layer_norm_rows(add(x1, f), params_.use(p + "ln2.g"), params_.use(p + "ln2.b"));
}

Tensor Model::token_embeddings(const ProblemInstance& inst) const {
  std::vector<int> ids;
  ids.reserve(inst.tokens.size());
  for (const std::string& tok : inst.tokens) ids.push_back(vocab_->id(tok));
  Tensor x = gather_rows(params_.use("tok_emb"), ids);
  if (!config_.positional) return x;
  int n = static_cast<int>(ids.size()), d = config_.d;
  Tensor pe = Tensor::zeros(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < d) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return add(x, pe);
}

Model::Encoding Model::encode_problem(const ProblemInstance& inst) const {
  if (inst.tokens.empty()) throw Error(ErrorCode::EmptyText, "instance has no tokens");
  Tensor x = token_embeddings(inst);
  for (int b = 0; b < config_.encoder_depth; ++b) x = encoder_block(x, b);

  int n_numbers = static_cast<int>(inst.numbers.size());
  std::vector<int> positions(n_numbers, -1);
  for (int t = 0; t < static_cast<int>(inst.tokens.size()); ++t) {
    int idx;
    if (Vocabulary::number_token(inst.tokens[t], &idx) && idx < n_numbers &&
        positions[idx] < 0) {
      positions[idx] = t;
    }
  }
  for (int i = 0; i < n_numbers; ++i) {
    if (positions[i] < 0) {
      throw Error(ErrorCode::MalformedRecord,
                  "instance " + inst.id + ": N" + std::to_string(i) + " not in text");
    }
  }

  Encoding enc;
  enc.n_numbers = n_numbers;
  enc.n_constants = n_constants_;
  enc.p = x;
  Tensor consts = params_.use("const_emb");
  if (n_numbers == 0) {
    enc.vn = consts;
  } else {
    enc.vn = concat_rows({gather_rows(x, positions), consts});
  }
  return enc;
}

Model::LayerOut Model::decode_layer(const Tensor& q_prev, const Tensor& p_prev,
                                    const Tensor& vn, int layer_index, int n_numbers,
                                    int n_constants) const {
  if (layer_index >= config_.max_layers) {
    throw Error(ErrorCode::LayerLimitExceeded,
                "layer " + std::to_string(layer_index) + " >= max_layers");
  }
  std::string p = dec_prefix(layer_index);
  Tensor a = attention(p + "self.", q_prev, q_prev);
  Tensor x1 = layer_norm_rows(add(q_prev, a), params_.use(p + "ln1.g"),
                              params_.use(p + "ln1.b"));
  Tensor c = attention(p + "cross.", x1, p_prev);
  Tensor x2 = layer_norm_rows(add(x1, c), params_.use(p + "ln2.g"),
                              params_.use(p + "ln2.b"));
  Tensor f = ffn(p + "ff.", x2);
  Tensor q = layer_norm_rows(add(x2, f), params_.use(p + "ln3.g"),
                             params_.use(p + "ln3.b"));

  LayerOut out;
  out.q = q;
  out.s_op = mlp2("head.op.", q);
  out.s_l = mlp2("head.left.", q);
  out.s_r = mlp2("head.right.", q);

  Tensor operand_table =
      config_.operand_pad ? concat_rows({vn, params_.use("pad_emb")}) : vn;
  Tensor op_lp = log_softmax_rows(matmul_nt(out.s_op, params_.use("op_emb")));
  Tensor l_lp = log_softmax_rows(matmul_nt(out.s_l, operand_table));
  Tensor r_lp = log_softmax_rows(matmul_nt(out.s_r, operand_table));

  out.preds.n_numbers = n_numbers;
  out.preds.n_constants = n_constants;
  out.preds.has_pad = config_.operand_pad;
  out.preds.queries.reserve(config_.k);
  for (int i = 0; i < config_.k; ++i) {
    QueryPrediction qp;
    qp.op_log_probs = slice_rows(op_lp, i, i + 1);
    qp.left_log_probs = slice_rows(l_lp, i, i + 1);
    qp.right_log_probs = slice_rows(r_lp, i, i + 1);
    out.preds.queries.push_back(std::move(qp));
  }
  return out;
}

Tensor Model::realize_var(const Tensor& op_row, const Tensor& left_row,
                          const Tensor& right_row) const {
  Tensor joined = concat_cols({op_row, left_row, right_row, mul(left_row, right_row)});
  return mlp2("var.", joined);
}

std::pair<Tensor, Tensor> Model::update_state(const Tensor& p_prev, const Tensor& vn,
                                              const std::vector<Tensor>& vars) const {
  if (vars.empty()) return {p_prev, vn};
  std::vector<Tensor> p_parts{p_prev};
  std::vector<Tensor> vn_parts{vn};
  for (const Tensor& var : vars) {
    Tensor t = mlp2("upd.", var);
    p_parts.push_back(t);
    vn_parts.push_back(t);
  }
  return {concat_rows(p_parts), concat_rows(vn_parts)};
}

Tensor Model::operand_row(const Tensor& vn, const Operand& operand, int n_numbers,
                          int n_constants) const {
  int idx = operand_vocab_index(operand, n_numbers, n_constants);
  if (idx < 0 || idx >= vn.rows) {
    throw Error(ErrorCode::OperandNotInVocab,
                "operand index " + std::to_string(idx) + " outside V_n");
  }
  return slice_rows(vn, idx, idx + 1);
}

Model::TrainForward Model::forward_train(const ProblemInstance& inst,
                                         const std::vector<LabelSet>& labels) const {
  if (static_cast<int>(labels.size()) > config_.max_layers) {
    throw Error(ErrorCode::LayerLimitExceeded, "label sets exceed max_layers");
  }
  for (const LabelSet& set : labels) {
    if (static_cast<int>(set.triples.size()) != config_.k) {
      throw Error(ErrorCode::KMismatch, "label set K differs from model K");
    }
  }
  Encoding enc = encode_problem(inst);
  Tensor q = params_.use("queries");
  Tensor p = enc.p;
  Tensor vn = enc.vn;
  Tensor op_emb = params_.use("op_emb");

  TrainForward result;
  for (size_t l = 0; l < labels.size(); ++l) {
    LayerOut out = decode_layer(q, p, vn, static_cast<int>(l), enc.n_numbers,
                                enc.n_constants);
    result.layers.push_back(std::move(out.preds));
    q = out.q;

    std::vector<Tensor> vars;
    for (const ExpressionTriple& t : labels[l].triples) {
      if (t.op == Op::None) continue;
      Tensor op_row = slice_rows(op_emb, static_cast<int>(t.op), static_cast<int>(t.op) + 1);
      Tensor l_row = operand_row(vn, t.left, enc.n_numbers, enc.n_constants);
      Tensor r_row = operand_row(vn, t.right, enc.n_numbers, enc.n_constants);
      vars.push_back(realize_var(op_row, l_row, r_row));
    }
    std::tie(p, vn) = update_state(p, vn, vars);
  }
  return result;
}

Model::InferResult Model::infer(const ProblemInstance& inst) const {
  Encoding enc = encode_problem(inst);
  Tensor q = params_.use("queries");
  Tensor p = enc.p;
  Tensor vn = enc.vn;
  Tensor op_emb = params_.use("op_emb");

  InferResult result;
  // Leftmost problem-number index under each emitted result; state updates
  // number results in emission order, so emission must follow gold (prefix)
  // order for later ExprResult references to line up. Sorting each layer's
  // triples by text position restores that order whatever the query
  // permutation was.
  std::vector<int> leftmost;
  auto text_pos = [&](const ExpressionTriple& t) {
    auto pos = [&](const Operand& o) {
      if (o.kind == Operand::Kind::ProblemNumber) return o.index;
      if (o.kind == Operand::Kind::ExprResult) return leftmost[o.index];
      return std::numeric_limits<int>::max();  // constants are not in the text
    };
    int lp = pos(t.left);
    return lp != std::numeric_limits<int>::max() ? lp : pos(t.right);
  };

  for (int l = 0; l < config_.max_layers; ++l) {
    result.p_trace.push_back(p);
    LayerOut out = decode_layer(q, p, vn, l, enc.n_numbers, enc.n_constants);
    result.query_trace.push_back(out.q);
    q = out.q;

    int usable = vn.rows;  // pad column (if any) is not a usable operand
    std::vector<ExpressionTriple> layer_triples;
    std::vector<Tensor> vars;
    for (int i = 0; i < config_.k; ++i) {
      const QueryPrediction& qp = out.preds.queries[i];
      int op_idx = argmax_row(qp.op_log_probs, 0);
      if (op_idx == kNoneOpIndex) continue;
      int li = argmax_row(qp.left_log_probs, 0);
      int ri = argmax_row(qp.right_log_probs, 0);
      if (li >= usable || ri >= usable) continue;  // pad chosen; treat as None
      ExpressionTriple t = ExpressionTriple::of(
          operand_from_vocab_index(li, enc.n_numbers, enc.n_constants),
          static_cast<Op>(op_idx),
          operand_from_vocab_index(ri, enc.n_numbers, enc.n_constants));
      layer_triples.push_back(t);
      Tensor op_row = slice_rows(op_emb, op_idx, op_idx + 1);
      vars.push_back(realize_var(op_row, slice_rows(vn, li, li + 1),
                                 slice_rows(vn, ri, ri + 1)));
    }
    if (layer_triples.empty()) break;

    std::vector<int> order(layer_triples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return text_pos(layer_triples[a]) < text_pos(layer_triples[b]);
    });
    std::vector<ExpressionTriple> sorted_triples;
    std::vector<Tensor> sorted_vars;
    for (int idx : order) {
      sorted_triples.push_back(layer_triples[idx]);
      sorted_vars.push_back(vars[idx]);
      leftmost.push_back(text_pos(layer_triples[idx]));
    }

    result.layers.push_back(sorted_triples);
    for (const ExpressionTriple& t : sorted_triples) result.emitted.push_back(t);
    std::tie(p, vn) = update_state(p, vn, sorted_vars);
  }
  result.layers_used = static_cast<int>(result.layers.size());
  if (result.emitted.empty()) {
    throw Error(ErrorCode::NoExpressionProduced, "all queries predicted None at layer 0");
  }
  result.tree = dag_to_tree(result.emitted);
  return result;
}

ExprPtr dag_to_tree(const std::vector<ExpressionTriple>& emitted) {
  if (emitted.empty()) {
    throw Error(ErrorCode::NoExpressionProduced, "empty expression DAG");
  }
  std::vector<ExprPtr> nodes;
  nodes.reserve(emitted.size());
  auto resolve = [&nodes](const Operand& o) -> ExprPtr {
    if (o.kind == Operand::Kind::ExprResult) {
      if (o.index < 0 || o.index >= static_cast<int>(nodes.size())) {
        throw Error(ErrorCode::UnresolvedOperand,
                    "v" + std::to_string(o.index) + " not yet produced");
      }
      return nodes[o.index];
    }
    return make_leaf(o);
  };
  for (const ExpressionTriple& t : emitted) {
    if (t.op == Op::None) {
      throw Error(ErrorCode::UnresolvedOperand, "None triple in DAG");
    }
    nodes.push_back(make_node(t.op, resolve(t.left), resolve(t.right)));
  }
  return nodes.back();
}

Operand operand_from_vocab_index(int index, int n_numbers, int n_constants) {
  if (index < 0) throw Error(ErrorCode::IndexOutOfRange, "negative vocab index");
  if (index < n_numbers) return Operand::number(index);
  if (index < n_numbers + n_constants) return Operand::constant(index - n_numbers);
  return Operand::result(index - n_numbers - n_constants);
}

}  // namespace exprtree
