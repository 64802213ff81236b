#include "exprtree/labels.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

// Flattened tree where every visit is a distinct node, so trees that share
// subtree pointers still compile correctly. Nodes land in prefix order.
struct FlatNode {
  bool leaf = false;
  Op op = Op::None;
  Operand operand{};
  int left = -1, right = -1;
};

int flatten(const ExprPtr& t, std::vector<FlatNode>& out) {
  int id = static_cast<int>(out.size());
  out.push_back({});
  if (t->is_leaf()) {
    out[id].leaf = true;
    out[id].operand = t->leaf;
    return id;
  }
  out[id].op = t->op;
  int l = flatten(t->left, out);
  int r = flatten(t->right, out);
  out[id].left = l;
  out[id].right = r;
  return id;
}

}  // namespace

LabelCompileResult compile_label_sets(const ExprPtr& tree, int k) {
  if (k < 1) throw Error(ErrorCode::LabelCompileError, "K must be >= 1");
  LabelCompileResult result;
  if (!tree) throw Error(ErrorCode::LabelCompileError, "null tree");

  if (tree->is_leaf()) {
    // Degenerate single-operand equation: nothing to gather.
    return result;
  }

  std::vector<FlatNode> nodes;
  flatten(tree, nodes);
  std::vector<int> internal_ids;  // prefix order
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (!nodes[i].leaf) internal_ids.push_back(i);
  }

  std::vector<int> result_index(nodes.size(), -1);
  int next_result = 0;

  auto operand_of = [&](int child) -> Operand {
    if (nodes[child].leaf) return nodes[child].operand;
    return Operand::result(result_index[child]);
  };
  auto child_ready = [&](int child) {
    return nodes[child].leaf || result_index[child] >= 0;
  };

  std::vector<char> done(nodes.size(), 0);
  size_t remaining = internal_ids.size();
  while (remaining > 0) {
    std::vector<int> ready;
    for (int i : internal_ids) {
      if (done[i]) continue;
      if (child_ready(nodes[i].left) && child_ready(nodes[i].right)) ready.push_back(i);
    }
    if (ready.empty()) {
      throw Error(ErrorCode::LabelCompileError, "no ready nodes; malformed tree");
    }
    if (static_cast<int>(ready.size()) > k) {
      result.overflowed = true;
      ready.resize(k);
    }
    LabelSet set;
    set.layer_index = static_cast<int>(result.layers.size());
    for (int i : ready) {
      set.triples.push_back(ExpressionTriple::of(operand_of(nodes[i].left), nodes[i].op,
                                                 operand_of(nodes[i].right)));
    }
    // Mark after the whole layer is gathered so no triple can reference a
    // result from its own layer.
    for (int i : ready) {
      result_index[i] = next_result++;
      done[i] = 1;
      --remaining;
    }
    set.triples.resize(k, ExpressionTriple::padding());
    result.layers.push_back(std::move(set));
  }
  return result;
}

std::vector<Value> replay_label_sets(const std::vector<LabelSet>& layers,
                                     const std::vector<Value>& numbers,
                                     const ConstantTable& constants) {
  std::vector<Value> results;
  for (const auto& layer : layers) {
    // Operands may only reference results from earlier layers.
    size_t results_before = results.size();
    std::vector<Value> produced;
    for (const auto& t : layer.triples) {
      if (t.is_padding()) continue;
      std::vector<Value> visible(results.begin(), results.begin() + results_before);
      Value l = evaluate_operand(t.left, numbers, constants, visible);
      Value r = evaluate_operand(t.right, numbers, constants, visible);
      switch (t.op) {
        case Op::Add: produced.push_back(l + r); break;
        case Op::Sub: produced.push_back(l - r); break;
        case Op::Mul: produced.push_back(l * r); break;
        case Op::Div: produced.push_back(l / r); break;
        case Op::Pow: produced.push_back(Value::pow(l, r)); break;
        case Op::None: break;
      }
    }
    for (auto& v : produced) results.push_back(v);
  }
  return results;
}

StepStats step_stats(const ExprPtr& tree, int k) {
  StepStats s;
  s.seq2seq_steps = infix_token_count(tree);
  int internals = internal_node_count(tree);
  s.seq2tree_steps = 2 * internals + 1;  // full binary tree: nodes = 2k+1
  s.seq2exp_steps = internals;
  s.exprtree_steps = static_cast<int>(compile_label_sets(tree, k).layers.size());
  return s;
}

std::vector<StepAggregate> corpus_step_report(const std::vector<ExprPtr>& trees, int k) {
  const char* names[4] = {"seq2seq", "seq2tree", "seq2exp", "exprtree"};
  std::vector<std::vector<int>> columns(4);
  for (const auto& t : trees) {
    StepStats s = step_stats(t, k);
    columns[0].push_back(s.seq2seq_steps);
    columns[1].push_back(s.seq2tree_steps);
    columns[2].push_back(s.seq2exp_steps);
    columns[3].push_back(s.exprtree_steps);
  }
  std::vector<StepAggregate> rows;
  for (int m = 0; m < 4; ++m) {
    StepAggregate agg;
    agg.method = names[m];
    const auto& xs = columns[m];
    if (!xs.empty()) {
      double sum = 0;
      for (int x : xs) {
        sum += x;
        agg.max = std::max(agg.max, x);
      }
      agg.avg = sum / xs.size();
      double var = 0;
      for (int x : xs) var += (x - agg.avg) * (x - agg.avg);
      agg.stddev = std::sqrt(var / xs.size());
    }
    rows.push_back(agg);
  }
  return rows;
}

std::string step_report_csv(const std::vector<StepAggregate>& rows) {
  std::string out = "method,avg,std,max\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%d\n", r.method.c_str(), r.avg,
                  r.stddev, r.max);
    out += buf;
  }
  return out;
}

}  // namespace exprtree
