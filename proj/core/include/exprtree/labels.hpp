#pragma once

#include <string>
#include <vector>

#include "exprtree/equation.hpp"

namespace exprtree {

// Gold triples for one decoding layer, padded with None triples to size K.
struct LabelSet {
  std::vector<ExpressionTriple> triples;  // exactly K entries
  int layer_index = 0;

  int valid_count() const {
    int n = 0;
    for (const auto& t : triples)
      if (!t.is_padding()) ++n;
    return n;
  }
};

struct LabelCompileResult {
  std::vector<LabelSet> layers;
  bool overflowed = false;  // some round had more than K ready nodes
};

// Converts a gold tree into per-layer label sets: each round gathers every
// internal node whose children are both available (leaves or results of
// earlier rounds), in prefix order. Result indices are assigned globally in
// emission order. Rounds with more than K ready nodes keep the first K and
// defer the rest.
LabelCompileResult compile_label_sets(const ExprPtr& tree, int k);

// Replays compiled layers against the instance bindings; results come back
// in emission order, the root value last.
std::vector<Value> replay_label_sets(const std::vector<LabelSet>& layers,
                                     const std::vector<Value>& numbers,
                                     const ConstantTable& constants);

// Decoding-step counts for the four method families.
struct StepStats {
  int seq2seq_steps = 0;   // canonical infix token count, parentheses included
  int seq2tree_steps = 0;  // prefix token count
  int seq2exp_steps = 0;   // internal node count
  int exprtree_steps = 0;  // non-empty layers
};

StepStats step_stats(const ExprPtr& tree, int k);

struct StepAggregate {
  std::string method;
  double avg = 0.0;
  double stddev = 0.0;  // population std
  int max = 0;
};

// Aggregates step statistics over a corpus of parsed gold trees, one row per
// method family in the order seq2seq, seq2tree, seq2exp, exprtree.
std::vector<StepAggregate> corpus_step_report(const std::vector<ExprPtr>& trees, int k);

std::string step_report_csv(const std::vector<StepAggregate>& rows);

}  // namespace exprtree
