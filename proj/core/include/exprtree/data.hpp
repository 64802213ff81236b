#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exprtree/equation.hpp"
#include "exprtree/rational.hpp"

namespace exprtree {

struct ProblemInstance {
  std::string id;
  std::vector<std::string> tokens;  // text with N<i> placeholders
  std::vector<Rational> numbers;    // values in text order
  std::string equation_infix;       // over N<i> / constant literals
  Value answer;
  ExprPtr tree;                     // parsed equation_infix
  ConstantTable constants;          // default table plus parse additions
};

// Replaces numeric literals (decimals, fractions a/b, percents p%) with
// N<i> placeholders in order of appearance. Non-numeric tokens pass through
// lowercased; trailing punctuation is split off and dropped.
std::pair<std::vector<std::string>, std::vector<Rational>> map_numbers(
    const std::string& raw_text);

// One JSON object per line with fields id, text, numbers, equation, answer.
// Numbers and answers are serialized as strings ("7", "2/3", decimal).
// Loading validates each record: parses the equation, checks every N<i>
// against |numbers| and cross-checks the answer within rel. 1e-6.
std::vector<ProblemInstance> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<ProblemInstance>& instances);

// Builds a validated instance from raw fields (shared by loader/generator).
ProblemInstance make_instance(std::string id, std::vector<std::string> tokens,
                              std::vector<Rational> numbers, std::string equation,
                              Value answer);

struct SynthSpec {
  int n_instances = 100;
  int max_internal_nodes = 3;
  double branch_bias = 0.5;  // probability a parent splits into two subtrees
  int number_min = 2;
  int number_max = 20;
  uint64_t seed = 1;
  std::string template_set = "ts1";
};

struct SynthResult {
  std::vector<ProblemInstance> instances;
  int n_single = 0, n_chain = 0, n_tree = 0;
};

// Deterministic templated word-problem generator. Trees are rendered
// left-to-right, so numbers appear in text in operand order; division by
// zero and overflow are avoided by resampling. Instances are deduplicated
// when the space allows it.
SynthResult synth_generate(const SynthSpec& spec);

// Every word the generator can emit (template set independent), sorted.
// The model vocabulary is built from this list, so checkpoints do not need
// to carry a vocabulary section.
std::vector<std::string> synth_vocabulary();

// Closed token vocabulary: generator words + specials. Unknown tokens map to
// <unk>; N<i> placeholders map to <num>.
class Vocabulary {
 public:
  Vocabulary();

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& token) const;
  const std::string& word(int id) const { return words_[id]; }
  int unk_id() const { return unk_id_; }
  int num_id() const { return num_id_; }

  // True for N<i> placeholders; writes the index.
  static bool number_token(const std::string& token, int* index);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  int unk_id_ = 0;
  int num_id_ = 0;
};

}  // namespace exprtree
