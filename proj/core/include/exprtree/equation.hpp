#pragma once

#include <memory>
#include <string>
#include <vector>

#include "exprtree/rational.hpp"

namespace exprtree {

// Five arithmetic operators plus the reserved None class. None is a valid
// classification target for the decoder but never appears inside a tree.
enum class Op { Add, Sub, Mul, Div, Pow, None };

constexpr int kNumOperatorClasses = 6;  // 5 operators + None
constexpr int kNoneOpIndex = 5;

const char* op_symbol(Op op);        // "+", "-", "*", "/", "^", "none"
Op op_from_symbol(const std::string& sym);
bool op_commutative(Op op);

// Operand of one expression step: a number from the problem text, an entry
// of the constant table, or the result of an expression produced earlier.
struct Operand {
  enum class Kind { ProblemNumber, Constant, ExprResult };
  Kind kind = Kind::ProblemNumber;
  int index = 0;

  static Operand number(int i) { return {Kind::ProblemNumber, i}; }
  static Operand constant(int i) { return {Kind::Constant, i}; }
  static Operand result(int i) { return {Kind::ExprResult, i}; }

  friend bool operator==(const Operand& a, const Operand& b) {
    return a.kind == b.kind && a.index == b.index;
  }
};

// Table of constant values shared by a corpus. Defaults to {1, pi, 100};
// extended on demand (constant 0 appears when unary minus is rewritten).
class ConstantTable {
 public:
  ConstantTable();  // {1, pi, 100}
  static ConstantTable empty() { return ConstantTable(std::vector<Value>{}); }
  explicit ConstantTable(std::vector<Value> values) : values_(std::move(values)) {}

  int size() const { return static_cast<int>(values_.size()); }
  const Value& at(int i) const { return values_.at(i); }
  const std::vector<Value>& values() const { return values_; }

  int find(const Value& v) const;         // -1 if absent
  int find_pi() const;
  int find_or_add(const Value& v);
  int find_or_add_pi();

  std::string token(int i) const;         // "1", "pi", "100", "0.5", ...

 private:
  std::vector<Value> values_;
  std::vector<bool> is_pi_;
  friend class InfixParser;
};

// Binary expression tree. Nodes are immutable and shared; copies are cheap.
struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  Op op = Op::None;  // None marks a leaf
  Operand leaf{};
  ExprPtr left, right;

  bool is_leaf() const { return op == Op::None; }
};

ExprPtr make_leaf(Operand operand);
ExprPtr make_node(Op op, ExprPtr left, ExprPtr right);

bool tree_equal(const ExprPtr& a, const ExprPtr& b);
int internal_node_count(const ExprPtr& tree);
int leaf_count(const ExprPtr& tree);
// Height in internal-node levels: a leaf is 0, a single expression is 1.
int tree_height(const ExprPtr& tree);

// One solving step (left, op, right); op == None marks a padding triple.
struct ExpressionTriple {
  Operand left{};
  Op op = Op::None;
  Operand right{};

  bool is_padding() const { return op == Op::None; }
  static ExpressionTriple padding() { return {}; }
  static ExpressionTriple of(Operand l, Op o, Operand r) { return {l, o, r}; }

  friend bool operator==(const ExpressionTriple& a, const ExpressionTriple& b) {
    if (a.op != b.op) return false;
    if (a.op == Op::None) return true;
    return a.left == b.left && a.right == b.right;
  }
};

// --- parsing and serialization -------------------------------------------

// Infix parser over tokens N<i>, constant literals ("1", "pi", "0.5"),
// + - * / ^ and parentheses. Standard precedence, ^ right-associative,
// unary minus rewritten to (0 - x). Unknown constant literals are appended
// to the table.
ExprPtr parse_infix(const std::string& text, int n_numbers, ConstantTable& constants);

std::vector<std::string> to_prefix(const ExprPtr& tree, const ConstantTable& constants);
ExprPtr parse_prefix(const std::vector<std::string>& tokens, int n_numbers,
                     ConstantTable& constants);

// Canonical infix with minimal parentheses; round-trips through parse_infix.
std::string serialize_infix(const ExprPtr& tree, const ConstantTable& constants);
// Token count of the canonical infix form, parentheses included.
int infix_token_count(const ExprPtr& tree);

std::string operand_token(const Operand& operand, const ConstantTable& constants);
std::string triple_str(const ExpressionTriple& triple, const ConstantTable& constants);

// --- evaluation and comparison -------------------------------------------

Value evaluate_operand(const Operand& operand, const std::vector<Value>& numbers,
                       const ConstantTable& constants, const std::vector<Value>& results);

Value evaluate(const ExprPtr& tree, const std::vector<Value>& numbers,
               const ConstantTable& constants, const std::vector<Value>& results = {});

// Structural equality modulo commutativity of + and *: children of
// commutative nodes are ordered by their serialized form before comparing.
bool canonical_equal(const ExprPtr& a, const ExprPtr& b);

enum class StructureClass { Single, Chain, Tree };
const char* structure_name(StructureClass c);
StructureClass classify_structure(const ExprPtr& tree);

// Index of an operand in the dynamic vocabulary V_n, laid out as
// [problem numbers][constants][expression results in emission order].
int operand_vocab_index(const Operand& operand, int n_numbers, int n_constants);

}  // namespace exprtree
