#include "exprtree/equation.hpp"

#include <cctype>
#include <cmath>
#include <algorithm>

#include "exprtree/errors.hpp"

namespace exprtree {

const char* op_symbol(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Pow: return "^";
    case Op::None: return "none";
  }
  return "?";
}

Op op_from_symbol(const std::string& sym) {
  if (sym == "+") return Op::Add;
  if (sym == "-") return Op::Sub;
  if (sym == "*") return Op::Mul;
  if (sym == "/") return Op::Div;
  if (sym == "^") return Op::Pow;
  if (sym == "none") return Op::None;
  throw Error(ErrorCode::UnknownToken, "not an operator: '" + sym + "'");
}

bool op_commutative(Op op) { return op == Op::Add || op == Op::Mul; }

ConstantTable::ConstantTable() {
  values_ = {Value(Rational(1)), Value::real(M_PI), Value(Rational(100))};
  is_pi_ = {false, true, false};
}

int ConstantTable::find(const Value& v) const {
  for (int i = 0; i < size(); ++i) {
    if (i < static_cast<int>(is_pi_.size()) && is_pi_[i]) continue;
    if (values_[i] == v) return i;
  }
  return -1;
}

int ConstantTable::find_pi() const {
  for (int i = 0; i < size(); ++i) {
    if (i < static_cast<int>(is_pi_.size()) && is_pi_[i]) return i;
  }
  return -1;
}

int ConstantTable::find_or_add(const Value& v) {
  int i = find(v);
  if (i >= 0) return i;
  values_.push_back(v);
  is_pi_.resize(values_.size(), false);
  return size() - 1;
}

int ConstantTable::find_or_add_pi() {
  int i = find_pi();
  if (i >= 0) return i;
  values_.push_back(Value::real(M_PI));
  is_pi_.resize(values_.size(), false);
  is_pi_.back() = true;
  return size() - 1;
}

std::string ConstantTable::token(int i) const {
  if (i < static_cast<int>(is_pi_.size()) && is_pi_[i]) return "pi";
  const Value& v = values_.at(i);
  if (v.is_exact()) return v.rat().decimal_str();
  return v.str();
}

ExprPtr make_leaf(Operand operand) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::None;
  n->leaf = operand;
  return n;
}

ExprPtr make_node(Op op, ExprPtr left, ExprPtr right) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->left = std::move(left);
  n->right = std::move(right);
  return n;
}

bool tree_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->op != b->op) return false;
  if (a->is_leaf()) return a->leaf == b->leaf;
  return tree_equal(a->left, b->left) && tree_equal(a->right, b->right);
}

int internal_node_count(const ExprPtr& tree) {
  if (!tree || tree->is_leaf()) return 0;
  return 1 + internal_node_count(tree->left) + internal_node_count(tree->right);
}

int leaf_count(const ExprPtr& tree) {
  if (!tree) return 0;
  if (tree->is_leaf()) return 1;
  return leaf_count(tree->left) + leaf_count(tree->right);
}

int tree_height(const ExprPtr& tree) {
  if (!tree || tree->is_leaf()) return 0;
  return 1 + std::max(tree_height(tree->left), tree_height(tree->right));
}

// --- infix parsing ---------------------------------------------------------

namespace {

struct Token {
  enum class Kind { Number, Constant, Pi, Op, LParen, RParen };
  Kind kind;
  int index = 0;       // Number
  Rational literal;    // Constant
  char op = 0;         // Op
};

std::vector<Token> lex(const std::string& text, int n_numbers) {
  std::vector<Token> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '(') {
      out.push_back({Token::Kind::LParen});
      ++i;
    } else if (c == ')') {
      out.push_back({Token::Kind::RParen});
      ++i;
    } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^') {
      Token t{Token::Kind::Op};
      t.op = c;
      out.push_back(t);
      ++i;
    } else if (c == 'N' && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      size_t j = i + 1;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      int idx = std::stoi(text.substr(i + 1, j - i - 1));
      if (idx >= n_numbers) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "N" + std::to_string(idx) + " but instance has " +
                        std::to_string(n_numbers) + " numbers");
      }
      Token t{Token::Kind::Number};
      t.index = idx;
      out.push_back(t);
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < n && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
      Token t{Token::Kind::Constant};
      t.literal = Rational::parse(text.substr(i, j - i));
      out.push_back(t);
      i = j;
    } else if (text.compare(i, 2, "pi") == 0) {
      out.push_back({Token::Kind::Pi});
      i += 2;
    } else {
      throw Error(ErrorCode::UnknownToken,
                  "unexpected character '" + std::string(1, c) + "' at offset " +
                      std::to_string(i));
    }
  }
  return out;
}

int op_prec(char c) {
  switch (c) {
    case '+':
    case '-': return 1;
    case '*':
    case '/': return 2;
    case '^': return 3;
  }
  return 0;
}

Op op_of_char(char c) {
  switch (c) {
    case '+': return Op::Add;
    case '-': return Op::Sub;
    case '*': return Op::Mul;
    case '/': return Op::Div;
    case '^': return Op::Pow;
  }
  throw Error(ErrorCode::UnknownToken, "bad operator");
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, ConstantTable& constants)
      : tokens_(std::move(tokens)), constants_(constants) {}

  ExprPtr parse() {
    if (tokens_.empty()) throw Error(ErrorCode::EmptyInput, "empty equation");
    ExprPtr e = parse_expr(1);
    if (pos_ != tokens_.size()) {
      if (tokens_[pos_].kind == Token::Kind::RParen) {
        throw Error(ErrorCode::UnbalancedParens, "unexpected ')'");
      }
      throw Error(ErrorCode::UnknownToken, "trailing tokens in equation");
    }
    return e;
  }

 private:
  bool at_end() const { return pos_ >= tokens_.size(); }
  const Token& peek() const { return tokens_[pos_]; }

  ExprPtr parse_expr(int min_prec) {
    ExprPtr lhs = parse_unary();
    while (!at_end() && peek().kind == Token::Kind::Op && op_prec(peek().op) >= min_prec) {
      char c = tokens_[pos_++].op;
      // '^' is right-associative, the rest left-associative
      int next_min = (c == '^') ? op_prec(c) : op_prec(c) + 1;
      ExprPtr rhs = parse_expr(next_min);
      lhs = make_node(op_of_char(c), lhs, rhs);
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (at_end()) throw Error(ErrorCode::EmptyInput, "expected operand");
    if (peek().kind == Token::Kind::Op && peek().op == '-') {
      ++pos_;
      // unary minus rewrites to (0 - x); binds looser than '^'
      ExprPtr operand = parse_expr(op_prec('^'));
      int zero = constants_.find_or_add(Value(Rational(0)));
      return make_node(Op::Sub, make_leaf(Operand::constant(zero)), operand);
    }
    return parse_primary();
  }

  ExprPtr parse_primary() {
    if (at_end()) throw Error(ErrorCode::EmptyInput, "expected operand");
    const Token& t = tokens_[pos_];
    switch (t.kind) {
      case Token::Kind::LParen: {
        ++pos_;
        ExprPtr e = parse_expr(1);
        if (at_end() || peek().kind != Token::Kind::RParen) {
          throw Error(ErrorCode::UnbalancedParens, "missing ')'");
        }
        ++pos_;
        return e;
      }
      case Token::Kind::Number:
        ++pos_;
        return make_leaf(Operand::number(t.index));
      case Token::Kind::Constant: {
        ++pos_;
        int idx = constants_.find_or_add(Value(t.literal));
        return make_leaf(Operand::constant(idx));
      }
      case Token::Kind::Pi: {
        ++pos_;
        int idx = constants_.find_or_add_pi();
        return make_leaf(Operand::constant(idx));
      }
      case Token::Kind::Op:
        throw Error(ErrorCode::UnknownToken, "operator where operand expected");
      case Token::Kind::RParen:
        throw Error(ErrorCode::UnbalancedParens, "unexpected ')'");
    }
    throw Error(ErrorCode::UnknownToken, "bad token");
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
  ConstantTable& constants_;
};

}  // namespace

ExprPtr parse_infix(const std::string& text, int n_numbers, ConstantTable& constants) {
  return Parser(lex(text, n_numbers), constants).parse();
}

// --- serialization ---------------------------------------------------------

namespace {

int tree_prec(const ExprPtr& t) {
  if (t->is_leaf()) return 100;
  switch (t->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Pow: return 3;
    default: return 100;
  }
}

bool child_needs_parens(const ExprPtr& parent, const ExprPtr& child, bool is_right) {
  if (child->is_leaf()) return false;
  int pp = tree_prec(parent);
  int cp = tree_prec(child);
  if (cp < pp) return true;
  if (cp > pp) return false;
  bool right_assoc = parent->op == Op::Pow;
  return right_assoc ? !is_right : is_right;
}

void infix_tokens_rec(const ExprPtr& t, const ConstantTable& constants,
                      std::vector<std::string>& out) {
  if (t->is_leaf()) {
    out.push_back(operand_token(t->leaf, constants));
    return;
  }
  auto emit_child = [&](const ExprPtr& c, bool is_right) {
    bool parens = child_needs_parens(t, c, is_right);
    if (parens) out.push_back("(");
    infix_tokens_rec(c, constants, out);
    if (parens) out.push_back(")");
  };
  emit_child(t->left, false);
  out.push_back(op_symbol(t->op));
  emit_child(t->right, true);
}

int infix_token_count_rec(const ExprPtr& t, const ExprPtr& parent, bool is_right) {
  if (t->is_leaf()) return 1;
  int n = infix_token_count_rec(t->left, t, false) + 1 +
          infix_token_count_rec(t->right, t, true);
  if (parent && child_needs_parens(parent, t, is_right)) n += 2;
  return n;
}

}  // namespace

std::string operand_token(const Operand& operand, const ConstantTable& constants) {
  switch (operand.kind) {
    case Operand::Kind::ProblemNumber: return "N" + std::to_string(operand.index);
    case Operand::Kind::Constant:
      if (operand.index < constants.size()) return constants.token(operand.index);
      return "C" + std::to_string(operand.index);
    case Operand::Kind::ExprResult: return "v" + std::to_string(operand.index);
  }
  return "?";
}

std::string triple_str(const ExpressionTriple& triple, const ConstantTable& constants) {
  if (triple.is_padding()) return "none";
  return operand_token(triple.left, constants) + " " + op_symbol(triple.op) + " " +
         operand_token(triple.right, constants);
}

std::string serialize_infix(const ExprPtr& tree, const ConstantTable& constants) {
  std::vector<std::string> tokens;
  infix_tokens_rec(tree, constants, tokens);
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

int infix_token_count(const ExprPtr& tree) {
  return infix_token_count_rec(tree, nullptr, false);
}

std::vector<std::string> to_prefix(const ExprPtr& tree, const ConstantTable& constants) {
  std::vector<std::string> out;
  auto walk = [&](auto&& self, const ExprPtr& t) -> void {
    if (t->is_leaf()) {
      out.push_back(operand_token(t->leaf, constants));
      return;
    }
    out.push_back(op_symbol(t->op));
    self(self, t->left);
    self(self, t->right);
  };
  walk(walk, tree);
  return out;
}

namespace {

ExprPtr parse_prefix_rec(const std::vector<std::string>& tokens, size_t& pos,
                         int n_numbers, ConstantTable& constants) {
  if (pos >= tokens.size()) throw Error(ErrorCode::EmptyInput, "prefix form truncated");
  const std::string& tok = tokens[pos++];
  if (tok == "+" || tok == "-" || tok == "*" || tok == "/" || tok == "^") {
    Op op = op_from_symbol(tok);
    ExprPtr l = parse_prefix_rec(tokens, pos, n_numbers, constants);
    ExprPtr r = parse_prefix_rec(tokens, pos, n_numbers, constants);
    return make_node(op, l, r);
  }
  if (tok.size() >= 2 && tok[0] == 'N' && std::isdigit(static_cast<unsigned char>(tok[1]))) {
    int idx = std::stoi(tok.substr(1));
    if (idx >= n_numbers) {
      throw Error(ErrorCode::IndexOutOfRange, "N" + std::to_string(idx) + " out of range");
    }
    return make_leaf(Operand::number(idx));
  }
  if (tok.size() >= 2 && tok[0] == 'v' && std::isdigit(static_cast<unsigned char>(tok[1]))) {
    return make_leaf(Operand::result(std::stoi(tok.substr(1))));
  }
  if (tok == "pi") return make_leaf(Operand::constant(constants.find_or_add_pi()));
  Rational r;
  if (Rational::try_parse(tok, &r)) {
    return make_leaf(Operand::constant(constants.find_or_add(Value(r))));
  }
  throw Error(ErrorCode::UnknownToken, "bad prefix token '" + tok + "'");
}

}  // namespace

ExprPtr parse_prefix(const std::vector<std::string>& tokens, int n_numbers,
                     ConstantTable& constants) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyInput, "empty prefix form");
  size_t pos = 0;
  ExprPtr t = parse_prefix_rec(tokens, pos, n_numbers, constants);
  if (pos != tokens.size()) {
    throw Error(ErrorCode::UnknownToken, "trailing tokens in prefix form");
  }
  return t;
}

// --- evaluation ------------------------------------------------------------

Value evaluate_operand(const Operand& operand, const std::vector<Value>& numbers,
                       const ConstantTable& constants, const std::vector<Value>& results) {
  switch (operand.kind) {
    case Operand::Kind::ProblemNumber:
      if (operand.index < 0 || operand.index >= static_cast<int>(numbers.size())) {
        throw Error(ErrorCode::UnresolvedOperand, "N" + std::to_string(operand.index));
      }
      return numbers[operand.index];
    case Operand::Kind::Constant:
      if (operand.index < 0 || operand.index >= constants.size()) {
        throw Error(ErrorCode::UnresolvedOperand, "C" + std::to_string(operand.index));
      }
      return constants.at(operand.index);
    case Operand::Kind::ExprResult:
      if (operand.index < 0 || operand.index >= static_cast<int>(results.size())) {
        throw Error(ErrorCode::UnresolvedOperand, "v" + std::to_string(operand.index));
      }
      return results[operand.index];
  }
  throw Error(ErrorCode::UnresolvedOperand, "bad operand kind");
}

Value evaluate(const ExprPtr& tree, const std::vector<Value>& numbers,
               const ConstantTable& constants, const std::vector<Value>& results) {
  if (tree->is_leaf()) return evaluate_operand(tree->leaf, numbers, constants, results);
  Value l = evaluate(tree->left, numbers, constants, results);
  Value r = evaluate(tree->right, numbers, constants, results);
  switch (tree->op) {
    case Op::Add: return l + r;
    case Op::Sub: return l - r;
    case Op::Mul: return l * r;
    case Op::Div: return l / r;
    case Op::Pow: return Value::pow(l, r);
    case Op::None: break;
  }
  throw Error(ErrorCode::UnresolvedOperand, "None operator inside tree");
}

// --- canonical comparison ---------------------------------------------------

namespace {

// Returns the canonicalized tree plus a serialization key used for ordering.
std::pair<ExprPtr, std::string> canonicalize(const ExprPtr& t) {
  if (t->is_leaf()) {
    const char* k = t->leaf.kind == Operand::Kind::ProblemNumber ? "N"
                    : t->leaf.kind == Operand::Kind::Constant    ? "C"
                                                                 : "R";
    return {t, std::string(k) + std::to_string(t->leaf.index)};
  }
  auto [l, kl] = canonicalize(t->left);
  auto [r, kr] = canonicalize(t->right);
  if (op_commutative(t->op) && kr < kl) {
    std::swap(l, r);
    std::swap(kl, kr);
  }
  std::string key = std::string(op_symbol(t->op)) + " " + kl + " " + kr;
  if (l == t->left && r == t->right) return {t, key};
  return {make_node(t->op, l, r), key};
}

}  // namespace

bool canonical_equal(const ExprPtr& a, const ExprPtr& b) {
  return canonicalize(a).second == canonicalize(b).second;
}

const char* structure_name(StructureClass c) {
  switch (c) {
    case StructureClass::Single: return "single";
    case StructureClass::Chain: return "chain";
    case StructureClass::Tree: return "tree";
  }
  return "?";
}

StructureClass classify_structure(const ExprPtr& tree) {
  if (internal_node_count(tree) <= 1) return StructureClass::Single;
  bool is_chain = true;
  auto walk = [&](auto&& self, const ExprPtr& t) -> void {
    if (t->is_leaf()) return;
    int internal_children = (!t->left->is_leaf() ? 1 : 0) + (!t->right->is_leaf() ? 1 : 0);
    if (internal_children > 1) is_chain = false;
    self(self, t->left);
    self(self, t->right);
  };
  walk(walk, tree);
  return is_chain ? StructureClass::Chain : StructureClass::Tree;
}

int operand_vocab_index(const Operand& operand, int n_numbers, int n_constants) {
  switch (operand.kind) {
    case Operand::Kind::ProblemNumber: return operand.index;
    case Operand::Kind::Constant: return n_numbers + operand.index;
    case Operand::Kind::ExprResult: return n_numbers + n_constants + operand.index;
  }
  throw Error(ErrorCode::UnresolvedOperand, "bad operand kind");
}

}  // namespace exprtree
