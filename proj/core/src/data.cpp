#include "exprtree/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double unit(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string strip_punct(std::string t) {
  while (!t.empty() && std::strchr(",.!?;:", t.back())) t.pop_back();
  return t;
}

std::string lower(std::string t) {
  for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return t;
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<Rational>> map_numbers(
    const std::string& raw_text) {
  std::vector<std::string> tokens;
  std::vector<Rational> numbers;
  for (const std::string& raw : split_ws(raw_text)) {
    std::string t = strip_punct(raw);
    if (t.empty()) continue;
    Rational r;
    if (Rational::try_parse(t, &r)) {
      tokens.push_back("N" + std::to_string(numbers.size()));
      numbers.push_back(r);
    } else {
      tokens.push_back(lower(t));
    }
  }
  return {tokens, numbers};
}

ProblemInstance make_instance(std::string id, std::vector<std::string> tokens,
                              std::vector<Rational> numbers, std::string equation,
                              Value answer) {
  ProblemInstance inst;
  inst.id = std::move(id);
  inst.tokens = std::move(tokens);
  inst.numbers = std::move(numbers);
  inst.equation_infix = std::move(equation);
  inst.answer = answer;
  try {
    inst.tree = parse_infix(inst.equation_infix, static_cast<int>(inst.numbers.size()),
                            inst.constants);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IndexOutOfRange) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "instance " + inst.id + ": " + e.what());
    }
    throw Error(e.code(), "instance " + inst.id + ": " + e.what());
  }
  std::vector<Value> values(inst.numbers.begin(), inst.numbers.end());
  Value computed;
  try {
    computed = evaluate(inst.tree, values, inst.constants);
  } catch (const Error& e) {
    throw Error(e.code(), "instance " + inst.id + ": " + e.what());
  }
  if (!computed.close_to(inst.answer, 1e-6)) {
    throw Error(ErrorCode::AnswerMismatch,
                "instance " + inst.id + ": equation evaluates to " + computed.str() +
                    ", answer says " + inst.answer.str());
  }
  return inst;
}

std::vector<ProblemInstance> load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open: " + path);
  std::vector<ProblemInstance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    auto context = path + ":" + std::to_string(line_no);
    try {
      if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
          !rec.contains("numbers") || !rec.contains("equation") ||
          !rec.contains("answer")) {
        throw Error(ErrorCode::MalformedRecord,
                    context + ": need fields id, text, numbers, equation, answer");
      }
      std::string id = rec.at("id").get<std::string>();
      std::vector<std::string> tokens = split_ws(rec.at("text").get<std::string>());
      std::vector<Rational> numbers;
      Value answer;
      try {
        for (const json& el : rec.at("numbers")) {
          numbers.push_back(el.is_string() ? Rational::parse(el.get<std::string>())
                                           : Rational::parse(el.dump()));
        }
        const json& ans = rec.at("answer");
        answer = ans.is_string() ? Value::parse(ans.get<std::string>())
                                 : Value::parse(ans.dump());
      } catch (const Error& e) {
        throw Error(ErrorCode::MalformedRecord, context + ": " + e.what());
      }
      out.push_back(make_instance(std::move(id), std::move(tokens), std::move(numbers),
                                  rec.at("equation").get<std::string>(), answer));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::MalformedRecord, context + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::string& path, const std::vector<ProblemInstance>& instances) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
  for (const ProblemInstance& inst : instances) {
    ordered_json rec;
    rec["id"] = inst.id;
    std::string text;
    for (size_t i = 0; i < inst.tokens.size(); ++i) {
      if (i) text += ' ';
      text += inst.tokens[i];
    }
    rec["text"] = text;
    json nums = json::array();
    for (const Rational& r : inst.numbers) nums.push_back(r.str());
    rec["numbers"] = nums;
    rec["equation"] = inst.equation_infix;
    rec["answer"] = inst.answer.str();
    os << rec.dump() << '\n';
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
}

// --- synthetic generator ---------------------------------------------------

namespace {

const char* const kNames[] = {"mia",  "liam", "noah", "emma", "ava",
                              "ethan", "lucy", "omar", "ravi", "sara"};

struct OpPhrase {
  Op op;
  const char* words;
};
const OpPhrase kOpPhrases[] = {
    {Op::Add, "plus"},       {Op::Add, "added to"},
    {Op::Sub, "minus"},      {Op::Sub, "less"},
    {Op::Mul, "times"},      {Op::Mul, "multiplied by"},
    {Op::Div, "divided by"}, {Op::Div, "over"},
};

// {name} and {expr} are substituted; every other word is vocabulary.
const char* const kFrames[] = {
    "find {expr} now",
    "what is {expr}",
    "{name} wants to know {expr}",
    "compute {expr} please",
    "{name} must find {expr}",
    "tell me {expr}",
};
const char* const kBareFrame = "find {expr} now";

const Rational kFractions[] = {{1, 2}, {1, 3}, {2, 3}, {1, 4}, {3, 4}, {3, 2}};

int phrase_count(Op op) {
  int n = 0;
  for (const OpPhrase& p : kOpPhrases)
    if (p.op == op) ++n;
  return n;
}

const char* phrase_at(Op op, int idx) {
  for (const OpPhrase& p : kOpPhrases) {
    if (p.op == op && idx-- == 0) return p.words;
  }
  return "";
}

// Shape with ops; leaves are placeholders renumbered afterwards.
ExprPtr sample_shape(int internal, double branch_bias, std::mt19937_64& rng) {
  if (internal == 0) return make_leaf(Operand::number(0));
  Op op = static_cast<Op>(rng() % 4);  // Add..Div
  int rest = internal - 1;
  int left_m = 0, right_m = 0;
  if (rest >= 2 && unit(rng) < branch_bias) {
    left_m = 1 + static_cast<int>(rng() % static_cast<uint64_t>(rest - 1));
    right_m = rest - left_m;
  } else if (rest > 0) {
    if (rng() % 2 == 0) {
      left_m = rest;
    } else {
      right_m = rest;
    }
  }
  ExprPtr l = sample_shape(left_m, branch_bias, rng);
  ExprPtr r = sample_shape(right_m, branch_bias, rng);
  return make_node(op, l, r);
}

ExprPtr renumber_leaves(const ExprPtr& t, int& next) {
  if (t->is_leaf()) return make_leaf(Operand::number(next++));
  ExprPtr l = renumber_leaves(t->left, next);
  ExprPtr r = renumber_leaves(t->right, next);
  return make_node(t->op, l, r);
}

std::string render_number(const Rational& v, std::mt19937_64& rng) {
  if (!v.is_integer()) return v.str();
  if (unit(rng) < 0.1) return std::to_string(v.num() * 100) + "%";
  return v.str();
}

std::string render_expr(const ExprPtr& t, const std::vector<std::string>& leaf_words,
                        std::mt19937_64& rng) {
  if (t->is_leaf()) return leaf_words[t->leaf.index];
  int n = phrase_count(t->op);
  const char* words = phrase_at(t->op, static_cast<int>(rng() % static_cast<uint64_t>(n)));
  return "( " + render_expr(t->left, leaf_words, rng) + " " + words + " " +
         render_expr(t->right, leaf_words, rng) + " )";
}

std::string apply_frame(const std::string& frame, const std::string& expr,
                        const std::string& name) {
  std::string out = frame;
  auto replace = [&out](const std::string& key, const std::string& val) {
    size_t pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), val);
  };
  replace("{expr}", expr);
  replace("{name}", name);
  return out;
}

}  // namespace

std::vector<std::string> synth_vocabulary() {
  std::set<std::string> words;
  for (const char* n : kNames) words.insert(n);
  words.insert("(");
  words.insert(")");
  auto add_words = [&words](const std::string& s) {
    for (const std::string& w : split_ws(s)) {
      if (w != "{expr}" && w != "{name}") words.insert(w);
    }
  };
  for (const OpPhrase& p : kOpPhrases) add_words(p.words);
  for (const char* f : kFrames) add_words(f);
  add_words(kBareFrame);
  return {words.begin(), words.end()};
}

SynthResult synth_generate(const SynthSpec& spec) {
  if (spec.max_internal_nodes < 1) {
    throw Error(ErrorCode::UsageError, "max_internal_nodes must be >= 1");
  }
  if (spec.branch_bias < 0.0 || spec.branch_bias > 1.0) {
    throw Error(ErrorCode::UsageError, "branch_bias must be in [0, 1]");
  }
  if (spec.number_min < 1 || spec.number_min > spec.number_max) {
    throw Error(ErrorCode::UsageError, "need 1 <= number_min <= number_max");
  }
  bool bare = spec.template_set == "bare";
  if (!bare && spec.template_set != "ts1") {
    throw Error(ErrorCode::UsageError, "unknown template set: " + spec.template_set);
  }

  std::mt19937_64 rng(spec.seed);
  SynthResult result;
  std::set<std::string> seen;
  ConstantTable table;  // defaults; generator never adds constants

  for (int i = 0; i < spec.n_instances; ++i) {
    for (int attempt = 0;; ++attempt) {
      int m = 1 + static_cast<int>(rng() % static_cast<uint64_t>(spec.max_internal_nodes));
      ExprPtr shape = sample_shape(m, spec.branch_bias, rng);
      int next = 0;
      ExprPtr tree = renumber_leaves(shape, next);
      int n_leaves = next;

      std::vector<Rational> values;
      std::vector<std::string> leaf_words;
      for (int j = 0; j < n_leaves; ++j) {
        Rational v;
        if (unit(rng) < 0.15) {
          v = kFractions[rng() % 6];
        } else {
          v = Rational(spec.number_min +
                       static_cast<int64_t>(rng() % static_cast<uint64_t>(
                                                spec.number_max - spec.number_min + 1)));
        }
        values.push_back(v);
        leaf_words.push_back(render_number(v, rng));
      }

      Value answer;
      try {
        std::vector<Value> vals(values.begin(), values.end());
        answer = evaluate(tree, vals, table);
      } catch (const Error&) {
        continue;  // zero divisor or overflow; resample
      }
      if (std::abs(answer.to_double()) > 1e9) continue;

      std::string expr_text = render_expr(tree, leaf_words, rng);
      std::string frame =
          bare ? kBareFrame
               : kFrames[rng() % (sizeof(kFrames) / sizeof(kFrames[0]))];
      std::string name = kNames[rng() % (sizeof(kNames) / sizeof(kNames[0]))];
      std::string raw = apply_frame(frame, expr_text, name);

      std::string equation = serialize_infix(tree, table);
      std::string key = raw + "|" + equation;
      if (seen.count(key) && attempt < 300) continue;
      seen.insert(key);

      auto [tokens, numbers] = map_numbers(raw);
      if (numbers != values) continue;  // rendering glitch; resample

      ProblemInstance inst =
          make_instance("synth-" + std::to_string(spec.seed) + "-" + std::to_string(i),
                        std::move(tokens), std::move(numbers), equation, answer);
      switch (classify_structure(inst.tree)) {
        case StructureClass::Single: ++result.n_single; break;
        case StructureClass::Chain: ++result.n_chain; break;
        case StructureClass::Tree: ++result.n_tree; break;
      }
      result.instances.push_back(std::move(inst));
      break;
    }
  }
  return result;
}

Vocabulary::Vocabulary() {
  words_.push_back("<unk>");
  words_.push_back("<num>");
  unk_id_ = 0;
  num_id_ = 1;
  for (const std::string& w : synth_vocabulary()) words_.push_back(w);
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) ids_[words_[i]] = i;
}

int Vocabulary::id(const std::string& token) const {
  int idx;
  if (number_token(token, &idx)) return num_id_;
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_id_ : it->second;
}

bool Vocabulary::number_token(const std::string& token, int* index) {
  if (token.size() < 2 || token[0] != 'N') return false;
  for (size_t i = 1; i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return false;
  }
  if (index) *index = std::stoi(token.substr(1));
  return true;
}

}  // namespace exprtree
