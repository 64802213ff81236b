#include "exprtree/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "exprtree/errors.hpp"

namespace exprtree {

const char* matching_mode_name(MatchingMode m) {
  switch (m) {
    case MatchingMode::Bipartite: return "bipartite";
    case MatchingMode::Sequence: return "sequence";
    case MatchingMode::Random: return "random";
  }
  return "?";
}

MatchingMode matching_mode_from_name(const std::string& name) {
  if (name == "bipartite") return MatchingMode::Bipartite;
  if (name == "sequence") return MatchingMode::Sequence;
  if (name == "random") return MatchingMode::Random;
  throw Error(ErrorCode::UsageError, "unknown matching mode: " + name);
}

namespace {

// Shortest-augmenting-path assignment (Jonker-Volgenant style, O(n^3)).
// Returns row -> column. Deterministic but not tie-break aware; hungarian()
// layers the lexicographic refinement on top.
std::vector<int> jv_solve(const std::vector<std::vector<double>>& a) {
  int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> beta(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] >= 1) beta[p[j] - 1] = j - 1;
  }
  return beta;
}

double jv_value(const std::vector<std::vector<double>>& a) {
  if (a.empty()) return 0.0;
  std::vector<int> beta = jv_solve(a);
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i][beta[i]];
  return s;
}

}  // namespace

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& beta) {
  double s = 0;
  for (size_t i = 0; i < cost.size(); ++i) s += cost[i][beta[i]];
  return s;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  double max_abs = 0.0;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n) {
      throw Error(ErrorCode::ShapeMismatch, "cost matrix is not square");
    }
    for (double c : row) {
      if (!std::isfinite(c)) throw Error(ErrorCode::NonFiniteCost, "cost entry not finite");
      max_abs = std::max(max_abs, std::fabs(c));
    }
  }

  double best = assignment_cost(cost, jv_solve(cost));
  // Wide enough to absorb summation rounding, narrow enough not to merge
  // genuinely distinct assignment costs.
  double tol = 1e-12 * std::max(1.0, max_abs * n);

  std::vector<int> beta(n, -1);
  std::vector<int> cols(n);
  for (int j = 0; j < n; ++j) cols[j] = j;
  double base = 0.0;

  for (int i = 0; i < n; ++i) {
    int chosen = -1;
    double fallback_val = std::numeric_limits<double>::infinity();
    int fallback_j = -1, fallback_idx = -1;
    for (size_t idx = 0; idx < cols.size(); ++idx) {
      int j = cols[idx];
      double sub = 0.0;
      if (i + 1 < n) {
        std::vector<std::vector<double>> rest(n - i - 1);
        for (int r = i + 1; r < n; ++r) {
          auto& row = rest[r - i - 1];
          row.reserve(cols.size() - 1);
          for (int c : cols) {
            if (c != j) row.push_back(cost[r][c]);
          }
        }
        sub = jv_value(rest);
      }
      double total = base + cost[i][j] + sub;
      if (total <= best + tol) {
        chosen = static_cast<int>(idx);
        break;
      }
      if (total < fallback_val) {
        fallback_val = total;
        fallback_j = j;
        fallback_idx = static_cast<int>(idx);
      }
    }
    if (chosen < 0) {
      // Numerically cornered; take the best candidate seen.
      beta[i] = fallback_j;
      base += cost[i][fallback_j];
      cols.erase(cols.begin() + fallback_idx);
      continue;
    }
    int j = cols[chosen];
    beta[i] = j;
    base += cost[i][j];
    cols.erase(cols.begin() + chosen);
  }
  return beta;
}

double match_cost(const ExpressionTriple& gold, const QueryPrediction& pred,
                  int n_numbers, int n_constants) {
  if (gold.op == Op::None) return 0.0;
  int op_idx = static_cast<int>(gold.op);
  int li = operand_vocab_index(gold.left, n_numbers, n_constants);
  int ri = operand_vocab_index(gold.right, n_numbers, n_constants);
  if (li < 0 || li >= pred.left_log_probs.cols || ri < 0 ||
      ri >= pred.right_log_probs.cols) {
    throw Error(ErrorCode::OperandNotInVocab, "gold operand outside V_n");
  }
  double p_op = std::exp(pred.op_log_probs.at(0, op_idx));
  double p_l = std::exp(pred.left_log_probs.at(0, li));
  double p_r = std::exp(pred.right_log_probs.at(0, ri));
  return -(p_op + p_l + p_r);
}

std::vector<std::vector<double>> build_cost_matrix(const LabelSet& gold,
                                                   const PredictionSet& preds) {
  size_t k = gold.triples.size();
  if (preds.queries.size() != k) {
    throw Error(ErrorCode::KMismatch, "gold/prediction set sizes differ");
  }
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = 0; j < k; ++j) {
      cost[i][j] =
          match_cost(gold.triples[i], preds.queries[j], preds.n_numbers, preds.n_constants);
    }
  }
  return cost;
}

Tensor set_loss(const LabelSet& gold, const PredictionSet& preds,
                const LossPolicy& policy, std::mt19937_64* rng,
                std::vector<int>* beta_out) {
  size_t k = gold.triples.size();
  if (preds.queries.size() != k) {
    throw Error(ErrorCode::KMismatch, "gold/prediction set sizes differ");
  }

  std::vector<int> beta(k);
  switch (policy.matching) {
    case MatchingMode::Bipartite:
      beta = hungarian(build_cost_matrix(gold, preds));
      break;
    case MatchingMode::Sequence:
      for (size_t i = 0; i < k; ++i) beta[i] = static_cast<int>(i);
      break;
    case MatchingMode::Random: {
      if (!rng) throw Error(ErrorCode::UsageError, "random matching needs a generator");
      for (size_t i = 0; i < k; ++i) beta[i] = static_cast<int>(i);
      for (size_t i = k; i > 1; --i) {
        size_t j = static_cast<size_t>((*rng)() % i);
        std::swap(beta[i - 1], beta[j]);
      }
      break;
    }
  }
  if (beta_out) *beta_out = beta;

  int usable = 0;
  if (k > 0) {
    usable = preds.queries[0].left_log_probs.cols - (preds.has_pad ? 1 : 0);
  }

  std::vector<Tensor> terms;
  for (size_t i = 0; i < k; ++i) {
    const ExpressionTriple& g = gold.triples[i];
    const QueryPrediction& pred = preds.queries[beta[i]];
    bool real = g.op != Op::None;
    if (policy.operator_none_loss || real) {
      terms.push_back(scale(pick(pred.op_log_probs, 0, static_cast<int>(g.op)), -1.0));
    }
    if (real) {
      int li = operand_vocab_index(g.left, preds.n_numbers, preds.n_constants);
      int ri = operand_vocab_index(g.right, preds.n_numbers, preds.n_constants);
      if (li < 0 || li >= usable || ri < 0 || ri >= usable) {
        throw Error(ErrorCode::OperandNotInVocab, "gold operand outside V_n");
      }
      terms.push_back(scale(pick(pred.left_log_probs, 0, li), -1.0));
      terms.push_back(scale(pick(pred.right_log_probs, 0, ri), -1.0));
    } else if (policy.operand_none_loss) {
      if (!preds.has_pad) {
        throw Error(ErrorCode::OperandNotInVocab, "pad class not present in V_n");
      }
      int pad = preds.queries[beta[i]].left_log_probs.cols - 1;
      terms.push_back(scale(pick(pred.left_log_probs, 0, pad), -1.0));
      terms.push_back(scale(pick(pred.right_log_probs, 0, pad), -1.0));
    }
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return sum_scalars(terms);
}

Tensor total_loss(const std::vector<Tensor>& layer_losses) {
  if (layer_losses.empty()) {
    throw Error(ErrorCode::EmptyInput, "total_loss needs at least one layer");
  }
  return sum_scalars(layer_losses);
}

}  // namespace exprtree
