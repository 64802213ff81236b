#include "exprtree/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "exprtree/errors.hpp"
#include "exprtree/labels.hpp"

namespace exprtree {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

EvalReport aggregate_report(std::vector<InstanceEval> records) {
  EvalReport r;
  r.records = std::move(records);
  if (r.records.empty()) return r;

  int n = static_cast<int>(r.records.size());
  int ok = 0, eq_ok = 0;
  int ok_by_class[3] = {0, 0, 0}, n_by_class[3] = {0, 0, 0};
  int parallel_eligible = 0, parallel_hit = 0;
  double sum_layers = 0, sum_sq = 0;
  int layer_n = 0;

  for (const InstanceEval& e : r.records) {
    ok += e.answer_ok ? 1 : 0;
    eq_ok += e.equation_ok ? 1 : 0;
    int c = static_cast<int>(e.structure);
    ++n_by_class[c];
    if (e.answer_ok) ++ok_by_class[c];
    if (e.gold_layer0 >= 2) {
      ++parallel_eligible;
      if (e.layer0_emitted >= 2) ++parallel_hit;
    }
    if (!e.failed) {
      sum_layers += e.layers_used;
      sum_sq += static_cast<double>(e.layers_used) * e.layers_used;
      ++layer_n;
      r.max_layers_used = std::max(r.max_layers_used, e.layers_used);
      if (static_cast<int>(r.layer_histogram.size()) <= e.layers_used) {
        r.layer_histogram.resize(e.layers_used + 1, 0);
      }
      ++r.layer_histogram[e.layers_used];
    }
  }

  r.answer_accuracy = static_cast<double>(ok) / n;
  r.equation_accuracy = static_cast<double>(eq_ok) / n;
  r.n_single = n_by_class[0];
  r.n_chain = n_by_class[1];
  r.n_tree = n_by_class[2];
  auto rate = [](int hit, int total) {
    return total > 0 ? static_cast<double>(hit) / total : 0.0;
  };
  r.acc_single = rate(ok_by_class[0], n_by_class[0]);
  r.acc_chain = rate(ok_by_class[1], n_by_class[1]);
  r.acc_tree = rate(ok_by_class[2], n_by_class[2]);
  if (layer_n > 0) {
    r.avg_layers = sum_layers / layer_n;
    double var = sum_sq / layer_n - r.avg_layers * r.avg_layers;
    r.std_layers = std::sqrt(std::max(0.0, var));
  }
  r.parallelism_rate = rate(parallel_hit, parallel_eligible);
  return r;
}

EvalReport evaluate_model(const Model& model, const std::vector<ProblemInstance>& data,
                          double answer_rel_tol) {
  std::vector<InstanceEval> records;
  records.reserve(data.size());
  for (const ProblemInstance& inst : data) {
    InstanceEval e;
    e.id = inst.id;
    e.structure = classify_structure(inst.tree);
    LabelCompileResult gold = compile_label_sets(inst.tree, model.config().k);
    e.gold_layer0 = gold.layers.empty() ? 0 : gold.layers[0].valid_count();
    try {
      Model::InferResult out = model.infer(inst);
      e.layers_used = out.layers_used;
      e.layer0_emitted =
          out.layers.empty() ? 0 : static_cast<int>(out.layers[0].size());
      e.predicted = serialize_infix(out.tree, inst.constants);
      e.equation_ok = canonical_equal(out.tree, inst.tree);
      std::vector<Value> values(inst.numbers.begin(), inst.numbers.end());
      try {
        Value v = evaluate(out.tree, values, inst.constants);
        e.answer_ok = v.close_to(inst.answer, answer_rel_tol);
      } catch (const Error&) {
        e.answer_ok = false;  // undefined value (division by zero etc.)
      }
    } catch (const Error&) {
      e.failed = true;
    }
    records.push_back(std::move(e));
  }
  return aggregate_report(std::move(records));
}

std::string report_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  out += "n_instances," + std::to_string(r.records.size()) + "\n";
  out += "answer_accuracy," + fmt(r.answer_accuracy) + "\n";
  out += "equation_accuracy," + fmt(r.equation_accuracy) + "\n";
  out += "accuracy_single," + fmt(r.acc_single) + "\n";
  out += "accuracy_chain," + fmt(r.acc_chain) + "\n";
  out += "accuracy_tree," + fmt(r.acc_tree) + "\n";
  out += "n_single," + std::to_string(r.n_single) + "\n";
  out += "n_chain," + std::to_string(r.n_chain) + "\n";
  out += "n_tree," + std::to_string(r.n_tree) + "\n";
  out += "avg_layers," + fmt(r.avg_layers) + "\n";
  out += "std_layers," + fmt(r.std_layers) + "\n";
  out += "max_layers," + std::to_string(r.max_layers_used) + "\n";
  out += "parallelism_rate," + fmt(r.parallelism_rate) + "\n";
  return out;
}

std::vector<std::vector<double>> cosine_matrix(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols) throw Error(ErrorCode::ShapeMismatch, "cosine_matrix dims");
  std::vector<std::vector<double>> out(a.rows, std::vector<double>(b.rows, 0.0));
  for (int i = 0; i < a.rows; ++i) {
    double na = 0;
    for (int k = 0; k < a.cols; ++k) na += a.at(i, k) * a.at(i, k);
    for (int j = 0; j < b.rows; ++j) {
      double nb = 0, dot = 0;
      for (int k = 0; k < b.cols; ++k) {
        nb += b.at(j, k) * b.at(j, k);
        dot += a.at(i, k) * b.at(j, k);
      }
      double denom = std::sqrt(na) * std::sqrt(nb);
      out[i][j] = denom < 1e-30 ? 0.0 : dot / denom;
    }
  }
  return out;
}

std::vector<std::string> export_query_similarity(const Model& model,
                                                 const ProblemInstance& inst,
                                                 const std::string& out_prefix) {
  Model::InferResult res = model.infer(inst);
  std::vector<std::string> paths;
  for (int l = 0; l < res.layers_used; ++l) {
    auto sim = cosine_matrix(res.query_trace[l], res.p_trace[l]);
    std::string path = out_prefix + "layer" + std::to_string(l) + ".csv";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
    size_t cols = sim.empty() ? 0 : sim[0].size();
    for (size_t j = 0; j < cols; ++j) {
      os << (j ? ",pos" : "pos") << j;
    }
    os << "\n";
    for (const auto& row : sim) {
      for (size_t j = 0; j < row.size(); ++j) {
        if (j) os << ",";
        os << fmt(row[j]);
      }
      os << "\n";
    }
    if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace exprtree
