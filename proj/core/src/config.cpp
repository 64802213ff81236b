#include "exprtree/config.hpp"

#include <fstream>
#include <sstream>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, "config " + key + ": bad integer '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, "config " + key + ": bad integer '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, "config " + key + ": bad number '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error(ErrorCode::UsageError, "config " + key + ": bad bool '" + v + "'");
}

// Returns true when the key belongs to ModelConfig and was applied.
bool apply_model_key(ModelConfig& mc, const std::string& key, const std::string& v) {
  if (key == "d") mc.d = to_int(key, v);
  else if (key == "k") mc.k = to_int(key, v);
  else if (key == "max_layers") mc.max_layers = to_int(key, v);
  else if (key == "n_heads") mc.n_heads = to_int(key, v);
  else if (key == "layer_shared") mc.layer_shared = to_bool(key, v);
  else if (key == "encoder_depth") mc.encoder_depth = to_int(key, v);
  else if (key == "seed") mc.seed = to_u64(key, v);
  else if (key == "positional") mc.positional = to_bool(key, v);
  else if (key == "operand_pad") mc.operand_pad = to_bool(key, v);
  else if (key == "d_ff") mc.d_ff = to_int(key, v);
  else return false;
  return true;
}

}  // namespace

KvMap read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open config: " + path);
  KvMap kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::UsageError,
                  path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
  for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
}

std::vector<std::pair<std::string, std::string>> model_config_kv(const ModelConfig& mc) {
  return {
      {"d", std::to_string(mc.d)},
      {"k", std::to_string(mc.k)},
      {"max_layers", std::to_string(mc.max_layers)},
      {"n_heads", std::to_string(mc.n_heads)},
      {"layer_shared", mc.layer_shared ? "1" : "0"},
      {"encoder_depth", std::to_string(mc.encoder_depth)},
      {"seed", std::to_string(mc.seed)},
      {"positional", mc.positional ? "1" : "0"},
      {"operand_pad", mc.operand_pad ? "1" : "0"},
      {"d_ff", std::to_string(mc.d_ff)},
  };
}

ModelConfig model_config_from_kv(const KvMap& kv, ModelConfig defaults) {
  for (const auto& [key, value] : kv) {
    if (!apply_model_key(defaults, key, value)) {
      throw Error(ErrorCode::UsageError, "unknown model config key: " + key);
    }
  }
  return defaults;
}

TrainConfig train_config_from_kv(const KvMap& kv, TrainConfig defaults) {
  TrainConfig c = defaults;
  for (const auto& [key, v] : kv) {
    if (apply_model_key(c.model, key, v)) continue;
    if (key == "lr") c.lr = to_double(key, v);
    else if (key == "warmup_frac") c.warmup_frac = to_double(key, v);
    else if (key == "batch_size") c.batch_size = to_int(key, v);
    else if (key == "epochs") c.epochs = to_int(key, v);
    else if (key == "seeds") {
      c.seeds.clear();
      std::stringstream ss(v);
      std::string part;
      while (std::getline(ss, part, ',')) c.seeds.push_back(to_u64(key, trim(part)));
      if (c.seeds.empty()) throw Error(ErrorCode::UsageError, "config seeds: empty list");
    } else if (key == "matching") {
      c.policy.matching = matching_mode_from_name(v);
    } else if (key == "operand_none_loss") {
      c.policy.operand_none_loss = to_bool(key, v);
    } else if (key == "operator_none_loss") {
      c.policy.operator_none_loss = to_bool(key, v);
    } else if (key == "grad_clip") {
      c.grad_clip = to_double(key, v);
    } else if (key == "weight_decay") {
      c.weight_decay = to_double(key, v);
    } else if (key == "beta1") {
      c.beta1 = to_double(key, v);
    } else if (key == "beta2") {
      c.beta2 = to_double(key, v);
    } else if (key == "adam_eps") {
      c.adam_eps = to_double(key, v);
    } else if (key == "early_stop_dev_acc") {
      c.early_stop_dev_acc = to_double(key, v);
    } else if (key == "answer_tol") {
      c.answer_rel_tol = to_double(key, v);
    } else {
      throw Error(ErrorCode::UsageError, "unknown config key: " + key);
    }
  }
  return c;
}

}  // namespace exprtree
