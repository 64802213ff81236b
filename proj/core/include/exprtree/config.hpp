#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "exprtree/model.hpp"
#include "exprtree/trainer.hpp"

namespace exprtree {

using KvMap = std::map<std::string, std::string>;

// key=value per line; blank lines and #-comments ignored.
KvMap read_kv_file(const std::string& path);
void write_kv_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries);

// Model keys: d, k, max_layers, n_heads, layer_shared, encoder_depth, seed,
// positional, operand_pad, d_ff.
std::vector<std::pair<std::string, std::string>> model_config_kv(const ModelConfig& mc);
ModelConfig model_config_from_kv(const KvMap& kv, ModelConfig defaults = {});

// Accepts model keys plus: lr, warmup_frac, batch_size, epochs, seeds
// (comma-separated), matching (bipartite|sequence|random), operand_none_loss,
// operator_none_loss, grad_clip, weight_decay, beta1, beta2, adam_eps,
// early_stop_dev_acc, answer_tol. Unknown keys are errors.
TrainConfig train_config_from_kv(const KvMap& kv, TrainConfig defaults = {});

}  // namespace exprtree
