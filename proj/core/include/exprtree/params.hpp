#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exprtree/tensor.hpp"

namespace exprtree {

// Named trainable parameters. Creation order is the serialization order;
// initialization draws from a single seeded stream, so a fixed creation
// sequence + seed gives identical values everywhere.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed);

  // Creators (name must be fresh). weight: uniform(-1/sqrt(d_in), 1/sqrt(d_in)).
  Tensor weight(const std::string& name, int d_in, int d_out);
  Tensor embedding(const std::string& name, int count, int dim);  // +-1/sqrt(dim)
  Tensor bias(const std::string& name, int dim);                  // zeros
  Tensor ln_gain(const std::string& name, int dim);               // ones

  // Lookup. While bind() is active the returned tensor is tracked on that
  // tape, so gradients flow back to the store via collect_grads().
  Tensor use(const std::string& name) const;
  bool has(const std::string& name) const;

  int count() const { return static_cast<int>(params_.size()); }
  const std::string& name(int i) const { return params_[i].name; }
  std::pair<int, int> shape(int i) const { return {params_[i].rows, params_[i].cols}; }
  std::vector<double>& value(int i) { return *params_[i].value; }
  const std::vector<double>& value(int i) const { return *params_[i].value; }
  std::vector<double>& grad(int i) { return params_[i].grad; }
  size_t total_scalars() const;
  uint64_t seed() const { return seed_; }

  void zero_grads();
  double grad_norm() const;

  // Per-step lifecycle: bind before building the graph, collect after
  // backward, unbind before the tape dies.
  void bind(Tape& tape);
  void collect_grads();
  void unbind();

  // Value snapshots (for best-dev bookkeeping).
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

  // Flat binary checkpoint: header (magic, version, param count), then per
  // param (name length, name bytes, rank, dims, raw doubles little-endian).
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  struct Param {
    std::string name;
    int rows = 0, cols = 0;
    std::shared_ptr<std::vector<double>> value;
    std::vector<double> grad;
    int node = -1;
  };

  Tensor create(const std::string& name, int rows, int cols, double lo, double hi);
  const Param& find(const std::string& name) const;

  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
  uint64_t seed_ = 0;
  std::mt19937_64 rng_;
  Tape* bound_ = nullptr;
};

}  // namespace exprtree
