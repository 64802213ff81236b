#include "exprtree/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

constexpr char kMagic[8] = {'X', 'T', 'R', 'E', 'E', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

// mt19937_64 output mapped to [0,1) the same way on every platform
// (std::uniform_real_distribution is implementation-defined).
double unit(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorCode::IoError, "checkpoint truncated");
  return v;
}

}  // namespace

ParamStore::ParamStore(uint64_t seed) : seed_(seed), rng_(seed) {}

Tensor ParamStore::create(const std::string& name, int rows, int cols, double lo,
                          double hi) {
  if (index_.count(name)) {
    throw Error(ErrorCode::IoError, "duplicate parameter name: " + name);
  }
  Param p;
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  p.value = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * cols);
  p.grad.assign(p.value->size(), 0.0);
  if (lo != hi) {
    for (double& v : *p.value) v = lo + unit(rng_) * (hi - lo);
  } else {
    for (double& v : *p.value) v = lo;
  }
  index_[name] = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  return use(name);
}

Tensor ParamStore::weight(const std::string& name, int d_in, int d_out) {
  double b = 1.0 / std::sqrt(static_cast<double>(d_in));
  return create(name, d_in, d_out, -b, b);
}

Tensor ParamStore::embedding(const std::string& name, int count, int dim) {
  double b = 1.0 / std::sqrt(static_cast<double>(dim));
  return create(name, count, dim, -b, b);
}

Tensor ParamStore::bias(const std::string& name, int dim) {
  return create(name, 1, dim, 0.0, 0.0);
}

Tensor ParamStore::ln_gain(const std::string& name, int dim) {
  return create(name, 1, dim, 1.0, 1.0);
}

const ParamStore::Param& ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error(ErrorCode::IoError, "unknown parameter: " + name);
  }
  return params_[it->second];
}

Tensor ParamStore::use(const std::string& name) const {
  const Param& p = find(name);
  Tensor t;
  t.rows = p.rows;
  t.cols = p.cols;
  t.data = p.value;
  if (bound_ && p.node >= 0) {
    t.tape = bound_;
    t.node = p.node;
  }
  return t;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

size_t ParamStore::total_scalars() const {
  size_t n = 0;
  for (const Param& p : params_) n += p.value->size();
  return n;
}

void ParamStore::zero_grads() {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double s = 0;
  for (const Param& p : params_)
    for (double g : p.grad) s += g * g;
  return std::sqrt(s);
}

void ParamStore::bind(Tape& tape) {
  bound_ = &tape;
  for (Param& p : params_) p.node = tape.track(p.rows, p.cols, {});
}

void ParamStore::collect_grads() {
  if (!bound_) throw Error(ErrorCode::IoError, "collect_grads without bind");
  for (Param& p : params_) {
    const auto& g = bound_->grad(p.node);
    for (size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
  }
}

void ParamStore::unbind() {
  bound_ = nullptr;
  for (Param& p : params_) p.node = -1;
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(params_.size());
  for (const Param& p : params_) snap.push_back(*p.value);
  return snap;
}

void ParamStore::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params_.size()) {
    throw Error(ErrorCode::IoError, "snapshot size mismatch");
  }
  for (size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != params_[i].value->size()) {
      throw Error(ErrorCode::IoError, "snapshot shape mismatch");
    }
    *params_[i].value = snap[i];
  }
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(params_.size()));
  for (const Param& p : params_) {
    write_pod(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(os, static_cast<uint32_t>(2));  // rank
    write_pod(os, static_cast<uint32_t>(p.rows));
    write_pod(os, static_cast<uint32_t>(p.cols));
    os.write(reinterpret_cast<const char*>(p.value->data()),
             static_cast<std::streamsize>(p.value->size() * sizeof(double)));
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::IoError, "bad checkpoint magic: " + path);
  }
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion) throw Error(ErrorCode::IoError, "unsupported checkpoint version");
  uint32_t count = read_pod<uint32_t>(is);
  if (count != params_.size()) {
    throw Error(ErrorCode::IoError, "checkpoint parameter count mismatch");
  }
  for (uint32_t k = 0; k < count; ++k) {
    uint32_t len = read_pod<uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw Error(ErrorCode::IoError, "checkpoint truncated");
    uint32_t rank = read_pod<uint32_t>(is);
    if (rank != 2) throw Error(ErrorCode::IoError, "unsupported tensor rank");
    uint32_t rows = read_pod<uint32_t>(is);
    uint32_t cols = read_pod<uint32_t>(is);
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::IoError, "checkpoint has unknown parameter: " + name);
    }
    Param& p = params_[it->second];
    if (static_cast<int>(rows) != p.rows || static_cast<int>(cols) != p.cols) {
      throw Error(ErrorCode::IoError, "shape mismatch for parameter: " + name);
    }
    is.read(reinterpret_cast<char*>(p.value->data()),
            static_cast<std::streamsize>(p.value->size() * sizeof(double)));
    if (!is) throw Error(ErrorCode::IoError, "checkpoint truncated");
  }
}

}  // namespace exprtree
