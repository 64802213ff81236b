#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace exprtree {

class Tape;

// Row-major 2D tensor. Copies share the underlying buffer. A tensor is
// "tracked" when it carries a tape + node id; untracked tensors act as
// constants and receive no gradient.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::shared_ptr<std::vector<double>> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;

  static Tensor zeros(int rows, int cols);
  static Tensor from(std::vector<double> values, int rows, int cols);
  static Tensor row(std::vector<double> values);
  static Tensor scalar(double v);

  bool tracked() const { return tape != nullptr && node >= 0; }
  int size() const { return rows * cols; }
  double& at(int r, int c) { return (*data)[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return (*data)[static_cast<size_t>(r) * cols + c]; }
  // Value of a 1x1 tensor.
  double value() const;
};

// Records the computation graph for one backward pass. Nodes are appended in
// creation order; backward() replays their closures in reverse. Gradients
// live on the tape, keyed by node id.
class Tape {
 public:
  // backward receives this node's gradient and accumulates into its parents'
  // gradients (looked up via grad()). May be empty for leaves.
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  int track(int rows, int cols, BackwardFn backward);

  std::vector<double>& grad(int node) { return nodes_[node].grad; }
  const std::vector<double>& grad(int node) const { return nodes_[node].grad; }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a tracked 1x1
  // tensor on this tape.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  void reset() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<double> grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- kernels ----------------------------------------------------------
// All ops validate shapes (ErrorCode::ShapeMismatch) and produce a tensor
// tracked on the inputs' tape when any input is tracked.

Tensor matmul(const Tensor& a, const Tensor& b);     // (r,k)x(k,c) -> (r,c)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (r,k)x(c,k)^T -> (r,c)

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double k);
// Adds a 1xC row vector to every row of a RxC matrix.
Tensor add_rowvec(const Tensor& a, const Tensor& row);

Tensor tanh_t(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// Per-row layer norm with learned gain/bias (both 1xC).
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);

Tensor concat_rows(const std::vector<Tensor>& parts);  // stack vertically
Tensor concat_cols(const std::vector<Tensor>& parts);  // stack horizontally
Tensor slice_rows(const Tensor& a, int r0, int r1);    // rows [r0, r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);    // cols [c0, c1)
// Row lookup (embedding gather); indices may repeat.
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

// Scaled dot-product attention over pre-projected q/k/v (rows x d, d
// divisible by n_heads). Heads are column slices; per head
// softmax(q k^T / sqrt(dk)) v, outputs concatenated back to rows x d.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int n_heads);

Tensor sum_all(const Tensor& a);                       // -> 1x1
Tensor pick(const Tensor& a, int r, int c);            // -> 1x1
Tensor sum_scalars(const std::vector<Tensor>& terms);  // sum of 1x1 -> 1x1

}  // namespace exprtree
