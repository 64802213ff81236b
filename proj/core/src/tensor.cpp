#include "exprtree/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw Error(ErrorCode::ShapeMismatch, msg);
}

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw Error(ErrorCode::ShapeMismatch, "operands live on different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

Tensor alloc(int rows, int cols) {
  Tensor t;
  t.rows = rows;
  t.cols = cols;
  t.data = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * cols, 0.0);
  return t;
}

void attach(Tensor& out, Tape* tape, Tape::BackwardFn fn) {
  if (!tape) return;
  out.tape = tape;
  out.node = tape->track(out.rows, out.cols, std::move(fn));
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols) { return alloc(rows, cols); }

Tensor Tensor::from(std::vector<double> values, int rows, int cols) {
  require(static_cast<size_t>(rows) * cols == values.size(), "from(): size mismatch");
  Tensor t;
  t.rows = rows;
  t.cols = cols;
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return from(std::move(values), 1, n);
}

Tensor Tensor::scalar(double v) { return from({v}, 1, 1); }

double Tensor::value() const {
  require(rows == 1 && cols == 1, "value() needs a 1x1 tensor");
  return (*data)[0];
}

int Tape::track(int rows, int cols, BackwardFn backward) {
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back({std::vector<double>(static_cast<size_t>(rows) * cols, 0.0),
                    std::move(backward)});
  return id;
}

void Tape::backward(const Tensor& loss) {
  require(loss.tape == this && loss.node >= 0, "loss is not tracked on this tape");
  require(loss.rows == 1 && loss.cols == 1, "loss must be 1x1");
  nodes_[loss.node].grad[0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[i].backward) nodes_[i].backward(*this, nodes_[i].grad);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols == b.rows, "matmul: inner dims differ");
  Tape* tape = common_tape(a, b);
  int r = a.rows, k = a.cols, c = b.cols;
  Tensor out = alloc(r, c);
  const double* ad = a.data->data();
  const double* bd = b.data->data();
  double* od = out.data->data();
  for (int i = 0; i < r; ++i) {
    const double* arow = ad + static_cast<size_t>(i) * k;
    double* orow = od + static_cast<size_t>(i) * c;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = bd + static_cast<size_t>(p) * c;
      for (int j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
  attach(out, tape, [an = a.node, bn = b.node, adp = a.data, bdp = b.data, r, k,
                     c](Tape& t, const std::vector<double>& g) {
    if (an >= 0) {
      auto& ga = t.grad(an);
      const double* bd2 = bdp->data();
      for (int i = 0; i < r; ++i) {
        const double* grow = g.data() + static_cast<size_t>(i) * c;
        double* garow = ga.data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const double* brow = bd2 + static_cast<size_t>(p) * c;
          double s = 0;
          for (int j = 0; j < c; ++j) s += grow[j] * brow[j];
          garow[p] += s;
        }
      }
    }
    if (bn >= 0) {
      auto& gb = t.grad(bn);
      const double* ad2 = adp->data();
      for (int i = 0; i < r; ++i) {
        const double* arow = ad2 + static_cast<size_t>(i) * k;
        const double* grow = g.data() + static_cast<size_t>(i) * c;
        for (int p = 0; p < k; ++p) {
          double av = arow[p];
          if (av == 0.0) continue;
          double* gbrow = gb.data() + static_cast<size_t>(p) * c;
          for (int j = 0; j < c; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols == b.cols, "matmul_nt: inner dims differ");
  Tape* tape = common_tape(a, b);
  int r = a.rows, k = a.cols, c = b.rows;
  Tensor out = alloc(r, c);
  const double* ad = a.data->data();
  const double* bd = b.data->data();
  double* od = out.data->data();
  for (int i = 0; i < r; ++i) {
    const double* arow = ad + static_cast<size_t>(i) * k;
    double* orow = od + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      const double* brow = bd + static_cast<size_t>(j) * k;
      double s = 0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      orow[j] = s;
    }
  }
  attach(out, tape, [an = a.node, bn = b.node, adp = a.data, bdp = b.data, r, k,
                     c](Tape& t, const std::vector<double>& g) {
    if (an >= 0) {
      auto& ga = t.grad(an);  // dA = G * B
      const double* bd2 = bdp->data();
      for (int i = 0; i < r; ++i) {
        const double* grow = g.data() + static_cast<size_t>(i) * c;
        double* garow = ga.data() + static_cast<size_t>(i) * k;
        for (int j = 0; j < c; ++j) {
          double gv = grow[j];
          if (gv == 0.0) continue;
          const double* brow = bd2 + static_cast<size_t>(j) * k;
          for (int p = 0; p < k; ++p) garow[p] += gv * brow[p];
        }
      }
    }
    if (bn >= 0) {
      auto& gb = t.grad(bn);  // dB = G^T * A
      const double* ad2 = adp->data();
      for (int i = 0; i < r; ++i) {
        const double* arow = ad2 + static_cast<size_t>(i) * k;
        const double* grow = g.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
          double gv = grow[j];
          if (gv == 0.0) continue;
          double* gbrow = gb.data() + static_cast<size_t>(j) * k;
          for (int p = 0; p < k; ++p) gbrow[p] += gv * arow[p];
        }
      }
    }
  });
  return out;
}

namespace {

Tensor elementwise2(const Tensor& a, const Tensor& b, const char* name,
                    double (*f)(double, double),
                    void (*back)(const std::vector<double>& g, const double* av,
                                 const double* bv, std::vector<double>* ga,
                                 std::vector<double>* gb)) {
  require(a.rows == b.rows && a.cols == b.cols, name);
  Tape* tape = common_tape(a, b);
  Tensor out = alloc(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) (*out.data)[i] = f((*a.data)[i], (*b.data)[i]);
  attach(out, tape, [an = a.node, bn = b.node, adp = a.data, bdp = b.data,
                     back](Tape& t, const std::vector<double>& g) {
    back(g, adp->data(), bdp->data(), an >= 0 ? &t.grad(an) : nullptr,
         bn >= 0 ? &t.grad(bn) : nullptr);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise2(
      a, b, "add: shape mismatch", [](double x, double y) { return x + y; },
      [](const std::vector<double>& g, const double*, const double*,
         std::vector<double>* ga, std::vector<double>* gb) {
        if (ga)
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (gb)
          for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise2(
      a, b, "sub: shape mismatch", [](double x, double y) { return x - y; },
      [](const std::vector<double>& g, const double*, const double*,
         std::vector<double>* ga, std::vector<double>* gb) {
        if (ga)
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (gb)
          for (size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise2(
      a, b, "mul: shape mismatch", [](double x, double y) { return x * y; },
      [](const std::vector<double>& g, const double* av, const double* bv,
         std::vector<double>* ga, std::vector<double>* gb) {
        if (ga)
          for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        if (gb)
          for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
      });
}

Tensor scale(const Tensor& a, double k) {
  Tensor out = alloc(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) (*out.data)[i] = (*a.data)[i] * k;
  attach(out, a.tape, [an = a.node, k](Tape& t, const std::vector<double>& g) {
    if (an < 0) return;
    auto& ga = t.grad(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * k;
  });
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  require(row.rows == 1 && row.cols == a.cols, "add_rowvec: shape mismatch");
  Tape* tape = common_tape(a, row);
  Tensor out = alloc(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j) + row.at(0, j);
  attach(out, tape, [an = a.node, rn = row.node, r = a.rows,
                     c = a.cols](Tape& t, const std::vector<double>& g) {
    if (an >= 0) {
      auto& ga = t.grad(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (rn >= 0) {
      auto& gr = t.grad(rn);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gr[j] += g[static_cast<size_t>(i) * c + j];
    }
  });
  return out;
}

Tensor tanh_t(const Tensor& a) {
  Tensor out = alloc(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) (*out.data)[i] = std::tanh((*a.data)[i]);
  attach(out, a.tape,
         [an = a.node, odp = out.data](Tape& t, const std::vector<double>& g) {
           if (an < 0) return;
           auto& ga = t.grad(an);
           for (size_t i = 0; i < g.size(); ++i) {
             double y = (*odp)[i];
             ga[i] += g[i] * (1.0 - y * y);
           }
         });
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = alloc(a.rows, a.cols);
  int c = a.cols;
  for (int i = 0; i < a.rows; ++i) {
    double m = a.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, a.at(i, j));
    double s = 0;
    for (int j = 0; j < c; ++j) {
      double e = std::exp(a.at(i, j) - m);
      out.at(i, j) = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  attach(out, a.tape, [an = a.node, odp = out.data, rows = a.rows,
                       c](Tape& t, const std::vector<double>& g) {
    if (an < 0) return;
    auto& ga = t.grad(an);
    for (int i = 0; i < rows; ++i) {
      const double* y = odp->data() + static_cast<size_t>(i) * c;
      const double* gr = g.data() + static_cast<size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += gr[j] * y[j];
      double* gar = ga.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) gar[j] += y[j] * (gr[j] - dot);
    }
  });
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor out = alloc(a.rows, a.cols);
  int c = a.cols;
  for (int i = 0; i < a.rows; ++i) {
    double m = a.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, a.at(i, j));
    double s = 0;
    for (int j = 0; j < c; ++j) s += std::exp(a.at(i, j) - m);
    double lse = m + std::log(s);
    for (int j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) - lse;
  }
  attach(out, a.tape, [an = a.node, odp = out.data, rows = a.rows,
                       c](Tape& t, const std::vector<double>& g) {
    if (an < 0) return;
    auto& ga = t.grad(an);
    for (int i = 0; i < rows; ++i) {
      const double* y = odp->data() + static_cast<size_t>(i) * c;
      const double* gr = g.data() + static_cast<size_t>(i) * c;
      double gsum = 0;
      for (int j = 0; j < c; ++j) gsum += gr[j];
      double* gar = ga.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) gar[j] += gr[j] - std::exp(y[j]) * gsum;
    }
  });
  return out;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps) {
  require(gain.rows == 1 && gain.cols == a.cols, "layer_norm: gain shape");
  require(bias.rows == 1 && bias.cols == a.cols, "layer_norm: bias shape");
  Tape* tape = a.tape;
  for (const Tensor* t : {&gain, &bias}) {
    if (t->tape) {
      require(!tape || tape == t->tape, "operands live on different tapes");
      tape = t->tape;
    }
  }
  int c = a.cols;
  Tensor out = alloc(a.rows, c);
  for (int i = 0; i < a.rows; ++i) {
    double mu = 0;
    for (int j = 0; j < c; ++j) mu += a.at(i, j);
    mu /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) {
      double d = a.at(i, j) - mu;
      var += d * d;
    }
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j)
      out.at(i, j) = (a.at(i, j) - mu) * inv * gain.at(0, j) + bias.at(0, j);
  }
  attach(out, tape, [an = a.node, gn = gain.node, bn = bias.node, adp = a.data,
                     gdp = gain.data, rows = a.rows, c,
                     eps](Tape& t, const std::vector<double>& g) {
    std::vector<double> xhat(c);
    for (int i = 0; i < rows; ++i) {
      const double* x = adp->data() + static_cast<size_t>(i) * c;
      const double* gr = g.data() + static_cast<size_t>(i) * c;
      double mu = 0;
      for (int j = 0; j < c; ++j) mu += x[j];
      mu /= c;
      double var = 0;
      for (int j = 0; j < c; ++j) {
        double d = x[j] - mu;
        var += d * d;
      }
      var /= c;
      double inv = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < c; ++j) xhat[j] = (x[j] - mu) * inv;
      if (gn >= 0) {
        auto& gg = t.grad(gn);
        for (int j = 0; j < c; ++j) gg[j] += gr[j] * xhat[j];
      }
      if (bn >= 0) {
        auto& gb = t.grad(bn);
        for (int j = 0; j < c; ++j) gb[j] += gr[j];
      }
      if (an >= 0) {
        auto& ga = t.grad(an);
        const double* gm = gdp->data();
        double mean_dg = 0, mean_dgx = 0;
        for (int j = 0; j < c; ++j) {
          double dg = gr[j] * gm[j];
          mean_dg += dg;
          mean_dgx += dg * xhat[j];
        }
        mean_dg /= c;
        mean_dgx /= c;
        double* gar = ga.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
          double dg = gr[j] * gm[j];
          gar[j] += (dg - mean_dg - xhat[j] * mean_dgx) * inv;
        }
      }
    }
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  int c = parts[0].cols, r = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    require(p.cols == c, "concat_rows: column mismatch");
    r += p.rows;
    if (p.tape) {
      require(!tape || tape == p.tape, "operands live on different tapes");
      tape = p.tape;
    }
  }
  Tensor out = alloc(r, c);
  int off = 0;
  std::vector<std::pair<int, int>> spans;  // (node, row offset)
  std::vector<int> heights;
  for (const Tensor& p : parts) {
    std::copy(p.data->begin(), p.data->end(),
              out.data->begin() + static_cast<size_t>(off) * c);
    spans.emplace_back(p.node, off);
    heights.push_back(p.rows);
    off += p.rows;
  }
  attach(out, tape, [spans, heights, c](Tape& t, const std::vector<double>& g) {
    for (size_t k = 0; k < spans.size(); ++k) {
      auto [node, row0] = spans[k];
      if (node < 0) continue;
      auto& gp = t.grad(node);
      size_t n = static_cast<size_t>(heights[k]) * c;
      const double* src = g.data() + static_cast<size_t>(row0) * c;
      for (size_t i = 0; i < n; ++i) gp[i] += src[i];
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  int r = parts[0].rows, c = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    require(p.rows == r, "concat_cols: row mismatch");
    c += p.cols;
    if (p.tape) {
      require(!tape || tape == p.tape, "operands live on different tapes");
      tape = p.tape;
    }
  }
  Tensor out = alloc(r, c);
  int off = 0;
  std::vector<std::pair<int, int>> spans;  // (node, col offset)
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.cols; ++j) out.at(i, off + j) = p.at(i, j);
    spans.emplace_back(p.node, off);
    widths.push_back(p.cols);
    off += p.cols;
  }
  attach(out, tape, [spans, widths, r, c](Tape& t, const std::vector<double>& g) {
    for (size_t k = 0; k < spans.size(); ++k) {
      auto [node, col0] = spans[k];
      if (node < 0) continue;
      auto& gp = t.grad(node);
      int w = widths[k];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          gp[static_cast<size_t>(i) * w + j] += g[static_cast<size_t>(i) * c + col0 + j];
    }
  });
  return out;
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require(0 <= r0 && r0 < r1 && r1 <= a.rows, "slice_rows: bad range");
  int r = r1 - r0, c = a.cols;
  Tensor out = alloc(r, c);
  std::copy(a.data->begin() + static_cast<size_t>(r0) * c,
            a.data->begin() + static_cast<size_t>(r1) * c, out.data->begin());
  attach(out, a.tape, [an = a.node, r0, r, c](Tape& t, const std::vector<double>& g) {
    if (an < 0) return;
    auto& ga = t.grad(an);
    for (size_t i = 0; i < static_cast<size_t>(r) * c; ++i)
      ga[static_cast<size_t>(r0) * c + i] += g[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require(0 <= c0 && c0 < c1 && c1 <= a.cols, "slice_cols: bad range");
  int r = a.rows, w = c1 - c0;
  Tensor out = alloc(r, w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = a.at(i, c0 + j);
  attach(out, a.tape,
         [an = a.node, c0, r, w, c = a.cols](Tape& t, const std::vector<double>& g) {
           if (an < 0) return;
           auto& ga = t.grad(an);
           for (int i = 0; i < r; ++i)
             for (int j = 0; j < w; ++j)
               ga[static_cast<size_t>(i) * c + c0 + j] += g[static_cast<size_t>(i) * w + j];
         });
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  for (int idx : indices)
    require(0 <= idx && idx < a.rows, "gather_rows: index out of range");
  int r = static_cast<int>(indices.size()), c = a.cols;
  Tensor out = alloc(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = a.at(indices[i], j);
  attach(out, a.tape,
         [an = a.node, indices, c](Tape& t, const std::vector<double>& g) {
           if (an < 0) return;
           auto& ga = t.grad(an);
           for (size_t i = 0; i < indices.size(); ++i) {
             double* dst = ga.data() + static_cast<size_t>(indices[i]) * c;
             const double* src = g.data() + i * c;
             for (int j = 0; j < c; ++j) dst[j] += src[j];
           }
         });
  return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int n_heads) {
  require(n_heads >= 1, "multi_head_attention: n_heads must be >= 1");
  require(q.cols == k.cols && k.cols == v.cols && k.rows == v.rows,
          "multi_head_attention: q/k/v width or k/v length mismatch");
  require(q.cols % n_heads == 0, "multi_head_attention: width not divisible by heads");
  int dk = q.cols / n_heads;
  double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int i = 0; i < n_heads; ++i) {
    Tensor qh = slice_cols(q, i * dk, (i + 1) * dk);
    Tensor kh = slice_cols(k, i * dk, (i + 1) * dk);
    Tensor vh = slice_cols(v, i * dk, (i + 1) * dk);
    Tensor attn = softmax_rows(scale(matmul_nt(qh, kh), inv));
    heads.push_back(matmul(attn, vh));
  }
  return n_heads == 1 ? heads[0] : concat_cols(heads);
}

Tensor sum_all(const Tensor& a) {
  double s = 0;
  for (int i = 0; i < a.size(); ++i) s += (*a.data)[i];
  Tensor out = Tensor::scalar(s);
  attach(out, a.tape, [an = a.node](Tape& t, const std::vector<double>& g) {
    if (an < 0) return;
    auto& ga = t.grad(an);
    for (double& v : ga) v += g[0];
  });
  return out;
}

Tensor pick(const Tensor& a, int r, int c) {
  require(0 <= r && r < a.rows && 0 <= c && c < a.cols, "pick: out of range");
  Tensor out = Tensor::scalar(a.at(r, c));
  attach(out, a.tape,
         [an = a.node, idx = static_cast<size_t>(r) * a.cols + c](
             Tape& t, const std::vector<double>& g) {
           if (an < 0) return;
           t.grad(an)[idx] += g[0];
         });
  return out;
}

Tensor sum_scalars(const std::vector<Tensor>& terms) {
  require(!terms.empty(), "sum_scalars: no terms");
  double s = 0;
  Tape* tape = nullptr;
  std::vector<int> nodes;
  for (const Tensor& t : terms) {
    require(t.rows == 1 && t.cols == 1, "sum_scalars: term not 1x1");
    s += (*t.data)[0];
    if (t.tape) {
      require(!tape || tape == t.tape, "operands live on different tapes");
      tape = t.tape;
    }
    nodes.push_back(t.node);
  }
  Tensor out = Tensor::scalar(s);
  attach(out, tape, [nodes](Tape& t, const std::vector<double>& g) {
    for (int n : nodes)
      if (n >= 0) t.grad(n)[0] += g[0];
  });
  return out;
}

}  // namespace exprtree
