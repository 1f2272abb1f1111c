#include "pixelcritic/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite values produced by ") + op);
}

Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(OpNode&)> rule,
              const char* op) {
  check_finite(value, op);
  auto node = std::make_shared<OpNode>();
  node->value = std::move(value);
  node->inputs = std::move(inputs);
  for (const Var& in : node->inputs)
    if (in->requires_grad) node->requires_grad = true;
  if (node->requires_grad) node->backward_rule = std::move(rule);
  return node;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
}

void require_rank4(const Var& x, const char* op) {
  if (x->value.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": expected [B,C,H,W], got " +
                                shape_str(x->value.shape()));
}

// column buffer layout: [C*kh*kw, OH*OW]
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
            int OW, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        double* dst = col + (static_cast<std::size_t>((c * kh + di) * kw + dj)) *
                                static_cast<std::size_t>(OH) * OW;
        for (int oi = 0; oi < OH; ++oi) {
          const int i = oi * stride - pad + di;
          double* row = dst + static_cast<std::size_t>(oi) * OW;
          if (i < 0 || i >= H) {
            std::fill(row, row + OW, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * H + i) * W;
          for (int oj = 0; oj < OW; ++oj) {
            const int j = oj * stride - pad + dj;
            row[oj] = (j >= 0 && j < W) ? src[j] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int OH, int OW, double* x) {
  for (int c = 0; c < C; ++c) {
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        const double* src = col + (static_cast<std::size_t>((c * kh + di) * kw + dj)) *
                                      static_cast<std::size_t>(OH) * OW;
        for (int oi = 0; oi < OH; ++oi) {
          const int i = oi * stride - pad + di;
          if (i < 0 || i >= H) continue;
          double* dst = x + (static_cast<std::size_t>(c) * H + i) * W;
          const double* row = src + static_cast<std::size_t>(oi) * OW;
          for (int oj = 0; oj < OW; ++oj) {
            const int j = oj * stride - pad + dj;
            if (j >= 0 && j < W) dst[j] += row[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor& OpNode::ensure_grad() {
  if (!grad_allocated()) grad = Tensor(value.shape());
  return grad;
}

Var make_param(Tensor value, std::string name) {
  auto node = std::make_shared<OpNode>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return node;
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<OpNode>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Var make_const(Tensor value) { return make_leaf(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b},
                   [](OpNode& n) {
                     for (const Var& in : n.inputs) {
                       if (!in->requires_grad) continue;
                       Tensor& g = in->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     }
                   },
                   "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b},
                   [](OpNode& n) {
                     if (n.inputs[0]->requires_grad) {
                       Tensor& g = n.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     }
                     if (n.inputs[1]->requires_grad) {
                       Tensor& g = n.inputs[1]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
                     }
                   },
                   "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b},
                   [](OpNode& n) {
                     const Tensor& av = n.inputs[0]->value;
                     const Tensor& bv = n.inputs[1]->value;
                     if (n.inputs[0]->requires_grad) {
                       Tensor& g = n.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
                     }
                     if (n.inputs[1]->requires_grad) {
                       Tensor& g = n.inputs[1]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
                     }
                   },
                   "mul");
}

Var affine(const Var& x, double scale, double shift) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x->value[i] + shift;
  return make_node(std::move(out), {x},
                   [scale](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * n.grad[i];
                   },
                   "affine");
}

Var mul_const(const Var& x, Tensor weights) {
  if (!x->value.same_shape(weights))
    throw std::invalid_argument("mul_const: shape mismatch " + shape_str(x->value.shape()) +
                                " vs " + shape_str(weights.shape()));
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * weights[i];
  auto w = std::make_shared<Tensor>(std::move(weights));
  return make_node(std::move(out), {x},
                   [w](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*w)[i];
                   },
                   "mul_const");
}

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
  return make_node(std::move(out), {x},
                   [](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const Tensor& v = n.inputs[0]->value;
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (v[i] > 0.0) g[i] += n.grad[i];
                   },
                   "relu");
}

Var sigmoid(const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x->value[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_node(std::move(out), {x},
                   [](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double s = n.value[i];
                       g[i] += n.grad[i] * s * (1.0 - s);
                     }
                   },
                   "sigmoid");
}

Var elem_log(const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x->value[i] <= 0.0)
      throw NumericError("log of non-positive value " + std::to_string(x->value[i]));
    out[i] = std::log(x->value[i]);
  }
  return make_node(std::move(out), {x},
                   [](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const Tensor& v = n.inputs[0]->value;
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / v[i];
                   },
                   "log");
}

Var clamp(const Var& x, double lo, double hi) {
  if (lo >= hi) throw std::invalid_argument("clamp: lo must be < hi");
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x->value[i], lo, hi);
  return make_node(std::move(out), {x},
                   [lo, hi](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const Tensor& v = n.inputs[0]->value;
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (v[i] > lo && v[i] < hi) g[i] += n.grad[i];
                   },
                   "clamp");
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a->value.shape()) +
                                " vs " + shape_str(b->value.shape()));
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() =
      CMapMat(a->value.data(), m, k) * CMapMat(b->value.data(), k, n);
  return make_node(std::move(out), {a, b},
                   [m, k, n](OpNode& node) {
                     CMapMat dy(node.grad.data(), m, n);
                     if (node.inputs[0]->requires_grad) {
                       MapMat da(node.inputs[0]->ensure_grad().data(), m, k);
                       da.noalias() += dy * CMapMat(node.inputs[1]->value.data(), k, n).transpose();
                     }
                     if (node.inputs[1]->requires_grad) {
                       MapMat db(node.inputs[1]->ensure_grad().data(), k, n);
                       db.noalias() += CMapMat(node.inputs[0]->value.data(), m, k).transpose() * dy;
                     }
                   },
                   "matmul");
}

Var softmax(const Var& x, int axis) {
  const auto& shape = x->value.shape();
  if (axis < 0 || axis >= x->value.rank())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(shape));
  const int len = shape[static_cast<std::size_t>(axis)];
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x->value.rank(); ++i) inner *= static_cast<std::size_t>(shape[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[i]);

  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * static_cast<std::size_t>(len) * inner + in;
      double mx = -1e300;
      for (int l = 0; l < len; ++l) mx = std::max(mx, x->value[base + l * inner]);
      double total = 0.0;
      for (int l = 0; l < len; ++l) {
        const double e = std::exp(x->value[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (int l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  return make_node(std::move(out), {x},
                   [len, inner, outer](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (std::size_t o = 0; o < outer; ++o) {
                       for (std::size_t in = 0; in < inner; ++in) {
                         const std::size_t base = o * static_cast<std::size_t>(len) * inner + in;
                         double dot = 0.0;
                         for (int l = 0; l < len; ++l)
                           dot += n.grad[base + l * inner] * n.value[base + l * inner];
                         for (int l = 0; l < len; ++l) {
                           const std::size_t i = base + l * inner;
                           g[i] += (n.grad[i] - dot) * n.value[i];
                         }
                       }
                     }
                   },
                   "softmax");
}

Var sum(const Var& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) total += x->value[i];
  return make_node(Tensor::scalar(total), {x},
                   [](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const double d = n.grad[0];
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
                   },
                   "sum");
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) total += x->value[i];
  return make_node(Tensor::scalar(total * inv), {x},
                   [inv](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const double d = n.grad[0] * inv;
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
                   },
                   "mean");
}

Var conv2d(const Var& input, const Var& kernel, int stride, int padding) {
  require_rank4(input, "conv2d");
  if (kernel->value.rank() != 4)
    throw std::invalid_argument("conv2d: kernel must be [O,C,kh,kw], got " +
                                shape_str(kernel->value.shape()));
  const int B = input->value.dim(0), C = input->value.dim(1);
  const int H = input->value.dim(2), W = input->value.dim(3);
  const int O = kernel->value.dim(0), KC = kernel->value.dim(1);
  const int kh = kernel->value.dim(2), kw = kernel->value.dim(3);
  if (KC != C)
    throw std::invalid_argument("conv2d: input channels do not match kernel, input " +
                                shape_str(input->value.shape()) + " kernel " +
                                shape_str(kernel->value.shape()));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("conv2d: kernel extent must be odd, got " +
                                shape_str(kernel->value.shape()));
  if (stride < 1 || padding < 0)
    throw std::invalid_argument("conv2d: stride must be >= 1 and padding >= 0");
  if ((H + 2 * padding - kh) % stride != 0 || (W + 2 * padding - kw) % stride != 0)
    throw std::invalid_argument("conv2d: output size not integral for input " +
                                shape_str(input->value.shape()) + " kernel " +
                                shape_str(kernel->value.shape()));
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv2d: empty output for input " +
                                shape_str(input->value.shape()));

  const std::size_t ckk = static_cast<std::size_t>(C) * kh * kw;
  const std::size_t p = static_cast<std::size_t>(OH) * OW;
  Tensor out({B, O, OH, OW});
  {
    std::vector<double> col(ckk * p);
    CMapMat kmat(kernel->value.data(), O, static_cast<int>(ckk));
    for (int b = 0; b < B; ++b) {
      im2col(input->value.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, kh, kw,
             stride, padding, OH, OW, col.data());
      MapMat(out.data() + static_cast<std::size_t>(b) * O * p, O, static_cast<int>(p)).noalias() =
          kmat * CMapMat(col.data(), static_cast<int>(ckk), static_cast<int>(p));
    }
  }
  return make_node(
      std::move(out), {input, kernel},
      [B, C, H, W, O, kh, kw, stride, padding, OH, OW, ckk, p](OpNode& n) {
        const Var& input = n.inputs[0];
        const Var& kernel = n.inputs[1];
        std::vector<double> col(ckk * p);
        std::vector<double> dcol;
        if (input->requires_grad) dcol.resize(ckk * p);
        for (int b = 0; b < B; ++b) {
          CMapMat dy(n.grad.data() + static_cast<std::size_t>(b) * O * p, O,
                     static_cast<int>(p));
          im2col(input->value.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, kh, kw,
                 stride, padding, OH, OW, col.data());
          if (kernel->requires_grad) {
            MapMat dk(kernel->ensure_grad().data(), O, static_cast<int>(ckk));
            dk.noalias() += dy * CMapMat(col.data(), static_cast<int>(ckk),
                                         static_cast<int>(p)).transpose();
          }
          if (input->requires_grad) {
            MapMat(dcol.data(), static_cast<int>(ckk), static_cast<int>(p)).noalias() =
                CMapMat(kernel->value.data(), O, static_cast<int>(ckk)).transpose() * dy;
            col2im_add(dcol.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                       input->ensure_grad().data() + static_cast<std::size_t>(b) * C * H * W);
          }
        }
      },
      "conv2d");
}

Var bias_channels(const Var& x, const Var& bias) {
  require_rank4(x, "bias_channels");
  const int B = x->value.dim(0), C = x->value.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  if (bias->value.rank() != 1 || bias->value.dim(0) != C)
    throw std::invalid_argument("bias_channels: bias " + shape_str(bias->value.shape()) +
                                " does not match input " + shape_str(x->value.shape()));
  Tensor out(x->value.shape());
  std::size_t idx = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double bv = bias->value[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < hw; ++i, ++idx) out[idx] = x->value[idx] + bv;
    }
  return make_node(std::move(out), {x, bias},
                   [B, C, hw](OpNode& n) {
                     if (n.inputs[0]->requires_grad) {
                       Tensor& g = n.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     }
                     if (n.inputs[1]->requires_grad) {
                       Tensor& gb = n.inputs[1]->ensure_grad();
                       std::size_t idx = 0;
                       for (int b = 0; b < B; ++b)
                         for (int c = 0; c < C; ++c) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < hw; ++i, ++idx) acc += n.grad[idx];
                           gb[static_cast<std::size_t>(c)] += acc;
                         }
                     }
                   },
                   "bias_channels");
}

Var pool2d_avg(const Var& x, int factor) {
  require_rank4(x, "pool2d_avg");
  if (factor < 1) throw std::invalid_argument("pool2d_avg: factor must be >= 1");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (H % factor != 0 || W % factor != 0)
    throw std::invalid_argument("pool2d_avg: factor " + std::to_string(factor) +
                                " does not divide spatial dims of " + shape_str(x->value.shape()));
  const int OH = H / factor, OW = W / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  Tensor out({B, C, OH, OW});
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x->value.data() + static_cast<std::size_t>(bc) * H * W;
    double* dst = out.data() + static_cast<std::size_t>(bc) * OH * OW;
    for (int oi = 0; oi < OH; ++oi)
      for (int oj = 0; oj < OW; ++oj) {
        double acc = 0.0;
        for (int di = 0; di < factor; ++di)
          for (int dj = 0; dj < factor; ++dj)
            acc += src[static_cast<std::size_t>(oi * factor + di) * W + oj * factor + dj];
        dst[static_cast<std::size_t>(oi) * OW + oj] = acc * inv;
      }
  }
  return make_node(std::move(out), {x},
                   [B, C, H, W, OH, OW, factor, inv](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (int bc = 0; bc < B * C; ++bc) {
                       double* dst = g.data() + static_cast<std::size_t>(bc) * H * W;
                       const double* src = n.grad.data() + static_cast<std::size_t>(bc) * OH * OW;
                       for (int oi = 0; oi < OH; ++oi)
                         for (int oj = 0; oj < OW; ++oj) {
                           const double d = src[static_cast<std::size_t>(oi) * OW + oj] * inv;
                           for (int di = 0; di < factor; ++di)
                             for (int dj = 0; dj < factor; ++dj)
                               dst[static_cast<std::size_t>(oi * factor + di) * W + oj * factor +
                                   dj] += d;
                         }
                     }
                   },
                   "pool2d_avg");
}

Var upsample_nearest(const Var& x, int factor) {
  require_rank4(x, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int OH = H * factor, OW = W * factor;
  Tensor out({B, C, OH, OW});
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x->value.data() + static_cast<std::size_t>(bc) * H * W;
    double* dst = out.data() + static_cast<std::size_t>(bc) * OH * OW;
    for (int oi = 0; oi < OH; ++oi) {
      const double* row = src + static_cast<std::size_t>(oi / factor) * W;
      for (int oj = 0; oj < OW; ++oj) dst[static_cast<std::size_t>(oi) * OW + oj] = row[oj / factor];
    }
  }
  return make_node(std::move(out), {x},
                   [B, C, H, W, OH, OW, factor](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (int bc = 0; bc < B * C; ++bc) {
                       double* dst = g.data() + static_cast<std::size_t>(bc) * H * W;
                       const double* src = n.grad.data() + static_cast<std::size_t>(bc) * OH * OW;
                       for (int oi = 0; oi < OH; ++oi)
                         for (int oj = 0; oj < OW; ++oj)
                           dst[static_cast<std::size_t>(oi / factor) * W + oj / factor] +=
                               src[static_cast<std::size_t>(oi) * OW + oj];
                     }
                   },
                   "upsample_nearest");
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  const int B = a->value.dim(0), Ca = a->value.dim(1), H = a->value.dim(2), W = a->value.dim(3);
  const int Cb = b->value.dim(1);
  if (b->value.dim(0) != B || b->value.dim(2) != H || b->value.dim(3) != W)
    throw std::invalid_argument("concat_channels: shape mismatch " + shape_str(a->value.shape()) +
                                " vs " + shape_str(b->value.shape()));
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor out({B, Ca + Cb, H, W});
  for (int batch = 0; batch < B; ++batch) {
    double* dst = out.data() + static_cast<std::size_t>(batch) * (Ca + Cb) * hw;
    std::copy_n(a->value.data() + static_cast<std::size_t>(batch) * Ca * hw, Ca * hw, dst);
    std::copy_n(b->value.data() + static_cast<std::size_t>(batch) * Cb * hw, Cb * hw,
                dst + static_cast<std::size_t>(Ca) * hw);
  }
  return make_node(std::move(out), {a, b},
                   [B, Ca, Cb, hw](OpNode& n) {
                     for (int batch = 0; batch < B; ++batch) {
                       const double* src =
                           n.grad.data() + static_cast<std::size_t>(batch) * (Ca + Cb) * hw;
                       if (n.inputs[0]->requires_grad) {
                         double* g = n.inputs[0]->ensure_grad().data() +
                                     static_cast<std::size_t>(batch) * Ca * hw;
                         for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * hw; ++i)
                           g[i] += src[i];
                       }
                       if (n.inputs[1]->requires_grad) {
                         double* g = n.inputs[1]->ensure_grad().data() +
                                     static_cast<std::size_t>(batch) * Cb * hw;
                         const double* s2 = src + static_cast<std::size_t>(Ca) * hw;
                         for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * hw; ++i)
                           g[i] += s2[i];
                       }
                     }
                   },
                   "concat_channels");
}

Var global_avg_pool(const Var& x) {
  require_rank4(x, "global_avg_pool");
  const int B = x->value.dim(0), C = x->value.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  Tensor out({B, C});
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x->value.data() + static_cast<std::size_t>(bc) * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[static_cast<std::size_t>(bc)] = acc * inv;
  }
  return make_node(std::move(out), {x},
                   [B, C, hw, inv](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     for (int bc = 0; bc < B * C; ++bc) {
                       const double d = n.grad[static_cast<std::size_t>(bc)] * inv;
                       double* dst = g.data() + static_cast<std::size_t>(bc) * hw;
                       for (std::size_t i = 0; i < hw; ++i) dst[i] += d;
                     }
                   },
                   "global_avg_pool");
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2 || x->value.dim(1) != w->value.dim(0))
    throw std::invalid_argument("linear: incompatible shapes " + shape_str(x->value.shape()) +
                                " vs " + shape_str(w->value.shape()));
  const int rows = x->value.dim(0), in = x->value.dim(1), out_dim = w->value.dim(1);
  if (b->value.rank() != 1 || b->value.dim(0) != out_dim)
    throw std::invalid_argument("linear: bias " + shape_str(b->value.shape()) +
                                " does not match output dim " + std::to_string(out_dim));
  Tensor out({rows, out_dim});
  MapMat om(out.data(), rows, out_dim);
  om.noalias() = CMapMat(x->value.data(), rows, in) * CMapMat(w->value.data(), in, out_dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < out_dim; ++c) out[static_cast<std::size_t>(r) * out_dim + c] += b->value[c];
  return make_node(std::move(out), {x, w, b},
                   [rows, in, out_dim](OpNode& n) {
                     CMapMat dy(n.grad.data(), rows, out_dim);
                     if (n.inputs[0]->requires_grad) {
                       MapMat dx(n.inputs[0]->ensure_grad().data(), rows, in);
                       dx.noalias() += dy * CMapMat(n.inputs[1]->value.data(), in, out_dim).transpose();
                     }
                     if (n.inputs[1]->requires_grad) {
                       MapMat dw(n.inputs[1]->ensure_grad().data(), in, out_dim);
                       dw.noalias() += CMapMat(n.inputs[0]->value.data(), rows, in).transpose() * dy;
                     }
                     if (n.inputs[2]->requires_grad) {
                       Tensor& db = n.inputs[2]->ensure_grad();
                       for (int r = 0; r < rows; ++r)
                         for (int c = 0; c < out_dim; ++c)
                           db[static_cast<std::size_t>(c)] +=
                               n.grad[static_cast<std::size_t>(r) * out_dim + c];
                     }
                   },
                   "linear");
}

namespace {

// per-sample activations kept for the attention backward pass
struct AttnCache {
  std::vector<double> f, g, h, attn;
};

}  // namespace

Var self_attention(const Var& x, const Var& wf, const Var& wg, const Var& wh, const Var& gain) {
  require_rank4(x, "self_attention");
  const int B = x->value.dim(0), C = x->value.dim(1);
  const int P = x->value.dim(2) * x->value.dim(3);
  if (wf->value.rank() != 2 || wf->value.dim(1) != C || !wf->value.same_shape(wg->value))
    throw std::invalid_argument("self_attention: query/key weights must be [C/r,C], got " +
                                shape_str(wf->value.shape()) + " and " +
                                shape_str(wg->value.shape()));
  const int Cf = wf->value.dim(0);
  if (wh->value.rank() != 2 || wh->value.dim(0) != C || wh->value.dim(1) != C)
    throw std::invalid_argument("self_attention: value weights must be [C,C], got " +
                                shape_str(wh->value.shape()));
  if (gain->value.size() != 1)
    throw std::invalid_argument("self_attention: gain must be a scalar");

  auto cache = std::make_shared<std::vector<AttnCache>>(static_cast<std::size_t>(B));
  const double gamma = gain->value[0];
  Tensor out(x->value.shape());

  for (int b = 0; b < B; ++b) {
    AttnCache& cc = (*cache)[static_cast<std::size_t>(b)];
    cc.f.resize(static_cast<std::size_t>(Cf) * P);
    cc.g.resize(static_cast<std::size_t>(Cf) * P);
    cc.h.resize(static_cast<std::size_t>(C) * P);
    cc.attn.resize(static_cast<std::size_t>(P) * P);
    CMapMat xm(x->value.data() + static_cast<std::size_t>(b) * C * P, C, P);
    MapMat fm(cc.f.data(), Cf, P), gm(cc.g.data(), Cf, P), hm(cc.h.data(), C, P);
    fm.noalias() = CMapMat(wf->value.data(), Cf, C) * xm;
    gm.noalias() = CMapMat(wg->value.data(), Cf, C) * xm;
    hm.noalias() = CMapMat(wh->value.data(), C, C) * xm;
    MapMat am(cc.attn.data(), P, P);
    am.noalias() = fm.transpose() * gm;  // row j: query at j against all keys
    for (int j = 0; j < P; ++j) {
      double mx = am.row(j).maxCoeff();
      double total = 0.0;
      for (int i = 0; i < P; ++i) {
        const double e = std::exp(am(j, i) - mx);
        am(j, i) = e;
        total += e;
      }
      am.row(j) /= total;
    }
    MapMat om(out.data() + static_cast<std::size_t>(b) * C * P, C, P);
    om.noalias() = hm * am.transpose();
    om = xm + gamma * om;
  }

  return make_node(
      std::move(out), {x, wf, wg, wh, gain},
      [B, C, Cf, P, cache](OpNode& n) {
        const Var& x = n.inputs[0];
        const Var& wf = n.inputs[1];
        const Var& wg = n.inputs[2];
        const Var& wh = n.inputs[3];
        const Var& gain = n.inputs[4];
        const double gamma = gain->value[0];
        RowMat dO(C, P), dh(C, P), dA(P, P), dS(P, P), df(Cf, P), dg(Cf, P), o_mat(C, P);
        for (int b = 0; b < B; ++b) {
          const AttnCache& cc = (*cache)[static_cast<std::size_t>(b)];
          CMapMat dy(n.grad.data() + static_cast<std::size_t>(b) * C * P, C, P);
          CMapMat xm(x->value.data() + static_cast<std::size_t>(b) * C * P, C, P);
          CMapMat fm(cc.f.data(), Cf, P), gm(cc.g.data(), Cf, P), hm(cc.h.data(), C, P);
          CMapMat am(cc.attn.data(), P, P);

          if (x->requires_grad) {
            MapMat dx(x->ensure_grad().data() + static_cast<std::size_t>(b) * C * P, C, P);
            dx.noalias() += dy;  // residual path
          }
          if (gain->requires_grad) {
            o_mat.noalias() = hm * am.transpose();
            gain->ensure_grad()[0] += (dy.array() * o_mat.array()).sum();
          }
          dO.noalias() = gamma * dy;
          dh.noalias() = dO * am;
          dA.noalias() = dO.transpose() * hm;
          for (int j = 0; j < P; ++j) {
            const double dot = dA.row(j).dot(am.row(j));
            dS.row(j) = ((dA.row(j).array() - dot) * am.row(j).array()).matrix();
          }
          df.noalias() = gm * dS.transpose();
          dg.noalias() = fm * dS;
          if (wf->requires_grad)
            MapMat(wf->ensure_grad().data(), Cf, C).noalias() += df * xm.transpose();
          if (wg->requires_grad)
            MapMat(wg->ensure_grad().data(), Cf, C).noalias() += dg * xm.transpose();
          if (wh->requires_grad)
            MapMat(wh->ensure_grad().data(), C, C).noalias() += dh * xm.transpose();
          if (x->requires_grad) {
            MapMat dx(x->ensure_grad().data() + static_cast<std::size_t>(b) * C * P, C, P);
            dx.noalias() += CMapMat(wf->value.data(), Cf, C).transpose() * df;
            dx.noalias() += CMapMat(wg->value.data(), Cf, C).transpose() * dg;
            dx.noalias() += CMapMat(wh->value.data(), C, C).transpose() * dh;
          }
        }
      },
      "self_attention");
}

Var cross_entropy_with_logits(const Var& logits, const std::vector<int>& labels) {
  if (logits->value.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [B,K], got " +
                                shape_str(logits->value.shape()));
  const int B = logits->value.dim(0), K = logits->value.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: expected " + std::to_string(B) + " labels, got " +
                                std::to_string(labels.size()));
  for (int lab : labels)
    if (lab < 0 || lab >= K)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(lab) +
                                  " out of range [0," + std::to_string(K) + ")");
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* row = logits->value.data() + static_cast<std::size_t>(b) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double lse = 0.0;
    for (int k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    total += mx + std::log(lse) - row[labels[static_cast<std::size_t>(b)]];
  }
  auto labs = std::make_shared<std::vector<int>>(labels);
  return make_node(Tensor::scalar(total / B), {logits},
                   [B, K, labs](OpNode& n) {
                     Tensor& g = n.inputs[0]->ensure_grad();
                     const double d = n.grad[0] / B;
                     for (int b = 0; b < B; ++b) {
                       const double* row = n.inputs[0]->value.data() + static_cast<std::size_t>(b) * K;
                       double mx = row[0];
                       for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
                       double lse = 0.0;
                       for (int k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
                       for (int k = 0; k < K; ++k) {
                         double p = std::exp(row[k] - mx) / lse;
                         if (k == (*labs)[static_cast<std::size_t>(b)]) p -= 1.0;
                         g[static_cast<std::size_t>(b) * K + k] += d * p;
                       }
                     }
                   },
                   "cross_entropy");
}

namespace {

// reverse postorder over the differentiable subgraph; consumers come
// before producers, so each backward rule fires exactly once with the
// node's gradient fully accumulated
std::vector<OpNode*> topo_order(const Var& loss) {
  std::vector<OpNode*> order;
  std::unordered_set<OpNode*> seen;
  struct Frame {
    OpNode* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  if (loss->requires_grad) {
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
  }
  while (!stack.empty()) {
    Frame& fr = stack.back();
    if (fr.next_input < fr.node->inputs.size()) {
      OpNode* child = fr.node->inputs[fr.next_input++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(fr.node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace

void backward(const Var& loss) {
  if (loss->value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;
  std::vector<OpNode*> order = topo_order(loss);
  for (OpNode* node : order) {
    node->ensure_grad();
    node->grad.fill(0.0);
  }
  loss->grad[0] = 1.0;
  for (OpNode* node : order) {
    if (node->backward_rule) node->backward_rule(*node);
    if (!node->grad.all_finite()) throw NumericError("non-finite gradient during backward pass");
  }
}

void backward(const Var& loss, const std::vector<Var>& params) {
  for (const Var& p : params) {
    p->ensure_grad();
    p->grad.fill(0.0);
  }
  backward(loss);
}

Tensor grad_or_zeros(const Var& v) {
  if (v->grad_allocated()) return v->grad;
  return Tensor(v->value.shape());
}

}  // namespace pixelcritic
