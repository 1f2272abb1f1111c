#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pixelcritic/tensor.hpp"

namespace pixelcritic {

struct OpNode;
using Var = std::shared_ptr<OpNode>;

// One record of the define-by-run computation graph. Values are computed
// eagerly; `backward_rule` pushes this node's gradient into its inputs,
// always additively so that fan-out accumulates.
struct OpNode {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::string name;  // non-empty for named parameters
  std::vector<Var> inputs;
  std::function<void(OpNode&)> backward_rule;

  Tensor& ensure_grad();
  bool grad_allocated() const { return grad.size() == value.size() && !value.empty(); }
};

Var make_param(Tensor value, std::string name);
Var make_leaf(Tensor value, bool requires_grad = false);
Var make_const(Tensor value);

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);  // scale*x + shift
Var mul_const(const Var& x, Tensor weights);           // elementwise, no grad for weights
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var elem_log(const Var& x);
Var clamp(const Var& x, double lo, double hi);  // gradient passes strictly inside

// contractions & reductions
Var matmul(const Var& a, const Var& b);  // [m,k] x [k,n]
Var softmax(const Var& x, int axis);
Var sum(const Var& x);   // -> scalar [1]
Var mean(const Var& x);  // -> scalar [1]

// spatial ops on [B,C,H,W]
Var conv2d(const Var& input, const Var& kernel, int stride, int padding);
Var bias_channels(const Var& x, const Var& bias);  // bias shape [C]
Var pool2d_avg(const Var& x, int factor);
Var upsample_nearest(const Var& x, int factor);
Var concat_channels(const Var& a, const Var& b);
Var global_avg_pool(const Var& x);  // -> [B,C]

// fused layers
Var linear(const Var& x, const Var& w, const Var& b);  // [B,I] x [I,O] + [O]
// SAGAN-style spatial self-attention: queries wf*x, keys wg*x, values wh*x,
// row-stochastic attention over positions, residual output x + gain*(attended values).
Var self_attention(const Var& x, const Var& wf, const Var& wg, const Var& wh, const Var& gain);
Var cross_entropy_with_logits(const Var& logits, const std::vector<int>& labels);

// Reverse sweep from a scalar loss. Zeroes the gradients of every reachable
// differentiable node first, then accumulates; each node's rule runs exactly
// once. The overload taking `params` also zeroes parameters the loss does not
// reach, so every parameter ends up with a well-defined gradient.
void backward(const Var& loss);
void backward(const Var& loss, const std::vector<Var>& params);

Tensor grad_or_zeros(const Var& v);

}  // namespace pixelcritic
