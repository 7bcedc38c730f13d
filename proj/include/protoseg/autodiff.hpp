#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "protoseg/image.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg::ad {

// Reverse-mode automatic differentiation over Tensor. A forward pass builds a
// dynamic graph of Nodes; backward(root) runs the chain rule in reverse
// topological order. Parameters are long-lived leaf nodes whose .grad is read
// by the optimizer after each backward pass.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value, (re)allocated by backward()
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;  // pulls own grad into parents
  bool requires_grad = true;
};

Var make_var(Tensor value, bool requires_grad = true);
inline Var constant(Tensor value) { return make_var(std::move(value), false); }

// Runs reverse-mode accumulation from a scalar root. Grads of every node in
// the graph (parameters included) are zeroed first, so each backward produces
// fresh gradients.
void backward(const Var& root);

// --- elementwise / structural ops -----------------------------------------

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var upsample2(const Var& x);            // nearest-neighbor x2
Var maxpool2(const Var& x);             // 2x2, stride 2
Var concat_channels(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);    // same-shape elementwise

// (n, c, 1, 1) -> (n, c, h, w), each vector repeated over the spatial grid.
Var broadcast_spatial(const Var& v, int h, int w);

// Per-image, per-channel spatial mean: (n, c, h, w) -> (n, c, 1, 1).
Var spatial_mean(const Var& x);

// --- convolution and normalization -----------------------------------------

// 3x3-style convolution, stride 1. weight: (out, in, k, k); bias: (1, out, 1, 1).
// Output spatial size is h + 2*pad - dilation*(k-1).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int pad, int dilation);

// Batch normalization over (n, h, w) per channel. In training mode the batch
// statistics normalize and the running buffers are updated in place; in
// evaluation mode the running buffers normalize and nothing is written.
Var batchnorm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
              Tensor& running_var, bool training, double momentum = 0.1,
              double eps = 1e-5);

// --- prototype ops ----------------------------------------------------------

// Masked average pooling followed by prototype averaging: features (n, M, h, w)
// with one mask per image; result (1, M, 1, 1) is the mean over `valid` images
// of each image's foreground-mean feature vector. Masks listed in `valid` must
// be non-empty.
Var masked_mean_pool(const Var& features, const std::vector<Mask>& masks,
                     const std::vector<int>& valid);

// Cosine similarity between each spatial feature vector and a prototype:
// (n, M, h, w) x (1, M, 1, 1) -> (n, 1, h, w). Similarity against a zero
// vector is defined as 0.
Var cosine_map(const Var& features, const Var& prototype);

// --- losses -----------------------------------------------------------------

// Mean binary cross-entropy of predictions against a fixed target, with
// predictions clipped to [eps, 1-eps] before the logs. Returns a scalar node.
Var bce_mean(const Var& pred, const Tensor& target, double eps = 1e-7);

// Scalar combination a + lambda * b.
Var add_scaled(const Var& a, const Var& b, double lambda);

}  // namespace protoseg::ad
