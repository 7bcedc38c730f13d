#include "protoseg/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "protoseg/error.hpp"

namespace protoseg::ad {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

void check(bool cond, ErrorKind kind, const char* msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace

Var make_var(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

void backward(const Var& root) {
  check(root->value.size() == 1, ErrorKind::ShapeMismatch,
        "backward() expects a scalar root");

  // Iterative post-order DFS: topological order with children before parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    node->grad = Tensor(node->value.n(), node->value.c(), node->value.h(),
                        node->value.w());
  }
  root->grad[0] = 1.0;

  // `order` is children-first; walk it backwards so each node's grad is
  // complete before its backward_fn runs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  auto node = make_var(std::move(out));
  node->parents = {x};
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xn.value[i] > 0.0) xn.grad[i] += self.grad[i];
  };
  return node;
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  auto node = make_var(std::move(out));
  node->parents = {x};
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double s = self.value[i];
      xn.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  };
  return node;
}

Var upsample2(const Var& x) {
  const Tensor& in = x->value;
  Tensor out(in.n(), in.c(), in.h() * 2, in.w() * 2);
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int xx = 0; xx < out.w(); ++xx)
          out.at(n, c, y, xx) = in.at(n, c, y / 2, xx / 2);
  auto node = make_var(std::move(out));
  node->parents = {x};
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    const Tensor& g = self.grad;
    for (int n = 0; n < g.n(); ++n)
      for (int c = 0; c < g.c(); ++c)
        for (int y = 0; y < g.h(); ++y)
          for (int xx = 0; xx < g.w(); ++xx)
            xn.grad.at(n, c, y / 2, xx / 2) += g.at(n, c, y, xx);
  };
  return node;
}

Var maxpool2(const Var& x) {
  const Tensor& in = x->value;
  check(in.h() % 2 == 0 && in.w() % 2 == 0, ErrorKind::IndivisibleInput,
        "maxpool2 needs even spatial dims");
  Tensor out(in.n(), in.c(), in.h() / 2, in.w() / 2);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t o = 0;
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int xx = 0; xx < out.w(); ++xx, ++o) {
          double best = -1e300;
          std::size_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              std::size_t idx =
                  ((static_cast<std::size_t>(n) * in.c() + c) * in.h() + 2 * y + dy) *
                      in.w() +
                  2 * xx + dx;
              if (in[idx] > best) {
                best = in[idx];
                best_idx = idx;
              }
            }
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
  auto node = make_var(std::move(out));
  node->parents = {x};
  node->backward_fn = [argmax](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xn.grad[(*argmax)[i]] += self.grad[i];
  };
  return node;
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a->value;
  const Tensor& tb = b->value;
  check(ta.n() == tb.n() && ta.h() == tb.h() && ta.w() == tb.w(),
        ErrorKind::DimensionMismatch, "concat_channels shapes disagree");
  Tensor out(ta.n(), ta.c() + tb.c(), ta.h(), ta.w());
  const std::size_t plane = static_cast<std::size_t>(ta.h()) * ta.w();
  for (int n = 0; n < ta.n(); ++n) {
    std::copy(ta.data() + n * ta.c() * plane, ta.data() + (n + 1) * ta.c() * plane,
              out.data() + n * out.c() * plane);
    std::copy(tb.data() + n * tb.c() * plane, tb.data() + (n + 1) * tb.c() * plane,
              out.data() + n * out.c() * plane + ta.c() * plane);
  }
  auto node = make_var(std::move(out));
  node->parents = {a, b};
  node->backward_fn = [plane](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const Tensor& g = self.grad;
    for (int n = 0; n < an.value.n(); ++n) {
      const double* gn = g.data() + n * g.c() * plane;
      if (an.requires_grad) {
        double* dst = an.grad.data() + n * an.value.c() * plane;
        for (std::size_t i = 0; i < an.value.c() * plane; ++i) dst[i] += gn[i];
      }
      if (bn.requires_grad) {
        double* dst = bn.grad.data() + n * bn.value.c() * plane;
        const double* src = gn + an.value.c() * plane;
        for (std::size_t i = 0; i < bn.value.c() * plane; ++i) dst[i] += src[i];
      }
    }
  };
  return node;
}

Var add(const Var& a, const Var& b) {
  check(a->value.same_shape(b->value), ErrorKind::ShapeMismatch, "add shapes disagree");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  auto node = make_var(std::move(out));
  node->parents = {a, b};
  node->backward_fn = [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Node& pn = *self.parents[p];
      if (!pn.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) pn.grad[i] += self.grad[i];
    }
  };
  return node;
}

Var broadcast_spatial(const Var& v, int h, int w) {
  const Tensor& in = v->value;
  check(in.h() == 1 && in.w() == 1, ErrorKind::ShapeMismatch,
        "broadcast_spatial expects (n, c, 1, 1)");
  Tensor out(in.n(), in.c(), h, w);
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      double val = in.at(n, c, 0, 0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = val;
    }
  auto node = make_var(std::move(out));
  node->parents = {v};
  node->backward_fn = [](Node& self) {
    Node& vn = *self.parents[0];
    if (!vn.requires_grad) return;
    const Tensor& g = self.grad;
    for (int n = 0; n < g.n(); ++n)
      for (int c = 0; c < g.c(); ++c) {
        double s = 0.0;
        for (int y = 0; y < g.h(); ++y)
          for (int x = 0; x < g.w(); ++x) s += g.at(n, c, y, x);
        vn.grad.at(n, c, 0, 0) += s;
      }
  };
  return node;
}

Var spatial_mean(const Var& x) {
  const Tensor& in = x->value;
  Tensor out(in.n(), in.c(), 1, 1);
  const double inv = 1.0 / (static_cast<double>(in.h()) * in.w());
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      double s = 0.0;
      for (int y = 0; y < in.h(); ++y)
        for (int xx = 0; xx < in.w(); ++xx) s += in.at(n, c, y, xx);
      out.at(n, c, 0, 0) = s * inv;
    }
  auto node = make_var(std::move(out));
  node->parents = {x};
  node->backward_fn = [inv](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    for (int n = 0; n < xn.value.n(); ++n)
      for (int c = 0; c < xn.value.c(); ++c) {
        double g = self.grad.at(n, c, 0, 0) * inv;
        for (int y = 0; y < xn.value.h(); ++y)
          for (int xx = 0; xx < xn.value.w(); ++xx) xn.grad.at(n, c, y, xx) += g;
      }
  };
  return node;
}

namespace {

// Gather the receptive-field columns of one image: (in*k*k) x (ho*wo).
void im2col(const Tensor& x, int n, int k, int pad, int dil, int ho, int wo,
            MatrixRM& cols) {
  const int in_ch = x.c(), h = x.h(), w = x.w();
  cols.setZero(in_ch * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < in_ch; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int y = 0; y < ho; ++y) {
          const int sy = y - pad + ky * dil;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < wo; ++xx) {
            const int sx = xx - pad + kx * dil;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * wo + xx) = x.at(n, c, sy, sx);
          }
        }
      }
}

void col2im_add(const MatrixRM& cols, int n, int k, int pad, int dil, int ho, int wo,
                Tensor& dx) {
  const int in_ch = dx.c(), h = dx.h(), w = dx.w();
  for (int c = 0; c < in_ch; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int y = 0; y < ho; ++y) {
          const int sy = y - pad + ky * dil;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < wo; ++xx) {
            const int sx = xx - pad + kx * dil;
            if (sx < 0 || sx >= w) continue;
            dx.at(n, c, sy, sx) += cols(row, y * wo + xx);
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int pad, int dilation) {
  const Tensor& in = x->value;
  const Tensor& w = weight->value;
  check(in.c() == w.c(), ErrorKind::DimensionMismatch,
        "conv2d input channels disagree with weight");
  const int k = w.h();
  const int ho = in.h() + 2 * pad - dilation * (k - 1);
  const int wo = in.w() + 2 * pad - dilation * (k - 1);
  check(ho > 0 && wo > 0, ErrorKind::ShapeMismatch, "conv2d output would be empty");
  const int out_ch = w.n();

  Tensor out(in.n(), out_ch, ho, wo);
  // Cached im2col matrices are reused by the backward pass.
  auto cols_cache = std::make_shared<std::vector<MatrixRM>>(in.n());
  ConstMapRM wmat(w.data(), out_ch, static_cast<Eigen::Index>(in.c()) * k * k);
  for (int n = 0; n < in.n(); ++n) {
    MatrixRM& cols = (*cols_cache)[n];
    im2col(in, n, k, pad, dilation, ho, wo, cols);
    MapRM out_map(out.data() + static_cast<std::size_t>(n) * out_ch * ho * wo, out_ch,
                  static_cast<Eigen::Index>(ho) * wo);
    out_map.noalias() = wmat * cols;
    for (int c = 0; c < out_ch; ++c)
      out_map.row(c).array() += bias->value.at(0, c, 0, 0);
  }

  auto node = make_var(std::move(out));
  node->parents = {x, weight, bias};
  node->backward_fn = [cols_cache, pad, dilation, k, ho, wo](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    const Tensor& g = self.grad;
    const int out_ch = g.c();
    const int in_ch = xn.value.c();
    ConstMapRM wmat(wn.value.data(), out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
    MapRM dw(wn.grad.data(), out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
    for (int n = 0; n < g.n(); ++n) {
      ConstMapRM gmap(g.data() + static_cast<std::size_t>(n) * out_ch * ho * wo, out_ch,
                      static_cast<Eigen::Index>(ho) * wo);
      if (wn.requires_grad) dw.noalias() += gmap * (*cols_cache)[n].transpose();
      if (bn.requires_grad) {
        // Fixed-order summation: Eigen reductions over unaligned maps pick
        // their peel length from the address, which breaks bit reproducibility.
        const std::size_t row_len = static_cast<std::size_t>(ho) * wo;
        for (int c = 0; c < out_ch; ++c) {
          const double* gp =
              g.data() + (static_cast<std::size_t>(n) * out_ch + c) * row_len;
          double s = 0.0;
          for (std::size_t i = 0; i < row_len; ++i) s += gp[i];
          bn.grad.at(0, c, 0, 0) += s;
        }
      }
      if (xn.requires_grad) {
        MatrixRM dcols = wmat.transpose() * gmap;
        col2im_add(dcols, n, k, pad, dilation, ho, wo, xn.grad);
      }
    }
  };
  return node;
}

Var batchnorm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
              Tensor& running_var, bool training, double momentum, double eps) {
  const Tensor& in = x->value;
  const int C = in.c();
  check(gamma->value.c() == C && beta->value.c() == C, ErrorKind::DimensionMismatch,
        "batchnorm parameter width disagrees with input");
  const std::size_t plane = static_cast<std::size_t>(in.h()) * in.w();
  const double m = static_cast<double>(in.n()) * plane;

  Tensor out(in.n(), C, in.h(), in.w());
  auto mean = std::make_shared<std::vector<double>>(C);
  auto invstd = std::make_shared<std::vector<double>>(C);

  for (int c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (int n = 0; n < in.n(); ++n) {
        const double* p = in.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mu = s / m;
      double v = 0.0;
      for (int n = 0; n < in.n(); ++n) {
        const double* p = in.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          double d = p[i] - mu;
          v += d * d;
        }
      }
      var = v / m;  // biased, used for normalization
      const double unbiased = m > 1.0 ? v / (m - 1.0) : var;
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    (*mean)[c] = mu;
    (*invstd)[c] = 1.0 / std::sqrt(var + eps);
    const double g = gamma->value.at(0, c, 0, 0);
    const double b = beta->value.at(0, c, 0, 0);
    for (int n = 0; n < in.n(); ++n) {
      const double* p = in.data() + (static_cast<std::size_t>(n) * C + c) * plane;
      double* q = out.data() + (static_cast<std::size_t>(n) * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        q[i] = g * (p[i] - mu) * (*invstd)[c] + b;
    }
  }

  auto node = make_var(std::move(out));
  node->parents = {x, gamma, beta};
  node->backward_fn = [mean, invstd, training, m, plane, C](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    const Tensor& g = self.grad;
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[c];
      const double is = (*invstd)[c];
      const double gam = gn.value.at(0, c, 0, 0);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < g.n(); ++n) {
        const double* gp = g.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        const double* xp = xn.value.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - mu) * is;
        }
      }
      if (bn.requires_grad) bn.grad.at(0, c, 0, 0) += sum_dy;
      if (gn.requires_grad) gn.grad.at(0, c, 0, 0) += sum_dy_xhat;
      if (!xn.requires_grad) continue;
      if (training) {
        // dx = gamma * invstd * (dy - mean(dy) - xhat * mean(dy * xhat))
        for (int n = 0; n < g.n(); ++n) {
          const double* gp = g.data() + (static_cast<std::size_t>(n) * C + c) * plane;
          const double* xp =
              xn.value.data() + (static_cast<std::size_t>(n) * C + c) * plane;
          double* dxp = xn.grad.data() + (static_cast<std::size_t>(n) * C + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (xp[i] - mu) * is;
            dxp[i] += gam * is * (gp[i] - sum_dy / m - xhat * sum_dy_xhat / m);
          }
        }
      } else {
        for (int n = 0; n < g.n(); ++n) {
          const double* gp = g.data() + (static_cast<std::size_t>(n) * C + c) * plane;
          double* dxp = xn.grad.data() + (static_cast<std::size_t>(n) * C + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) dxp[i] += gam * is * gp[i];
        }
      }
    }
  };
  return node;
}

Var masked_mean_pool(const Var& features, const std::vector<Mask>& masks,
                     const std::vector<int>& valid) {
  const Tensor& f = features->value;
  check(static_cast<int>(masks.size()) == f.n(), ErrorKind::ShapeMismatch,
        "one mask per feature image required");
  check(!valid.empty(), ErrorKind::EmptyMask, "no non-empty support masks to pool");
  for (int idx : valid) {
    check(masks[idx].height == f.h() && masks[idx].width == f.w(),
          ErrorKind::ShapeMismatch, "mask resolution must equal feature resolution");
    check(masks[idx].foreground() > 0, ErrorKind::EmptyMask,
          "masked_mean_pool given an empty mask");
  }

  const int M = f.c();
  Tensor out(1, M, 1, 1);
  auto weights = std::make_shared<std::vector<double>>(valid.size());
  const double inv_k = 1.0 / static_cast<double>(valid.size());
  for (std::size_t vi = 0; vi < valid.size(); ++vi) {
    const int n = valid[vi];
    const Mask& mask = masks[n];
    const double inv_area = 1.0 / static_cast<double>(mask.foreground());
    (*weights)[vi] = inv_area * inv_k;
    for (int c = 0; c < M; ++c) {
      double s = 0.0;
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x)
          if (mask.at(y, x)) s += f.at(n, c, y, x);
      out.at(0, c, 0, 0) += s * inv_area * inv_k;
    }
  }

  auto node = make_var(std::move(out));
  node->parents = {features};
  auto valid_copy = std::make_shared<std::vector<int>>(valid);
  auto masks_copy = std::make_shared<std::vector<Mask>>(masks);
  node->backward_fn = [weights, valid_copy, masks_copy](Node& self) {
    Node& fn = *self.parents[0];
    if (!fn.requires_grad) return;
    const Tensor& g = self.grad;
    for (std::size_t vi = 0; vi < valid_copy->size(); ++vi) {
      const int n = (*valid_copy)[vi];
      const Mask& mask = (*masks_copy)[n];
      const double w = (*weights)[vi];
      for (int c = 0; c < fn.value.c(); ++c) {
        const double gc = g.at(0, c, 0, 0) * w;
        for (int y = 0; y < fn.value.h(); ++y)
          for (int x = 0; x < fn.value.w(); ++x)
            if (mask.at(y, x)) fn.grad.at(n, c, y, x) += gc;
      }
    }
  };
  return node;
}

Var cosine_map(const Var& features, const Var& prototype) {
  const Tensor& f = features->value;
  const Tensor& p = prototype->value;
  check(p.n() == 1 && p.c() == f.c() && p.h() == 1 && p.w() == 1,
        ErrorKind::DimensionMismatch, "prototype must be (1, M, 1, 1)");
  const int M = f.c();
  double pnorm2 = 0.0;
  for (int c = 0; c < M; ++c) pnorm2 += p.at(0, c, 0, 0) * p.at(0, c, 0, 0);
  const double pnorm = std::sqrt(pnorm2);

  Tensor out(f.n(), 1, f.h(), f.w());
  if (pnorm > 0.0) {
    for (int n = 0; n < f.n(); ++n)
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x) {
          double dot = 0.0, fn2 = 0.0;
          for (int c = 0; c < M; ++c) {
            const double v = f.at(n, c, y, x);
            dot += v * p.at(0, c, 0, 0);
            fn2 += v * v;
          }
          const double fnorm = std::sqrt(fn2);
          out.at(n, 0, y, x) = fnorm > 0.0 ? dot / (fnorm * pnorm) : 0.0;
        }
  }
  auto node = make_var(std::move(out));
  node->parents = {features, prototype};
  node->backward_fn = [M, pnorm](Node& self) {
    if (pnorm == 0.0) return;  // zero-prototype convention: flat zero map
    Node& fn = *self.parents[0];
    Node& pn = *self.parents[1];
    const Tensor& f = fn.value;
    const Tensor& p = pn.value;
    const Tensor& g = self.grad;
    for (int n = 0; n < f.n(); ++n)
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x) {
          const double gv = g.at(n, 0, y, x);
          if (gv == 0.0) continue;
          double dot = 0.0, fn2 = 0.0;
          for (int c = 0; c < M; ++c) {
            const double v = f.at(n, c, y, x);
            dot += v * p.at(0, c, 0, 0);
            fn2 += v * v;
          }
          const double fnorm = std::sqrt(fn2);
          if (fnorm == 0.0) continue;
          const double inv_fp = 1.0 / (fnorm * pnorm);
          for (int c = 0; c < M; ++c) {
            const double fv = f.at(n, c, y, x);
            const double pv = p.at(0, c, 0, 0);
            if (fn.requires_grad)
              fn.grad.at(n, c, y, x) +=
                  gv * (pv * inv_fp - dot * fv / (fn2 * fnorm * pnorm));
            if (pn.requires_grad)
              pn.grad.at(0, c, 0, 0) +=
                  gv * (fv * inv_fp - dot * pv / (pnorm * pnorm * fnorm * pnorm));
          }
        }
  };
  return node;
}

Var bce_mean(const Var& pred, const Tensor& target, double eps) {
  const Tensor& p = pred->value;
  check(p.same_shape(target), ErrorKind::ShapeMismatch,
        "bce_mean prediction/target shapes disagree");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], eps, 1.0 - eps);
    const double t = target[i];
    loss -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
  }
  loss *= inv_n;

  auto node = make_var(Tensor::scalar(loss));
  node->parents = {pred};
  auto target_copy = std::make_shared<Tensor>(target);
  node->backward_fn = [target_copy, eps, inv_n](Node& self) {
    Node& pn = *self.parents[0];
    if (!pn.requires_grad) return;
    const double g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < pn.value.size(); ++i) {
      const double pc = std::clamp(pn.value[i], eps, 1.0 - eps);
      pn.grad[i] += g * (pc - (*target_copy)[i]) / (pc * (1.0 - pc));
    }
  };
  return node;
}

Var add_scaled(const Var& a, const Var& b, double lambda) {
  check(a->value.size() == 1 && b->value.size() == 1, ErrorKind::ShapeMismatch,
        "add_scaled expects scalars");
  auto node = make_var(Tensor::scalar(a->value[0] + lambda * b->value[0]));
  node->parents = {a, b};
  node->backward_fn = [lambda](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) an.grad[0] += self.grad[0];
    if (bn.requires_grad) bn.grad[0] += self.grad[0] * lambda;
  };
  return node;
}

}  // namespace protoseg::ad
