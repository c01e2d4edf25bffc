#include "depthint/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_set>

#include "depthint/binary.hpp"
#include "depthint/error.hpp"

namespace depthint::ad {
namespace {

using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw DomainError(std::string(op) + ": " + detail);
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Grad buffer of an input, or nullptr when it does not need one.
double* grad_of(const NodePtr& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

void require_rank(const Tensor& t, int rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    shape_error(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= std::size_t(e);
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (element_count(shape) != values.size()) {
    shape_error("constant", "shape " + to_string(shape) + " holds " + std::to_string(element_count(shape)) +
                                " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = element_count(shape);
  Tensor t = constant(std::move(shape), std::vector<double>(n, 0.0));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

std::span<const double> Tensor::grad() const {
  static const std::vector<double> empty;
  if (node_->grad.size() != node_->value.size()) {
    node_->ensure_grad();
  }
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) shape_error("item", "tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (size() != 1) shape_error("backward", "loss must be a scalar, got shape " + to_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative DFS post-order gives a topological order; each node is visited once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 4, "conv3d", "input");
  require_rank(weight, 5, "conv3d", "weight");
  require_rank(bias, 1, "conv3d", "bias");
  const int ci_n = x.dim(0), depth = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int co_n = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != ci_n || weight.dim(3) != k || weight.dim(4) != k || k % 2 == 0) {
    shape_error("conv3d", "weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
  }
  if (bias.dim(0) != co_n) shape_error("conv3d", "bias " + to_string(bias.shape()) + " for " + std::to_string(co_n) + " outputs");
  const int pad = k / 2;
  const std::size_t vox = std::size_t(depth) * height * width;

  // Visits every (output channel, input channel, tap) with its valid output range;
  // fn(out_offset, in_offset, weight_index, run_length) handles one contiguous x-run.
  auto for_each_run = [=](auto&& fn) {
    for (int co = 0; co < co_n; ++co) {
      for (int ci = 0; ci < ci_n; ++ci) {
        for (int kz = 0; kz < k; ++kz) {
          const int z0 = std::max(0, pad - kz), z1 = std::min(depth, depth + pad - kz);
          for (int ky = 0; ky < k; ++ky) {
            const int y0 = std::max(0, pad - ky), y1 = std::min(height, height + pad - ky);
            for (int kx = 0; kx < k; ++kx) {
              const int x0 = std::max(0, pad - kx), x1 = std::min(width, width + pad - kx);
              if (x1 <= x0) continue;
              const std::size_t w_idx = (((std::size_t(co) * ci_n + ci) * k + kz) * k + ky) * k + kx;
              for (int z = z0; z < z1; ++z) {
                for (int y = y0; y < y1; ++y) {
                  const std::size_t out_off = std::size_t(co) * vox + (std::size_t(z) * height + y) * width + x0;
                  const std::size_t in_off = std::size_t(ci) * vox +
                                             (std::size_t(z + kz - pad) * height + (y + ky - pad)) * width +
                                             (x0 + kx - pad);
                  fn(out_off, in_off, w_idx, x1 - x0);
                }
              }
            }
          }
        }
      }
    }
  };

  std::vector<double> out(std::size_t(co_n) * vox);
  const auto& xv = x.node()->value;
  const auto& wv = weight.node()->value;
  const auto& bv = bias.node()->value;
  for (int co = 0; co < co_n; ++co) std::fill_n(out.begin() + std::ptrdiff_t(std::size_t(co) * vox), vox, bv[std::size_t(co)]);
  for_each_run([&](std::size_t o, std::size_t i, std::size_t w, int len) {
    const double wk = wv[w];
    double* dst = out.data() + o;
    const double* src = xv.data() + i;
    for (int t = 0; t < len; ++t) dst[t] += wk * src[t];
  });

  auto xn = x.node(), wn = weight.node(), bn = bias.node();
  return make_result("conv3d", {co_n, depth, height, width}, std::move(out), {xn, wn, bn},
                     [xn, wn, bn, for_each_run, vox, co_n](Node& self) {
                       const double* g = self.grad.data();
                       double* gx = grad_of(xn);
                       double* gw = grad_of(wn);
                       double* gb = grad_of(bn);
                       if (gb) {
                         for (int co = 0; co < co_n; ++co) {
                           double s = 0.0;
                           for (std::size_t v = 0; v < vox; ++v) s += g[std::size_t(co) * vox + v];
                           gb[co] += s;
                         }
                       }
                       const double* xv = xn->value.data();
                       const double* wv = wn->value.data();
                       for_each_run([&](std::size_t o, std::size_t i, std::size_t w, int len) {
                         if (gx) {
                           const double wk = wv[w];
                           for (int t = 0; t < len; ++t) gx[i + std::size_t(t)] += wk * g[o + std::size_t(t)];
                         }
                         if (gw) {
                           double s = 0.0;
                           for (int t = 0; t < len; ++t) s += g[o + std::size_t(t)] * xv[i + std::size_t(t)];
                           gw[w] += s;
                         }
                       });
                     });
}

Tensor maxpool3d(const Tensor& x) {
  require_rank(x, 4, "maxpool3d", "input");
  const int c_n = x.dim(0), depth = x.dim(1), height = x.dim(2), width = x.dim(3);
  if (depth % 2 || height % 2 || width % 2) shape_error("maxpool3d", "extents must be even, got " + to_string(x.shape()));
  const int od = depth / 2, oh = height / 2, ow = width / 2;
  std::vector<double> out(std::size_t(c_n) * od * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto& xv = x.node()->value;
  std::size_t o = 0;
  for (int c = 0; c < c_n; ++c) {
    for (int z = 0; z < od; ++z) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = ((std::size_t(c) * depth + 2 * z + dz) * height + 2 * y + dy) * width + 2 * xx + dx;
                if (xv[i] > best) {
                  best = xv[i];
                  best_i = i;
                }
              }
            }
          }
          out[o] = best;
          argmax[o] = best_i;
        }
      }
    }
  }
  auto xn = x.node();
  return make_result("maxpool3d", {c_n, od, oh, ow}, std::move(out), {xn}, [xn, argmax = std::move(argmax)](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
  });
}

Tensor deconv3d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 4, "deconv3d", "input");
  require_rank(weight, 5, "deconv3d", "weight");
  require_rank(bias, 1, "deconv3d", "bias");
  const int ci_n = x.dim(0), depth = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int co_n = weight.dim(1);
  if (weight.dim(0) != ci_n || weight.dim(2) != 2 || weight.dim(3) != 2 || weight.dim(4) != 2) {
    shape_error("deconv3d", "weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
  }
  if (bias.dim(0) != co_n) shape_error("deconv3d", "bias " + to_string(bias.shape()) + " for " + std::to_string(co_n) + " outputs");
  const int od = 2 * depth, oh = 2 * height, ow = 2 * width;
  const std::size_t in_vox = std::size_t(depth) * height * width;
  const std::size_t out_vox = std::size_t(od) * oh * ow;

  auto out_index = [=](int co, int z, int y, int xx, int a, int b, int c) {
    return std::size_t(co) * out_vox + (std::size_t(2 * z + a) * oh + (2 * y + b)) * ow + (2 * xx + c);
  };

  std::vector<double> out(std::size_t(co_n) * out_vox);
  const auto& xv = x.node()->value;
  const auto& wv = weight.node()->value;
  const auto& bv = bias.node()->value;
  for (int co = 0; co < co_n; ++co) std::fill_n(out.begin() + std::ptrdiff_t(std::size_t(co) * out_vox), out_vox, bv[std::size_t(co)]);
  for (int ci = 0; ci < ci_n; ++ci) {
    for (int co = 0; co < co_n; ++co) {
      for (int tap = 0; tap < 8; ++tap) {
        const int a = tap >> 2, b = (tap >> 1) & 1, c = tap & 1;
        const double wk = wv[(std::size_t(ci) * co_n + co) * 8 + std::size_t(tap)];
        for (int z = 0; z < depth; ++z)
          for (int y = 0; y < height; ++y)
            for (int xx = 0; xx < width; ++xx)
              out[out_index(co, z, y, xx, a, b, c)] += wk * xv[std::size_t(ci) * in_vox + (std::size_t(z) * height + y) * width + xx];
      }
    }
  }
  auto xn = x.node(), wn = weight.node(), bn = bias.node();
  return make_result("deconv3d", {co_n, od, oh, ow}, std::move(out), {xn, wn, bn},
                     [=](Node& self) {
                       const double* g = self.grad.data();
                       double* gx = grad_of(xn);
                       double* gw = grad_of(wn);
                       double* gb = grad_of(bn);
                       if (gb) {
                         for (int co = 0; co < co_n; ++co) {
                           double s = 0.0;
                           for (std::size_t v = 0; v < out_vox; ++v) s += g[std::size_t(co) * out_vox + v];
                           gb[co] += s;
                         }
                       }
                       const double* xv = xn->value.data();
                       const double* wv = wn->value.data();
                       for (int ci = 0; ci < ci_n; ++ci) {
                         for (int co = 0; co < co_n; ++co) {
                           for (int tap = 0; tap < 8; ++tap) {
                             const int a = tap >> 2, b = (tap >> 1) & 1, c = tap & 1;
                             const std::size_t w_idx = (std::size_t(ci) * co_n + co) * 8 + std::size_t(tap);
                             double gws = 0.0;
                             for (int z = 0; z < depth; ++z)
                               for (int y = 0; y < height; ++y)
                                 for (int xx = 0; xx < width; ++xx) {
                                   const std::size_t i = std::size_t(ci) * in_vox + (std::size_t(z) * height + y) * width + xx;
                                   const double go = g[out_index(co, z, y, xx, a, b, c)];
                                   if (gx) gx[i] += wv[w_idx] * go;
                                   gws += go * xv[i];
                                 }
                             if (gw) gw[w_idx] += gws;
                           }
                         }
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", "inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMatrix>;
  using MMap = Eigen::Map<RowMatrix>;
  std::vector<double> out(std::size_t(n) * m);
  MMap(out.data(), n, m).noalias() = CMap(a.values().data(), n, k) * CMap(b.values().data(), k, m);
  auto an = a.node(), bn = b.node();
  return make_result("matmul", {n, m}, std::move(out), {an, bn}, [an, bn, n, k, m](Node& self) {
    const CMap g(self.grad.data(), n, m);
    if (double* ga = grad_of(an)) MMap(ga, n, k).noalias() += g * CMap(bn->value.data(), k, m).transpose();
    if (double* gb = grad_of(bn)) MMap(gb, k, m).noalias() += CMap(an->value.data(), n, k).transpose() * g;
  });
}

namespace {

Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, double sign_b, bool multiply) {
  const bool same = a.shape() == b.shape();
  const bool row_broadcast = !multiply && b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back();
  if (!same && !row_broadcast) {
    shape_error(op, "incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t period = b.size();
  std::vector<double> out(n);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = multiply ? av[i] * bv[i] : av[i] + sign_b * bv[i % period];
  }
  auto an = a.node(), bn = b.node();
  return make_result(op, a.shape(), std::move(out), {an, bn}, [an, bn, n, period, sign_b, multiply](Node& self) {
    double* ga = grad_of(an);
    double* gb = grad_of(bn);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i];
      if (multiply) {
        if (ga) ga[i] += g * bn->value[i];
        if (gb) gb[i] += g * an->value[i];
      } else {
        if (ga) ga[i] += g;
        if (gb) gb[i % period] += sign_b * g;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary("add", a, b, 1.0, false); }

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", "incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  return elementwise_binary("sub", a, b, -1.0, false);
}

Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary("mul", a, b, 1.0, true); }

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.values()[i]);
  auto xn = x.node();
  return make_result("relu", x.shape(), std::move(out), {xn}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->value[i] > 0.0) gx[i] += self.grad[i];
    }
  });
}

Tensor softplus(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  auto xn = x.node();
  return make_result("softplus", x.shape(), std::move(out), {xn}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->value[i];
      const double sigmoid = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      gx[i] += self.grad[i] * sigmoid;
    }
  });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) element counts.
void split_axis(const Shape& s, int axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= std::size_t(s[std::size_t(i)]);
  for (std::size_t i = std::size_t(axis) + 1; i < s.size(); ++i) inner *= std::size_t(s[i]);
}

}  // namespace

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() != b.rank() || axis < 0 || axis >= a.rank()) {
    shape_error("concat", "cannot join " + to_string(a.shape()) + " and " + to_string(b.shape()) + " on axis " + std::to_string(axis));
  }
  for (int i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      shape_error("concat", "extents differ off-axis: " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
  }
  Shape shape = a.shape();
  shape[std::size_t(axis)] += b.dim(axis);
  std::size_t outer = 0, inner = 0;
  split_axis(a.shape(), axis, outer, inner);
  const std::size_t ra = std::size_t(a.dim(axis)) * inner;
  const std::size_t rb = std::size_t(b.dim(axis)) * inner;
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  for (std::size_t o = 0; o < outer; ++o) {
    out.insert(out.end(), a.values().begin() + std::ptrdiff_t(o * ra), a.values().begin() + std::ptrdiff_t((o + 1) * ra));
    out.insert(out.end(), b.values().begin() + std::ptrdiff_t(o * rb), b.values().begin() + std::ptrdiff_t((o + 1) * rb));
  }
  auto an = a.node(), bn = b.node();
  return make_result("concat", std::move(shape), std::move(out), {an, bn}, [an, bn, outer, ra, rb](Node& self) {
    double* ga = grad_of(an);
    double* gb = grad_of(bn);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * (ra + rb);
      if (ga) for (std::size_t i = 0; i < ra; ++i) ga[o * ra + i] += g[i];
      if (gb) for (std::size_t i = 0; i < rb; ++i) gb[o * rb + i] += g[ra + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    shape_error("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto xn = x.node();
  return make_result("reshape", std::move(shape), std::move(out), {xn}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, int axis, int begin, int end) {
  if (axis < 0 || axis >= x.rank() || begin < 0 || end > x.dim(axis) || begin >= end) {
    shape_error("slice", "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                             std::to_string(axis) + " of " + to_string(x.shape()));
  }
  std::size_t outer = 0, inner = 0;
  split_axis(x.shape(), axis, outer, inner);
  const std::size_t extent = std::size_t(x.dim(axis));
  const std::size_t len = std::size_t(end - begin) * inner;
  Shape shape = x.shape();
  shape[std::size_t(axis)] = end - begin;
  std::vector<double> out;
  out.reserve(outer * len);
  for (std::size_t o = 0; o < outer; ++o) {
    auto first = x.values().begin() + std::ptrdiff_t(o * extent * inner + std::size_t(begin) * inner);
    out.insert(out.end(), first, first + std::ptrdiff_t(len));
  }
  auto xn = x.node();
  return make_result("slice", std::move(shape), std::move(out), {xn}, [xn, outer, extent, inner, begin, len](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t base = o * extent * inner + std::size_t(begin) * inner;
      for (std::size_t i = 0; i < len; ++i) gx[base + i] += self.grad[o * len + i];
    }
  });
}

Tensor reduce_sum(const Tensor& x) {
  // Fixed-order pairwise summation.
  std::vector<double> buf(x.values().begin(), x.values().end());
  std::size_t n = buf.size();
  while (n > 1) {
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i + half < n; ++i) buf[i] += buf[i + half];
    n = half;
  }
  auto xn = x.node();
  return make_result("reduce_sum", {}, {buf.empty() ? 0.0 : buf[0]}, {xn}, [xn](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += self.grad[0];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.values()[i];
  auto xn = x.node();
  return make_result("scale", x.shape(), std::move(out), {xn}, [xn, factor](Node& self) {
    double* gx = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

Tensor take(const Tensor& x, int axis, const std::vector<int>& indices) {
  if (axis < 0 || axis >= x.rank()) shape_error("take", "axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  for (int i : indices) {
    if (i < 0 || i >= x.dim(axis)) shape_error("take", "index " + std::to_string(i) + " out of range for " + to_string(x.shape()));
  }
  std::size_t outer = 0, inner = 0;
  split_axis(x.shape(), axis, outer, inner);
  const std::size_t extent = std::size_t(x.dim(axis));
  Shape shape = x.shape();
  shape[std::size_t(axis)] = int(indices.size());
  std::vector<double> out;
  out.reserve(outer * indices.size() * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (int idx : indices) {
      auto first = x.values().begin() + std::ptrdiff_t((o * extent + std::size_t(idx)) * inner);
      out.insert(out.end(), first, first + std::ptrdiff_t(inner));
    }
  }
  auto xn = x.node();
  return make_result("take", std::move(shape), std::move(out), {xn}, [xn, indices, outer, extent, inner](Node& self) {
    double* gx = grad_of(xn);
    std::size_t k = 0;
    for (std::size_t o = 0; o < outer; ++o) {
      for (int idx : indices) {
        const std::size_t base = (o * extent + std::size_t(idx)) * inner;
        for (std::size_t i = 0; i < inner; ++i) gx[base + i] += self.grad[k++];
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose", "input");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[std::size_t(c) * rows + r] = x.values()[std::size_t(r) * cols + c];
  auto xn = x.node();
  return make_result("transpose", {cols, rows}, std::move(out), {xn}, [xn, rows, cols](Node& self) {
    double* gx = grad_of(xn);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) gx[std::size_t(r) * cols + c] += self.grad[std::size_t(c) * rows + r];
  });
}

Tensor custom(const char* op, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              CustomBackward backward) {
  if (element_count(shape) != values.size()) {
    shape_error(op, "output shape " + to_string(shape) + " does not match " + std::to_string(values.size()) + " values");
  }
  std::vector<NodePtr> nodes;
  for (const auto& t : inputs) nodes.push_back(t.node());
  return make_result(op, std::move(shape), std::move(values), nodes, [nodes, backward](Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->requires_grad) continue;
      nodes[i]->ensure_grad();
      backward(self.grad, i, nodes[i]->grad);
    }
  });
}

Parameter::Parameter(std::string n, Shape shape, std::vector<double> values)
    : name(std::move(n)), tensor(Tensor::variable(std::move(shape), std::move(values))) {
  first_moment.assign(tensor.size(), 0.0);
  second_moment.assign(tensor.size(), 0.0);
}

Parameter::Parameter(const Parameter& other)
    : name(other.name),
      tensor(Tensor::variable(other.tensor.shape(), {other.tensor.values().begin(), other.tensor.values().end()})),
      first_moment(other.first_moment),
      second_moment(other.second_moment) {}

Parameter& Parameter::operator=(const Parameter& other) {
  if (this != &other) *this = Parameter(other);
  return *this;
}

void adam_step(std::vector<Parameter>& params, const AdamConfig& config, int t) {
  if (t < 1) throw DomainError("adam_step: step index must be >= 1");
  for (auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : params) {
    auto values = p.tensor.mutable_values();
    const auto grad = p.tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      p.first_moment[i] = config.beta1 * p.first_moment[i] + (1.0 - config.beta1) * grad[i];
      p.second_moment[i] = config.beta2 * p.second_moment[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = p.first_moment[i] / c1;
      const double v_hat = p.second_moment[i] / c2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  binary::write_magic(out, "DCKP");
  binary::write<std::uint32_t>(out, std::uint32_t(params.size()));
  for (const auto& p : params) {
    binary::write<std::uint32_t>(out, std::uint32_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    binary::write<std::uint32_t>(out, std::uint32_t(p.tensor.rank()));
    for (int e : p.tensor.shape()) binary::write<std::uint32_t>(out, std::uint32_t(e));
    for (double v : p.tensor.values()) binary::write<double>(out, v);
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, std::vector<Parameter>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  binary::expect_magic(in, "DCKP");
  const auto count = binary::read<std::uint32_t>(in, "checkpoint header");
  if (count != params.size()) {
    throw IoError("load_checkpoint: file holds " + std::to_string(count) + " parameters, model has " +
                  std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto len = binary::read<std::uint32_t>(in, "checkpoint name");
    if (len > 4096) throw IoError("load_checkpoint: implausible name length");
    std::string name(len, '\0');
    in.read(name.data(), std::streamsize(len));
    if (in.gcount() != std::streamsize(len)) throw IoError("truncated payload while reading checkpoint name");
    if (name != p.name) throw IoError("load_checkpoint: expected parameter '" + p.name + "', found '" + name + "'");
    const auto rank = binary::read<std::uint32_t>(in, "checkpoint rank");
    Shape shape(rank);
    for (auto& e : shape) e = int(binary::read<std::uint32_t>(in, "checkpoint extents"));
    if (shape != p.tensor.shape()) {
      throw IoError("load_checkpoint: parameter '" + name + "' has shape " + to_string(shape) + ", model expects " +
                    to_string(p.tensor.shape()));
    }
    for (double& v : p.tensor.mutable_values()) v = binary::read<double>(in, "checkpoint payload");
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& analytic, double step, double kink_tolerance) {
  GradCheckResult result;
  Eigen::VectorXd probe = x;
  auto central = [&](Eigen::Index i, double h) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    return (up - down) / (2.0 * h);
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double numeric = central(i, step);
    const double half = central(i, step / 2);
    if (std::abs(numeric - half) > kink_tolerance * std::max(1.0, std::abs(numeric))) {
      ++result.skipped;
      continue;
    }
    ++result.checked;
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& build,
                           const std::vector<Tensor>& inputs, double step, double kink_tolerance) {
  // Fresh leaves so the caller's tensors keep their gradients untouched.
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) {
    std::vector<double> v(t.values().begin(), t.values().end());
    leaves.push_back(t.requires_grad() ? Tensor::variable(t.shape(), v) : Tensor::constant(t.shape(), v));
  }
  build(leaves).backward();

  GradCheckResult total;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (!leaves[k].requires_grad()) continue;
    const Eigen::VectorXd x = leaves[k].vector();
    const Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(leaves[k].grad().data(), Eigen::Index(leaves[k].size()));
    auto f = [&](const Eigen::VectorXd& probe) {
      std::vector<Tensor> perturbed;
      for (std::size_t j = 0; j < leaves.size(); ++j) {
        std::vector<double> v(leaves[j].values().begin(), leaves[j].values().end());
        if (j == k) v.assign(probe.data(), probe.data() + probe.size());
        perturbed.push_back(Tensor::constant(leaves[j].shape(), std::move(v)));
      }
      return build(perturbed).item();
    };
    const GradCheckResult r = grad_check(f, x, analytic, step, kink_tolerance);
    total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
    total.checked += r.checked;
    total.skipped += r.skipped;
  }
  return total;
}

}  // namespace depthint::ad
