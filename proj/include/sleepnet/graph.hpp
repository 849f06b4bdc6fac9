#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sleepnet/kernels.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

// Reverse-mode tape. Built fresh for every forward pass; backward() may run
// once per tape. Ops record a closure that scatters the output gradient onto
// the input gradients.
template <typename T>
class Graph {
 public:
  struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor<T> value, bool trainable) {
    return push(std::move(value), trainable, trainable, nullptr);
  }

  Var constant(Tensor<T> value) { return push(std::move(value), false, false, nullptr); }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }

  T scalar(Var v) const {
    const Tensor<T>& t = nodes_[v.id].value;
    if (t.numel() != 1) throw ShapeError("scalar: tensor has shape " + shape_str(t.shape()));
    return t[0];
  }

  // Gradient of a variable after backward(). Untouched (unreachable)
  // gradients read as zeros.
  std::span<const T> grad(Var v) {
    if (!backward_done_) throw Error("grad: backward has not run on this graph");
    Node& n = nodes_[v.id];
    if (!n.requires_grad) throw Error("grad: variable does not require gradients");
    if (n.grad.empty()) n.grad.assign(n.value.numel(), T{});
    return n.grad;
  }

  void backward(Var loss) {
    if (backward_done_) throw Error("backward: graph already consumed");
    Node& last = nodes_[loss.id];
    if (last.value.numel() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(last.value.shape()));
    }
    last.grad.assign(1, T{1});
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backprop) continue;
      if (n.grad.empty()) continue;  // nothing flowed here
      n.backprop(*this);
    }
    backward_done_ = true;
  }

  bool consumed() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  // ---- primitives ---------------------------------------------------------

  Var matmul(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
      throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    kernels::gemm(m, k, n, a.data(), b.data(), out.data(), false);
    return binary(std::move(out), av, bv, [m, k, n](Graph& g, Node& node, Var x, Var y) {
      const T* gout = node.grad.data();
      if (g.wants(x)) kernels::gemm_nt(m, n, k, gout, g.value(y).data(), g.grad_buf(x));
      if (g.wants(y)) kernels::gemm_tn(k, m, n, g.value(x).data(), gout, g.grad_buf(y));
    });
  }

  // 3x3 kernels, padding 1, stride 1 or 2.
  Var conv2d(Var inv, Var kv, std::size_t stride) {
    const Tensor<T>& in = value(inv);
    const Tensor<T>& kr = value(kv);
    if (in.rank() != 4 || kr.rank() != 4) {
      throw ShapeError("conv2d: need 4-d input and kernel, got " + shape_str(in.shape()) +
                       " and " + shape_str(kr.shape()));
    }
    if (kr.dim(2) != 3 || kr.dim(3) != 3) {
      throw ShapeError("conv2d: kernel spatial size must be 3x3, got " + shape_str(kr.shape()));
    }
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    if (in.dim(1) != kr.dim(1)) {
      throw ShapeError("conv2d: channel mismatch, input " + shape_str(in.shape()) + " kernel " +
                       shape_str(kr.shape()));
    }
    const std::size_t batch = in.dim(0), cin = in.dim(1), h = in.dim(2), w = in.dim(3);
    const std::size_t cout = kr.dim(0);
    const std::size_t oh = kernels::conv_out_dim(h, stride), ow = kernels::conv_out_dim(w, stride);
    const std::size_t area = oh * ow, patch = cin * 9;
    Tensor<T> out({batch, cout, oh, ow});
    std::vector<T> cols(patch * area);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      kernels::im2col3x3(in.data() + bi * cin * h * w, cin, h, w, stride, cols.data());
      kernels::gemm(cout, patch, area, kr.data(), cols.data(), out.data() + bi * cout * area,
                    false);
    }
    return binary(std::move(out), inv, kv,
                  [batch, cin, h, w, cout, area, patch, stride](Graph& g, Node& node, Var x, Var y) {
                    const Tensor<T>& in = g.value(x);
                    const Tensor<T>& kr = g.value(y);
                    std::vector<T> cols(patch * area);
                    std::vector<T> dcols(patch * area);
                    for (std::size_t bi = 0; bi < batch; ++bi) {
                      kernels::im2col3x3(in.data() + bi * cin * h * w, cin, h, w, stride,
                                         cols.data());
                      const T* gb = node.grad.data() + bi * cout * area;
                      if (g.wants(y)) kernels::gemm_nt(cout, area, patch, gb, cols.data(), g.grad_buf(y));
                      if (g.wants(x)) {
                        std::fill(dcols.begin(), dcols.end(), T{});
                        kernels::gemm_tn(patch, cout, area, kr.data(), gb, dcols.data());
                        kernels::col2im3x3(dcols.data(), cin, h, w, stride,
                                           g.grad_buf(x) + bi * cin * h * w);
                      }
                    }
                  });
  }

  Var relu(Var xv) {
    Tensor<T> out = value(xv);
    kernels::relu_inplace(out.values());
    return unary(std::move(out), xv, [](Graph& g, Node& node, Var x) {
      const Tensor<T>& in = g.value(x);
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < in.numel(); ++i) {
        if (in[i] > T{}) dx[i] += node.grad[i];
      }
    });
  }

  Var add(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    require_same_shape(a, b, "add");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return binary(std::move(out), av, bv, [](Graph& g, Node& node, Var x, Var y) {
      for (Var v : {x, y}) {
        if (!g.wants(v)) continue;
        T* d = g.grad_buf(v);
        for (std::size_t i = 0; i < node.grad.size(); ++i) d[i] += node.grad[i];
      }
    });
  }

  // x[rows, cols] + bias[cols], broadcast over rows.
  Var add_rowwise(Var xv, Var bv) {
    const Tensor<T>& x = value(xv);
    const Tensor<T>& b = value(bv);
    if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
      throw ShapeError("add_rowwise: shapes " + shape_str(x.shape()) + " and " +
                       shape_str(b.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor<T> out = x;
    for (std::size_t r = 0; r < rows; ++r) {
      T* o = out.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) o[c] += b[c];
    }
    return binary(std::move(out), xv, bv, [rows, cols](Graph& g, Node& node, Var x, Var y) {
      if (g.wants(x)) {
        T* dx = g.grad_buf(x);
        for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += node.grad[i];
      }
      if (g.wants(y)) {
        T* db = g.grad_buf(y);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = node.grad.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) db[c] += gr[c];
        }
      }
    });
  }

  Var mul(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    require_same_shape(a, b, "mul");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return binary(std::move(out), av, bv, [](Graph& g, Node& node, Var x, Var y) {
      const Tensor<T>& a = g.value(x);
      const Tensor<T>& b = g.value(y);
      if (g.wants(x)) {
        T* dx = g.grad_buf(x);
        for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += node.grad[i] * b[i];
      }
      if (g.wants(y)) {
        T* dy = g.grad_buf(y);
        for (std::size_t i = 0; i < node.grad.size(); ++i) dy[i] += node.grad[i] * a[i];
      }
    });
  }

  Var scale(Var xv, T factor) {
    Tensor<T> out = value(xv);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
    return unary(std::move(out), xv, [factor](Graph& g, Node& node, Var x) {
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += factor * node.grad[i];
    });
  }

  Var exp(Var xv) {
    Tensor<T> out = value(xv);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return unary(std::move(out), xv, [](Graph& g, Node& node, Var x) {
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += node.grad[i] * node.value[i];
    });
  }

  Var log(Var xv) {
    const Tensor<T>& in = value(xv);
    Tensor<T> out = in;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      if (!(out[i] > T{})) {
        throw NumericError("log: non-positive value " + format_number(out[i]) + " at index " +
                           std::to_string(i));
      }
      out[i] = std::log(out[i]);
    }
    return unary(std::move(out), xv, [](Graph& g, Node& node, Var x) {
      const Tensor<T>& in = g.value(x);
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += node.grad[i] / in[i];
    });
  }

  Var sum(Var xv) {
    const Tensor<T>& in = value(xv);
    T acc{};
    for (std::size_t i = 0; i < in.numel(); ++i) acc += in[i];
    return unary(Tensor<T>::scalar(acc), xv, [](Graph& g, Node& node, Var x) {
      const T gz = node.grad[0];
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < g.value(x).numel(); ++i) dx[i] += gz;
    });
  }

  Var mean(Var xv) {
    const Tensor<T>& in = value(xv);
    const std::size_t n = in.numel();
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += in[i];
    acc /= static_cast<T>(n);
    return unary(Tensor<T>::scalar(acc), xv, [n](Graph& g, Node& node, Var x) {
      const T gz = node.grad[0] / static_cast<T>(n);
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < n; ++i) dx[i] += gz;
    });
  }

  // Softmax over the class axis (last axis of a 1-d or 2-d tensor).
  Var softmax(Var xv) {
    auto [rows, cols] = row_view(value(xv), "softmax");
    Tensor<T> out(value(xv).shape());
    kernels::masked_softmax_rows(value(xv).data(), rows, cols, {}, out.data());
    return unary(std::move(out), xv, [rows, cols](Graph& g, Node& node, Var x) {
      T* dx = g.grad_buf(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* s = node.value.data() + r * cols;
        const T* go = node.grad.data() + r * cols;
        T dot{};
        for (std::size_t c = 0; c < cols; ++c) dot += go[c] * s[c];
        for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += s[c] * (go[c] - dot);
      }
    });
  }

  Var log_softmax(Var xv) {
    auto [rows, cols] = row_view(value(xv), "log_softmax");
    const Tensor<T>& in = value(xv);
    Tensor<T> out(in.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* l = in.data() + r * cols;
      T* o = out.data() + r * cols;
      T mx = l[0];
      for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, l[c]);
      T denom{};
      for (std::size_t c = 0; c < cols; ++c) denom += std::exp(l[c] - mx);
      const T lse = mx + std::log(denom);
      for (std::size_t c = 0; c < cols; ++c) o[c] = l[c] - lse;
    }
    return unary(std::move(out), xv, [rows, cols](Graph& g, Node& node, Var x) {
      T* dx = g.grad_buf(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* o = node.value.data() + r * cols;
        const T* go = node.grad.data() + r * cols;
        T gsum{};
        for (std::size_t c = 0; c < cols; ++c) gsum += go[c];
        for (std::size_t c = 0; c < cols; ++c) {
          dx[r * cols + c] += go[c] - std::exp(o[c]) * gsum;
        }
      }
    });
  }

  // Reparameterized draw: mu + exp(0.5*log_var) * noise. The noise tensor is
  // supplied by the caller and stays outside the graph.
  Var gaussian_sample(Var muv, Var lvv, const Tensor<T>& noise) {
    const Tensor<T>& mu = value(muv);
    const Tensor<T>& lv = value(lvv);
    require_same_shape(mu, lv, "gaussian_sample");
    require_same_shape(mu, noise, "gaussian_sample(noise)");
    Tensor<T> out(mu.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
      out[i] = mu[i] + std::exp(static_cast<T>(0.5) * lv[i]) * noise[i];
    }
    Tensor<T> noise_copy = noise;
    return binary(std::move(out), muv, lvv,
                  [noise = std::move(noise_copy)](Graph& g, Node& node, Var x, Var y) {
                    if (g.wants(x)) {
                      T* dmu = g.grad_buf(x);
                      for (std::size_t i = 0; i < node.grad.size(); ++i) dmu[i] += node.grad[i];
                    }
                    if (g.wants(y)) {
                      const Tensor<T>& lv = g.value(y);
                      T* dlv = g.grad_buf(y);
                      for (std::size_t i = 0; i < node.grad.size(); ++i) {
                        dlv[i] += node.grad[i] * static_cast<T>(0.5) *
                                  std::exp(static_cast<T>(0.5) * lv[i]) * noise[i];
                      }
                    }
                  });
  }

  // Mean masked cross-entropy against hard labels. Labels must hit active
  // (mask != 0) classes; the column mask may be empty (all active).
  Var cross_entropy(Var logitsv, std::vector<int> labels, std::vector<std::uint8_t> mask) {
    auto [rows, cols] = row_view(value(logitsv), "cross_entropy");
    if (labels.size() != rows) {
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(rows) + " rows");
    }
    check_mask(mask, cols, "cross_entropy");
    const Tensor<T>& l = value(logitsv);
    std::vector<T> probs(rows * cols);
    kernels::masked_softmax_rows(l.data(), rows, cols, mask, probs.data());
    T loss{};
    for (std::size_t r = 0; r < rows; ++r) {
      const int y = labels[r];
      if (y < 0 || static_cast<std::size_t>(y) >= cols || (!mask.empty() && !mask[static_cast<std::size_t>(y)])) {
        throw Error("cross_entropy: label " + std::to_string(y) + " outside active classes");
      }
      loss -= std::log(std::max(probs[r * cols + static_cast<std::size_t>(y)],
                                std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(rows);
    return unary(Tensor<T>::scalar(loss), logitsv,
                 [rows, cols, labels = std::move(labels), probs = std::move(probs),
                  mask = std::move(mask)](Graph& g, Node& node, Var x) {
                   const T gz = node.grad[0] / static_cast<T>(rows);
                   T* dx = g.grad_buf(x);
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t c = 0; c < cols; ++c) {
                       if (!mask.empty() && !mask[c]) continue;
                       T d = probs[r * cols + c];
                       if (c == static_cast<std::size_t>(labels[r])) d -= T{1};
                       dx[r * cols + c] += gz * d;
                     }
                   }
                 });
  }

  // Distillation: cross-entropy of temperature-softened student logits
  // against temperature-softened teacher distributions, scaled by T^2.
  // Teacher rows must be distributions whose support lies in the mask.
  Var distill_cross_entropy(Var logitsv, const Tensor<T>& teacher, std::vector<std::uint8_t> mask,
                            T temperature) {
    auto [rows, cols] = row_view(value(logitsv), "distill_cross_entropy");
    if (teacher.rank() != 2 || teacher.dim(0) != rows || teacher.dim(1) != cols) {
      throw ShapeError("distill_cross_entropy: teacher " + shape_str(teacher.shape()) +
                       " vs logits " + shape_str(value(logitsv).shape()));
    }
    check_mask(mask, cols, "distill_cross_entropy");
    if (!(temperature > T{})) throw NumericError("distill_cross_entropy: temperature must be > 0");

    // Soften teacher rows: q ~ p^(1/T) on the support of p.
    std::vector<T> q(rows * cols, T{});
    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = teacher.data() + r * cols;
      T* qr = q.data() + r * cols;
      T rowsum{};
      for (std::size_t c = 0; c < cols; ++c) {
        if (p[c] < T{}) throw NumericError("distill_cross_entropy: negative soft target");
        if (p[c] > T{} && !mask.empty() && !mask[c]) {
          throw Error("distill_cross_entropy: teacher mass on inactive class " + std::to_string(c));
        }
        rowsum += p[c];
      }
      if (std::abs(static_cast<double>(rowsum) - 1.0) > 1e-4) {
        throw NumericError("distill_cross_entropy: soft-target row " + std::to_string(r) +
                           " sums to " + format_number(static_cast<double>(rowsum)));
      }
      T qsum{};
      for (std::size_t c = 0; c < cols; ++c) {
        if (p[c] > T{}) {
          qr[c] = std::pow(p[c], T{1} / temperature);
          qsum += qr[c];
        }
      }
      for (std::size_t c = 0; c < cols; ++c) qr[c] /= qsum;
    }

    const Tensor<T>& l = value(logitsv);
    std::vector<T> scaled(rows * cols);
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = l[i] / temperature;
    std::vector<T> p_t(rows * cols);
    kernels::masked_softmax_rows(scaled.data(), rows, cols, mask, p_t.data());

    T loss{};
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const T qc = q[r * cols + c];
        if (qc > T{}) {
          loss -= qc * std::log(std::max(p_t[r * cols + c], std::numeric_limits<T>::min()));
        }
      }
    }
    loss *= temperature * temperature / static_cast<T>(rows);
    return unary(Tensor<T>::scalar(loss), logitsv,
                 [rows, cols, temperature, q = std::move(q), p_t = std::move(p_t),
                  mask = std::move(mask)](Graph& g, Node& node, Var x) {
                   const T gz = node.grad[0] * temperature / static_cast<T>(rows);
                   T* dx = g.grad_buf(x);
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t c = 0; c < cols; ++c) {
                       if (!mask.empty() && !mask[c]) continue;
                       dx[r * cols + c] += gz * (p_t[r * cols + c] - q[r * cols + c]);
                     }
                   }
                 });
  }

  // Same data, new shape; gradient passes through untouched.
  Var reshape(Var xv, Shape shape) {
    const Tensor<T>& in = value(xv);
    if (shape_numel(shape) != in.numel()) {
      throw ShapeError("reshape: " + shape_str(in.shape()) + " to " + shape_str(shape));
    }
    Tensor<T> out(std::move(shape), {in.values().begin(), in.values().end()});
    return unary(std::move(out), xv, [](Graph& g, Node& node, Var x) {
      T* dx = g.grad_buf(x);
      for (std::size_t i = 0; i < node.grad.size(); ++i) dx[i] += node.grad[i];
    });
  }

  // bias [ch] broadcast to [batch, ch, h, w].
  Var broadcast_channel(Var biasv, Shape target) {
    const Tensor<T>& b = value(biasv);
    if (b.rank() != 1 || target.size() != 4 || target[1] != b.dim(0)) {
      throw ShapeError("broadcast_channel: bias " + shape_str(b.shape()) + " to " +
                       shape_str(target));
    }
    const std::size_t batch = target[0], ch = target[1], area = target[2] * target[3];
    Tensor<T> out(std::move(target));
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t c = 0; c < ch; ++c) {
        T* plane = out.data() + (bi * ch + c) * area;
        std::fill(plane, plane + area, b[c]);
      }
    }
    return unary(std::move(out), biasv, [batch, ch, area](Graph& g, Node& node, Var x) {
      T* db = g.grad_buf(x);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t c = 0; c < ch; ++c) {
          const T* plane = node.grad.data() + (bi * ch + c) * area;
          T acc{};
          for (std::size_t j = 0; j < area; ++j) acc += plane[j];
          db[c] += acc;
        }
      }
    });
  }

  // Mean over rows of the squared-error row sums against a fixed target.
  Var squared_error(Var predv, const Tensor<T>& target) {
    const Tensor<T>& pred = value(predv);
    require_same_shape(pred, target, "squared_error");
    const std::size_t rows = pred.rank() == 2 ? pred.dim(0) : 1;
    T loss{};
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const T d = pred[i] - target[i];
      loss += d * d;
    }
    loss /= static_cast<T>(rows);
    Tensor<T> target_copy = target;
    return unary(Tensor<T>::scalar(loss), predv,
                 [rows, target = std::move(target_copy)](Graph& g, Node& node, Var x) {
                   const Tensor<T>& pred = g.value(x);
                   const T gz = node.grad[0] * T{2} / static_cast<T>(rows);
                   T* dx = g.grad_buf(x);
                   for (std::size_t i = 0; i < pred.numel(); ++i) {
                     dx[i] += gz * (pred[i] - target[i]);
                   }
                 });
  }

  // Mean over rows of 0.5 * sum(exp(log_var) + mu^2 - 1 - log_var):
  // divergence of N(mu, diag exp(log_var)) from the standard normal.
  Var gaussian_prior_divergence(Var muv, Var lvv) {
    const Tensor<T>& mu = value(muv);
    const Tensor<T>& lv = value(lvv);
    require_same_shape(mu, lv, "gaussian_prior_divergence");
    const std::size_t rows = mu.rank() == 2 ? mu.dim(0) : 1;
    T loss{};
    for (std::size_t i = 0; i < mu.numel(); ++i) {
      loss += static_cast<T>(0.5) * (std::exp(lv[i]) + mu[i] * mu[i] - T{1} - lv[i]);
    }
    loss /= static_cast<T>(rows);
    return binary(Tensor<T>::scalar(loss), muv, lvv, [rows](Graph& g, Node& node, Var x, Var y) {
      const T gz = node.grad[0] / static_cast<T>(rows);
      const Tensor<T>& mu = g.value(x);
      const Tensor<T>& lv = g.value(y);
      if (g.wants(x)) {
        T* dmu = g.grad_buf(x);
        for (std::size_t i = 0; i < mu.numel(); ++i) dmu[i] += gz * mu[i];
      }
      if (g.wants(y)) {
        T* dlv = g.grad_buf(y);
        for (std::size_t i = 0; i < lv.numel(); ++i) {
          dlv[i] += gz * static_cast<T>(0.5) * (std::exp(lv[i]) - T{1});
        }
      }
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool trainable = false;
    std::function<void(Graph&)> backprop;
  };

  static std::pair<std::size_t, std::size_t> row_view(const Tensor<T>& t, const char* op) {
    if (t.rank() == 1) return {1, t.dim(0)};
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    throw ShapeError(std::string(op) + ": expected 1-d or 2-d tensor, got " + shape_str(t.shape()));
  }

  static void check_mask(const std::vector<std::uint8_t>& mask, std::size_t cols, const char* op) {
    if (!mask.empty() && mask.size() != cols) {
      throw ShapeError(std::string(op) + ": mask size " + std::to_string(mask.size()) +
                       " vs " + std::to_string(cols) + " classes");
    }
  }

  bool wants(Var v) const { return nodes_[v.id].requires_grad; }

  T* grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.numel(), T{});
    return n.grad.data();
  }

  Var push(Tensor<T> value, bool needs_grad, bool trainable, std::function<void(Graph&)> fn) {
    nodes_.push_back(Node{std::move(value), {}, needs_grad, trainable, std::move(fn)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename Fn>
  Var unary(Tensor<T> out, Var x, Fn&& fn) {
    const bool req = nodes_[x.id].requires_grad;
    Var v = push(std::move(out), req, false, nullptr);
    if (req) {
      nodes_[v.id].backprop = [v, x, fn = std::forward<Fn>(fn)](Graph& g) mutable {
        fn(g, g.nodes_[v.id], x);
      };
    }
    return v;
  }

  template <typename Fn>
  Var binary(Tensor<T> out, Var x, Var y, Fn&& fn) {
    const bool req = nodes_[x.id].requires_grad || nodes_[y.id].requires_grad;
    Var v = push(std::move(out), req, false, nullptr);
    if (req) {
      nodes_[v.id].backprop = [v, x, y, fn = std::forward<Fn>(fn)](Graph& g) mutable {
        fn(g, g.nodes_[v.id], x, y);
      };
    }
    return v;
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace sleepnet
