#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sleepnet/graph.hpp"
#include "sleepnet/kernels.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

template <typename T>
struct ParamView {
  std::string name;
  Tensor<T>* tensor;
  bool trainable;
  bool weight_matrix;  // downscaling applies to these; biases are excluded
};

namespace detail {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * bound);
  return t;
}

// y[rows,out] = x[rows,in] @ w[in,out] + b
template <typename T>
Tensor<T> dense_eval(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t rows = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in) {
    throw ShapeError("dense: input width " + std::to_string(in) + " vs weight " +
                     shape_str(w.shape()));
  }
  Tensor<T> y({rows, out});
  kernels::gemm(rows, in, out, x.data(), w.data(), y.data(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = y.data() + r * out;
    for (std::size_t c = 0; c < out; ++c) yr[c] += b[c];
  }
  return y;
}

}  // namespace detail

template <typename T>
struct Dense {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out]

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng)
      : w(detail::kaiming_uniform<T>({in, out}, in, rng)), b(Tensor<T>::zeros({out})) {}
  Dense(std::size_t in, std::size_t out)
      : w(Tensor<T>::zeros({in, out})), b(Tensor<T>::zeros({out})) {}
};

struct ModelDims {
  std::size_t feature_len = 1024;
  std::size_t hidden = 2000;
  std::size_t latent = 100;
  std::size_t num_classes = 100;
};

// Encoder (two ReLU layers) -> Gaussian latent heads -> mirrored decoder,
// plus a softmax classifier fed by the final encoder layer. Classifier
// outputs are allocated for all classes up front; logits of classes not yet
// seen are masked out of the softmax.
template <typename T>
class SleepModel {
 public:
  using Var = typename Graph<T>::Var;

  SleepModel() = default;

  SleepModel(ModelDims dims, Rng& rng)
      : dims_(dims),
        enc1_(dims.feature_len, dims.hidden, rng),
        enc2_(dims.hidden, dims.hidden, rng),
        mu_head_(dims.hidden, dims.latent, rng),
        log_var_head_(dims.hidden, dims.latent, rng),
        dec1_(dims.latent, dims.hidden, rng),
        dec2_(dims.hidden, dims.hidden, rng),
        dec_out_(dims.hidden, dims.feature_len, rng),
        classifier_(dims.hidden, dims.num_classes, rng) {}

  // Zero-initialized; used when loading parameters from a file.
  explicit SleepModel(ModelDims dims)
      : dims_(dims),
        enc1_(dims.feature_len, dims.hidden),
        enc2_(dims.hidden, dims.hidden),
        mu_head_(dims.hidden, dims.latent),
        log_var_head_(dims.hidden, dims.latent),
        dec1_(dims.latent, dims.hidden),
        dec2_(dims.hidden, dims.hidden),
        dec_out_(dims.hidden, dims.feature_len),
        classifier_(dims.hidden, dims.num_classes) {}

  const ModelDims& dims() const { return dims_; }

  struct Bound {
    Var enc1w, enc1b, enc2w, enc2b, muw, mub, lvw, lvb;
    Var dec1w, dec1b, dec2w, dec2b, outw, outb, clsw, clsb;
  };

  struct Encoded {
    Var penultimate, mu, log_var;
  };

  Bound bind(Graph<T>& g) const {
    Bound b;
    b.enc1w = g.leaf(enc1_.w, true);
    b.enc1b = g.leaf(enc1_.b, true);
    b.enc2w = g.leaf(enc2_.w, true);
    b.enc2b = g.leaf(enc2_.b, true);
    b.muw = g.leaf(mu_head_.w, true);
    b.mub = g.leaf(mu_head_.b, true);
    b.lvw = g.leaf(log_var_head_.w, true);
    b.lvb = g.leaf(log_var_head_.b, true);
    b.dec1w = g.leaf(dec1_.w, true);
    b.dec1b = g.leaf(dec1_.b, true);
    b.dec2w = g.leaf(dec2_.w, true);
    b.dec2b = g.leaf(dec2_.b, true);
    b.outw = g.leaf(dec_out_.w, true);
    b.outb = g.leaf(dec_out_.b, true);
    b.clsw = g.leaf(classifier_.w, true);
    b.clsb = g.leaf(classifier_.b, true);
    return b;
  }

  Encoded encode(Graph<T>& g, const Bound& b, Var h) const {
    check_width(g.value(h), dims_.feature_len, "encode");
    Var a1 = g.relu(g.add_rowwise(g.matmul(h, b.enc1w), b.enc1b));
    Var pen = g.relu(g.add_rowwise(g.matmul(a1, b.enc2w), b.enc2b));
    Var mu = g.add_rowwise(g.matmul(pen, b.muw), b.mub);
    Var lv = g.add_rowwise(g.matmul(pen, b.lvw), b.lvb);
    return {pen, mu, lv};
  }

  Var decode(Graph<T>& g, const Bound& b, Var z) const {
    check_width(g.value(z), dims_.latent, "decode");
    Var a1 = g.relu(g.add_rowwise(g.matmul(z, b.dec1w), b.dec1b));
    Var a2 = g.relu(g.add_rowwise(g.matmul(a1, b.dec2w), b.dec2b));
    return g.add_rowwise(g.matmul(a2, b.outw), b.outb);
  }

  Var classifier_logits(Graph<T>& g, const Bound& b, Var penultimate) const {
    check_width(g.value(penultimate), dims_.hidden, "classify");
    return g.add_rowwise(g.matmul(penultimate, b.clsw), b.clsb);
  }

  // ---- tape-free forward passes -------------------------------------------

  struct EncodedEval {
    Tensor<T> penultimate, mu, log_var;
  };

  // Encoder trunk only; enough for classification.
  Tensor<T> penultimate_eval(const Tensor<T>& h) const {
    check_width(h, dims_.feature_len, "encode");
    Tensor<T> a1 = detail::dense_eval(h, enc1_.w, enc1_.b);
    kernels::relu_inplace(a1.values());
    Tensor<T> pen = detail::dense_eval(a1, enc2_.w, enc2_.b);
    kernels::relu_inplace(pen.values());
    return pen;
  }

  EncodedEval encode_eval(const Tensor<T>& h) const {
    check_width(h, dims_.feature_len, "encode");
    Tensor<T> a1 = detail::dense_eval(h, enc1_.w, enc1_.b);
    kernels::relu_inplace(a1.values());
    Tensor<T> pen = detail::dense_eval(a1, enc2_.w, enc2_.b);
    kernels::relu_inplace(pen.values());
    Tensor<T> mu = detail::dense_eval(pen, mu_head_.w, mu_head_.b);
    Tensor<T> lv = detail::dense_eval(pen, log_var_head_.w, log_var_head_.b);
    return {std::move(pen), std::move(mu), std::move(lv)};
  }

  Tensor<T> decode_eval(const Tensor<T>& z) const {
    check_width(z, dims_.latent, "decode");
    Tensor<T> a1 = detail::dense_eval(z, dec1_.w, dec1_.b);
    kernels::relu_inplace(a1.values());
    Tensor<T> a2 = detail::dense_eval(a1, dec2_.w, dec2_.b);
    kernels::relu_inplace(a2.values());
    return detail::dense_eval(a2, dec_out_.w, dec_out_.b);
  }

  Tensor<T> classify_logits_eval(const Tensor<T>& penultimate) const {
    check_width(penultimate, dims_.hidden, "classify");
    return detail::dense_eval(penultimate, classifier_.w, classifier_.b);
  }

  // Masked softmax probabilities; unseen classes get exactly zero mass.
  Tensor<T> classify(const Tensor<T>& penultimate, std::span<const std::uint8_t> mask) const {
    Tensor<T> logits = classify_logits_eval(penultimate);
    Tensor<T> probs(logits.shape());
    kernels::masked_softmax_rows(logits.data(), logits.dim(0), logits.dim(1), mask, probs.data());
    return probs;
  }

  std::vector<ParamView<T>> params() {
    return {
        {"enc1.w", &enc1_.w, true, true},
        {"enc1.b", &enc1_.b, true, false},
        {"enc2.w", &enc2_.w, true, true},
        {"enc2.b", &enc2_.b, true, false},
        {"mu.w", &mu_head_.w, true, true},
        {"mu.b", &mu_head_.b, true, false},
        {"log_var.w", &log_var_head_.w, true, true},
        {"log_var.b", &log_var_head_.b, true, false},
        {"dec1.w", &dec1_.w, true, true},
        {"dec1.b", &dec1_.b, true, false},
        {"dec2.w", &dec2_.w, true, true},
        {"dec2.b", &dec2_.b, true, false},
        {"dec_out.w", &dec_out_.w, true, true},
        {"dec_out.b", &dec_out_.b, true, false},
        {"classifier.w", &classifier_.w, true, true},
        {"classifier.b", &classifier_.b, true, false},
    };
  }

  // Vars in bind() follow params() order.
  static std::array<Var Bound::*, 16> bound_members() {
    return {&Bound::enc1w, &Bound::enc1b, &Bound::enc2w, &Bound::enc2b,
            &Bound::muw,   &Bound::mub,   &Bound::lvw,   &Bound::lvb,
            &Bound::dec1w, &Bound::dec1b, &Bound::dec2w, &Bound::dec2b,
            &Bound::outw,  &Bound::outb,  &Bound::clsw,  &Bound::clsb};
  }

 private:
  static void check_width(const Tensor<T>& t, std::size_t expected, const char* op) {
    if (t.rank() != 2 || t.dim(1) != expected) {
      throw ShapeError(std::string(op) + ": expected [batch x " + std::to_string(expected) +
                       "], got " + shape_str(t.shape()));
    }
  }

  ModelDims dims_;
  Dense<T> enc1_, enc2_, mu_head_, log_var_head_;
  Dense<T> dec1_, dec2_, dec_out_, classifier_;
};

// Frozen convolutional front end (or an identity flatten at desk scale).
// Conv layers use 3x3 kernels with padding 1; the first layer has stride 1,
// all later layers stride 2.
template <typename T>
class ConvFeatureExtractor {
 public:
  using Var = typename Graph<T>::Var;

  ConvFeatureExtractor() = default;

  static ConvFeatureExtractor identity(std::size_t channels, std::size_t height,
                                       std::size_t width) {
    ConvFeatureExtractor fe;
    fe.in_channels_ = channels;
    fe.height_ = height;
    fe.width_ = width;
    fe.frozen_ = true;
    fe.feature_len_ = channels * height * width;
    return fe;
  }

  ConvFeatureExtractor(std::size_t in_channels, std::size_t image_size,
                       std::vector<std::size_t> channels, Rng* rng)
      : in_channels_(in_channels), height_(image_size), width_(image_size) {
    std::size_t cin = in_channels;
    std::size_t spatial = image_size;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t stride = i == 0 ? 1 : 2;
      Layer layer;
      layer.stride = stride;
      layer.kernel = rng ? detail::kaiming_uniform<T>({channels[i], cin, 3, 3}, cin * 9, *rng)
                         : Tensor<T>::zeros({channels[i], cin, 3, 3});
      layer.bias = Tensor<T>::zeros({channels[i]});
      layers_.push_back(std::move(layer));
      spatial = kernels::conv_out_dim(spatial, stride);
      cin = channels[i];
    }
    feature_len_ = cin * spatial * spatial;
  }

  bool is_identity() const { return layers_.empty(); }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::size_t feature_len() const { return feature_len_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t image_height() const { return height_; }
  std::size_t image_width() const { return width_; }
  std::size_t layer_count() const { return layers_.size(); }

  // images [batch, channels, H, W] -> features [batch, feature_len]
  Tensor<T> extract(const Tensor<T>& images) const {
    if (!frozen_) throw Error("extract_features: extractor has not been frozen");
    check_images(images);
    if (is_identity()) {
      return Tensor<T>({images.dim(0), feature_len_},
                       {images.values().begin(), images.values().end()});
    }
    Tensor<T> x = images;
    for (const Layer& layer : layers_) {
      x = conv_eval(x, layer);
      kernels::relu_inplace(x.values());
    }
    return Tensor<T>({x.dim(0), feature_len_}, {x.values().begin(), x.values().end()});
  }

  // Pretraining path: records the conv stack on a tape.
  std::vector<Var> bind(Graph<T>& g) const {
    std::vector<Var> vars;
    for (const Layer& layer : layers_) {
      vars.push_back(g.leaf(layer.kernel, true));
      vars.push_back(g.leaf(layer.bias, true));
    }
    return vars;
  }

  Var forward(Graph<T>& g, const std::vector<Var>& bound, Var images) const {
    check_images(g.value(images));
    Var x = images;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = g.conv2d(x, bound[2 * i], layers_[i].stride);
      x = g.relu(bias_rows(g, x, bound[2 * i + 1]));
    }
    return x;
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = "conv" + std::to_string(i + 1);
      out.push_back({base + ".w", &layers_[i].kernel, !frozen_, true});
      out.push_back({base + ".b", &layers_[i].bias, !frozen_, false});
    }
    return out;
  }

  std::vector<std::size_t> channel_progression() const {
    std::vector<std::size_t> out;
    for (const Layer& layer : layers_) out.push_back(layer.kernel.dim(0));
    return out;
  }

 private:
  struct Layer {
    Tensor<T> kernel;  // [cout, cin, 3, 3]
    Tensor<T> bias;    // [cout]
    std::size_t stride = 1;
  };

  void check_images(const Tensor<T>& images) const {
    if (images.rank() != 4 || images.dim(1) != in_channels_ || images.dim(2) != height_ ||
        images.dim(3) != width_) {
      throw ShapeError("extract_features: expected [batch x " + std::to_string(in_channels_) +
                       " x " + std::to_string(height_) + " x " + std::to_string(width_) +
                       "] images, got " + shape_str(images.shape()));
    }
  }

  static Tensor<T> conv_eval(const Tensor<T>& x, const Layer& layer) {
    const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = layer.kernel.dim(0);
    const std::size_t oh = kernels::conv_out_dim(h, layer.stride);
    const std::size_t ow = kernels::conv_out_dim(w, layer.stride);
    const std::size_t area = oh * ow, patch = cin * 9;
    Tensor<T> y({batch, cout, oh, ow});
    std::vector<T> cols(patch * area);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      kernels::im2col3x3(x.data() + bi * cin * h * w, cin, h, w, layer.stride, cols.data());
      T* yb = y.data() + bi * cout * area;
      kernels::gemm(cout, patch, area, layer.kernel.data(), cols.data(), yb, false);
      for (std::size_t c = 0; c < cout; ++c) {
        const T b = layer.bias[c];
        for (std::size_t j = 0; j < area; ++j) yb[c * area + j] += b;
      }
    }
    return y;
  }

  // Add a per-channel bias to a [batch, ch, h, w] activation on the tape.
  static Var bias_rows(Graph<T>& g, Var x, Var bias) {
    return g.add(x, g.broadcast_channel(bias, g.value(x).shape()));
  }

  std::size_t in_channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t feature_len_ = 0;
  bool frozen_ = false;
  std::vector<Layer> layers_;
};

}  // namespace sleepnet
