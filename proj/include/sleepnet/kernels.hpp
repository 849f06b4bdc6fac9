#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sleepnet::kernels {

// c[m,n] (+)= a[m,k] * b[k,n]. i-k-j order keeps the inner loop contiguous.
template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{});
    const T* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      if (aik == T{}) continue;
      const T* bk = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc{};
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] += acc;
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* ak = a + kk * m;
    const T* bk = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aki = ak[i];
      if (aki == T{}) continue;
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

inline std::size_t conv_out_dim(std::size_t in, std::size_t stride) {
  return (in + 2 - 3) / stride + 1;  // 3x3 kernel, padding 1
}

// Expand one image [ch,h,w] into columns [ch*9, oh*ow] for a 3x3 kernel,
// padding 1 and the given stride.
template <typename T>
void im2col3x3(const T* img, std::size_t ch, std::size_t h, std::size_t w, std::size_t stride,
               T* cols) {
  const std::size_t oh = conv_out_dim(h, stride);
  const std::size_t ow = conv_out_dim(w, stride);
  const std::size_t area = oh * ow;
  for (std::size_t c = 0; c < ch; ++c) {
    const T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + ky) * 3 + kx) * area;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            T v{};
            if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                ix < static_cast<std::ptrdiff_t>(w)) {
              v = plane[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)];
            }
            row[oy * ow + ox] = v;
          }
        }
      }
    }
  }
}

// Scatter-add columns back onto an image; adjoint of im2col3x3.
template <typename T>
void col2im3x3(const T* cols, std::size_t ch, std::size_t h, std::size_t w, std::size_t stride,
               T* img) {
  const std::size_t oh = conv_out_dim(h, stride);
  const std::size_t ow = conv_out_dim(w, stride);
  const std::size_t area = oh * ow;
  for (std::size_t c = 0; c < ch; ++c) {
    T* plane = img + c * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + ky) * 3 + kx) * area;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            plane[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)] +=
                row[oy * ow + ox];
          }
        }
      }
    }
  }
}

template <typename T>
void relu_inplace(std::span<T> x) {
  for (auto& v : x) {
    if (v < T{}) v = T{};
  }
}

// Row-wise softmax over active (masked-in) columns; masked-out columns get 0.
// mask may be empty, meaning all columns are active.
template <typename T>
void masked_softmax_rows(const T* logits, std::size_t rows, std::size_t cols,
                         std::span<const std::uint8_t> mask, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits + r * cols;
    T* o = out + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.empty() || mask[c]) mx = std::max(mx, in[c]);
    }
    T denom{};
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.empty() || mask[c]) {
        o[c] = std::exp(in[c] - mx);
        denom += o[c];
      } else {
        o[c] = T{};
      }
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= denom;
  }
}

// Index of the largest active logit in one row.
template <typename T>
std::size_t masked_argmax(const T* row, std::size_t cols, std::span<const std::uint8_t> mask) {
  std::size_t best = 0;
  T best_v = -std::numeric_limits<T>::infinity();
  for (std::size_t c = 0; c < cols; ++c) {
    if (!mask.empty() && !mask[c]) continue;
    if (row[c] > best_v) {
      best_v = row[c];
      best = c;
    }
  }
  return best;
}

}  // namespace sleepnet::kernels
