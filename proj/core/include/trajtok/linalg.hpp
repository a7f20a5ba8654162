#pragma once

#include <cstddef>

#include "trajtok/parallel.hpp"

namespace trajtok {

// Row-major helpers shared by the projection layers and the attention
// network. Weights are stored out_dim x in_dim; y_row = W * x_row (+ bias).

template <typename T>
void affine_rows(const T* x, std::size_t rows, std::size_t in_dim, const T* w, const T* bias,
                 std::size_t out_dim, T* y, int threads = 1) {
  parallel_for(rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const T* xr = x + r * in_dim;
      T* yr = y + r * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        T acc = bias ? bias[o] : T(0);
        const T* wo = w + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) acc += wo[i] * xr[i];
        yr[o] = acc;
      }
    }
  });
}

// dX = dY * W
template <typename T>
void matmul_grad_input(const T* dy, std::size_t rows, std::size_t out_dim, const T* w,
                       std::size_t in_dim, T* dx, int threads = 1) {
  parallel_for(rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const T* dyr = dy + r * out_dim;
      T* dxr = dx + r * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) dxr[i] = T(0);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const T g = dyr[o];
        if (g == T(0)) continue;
        const T* wo = w + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) dxr[i] += g * wo[i];
      }
    }
  });
}

// dW += dY^T * X, db += sum(dY). Serial so accumulation order is fixed.
template <typename T>
void matmul_grad_params(const T* dy, const T* x, std::size_t rows, std::size_t out_dim,
                        std::size_t in_dim, T* dw, T* db) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = dy + r * out_dim;
    const T* xr = x + r * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T g = dyr[o];
      if (db) db[o] += g;
      if (g == T(0)) continue;
      T* dwo = dw + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) dwo[i] += g * xr[i];
    }
  }
}

}  // namespace trajtok
