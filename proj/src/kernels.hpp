#pragma once

// Internal dense kernels shared by the autodiff ops. Row-major throughout.

#include <Eigen/Core>
#include <cstddef>

namespace ghn::kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

/// C[m,n] (+)= op(A) * op(B) where op(A) is [m,k] and op(B) is [k,n].
template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  MutMap<T> C(c, M, N);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, M, K) * ConstMap<T>(b, K, N);
  } else if (trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, K, M).transpose() * ConstMap<T>(b, K, N);
  } else if (!trans_a && trans_b) {
    C.noalias() += ConstMap<T>(a, M, K) * ConstMap<T>(b, N, K).transpose();
  } else {
    C.noalias() += ConstMap<T>(a, K, M).transpose() * ConstMap<T>(b, N, K).transpose();
  }
}

struct ConvGeometry {
  std::size_t n, h, w, c_in;
  std::size_t kh, kw, c_out;
  std::size_t stride;
  std::size_t oh, ow;
  std::size_t pad_top, pad_left;

  std::size_t rows() const { return n * oh * ow; }
  std::size_t patch() const { return kh * kw * c_in; }
};

/// cols[(b, oy, ox), (ky, kx, c)] = x[b, oy*s + ky - pad_top, ox*s + kx - pad_left, c],
/// zero outside the image.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            T* dst = row + (ky * g.kw + kx) * g.c_in;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                ix >= static_cast<std::ptrdiff_t>(g.w)) {
              for (std::size_t c = 0; c < g.c_in; ++c) dst[c] = T(0);
            } else {
              const T* src = x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w +
                                  static_cast<std::size_t>(ix)) * g.c_in;
              for (std::size_t c = 0; c < g.c_in; ++c) dst[c] = src[c];
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds patch rows back into dx.
template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const T* src = row + (ky * g.kw + kx) * g.c_in;
            T* dst = dx + ((b * g.h + static_cast<std::size_t>(iy)) * g.w +
                           static_cast<std::size_t>(ix)) * g.c_in;
            for (std::size_t c = 0; c < g.c_in; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace ghn::kernels
