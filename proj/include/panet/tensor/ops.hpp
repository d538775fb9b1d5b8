#pragma once

// Differentiable primitives. Every op reads its operands' values, computes
// the result eagerly, and records a backward rule on the operands' tape.
// Dense products go through Eigen maps over the tensors' row-major storage.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/tensor/tape.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

inline ConstMatrixMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatrixMap as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatrixMap as_matrix(std::span<double> s, std::size_t rows, std::size_t cols) {
  return MatrixMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatrixMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline std::size_t last_dim(const Extents& s) { return s.back(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record("add", Tensor(a.shape(), std::move(out)), {a, b},
                         [](std::span<const double> g, GradSlots in) {
                           for (std::size_t k = 0; k < 2; ++k)
                             if (!in[k].empty())
                               for (std::size_t i = 0; i < g.size(); ++i) in[k][i] += g[i];
                         });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record("sub", Tensor(a.shape(), std::move(out)), {a, b},
                         [](std::span<const double> g, GradSlots in) {
                           if (!in[0].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                           if (!in[1].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[1][i] -= g[i];
                         });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  const Tensor at = a.value();
  const Tensor bt = b.value();
  std::vector<double> out(at.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at[i] * bt[i];
  return a.tape().record("mul", Tensor(a.shape(), std::move(out)), {a, b},
                         [at, bt](std::span<const double> g, GradSlots in) {
                           if (!in[0].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * bt[i];
                           if (!in[1].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[1][i] += g[i] * at[i];
                         });
}

inline Var scale(const Var& a, double s) {
  const auto av = a.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return a.tape().record("scale", Tensor(a.shape(), std::move(out)), {a},
                         [s](std::span<const double> g, GradSlots in) {
                           for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * s;
                         });
}

// x[..., n] + b[n], broadcast over every leading index.
inline Var add_bias(const Var& x, const Var& b) {
  detail::require_rank(b, 1, "add_bias");
  const std::size_t n = detail::last_dim(x.shape());
  if (b.dim(0) != n)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  const auto xv = x.value().data();
  const auto bv = b.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  return x.tape().record("add_bias", Tensor(x.shape(), std::move(out)), {x, b},
                         [n](std::span<const double> g, GradSlots in) {
                           if (!in[0].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                           if (!in[1].empty())
                             for (std::size_t i = 0; i < g.size(); ++i) in[1][i % n] += g[i];
                         });
}

inline Var relu(const Var& x) {
  const Tensor xt = x.value();
  std::vector<double> out(xt.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xt[i] > 0.0 ? xt[i] : 0.0;
  return x.tape().record("relu", Tensor(x.shape(), std::move(out)), {x},
                         [xt](std::span<const double> g, GradSlots in) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (xt[i] > 0.0) in[0][i] += g[i];
                         });
}

// log(max(x, floor)); the gradient is zero where the clamp is active.
inline Var log_clamped(const Var& x, double floor = 1e-12) {
  const Tensor xt = x.value();
  std::vector<double> out(xt.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(xt[i], floor));
  return x.tape().record("log_clamped", Tensor(x.shape(), std::move(out)), {x},
                         [xt, floor](std::span<const double> g, GradSlots in) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (xt[i] > floor) in[0][i] += g[i] / xt[i];
                         });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x}, [](std::span<const double> g, GradSlots in) {
    for (double& d : in[0]) d += g[0];
  });
}

inline Var mean(const Var& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("mean", Tensor::scalar(s / n), {x},
                         [n](std::span<const double> g, GradSlots in) {
                           for (double& d : in[0]) d += g[0] / n;
                         });
}

// x[m, n] -> [n], mean over rows.
inline Var mean_rows(const Var& x) {
  detail::require_rank(x, 2, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto xv = x.value().data();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
  for (double& v : out) v /= static_cast<double>(m);
  return x.tape().record("mean_rows", Tensor({n}, std::move(out)), {x},
                         [m, n](std::span<const double> g, GradSlots in) {
                           const double inv = 1.0 / static_cast<double>(m);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t c = 0; c < n; ++c) in[0][r * n + c] += g[c] * inv;
                         });
}

/// Spatial mean. [H, W, C] -> [C]; a leading batch axis is kept:
/// [B, H, W, C] -> [B, C].
inline Var global_avg_pool(const Var& x) {
  const Extents& s = x.shape();
  if (s.size() != 3 && s.size() != 4)
    throw DimensionError("global_avg_pool: expected [H,W,C] or [B,H,W,C], got " + shape_str(s));
  const std::size_t batch = s.size() == 4 ? s[0] : 1;
  const std::size_t spatial = s.size() == 4 ? s[1] * s[2] : s[0] * s[1];
  const std::size_t c = s.back();
  const auto xv = x.value().data();
  std::vector<double> out(batch * c, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t k = 0; k < c; ++k) out[b * c + k] += xv[(b * spatial + p) * c + k];
  const double inv = 1.0 / static_cast<double>(spatial);
  for (double& v : out) v *= inv;
  Extents out_shape = s.size() == 4 ? Extents{batch, c} : Extents{c};
  return x.tape().record("global_avg_pool", Tensor(out_shape, std::move(out)), {x},
                         [batch, spatial, c, inv](std::span<const double> g, GradSlots in) {
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t p = 0; p < spatial; ++p)
                               for (std::size_t k = 0; k < c; ++k)
                                 in[0][(b * spatial + p) * c + k] += g[b * c + k] * inv;
                         });
}

// ---------------------------------------------------------------------------
// Extents manipulation

inline Var reshape(const Var& x, Extents shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [](std::span<const double> g, GradSlots in) {
    for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
  });
}

inline Var transpose(const Var& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  detail::as_matrix(out, n, m) = detail::as_matrix(x.value(), m, n).transpose();
  return x.tape().record("transpose", Tensor({n, m}, std::move(out)), {x},
                         [m, n](std::span<const double> g, GradSlots in) {
                           detail::as_matrix(in[0], m, n) += detail::as_matrix(g, n, m).transpose();
                         });
}

/// Concatenation along axis 0. Operands must agree on every trailing extent;
/// operand order is preserved.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no operands");
  Extents trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  sizes.reserve(parts.size());
  for (const Var& p : parts) {
    Extents t(p.shape().begin() + 1, p.shape().end());
    if (t != trailing)
      throw DimensionError("concat_rows: trailing extents " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    rows += p.dim(0);
    sizes.push_back(p.numel());
  }
  std::vector<double> out;
  out.reserve(rows * shape_numel(trailing.empty() ? Extents{1} : trailing));
  for (const Var& p : parts) out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  Extents shape{rows};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  return parts[0].tape().record("concat_rows", Tensor(shape, std::move(out)), parts,
                                [sizes](std::span<const double> g, GradSlots in) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < sizes.size(); ++k) {
                                    if (!in[k].empty())
                                      for (std::size_t i = 0; i < sizes[k]; ++i) in[k][i] += g[off + i];
                                    off += sizes[k];
                                  }
                                });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

// Rows [begin, begin + count) along axis 0.
inline Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.dim(0))
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  const std::size_t stride = x.numel() / x.dim(0);
  const auto xv = x.value().data();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
  Extents shape = x.shape();
  shape[0] = count;
  const std::size_t offset = begin * stride;
  return x.tape().record("slice_rows", Tensor(shape, std::move(out)), {x},
                         [offset](std::span<const double> g, GradSlots in) {
                           for (std::size_t i = 0; i < g.size(); ++i) in[0][offset + i] += g[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  const Tensor at = a.value();
  const Tensor bt = b.value();
  std::vector<double> out(m * n);
  detail::as_matrix(out, m, n).noalias() = detail::as_matrix(at, m, k) * detail::as_matrix(bt, k, n);
  return a.tape().record("matmul", Tensor({m, n}, std::move(out)), {a, b},
                         [at, bt, m, k, n](std::span<const double> g, GradSlots in) {
                           auto G = detail::as_matrix(g, m, n);
                           if (!in[0].empty())
                             detail::as_matrix(in[0], m, k).noalias() +=
                                 G * detail::as_matrix(bt, k, n).transpose();
                           if (!in[1].empty())
                             detail::as_matrix(in[1], k, n).noalias() +=
                                 detail::as_matrix(at, m, k).transpose() * G;
                         });
}

/// Softmax over the last axis, computed with the slice maximum subtracted.
inline Var softmax_lastdim(const Var& x) {
  const std::size_t n = detail::last_dim(x.shape());
  const std::size_t rows = x.numel() / n;
  const auto xv = x.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * n;
    double* dst = out.data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (dst[i] = std::exp(src[i] - mx));
    for (std::size_t i = 0; i < n; ++i) dst[i] /= total;
  }
  Tensor y(x.shape(), std::move(out));
  return x.tape().record("softmax", y, {x}, [y, n, rows](std::span<const double> g, GradSlots in) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.ptr() + r * n;
      const double* gr = g.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
      for (std::size_t i = 0; i < n; ++i) in[0][r * n + i] += yr[i] * (gr[i] - dot);
    }
  });
}

/// Per-slice normalization over the last axis followed by an affine map.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const std::size_t c = detail::last_dim(x.shape());
  detail::require_rank(gain, 1, "layer_norm");
  detail::require_rank(bias, 1, "layer_norm");
  if (gain.dim(0) != c || bias.dim(0) != c)
    throw DimensionError("layer_norm: affine parameters do not match " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / c;
  const auto xv = x.value().data();
  const Tensor gt = gain.value();
  const auto bv = bias.value().data();
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += src[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t i = 0; i < c; ++i) {
      const double h = (src[i] - mu) * rs;
      xhat[r * c + i] = h;
      out[r * c + i] = h * gt[i] + bv[i];
    }
  }
  return x.tape().record(
      "layer_norm", Tensor(x.shape(), std::move(out)), {x, gain, bias},
      [xhat = std::move(xhat), rstd = std::move(rstd), gt, c, rows](std::span<const double> g,
                                                                     GradSlots in) {
        if (!in[1].empty() || !in[2].empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < c; ++i) {
              if (!in[1].empty()) in[1][i] += g[r * c + i] * xhat[r * c + i];
              if (!in[2].empty()) in[2][i] += g[r * c + i];
            }
        if (in[0].empty()) return;
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            const double d = g[r * c + i] * gt[i];
            mean_d += d;
            mean_dh += d * xhat[r * c + i];
          }
          mean_d *= inv_c;
          mean_dh *= inv_c;
          for (std::size_t i = 0; i < c; ++i) {
            const double d = g[r * c + i] * gt[i];
            in[0][r * c + i] += rstd[r] * (d - mean_d - xhat[r * c + i] * mean_dh);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

struct Padding {
  std::size_t before = 0;
  std::size_t after = 0;
};

inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      Padding pad) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t padded = in + pad.before + pad.after;
  if (padded < kernel) throw ConfigError("conv2d: kernel larger than padded input");
  if ((padded - kernel) % stride != 0)
    throw ConfigError("conv2d: output extent (" + std::to_string(in) + "+" +
                      std::to_string(pad.before + pad.after) + "-" + std::to_string(kernel) + ")/" +
                      std::to_string(stride) + "+1 is not an integer");
  return (padded - kernel) / stride + 1;
}

/// 2-D cross-correlation (no kernel flip).
/// x: [H, W, Cin], kernels: [kh, kw, Cin, Cout] -> [H', W', Cout] with
/// H' = (H + pad.before + pad.after - kh) / stride + 1, which must be exact.
/// Padding is applied identically on both spatial axes.
inline Var conv2d(const Var& x, const Var& kernels, std::size_t stride, Padding pad) {
  detail::require_rank(x, 3, "conv2d");
  detail::require_rank(kernels, 4, "conv2d");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
  if (kernels.dim(2) != cin)
    throw DimensionError("conv2d: kernel input channels " + shape_str(kernels.shape()) +
                         " do not match input " + shape_str(x.shape()));
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
  const std::size_t ho = conv_output_extent(h, kh, stride, pad);
  const std::size_t wo = conv_output_extent(w, kw, stride, pad);
  const std::size_t patch = kh * kw * cin;

  const auto xv = x.value().data();
  std::vector<double> cols(ho * wo * patch, 0.0);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * patch;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad.before);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad.before);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = xv.data() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          std::copy(src, src + cin, row + (ky * kw + kx) * cin);
        }
      }
    }

  const Tensor kt = kernels.value();
  std::vector<double> out(ho * wo * cout);
  detail::as_matrix(out, ho * wo, cout).noalias() =
      detail::as_matrix(cols, ho * wo, patch) * detail::as_matrix(kt, patch, cout);

  const bool need_cols = kernels.requires_grad();
  return x.tape().record(
      "conv2d", Tensor({ho, wo, cout}, std::move(out)), {x, kernels},
      [cols = need_cols ? std::move(cols) : std::vector<double>{}, kt, h, w, cin, kh, kw, cout, ho,
       wo, patch, stride, pad](std::span<const double> g, GradSlots in) {
        auto G = detail::as_matrix(g, ho * wo, cout);
        if (!in[1].empty())
          detail::as_matrix(in[1], patch, cout).noalias() +=
              detail::as_matrix(std::span<const double>(cols), ho * wo, patch).transpose() * G;
        if (in[0].empty()) return;
        std::vector<double> dcols(ho * wo * patch);
        detail::as_matrix(dcols, ho * wo, patch).noalias() =
            G * detail::as_matrix(kt, patch, cout).transpose();
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double* row = dcols.data() + (oy * wo + ox) * patch;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(pad.before);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                          static_cast<std::ptrdiff_t>(pad.before);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                double* dst = in[0].data() +
                              (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                const double* src = row + (ky * kw + kx) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
              }
            }
          }
      });
}

inline Var conv2d(const Var& x, const Var& kernels, std::size_t stride, std::size_t padding) {
  return conv2d(x, kernels, stride, Padding{padding, padding});
}

// ---------------------------------------------------------------------------
// Attention

/// Multi-head scaled dot-product attention without positional terms.
/// queries: [Nq, C], keys/values: [Nk, C]; C is split into `heads` equal
/// column blocks. Returns [Nq, C] with the heads' outputs side by side.
inline Var multi_head_attention(const Var& queries, const Var& keys, const Var& values,
                                std::size_t heads) {
  using detail::ConstStridedMap;
  using detail::RowMatrix;
  using detail::StridedMap;
  detail::require_rank(queries, 2, "attention");
  detail::require_rank(keys, 2, "attention");
  detail::require_same_shape(keys, values, "attention");
  const std::size_t nq = queries.dim(0), nk = keys.dim(0), c = queries.dim(1);
  if (keys.dim(1) != c) throw DimensionError("attention: query/key widths differ");
  if (heads == 0 || c % heads != 0)
    throw ConfigError("attention: width " + std::to_string(c) + " not divisible into " +
                      std::to_string(heads) + " heads");
  const std::size_t dh = c / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index Nq = static_cast<Eigen::Index>(nq), Nk = static_cast<Eigen::Index>(nk),
                     Dh = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(c));

  const Tensor qt = queries.value(), kt = keys.value(), vt = values.value();
  std::vector<double> out(nq * c);
  std::vector<RowMatrix> probs(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    ConstStridedMap Q(qt.ptr() + hd * dh, Nq, Dh, stride);
    ConstStridedMap K(kt.ptr() + hd * dh, Nk, Dh, stride);
    ConstStridedMap V(vt.ptr() + hd * dh, Nk, Dh, stride);
    RowMatrix& P = probs[hd];
    P.noalias() = (Q * K.transpose()) * scale_factor;
    for (Eigen::Index r = 0; r < Nq; ++r) {
      auto row = P.row(r);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    StridedMap O(out.data() + hd * dh, Nq, Dh, stride);
    O.noalias() = P * V;
  }
  return queries.tape().record(
      "attention", Tensor({nq, c}, std::move(out)), {queries, keys, values},
      [probs = std::move(probs), qt, kt, vt, heads, dh, c, Nq, Nk, Dh, stride, scale_factor](
          std::span<const double> g, GradSlots in) {
        for (std::size_t hd = 0; hd < heads; ++hd) {
          const RowMatrix& P = probs[hd];
          ConstStridedMap G(g.data() + hd * dh, Nq, Dh, stride);
          ConstStridedMap V(vt.ptr() + hd * dh, Nk, Dh, stride);
          if (!in[2].empty()) StridedMap(in[2].data() + hd * dh, Nk, Dh, stride).noalias() += P.transpose() * G;
          if (in[0].empty() && in[1].empty()) continue;
          RowMatrix dS = G * V.transpose();
          for (Eigen::Index r = 0; r < Nq; ++r) {
            const double dot = dS.row(r).dot(P.row(r));
            dS.row(r) = (P.row(r).array() * (dS.row(r).array() - dot)).matrix();
          }
          dS *= scale_factor;
          if (!in[0].empty()) {
            ConstStridedMap K(kt.ptr() + hd * dh, Nk, Dh, stride);
            StridedMap(in[0].data() + hd * dh, Nq, Dh, stride).noalias() += dS * K;
          }
          if (!in[1].empty()) {
            ConstStridedMap Q(qt.ptr() + hd * dh, Nq, Dh, stride);
            StridedMap(in[1].data() + hd * dh, Nk, Dh, stride).noalias() += dS.transpose() * Q;
          }
        }
      });
}

}  // namespace panet
