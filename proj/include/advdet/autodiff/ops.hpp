#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/core/error.hpp"

namespace advdet::ad {

/// y = x W + b for x [m x in], W [in x out], b [1 x out].
template <class T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const auto& xv = g.value(x);
  const auto& wv = g.value(w);
  if (xv.cols() != wv.rows()) {
    throw ShapeError("linear: input has " + std::to_string(xv.cols()) + " columns, weight expects " +
                     std::to_string(wv.rows()));
  }
  Matrix<T> y = xv * wv;
  y.rowwise() += g.value(b).row(0);
  const int rows = static_cast<int>(y.rows());
  const int cols = static_cast<int>(y.cols());
  return g.op(std::move(y), TensorShape::flat(rows, cols), {x, w, b}, [x, w, b](Graph<T>& gr, const Matrix<T>& dy) {
    if (gr.requires_grad(x)) gr.accumulate(x, dy * gr.value(w).transpose());
    if (gr.requires_grad(w)) gr.accumulate(w, gr.value(x).transpose() * dy);
    if (gr.requires_grad(b)) gr.accumulate(b, dy.colwise().sum());
  });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  Matrix<T> y = g.value(x).cwiseMax(T(0));
  return g.op(std::move(y), g.shape(x), {x}, [x](Graph<T>& gr, const Matrix<T>& dy) {
    gr.accumulate(x, (gr.value(x).array() > T(0)).select(dy.array(), T(0)).matrix());
  });
}

template <class T>
Var sigmoid(Graph<T>& g, Var x) {
  Matrix<T> y = (T(1) / (T(1) + (-g.value(x).array()).exp())).matrix();
  auto out = std::make_shared<Matrix<T>>(y);
  return g.op(std::move(y), g.shape(x), {x}, [x, out](Graph<T>& gr, const Matrix<T>& dy) {
    gr.accumulate(x, (dy.array() * out->array() * (T(1) - out->array())).matrix());
  });
}

/// Identity forward; the backward pass multiplies the incoming gradient by -lambda.
template <class T>
Var gradient_reversal(Graph<T>& g, Var x, T lambda) {
  if (lambda < T(0)) throw ContractViolation("gradient_reversal: lambda must be nonnegative");
  return g.op(g.value(x), g.shape(x), {x}, [x, lambda](Graph<T>& gr, const Matrix<T>& dy) {
    gr.accumulate(x, (-lambda) * dy);
  });
}

/// Selects rows of a flat tensor.
template <class T>
Var gather_rows(Graph<T>& g, Var x, std::span<const int> rows) {
  const auto& xv = g.value(x);
  Matrix<T> y(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= xv.rows()) throw ContractViolation("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  const int n = static_cast<int>(y.rows());
  const int c = static_cast<int>(y.cols());
  return g.op(std::move(y), TensorShape::flat(n, c), {x}, [x, idx](Graph<T>& gr, const Matrix<T>& dy) {
    Matrix<T> dx = Matrix<T>::Zero(gr.value(x).rows(), gr.value(x).cols());
    for (std::size_t i = 0; i < idx->size(); ++i) dx.row((*idx)[i]) += dy.row(static_cast<Eigen::Index>(i));
    gr.accumulate(x, dx);
  });
}

/// Number of unordered pairs among m items.
inline constexpr std::size_t pair_count(std::size_t m) { return m < 2 ? 0 : m * (m - 1) / 2; }

/// Element-wise squared difference for every pair (m, n), m < n, in lexicographic order.
template <class T>
Var pairwise_sq_diff(Graph<T>& g, Var z) {
  const auto& zv = g.value(z);
  const Eigen::Index m = zv.rows();
  if (m < 2) throw ContractViolation("pairwise feature distance needs at least 2 rows, got " + std::to_string(m));
  Matrix<T> y(static_cast<Eigen::Index>(pair_count(static_cast<std::size_t>(m))), zv.cols());
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b, ++k) y.row(k) = (zv.row(a) - zv.row(b)).array().square();
  }
  const int rows = static_cast<int>(y.rows());
  const int cols = static_cast<int>(y.cols());
  return g.op(std::move(y), TensorShape::flat(rows, cols), {z}, [z](Graph<T>& gr, const Matrix<T>& dy) {
    const auto& zv2 = gr.value(z);
    const Eigen::Index mm = zv2.rows();
    Matrix<T> dz = Matrix<T>::Zero(mm, zv2.cols());
    Eigen::Index kk = 0;
    for (Eigen::Index a = 0; a < mm; ++a) {
      for (Eigen::Index b = a + 1; b < mm; ++b, ++kk) {
        auto d = (T(2) * (zv2.row(a) - zv2.row(b)).array() * dy.row(kk).array()).matrix();
        dz.row(a) += d;
        dz.row(b) -= d;
      }
    }
    gr.accumulate(z, dz);
  });
}

namespace detail {

/// Patch matrix [n*h*w x 9*c] for a 3x3 window, zero outside the image.
template <class T>
void im2col3x3(const T* x, const TensorShape& s, T* cols) {
  const Eigen::Index c = s.c, width = 9 * c;
  for (int n = 0; n < s.n; ++n) {
    for (int yy = 0; yy < s.h; ++yy) {
      for (int xx = 0; xx < s.w; ++xx) {
        T* row = cols + ((static_cast<Eigen::Index>(n) * s.h + yy) * s.w + xx) * width;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = yy + ky - 1;
          for (int kx = 0; kx < 3; ++kx, row += c) {
            const int sx = xx + kx - 1;
            if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) {
              std::fill(row, row + c, T(0));
            } else {
              const T* src = x + ((static_cast<Eigen::Index>(n) * s.h + sy) * s.w + sx) * c;
              std::copy(src, src + c, row);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col3x3: scatters patch gradients back onto pixels.
template <class T>
void col2im3x3(const T* cols, const TensorShape& s, T* dx) {
  const Eigen::Index c = s.c, width = 9 * c;
  std::fill(dx, dx + s.rows() * c, T(0));
  for (int n = 0; n < s.n; ++n) {
    for (int yy = 0; yy < s.h; ++yy) {
      for (int xx = 0; xx < s.w; ++xx) {
        const T* row = cols + ((static_cast<Eigen::Index>(n) * s.h + yy) * s.w + xx) * width;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = yy + ky - 1;
          for (int kx = 0; kx < 3; ++kx, row += c) {
            const int sx = xx + kx - 1;
            if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) continue;
            T* dst = dx + ((static_cast<Eigen::Index>(n) * s.h + sy) * s.w + sx) * c;
            for (Eigen::Index k = 0; k < c; ++k) dst[k] += row[k];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero padding 1, NHWC. Weight is [9*c_in x c_out]
/// with rows ordered (ky, kx, c_in).
template <class T>
Var conv3x3(Graph<T>& g, Var x, Var w, Var b) {
  const TensorShape s = g.shape(x);
  const Eigen::Index cin = s.c;
  if (g.value(w).rows() != 9 * cin) {
    throw ShapeError("conv3x3: weight expects " + std::to_string(g.value(w).rows() / 9) + " input channels, got " +
                     std::to_string(cin));
  }
  auto cols = std::make_shared<Matrix<T>>(s.rows(), 9 * cin);
  detail::im2col3x3(g.value(x).data(), s, cols->data());
  Matrix<T> y = (*cols) * g.value(w);
  y.rowwise() += g.value(b).row(0);
  const TensorShape out{s.n, s.h, s.w, static_cast<int>(y.cols())};
  return g.op(std::move(y), out, {x, w, b}, [x, w, b, cols, s](Graph<T>& gr, const Matrix<T>& dy) {
    if (gr.requires_grad(w)) gr.accumulate(w, cols->transpose() * dy);
    if (gr.requires_grad(b)) gr.accumulate(b, dy.colwise().sum());
    if (!gr.requires_grad(x)) return;
    const Matrix<T> dcols = dy * gr.value(w).transpose();
    Matrix<T> dx(s.rows(), s.c);
    detail::col2im3x3(dcols.data(), s, dx.data());
    gr.accumulate(x, dx);
  });
}

/// Per-sample normalization over all h*w*c entries to zero mean, unit variance.
template <class T>
Var layer_norm(Graph<T>& g, Var x, T eps = T(1e-5)) {
  const TensorShape s = g.shape(x);
  const Eigen::Index per = static_cast<Eigen::Index>(s.h) * s.w * s.c;
  const auto& xv = g.value(x);
  Matrix<T> y(xv.rows(), xv.cols());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n));
  for (int n = 0; n < s.n; ++n) {
    const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> v(xv.data() + n * per, per);
    const T mean = v.mean();
    const T var = (v - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(n)] = is;
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(y.data() + n * per, per) = (v - mean) * is;
  }
  auto out = std::make_shared<Matrix<T>>(y);
  return g.op(std::move(y), s, {x}, [x, s, per, inv_std, out](Graph<T>& gr, const Matrix<T>& dy) {
    Matrix<T> dx(out->rows(), out->cols());
    for (int n = 0; n < s.n; ++n) {
      const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> g1(dy.data() + n * per, per);
      const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> yy(out->data() + n * per, per);
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(dx.data() + n * per, per) =
          (*inv_std)[static_cast<std::size_t>(n)] * (g1 - g1.mean() - yy * (g1 * yy).mean());
    }
    gr.accumulate(x, dx);
  });
}

/// 2x2 max pooling with stride 2; spatial dims must be even.
template <class T>
Var max_pool2(Graph<T>& g, Var x) {
  const TensorShape s = g.shape(x);
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("max_pool2 needs even spatial dims, got " + s.str());
  const TensorShape out{s.n, s.h / 2, s.w / 2, s.c};
  const auto& xv = g.value(x);
  Matrix<T> y(out.rows(), out.c);
  auto arg = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(out.rows() * out.c));
  for (int n = 0; n < s.n; ++n) {
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        const Eigen::Index orow = (static_cast<Eigen::Index>(n) * out.h + oy) * out.w + ox;
        const Eigen::Index base = (static_cast<Eigen::Index>(n) * s.h + 2 * oy) * s.w + 2 * ox;
        const Eigen::Index cand[4] = {base, base + 1, base + s.w, base + s.w + 1};
        for (int c = 0; c < s.c; ++c) {
          Eigen::Index best = cand[0];
          for (int q = 1; q < 4; ++q) {
            if (xv(cand[q], c) > xv(best, c)) best = cand[q];
          }
          y(orow, c) = xv(best, c);
          (*arg)[static_cast<std::size_t>(orow * s.c + c)] = best;
        }
      }
    }
  }
  return g.op(std::move(y), out, {x}, [x, arg, s, out](Graph<T>& gr, const Matrix<T>& dy) {
    Matrix<T> dx = Matrix<T>::Zero(s.rows(), s.c);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (int c = 0; c < s.c; ++c) dx((*arg)[static_cast<std::size_t>(r * s.c + c)], c) += dy(r, c);
    }
    gr.accumulate(x, dx);
  });
}

/// Mean over spatial positions: [n*h*w x c] -> [n x c].
template <class T>
Var global_avg_pool(Graph<T>& g, Var x) {
  const TensorShape s = g.shape(x);
  const auto& xv = g.value(x);
  const Eigen::Index hw = static_cast<Eigen::Index>(s.h) * s.w;
  Matrix<T> y(s.n, s.c);
  for (int n = 0; n < s.n; ++n) y.row(n) = xv.middleRows(n * hw, hw).colwise().mean();
  return g.op(std::move(y), TensorShape::flat(s.n, s.c), {x}, [x, s, hw](Graph<T>& gr, const Matrix<T>& dy) {
    Matrix<T> dx(s.rows(), s.c);
    const T inv = T(1) / static_cast<T>(hw);
    for (int n = 0; n < s.n; ++n) dx.middleRows(n * hw, hw).rowwise() = dy.row(n) * inv;
    gr.accumulate(x, dx);
  });
}

/// sum(x^2) as a scalar node.
template <class T>
Var sum_squares(Graph<T>& g, Var x) {
  Matrix<T> y = Matrix<T>::Constant(1, 1, g.value(x).squaredNorm());
  return g.op(std::move(y), TensorShape::flat(1, 1), {x}, [x](Graph<T>& gr, const Matrix<T>& dy) {
    gr.accumulate(x, (T(2) * dy(0, 0)) * gr.value(x));
  });
}

/// sum_i weights[i] * terms[i] over scalar nodes.
template <class T>
Var weighted_sum(Graph<T>& g, std::span<const Var> terms, std::span<const T> weights) {
  if (terms.size() != weights.size()) throw ContractViolation("weighted_sum: size mismatch");
  T total = T(0);
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * g.scalar(terms[i]);
  auto ts = std::make_shared<std::vector<Var>>(terms.begin(), terms.end());
  auto ws = std::make_shared<std::vector<T>>(weights.begin(), weights.end());
  return g.op(Matrix<T>::Constant(1, 1, total), TensorShape::flat(1, 1), terms,
              [ts, ws](Graph<T>& gr, const Matrix<T>& dy) {
                for (std::size_t i = 0; i < ts->size(); ++i) {
                  gr.accumulate((*ts)[i], Matrix<T>::Constant(1, 1, (*ws)[i] * dy(0, 0)));
                }
              });
}

}  // namespace advdet::ad
