#include "affalign/numerics/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "affalign/common/error.hpp"

namespace affalign {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
using Idx = Eigen::Index;

CMap view(const Tensor& t) {
  return CMap(t.ptr(), static_cast<Idx>(t.rows()), static_cast<Idx>(t.cols()));
}

CMap view(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMap(t.ptr(), static_cast<Idx>(rows), static_cast<Idx>(cols));
}

Map grad_view(Tape& tape, std::uint32_t i, std::size_t rows, std::size_t cols) {
  return Map(tape.grad(i).data(), static_cast<Idx>(rows), static_cast<Idx>(cols));
}

Tape& same_tape(Var a, Var b) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw UsageError("operands recorded on different tapes");
  return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

// Row-wise stable softmax in place. Row loops keep Eigen on its vectorized
// exp path; column broadcasts of a row-major matrix do not.
template <typename M>
void softmax_rows_inplace(M& a) {
  for (Idx r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row *= 1.0 / row.sum();
  }
}

// In place: ds <- a * (ds - rowsum(ds * a)), the softmax adjoint.
template <typename M, typename A>
void softmax_adjoint_inplace(M& ds, const A& a) {
  for (Idx r = 0; r < ds.rows(); ++r) {
    const double dot = ds.row(r).dot(a.row(r));
    ds.row(r) = (a.row(r).array() * (ds.row(r).array() - dot)).matrix();
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + to_string(av.shape()) + " by " +
                         to_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), p = bv.cols();
  Tensor out(matrix_shape(m, p));
  Map(out.ptr(), static_cast<Idx>(m), static_cast<Idx>(p)).noalias() = view(av) * view(bv);
  const auto ai = a.index(), bi = b.index();
  return tape.record(std::move(out), {a, b}, [ai, bi, m, k, p, self = tape.size()](Tape& t) {
    const auto g = grad_view(t, static_cast<std::uint32_t>(self), m, p);
    if (t.requires_grad(ai)) {
      grad_view(t, ai, m, k).noalias() += g * view(t.value(bi)).transpose();
    }
    if (t.requires_grad(bi)) {
      grad_view(t, bi, k, p).noalias() += view(t.value(ai)).transpose() * g;
    }
  });
}

namespace {

Var linear_impl(Var x, Var w, const Var* bias) {
  Tape& tape = same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.shape()[0]) {
    throw DimensionError("linear: input " + to_string(xv.shape()) + " incompatible with weight " +
                         to_string(wv.shape()));
  }
  const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.cols();
  Tensor out(matrix_shape(n, out_dim));
  Map y(out.ptr(), static_cast<Idx>(n), static_cast<Idx>(out_dim));
  y.noalias() = view(xv) * view(wv);
  std::uint32_t bi = 0;
  const bool has_bias = bias != nullptr;
  if (has_bias) {
    same_tape(x, *bias);
    const Tensor& bv = bias->value();
    if (bv.size() != out_dim) {
      throw DimensionError("linear: bias " + to_string(bv.shape()) + " does not match width " +
                           std::to_string(out_dim));
    }
    y.rowwise() += view(bv, 1, out_dim).row(0);
    bi = bias->index();
  }
  const auto xi = x.index(), wi = w.index();
  auto fn = [xi, wi, bi, has_bias, n, in, out_dim, self = tape.size()](Tape& t) {
    const auto g = grad_view(t, static_cast<std::uint32_t>(self), n, out_dim);
    if (t.requires_grad(xi)) {
      grad_view(t, xi, n, in).noalias() += g * view(t.value(wi)).transpose();
    }
    if (t.requires_grad(wi)) {
      grad_view(t, wi, in, out_dim).noalias() += view(t.value(xi), n, in).transpose() * g;
    }
    if (has_bias && t.requires_grad(bi)) {
      grad_view(t, bi, 1, out_dim).row(0) += g.colwise().sum();
    }
  };
  if (has_bias) return tape.record(std::move(out), {x, w, *bias}, std::move(fn));
  return tape.record(std::move(out), {x, w}, std::move(fn));
}

}  // namespace

Var linear(Var x, Var w, Var bias) { return linear_impl(x, w, &bias); }
Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  auto o = out.data();
  auto bs = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bs[i];
  const auto ai = a.index(), bi = b.index();
  return tape.record(std::move(out), {a, b}, [ai, bi, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    for (auto idx : {ai, bi}) {
      if (!t.requires_grad(idx)) continue;
      auto d = t.grad(idx);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  auto o = out.data();
  auto bs = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bs[i];
  const auto ai = a.index(), bi = b.index();
  return tape.record(std::move(out), {a, b}, [ai, bi, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    if (t.requires_grad(ai)) {
      auto d = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      auto d = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  auto o = out.data();
  auto bs = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bs[i];
  const auto ai = a.index(), bi = b.index();
  return tape.record(std::move(out), {a, b}, [ai, bi, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    if (t.requires_grad(ai)) {
      auto d = t.grad(ai);
      auto bs = t.value(bi).data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bs[i];
    }
    if (t.requires_grad(bi)) {
      auto d = t.grad(bi);
      auto as = t.value(ai).data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * as[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& tape = a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const auto ai = a.index();
  return tape.record(std::move(out), {a}, [ai, factor, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    auto d = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& tape = same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.size() != av.cols()) {
    throw DimensionError("add_row: row " + to_string(rv.shape()) + " does not match " +
                         to_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t n = av.rows(), c = av.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += rv[j];
  }
  const auto ai = a.index(), ri = row.index();
  return tape.record(std::move(out), {a, row}, [ai, ri, n, c, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    if (t.requires_grad(ai)) {
      auto d = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.requires_grad(ri)) {
      auto d = t.grad(ri);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) d[j] += g[r * c + j];
      }
    }
  });
}

Var sum(Var a) {
  Tape& tape = a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ai = a.index();
  return tape.record(Tensor::scalar(s), {a}, [ai, self = tape.size()](Tape& t) {
    const double g = t.grad(static_cast<std::uint32_t>(self))[0];
    for (double& d : t.grad(ai)) d += g;
  });
}

Var mean(Var a) {
  Tape& tape = a.tape();
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ai = a.index();
  return tape.record(Tensor::scalar(s / static_cast<double>(n)), {a},
                     [ai, n, self = tape.size()](Tape& t) {
                       const double g = t.grad(static_cast<std::uint32_t>(self))[0] /
                                        static_cast<double>(n);
                       for (double& d : t.grad(ai)) d += g;
                     });
}

Var mse(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mse");
  const std::size_t n = av.size();
  if (n == 0) throw DimensionError("mse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const auto ai = a.index(), bi = b.index();
  return tape.record(Tensor::scalar(s / static_cast<double>(n)), {a, b},
                     [ai, bi, n, self = tape.size()](Tape& t) {
                       const double g = t.grad(static_cast<std::uint32_t>(self))[0] * 2.0 /
                                        static_cast<double>(n);
                       const auto as = t.value(ai).data();
                       const auto bs = t.value(bi).data();
                       if (t.requires_grad(ai)) {
                         auto d = t.grad(ai);
                         for (std::size_t i = 0; i < n; ++i) d[i] += g * (as[i] - bs[i]);
                       }
                       if (t.requires_grad(bi)) {
                         auto d = t.grad(bi);
                         for (std::size_t i = 0; i < n; ++i) d[i] -= g * (as[i] - bs[i]);
                       }
                     });
}

Var layer_norm(Var x, double eps) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d < 2) {
    throw DegenerateInputError("layer_norm needs at least 2 features per row, got " +
                               std::to_string(d));
  }
  Tensor out(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* o = out.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = (row[j] - mu) * is;
  }
  const auto xi = x.index();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.record(std::move(out), {x}, [xi, n, d, inv_std, self](Tape& t) {
    const auto g = t.grad(self);
    const auto y = t.value(self).data();
    auto dx = t.grad(xi);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < n; ++r) {
      const double* gr = g.data() + r * d;
      const double* yr = y.data() + r * d;
      double gm = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gm += gr[j];
        gy += gr[j] * yr[j];
      }
      gm *= inv_d;
      gy *= inv_d;
      const double is = (*inv_std)[r];
      double* dr = dx.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dr[j] += is * (gr[j] - gm - yr[j] * gy);
    }
  });
}

Var softmax_rows(Var x) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  if (!xv.all_finite()) throw DegenerateInputError("softmax_rows: non-finite input");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor out(xv.shape());
  auto y = Map(out.ptr(), static_cast<Idx>(n), static_cast<Idx>(d));
  const auto xm = view(xv, n, d);
  y = xm;
  softmax_rows_inplace(y);
  const auto xi = x.index();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.record(std::move(out), {x}, [xi, n, d, self](Tape& t) {
    RowMat g = grad_view(t, self, n, d);
    softmax_adjoint_inplace(g, view(t.value(self), n, d));
    grad_view(t, xi, n, d) += g;
  });
}

Var gelu(Var x) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  // Phi(x) is kept for the backward pass; erf dominates this op's cost.
  auto cdf = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double phi = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
    (*cdf)[i] = phi;
    out[i] = xv[i] * phi;
  }
  const auto xi = x.index();
  return tape.record(std::move(out), {x}, [xi, cdf, self = tape.size()](Tape& t) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    const auto xs = t.value(xi).data();
    auto d = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xs[i];
      d[i] += g[i] * ((*cdf)[i] + v * kInvSqrt2Pi * std::exp(-0.5 * v * v));
    }
  });
}

Var cosine_rows(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "cosine_rows");
  const std::size_t n = av.rows(), d = av.cols();
  Tensor out(Shape{n});
  auto norms = std::make_shared<std::vector<double>>(2 * n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = av.ptr() + r * d;
    const double* br = bv.ptr() + r * d;
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      aa += ar[j] * ar[j];
      bb += br[j] * br[j];
      ab += ar[j] * br[j];
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    if (na < 1e-12 || nb < 1e-12) {
      throw DegenerateInputError("cosine_rows: row " + std::to_string(r) +
                                 " has near-zero norm");
    }
    (*norms)[2 * r] = na;
    (*norms)[2 * r + 1] = nb;
    out[r] = ab / (na * nb);
  }
  const auto ai = a.index(), bi = b.index();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.record(std::move(out), {a, b}, [ai, bi, n, d, norms, self](Tape& t) {
    const auto g = t.grad(self);
    const auto c = t.value(self).data();
    const auto as = t.value(ai).data();
    const auto bs = t.value(bi).data();
    const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
    for (std::size_t r = 0; r < n; ++r) {
      const double na = (*norms)[2 * r], nb = (*norms)[2 * r + 1];
      const double inv = 1.0 / (na * nb);
      const double* ar = as.data() + r * d;
      const double* br = bs.data() + r * d;
      if (ga) {
        double* dr = t.grad(ai).data() + r * d;
        const double k = c[r] / (na * na);
        for (std::size_t j = 0; j < d; ++j) dr[j] += g[r] * (br[j] * inv - k * ar[j]);
      }
      if (gb) {
        double* dr = t.grad(bi).data() + r * d;
        const double k = c[r] / (nb * nb);
        for (std::size_t j = 0; j < d; ++j) dr[j] += g[r] * (ar[j] * inv - k * br[j]);
      }
    }
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w;
};

std::vector<Tap> resize_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double s = dst > 1 ? static_cast<double>(i) * static_cast<double>(src - 1) /
                                   static_cast<double>(dst - 1)
                             : static_cast<double>(src - 1) / 2.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(s));
    if (lo > src - 1) lo = src - 1;
    const std::size_t hi = std::min(lo + 1, src - 1);
    taps[i] = Tap{lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var bilinear_resize(Var x, std::size_t target_h, std::size_t target_w) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 3) {
    throw DimensionError("bilinear_resize expects [H x W x D], got " + to_string(xv.shape()));
  }
  const std::size_t hs = xv.shape()[0], ws = xv.shape()[1], d = xv.shape()[2];
  if (hs == 0 || ws == 0 || target_h == 0 || target_w == 0) {
    throw DimensionError("bilinear_resize: extents must be positive");
  }
  const auto ty = resize_taps(hs, target_h);
  const auto tx = resize_taps(ws, target_w);
  Tensor out(Shape{target_h, target_w, d});
  auto at = [&](std::size_t r, std::size_t c) { return xv.ptr() + (r * ws + c) * d; };
  for (std::size_t i = 0; i < target_h; ++i) {
    for (std::size_t j = 0; j < target_w; ++j) {
      const double* p00 = at(ty[i].lo, tx[j].lo);
      const double* p01 = at(ty[i].lo, tx[j].hi);
      const double* p10 = at(ty[i].hi, tx[j].lo);
      const double* p11 = at(ty[i].hi, tx[j].hi);
      double* o = out.ptr() + (i * target_w + j) * d;
      const double wy = ty[i].w, wx = tx[j].w;
      for (std::size_t c = 0; c < d; ++c) {
        // Difference form keeps constant fields and corners exact.
        const double top = p00[c] + wx * (p01[c] - p00[c]);
        const double bottom = p10[c] + wx * (p11[c] - p10[c]);
        o[c] = top + wy * (bottom - top);
      }
    }
  }
  const auto xi = x.index();
  return tape.record(
      std::move(out), {x},
      [xi, ty, tx, ws, d, target_h, target_w, self = tape.size()](Tape& t) {
        const auto g = t.grad(static_cast<std::uint32_t>(self));
        auto dx = t.grad(xi);
        for (std::size_t i = 0; i < target_h; ++i) {
          for (std::size_t j = 0; j < target_w; ++j) {
            const double wy = ty[i].w, wx = tx[j].w;
            const double w00 = (1 - wy) * (1 - wx), w01 = (1 - wy) * wx;
            const double w10 = wy * (1 - wx), w11 = wy * wx;
            const double* gr = g.data() + (i * target_w + j) * d;
            double* d00 = dx.data() + (ty[i].lo * ws + tx[j].lo) * d;
            double* d01 = dx.data() + (ty[i].lo * ws + tx[j].hi) * d;
            double* d10 = dx.data() + (ty[i].hi * ws + tx[j].lo) * d;
            double* d11 = dx.data() + (ty[i].hi * ws + tx[j].hi) * d;
            for (std::size_t c = 0; c < d; ++c) {
              d00[c] += w00 * gr[c];
              d01[c] += w01 * gr[c];
              d10[c] += w10 * gr[c];
              d11[c] += w11 * gr[c];
            }
          }
        }
      });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = x.tape();
  if (element_count(shape) != x.value().size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.index();
  return tape.record(std::move(out), {x}, [xi, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    auto d = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& tape = parts[0].tape();
  const std::size_t c = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().cols() != c) {
      throw DimensionError("concat_rows: width " + std::to_string(p.value().cols()) +
                           " vs " + std::to_string(c));
    }
    rows += p.value().rows();
  }
  Tensor out(Shape{rows, c});
  std::vector<std::pair<std::uint32_t, std::size_t>> segments;  // (node, offset)
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    segments.emplace_back(p.index(), off);
    off += src.size();
  }
  const auto self = static_cast<std::uint32_t>(tape.size());
  Tape::BackwardFn fn = [segments, self](Tape& t) {
    const auto g = t.grad(self);
    for (const auto& [idx, offset] : segments) {
      if (!t.requires_grad(idx)) continue;
      auto d = t.grad(idx);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offset + i];
    }
  };
  // record() takes an initializer list; route dependency tracking through
  // the first operand that needs a gradient.
  Var dep = parts[0];
  for (const Var& p : parts) {
    if (p.requires_grad()) {
      dep = p;
      break;
    }
  }
  return tape.record(std::move(out), {dep}, std::move(fn));
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  const std::size_t c = xv.cols();
  if (begin + count > xv.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + to_string(xv.shape()));
  }
  std::vector<double> data(xv.ptr() + begin * c, xv.ptr() + (begin + count) * c);
  Tensor out(Shape{count, c}, std::move(data));
  const auto xi = x.index();
  return tape.record(std::move(out), {x}, [xi, begin, c, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    auto d = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * c + i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  Tape& tape = table.tape();
  const Tensor& tv = table.value();
  const std::size_t c = tv.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out(Shape{idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " out of " +
                           std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.ptr() + idx[r] * c, c, out.ptr() + r * c);
  }
  const auto ti = table.index();
  return tape.record(std::move(out), {table}, [ti, idx, c, self = tape.size()](Tape& t) {
    const auto g = t.grad(static_cast<std::uint32_t>(self));
    auto d = t.grad(ti);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < c; ++j) d[idx[r] * c + j] += g[r * c + j];
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads, const Tensor* mask, std::size_t batch) {
  Tape& tape = same_tape(q, k);
  same_tape(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t rq = qv.rows(), rk = kv.rows(), dim = qv.cols();
  if (kv.cols() != dim || vv.cols() != dim || vv.rows() != rk) {
    throw DimensionError("attention: q " + to_string(qv.shape()) + ", k " +
                         to_string(kv.shape()) + ", v " + to_string(vv.shape()));
  }
  if (batch == 0 || rq % batch != 0 || rk % batch != 0) {
    throw DimensionError("attention: " + std::to_string(rq) + " query and " +
                         std::to_string(rk) + " key rows do not split into " +
                         std::to_string(batch) + " segments");
  }
  if (heads == 0 || dim % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(dim) +
                         " not divisible by heads " + std::to_string(heads));
  }
  const std::size_t tq = rq / batch, tk = rk / batch;
  if (mask && (mask->rows() != tq || mask->cols() != tk)) {
    throw DimensionError("attention: mask " + to_string(mask->shape()) + " vs " +
                         std::to_string(tq) + "x" + std::to_string(tk));
  }
  const std::size_t dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<RowMat>>(batch * heads);
  Tensor out(Shape{rq, dim});
  Map o(out.ptr(), static_cast<Idx>(rq), static_cast<Idx>(dim));
  const auto Q = view(qv, rq, dim);
  const auto K = view(kv, rk, dim);
  const auto V = view(vv, rk, dim);
  const Idx sq = static_cast<Idx>(tq), sk = static_cast<Idx>(tk);
  for (std::size_t b = 0; b < batch; ++b) {
    const Idx q0 = static_cast<Idx>(b * tq), k0 = static_cast<Idx>(b * tk);
    for (std::size_t h = 0; h < heads; ++h) {
      const Idx c0 = static_cast<Idx>(h * dh), w = static_cast<Idx>(dh);
      RowMat& a = (*probs)[b * heads + h];
      a.noalias() = Q.block(q0, c0, sq, w) * K.block(k0, c0, sk, w).transpose();
      a *= inv_sqrt;
      if (mask) {
        const auto mk = view(*mask, tq, tk);
        a = (mk.array() > 0.5).select(a, -std::numeric_limits<double>::infinity());
      }
      softmax_rows_inplace(a);
      o.block(q0, c0, sq, w).noalias() = a * V.block(k0, c0, sk, w);
    }
  }
  const auto qi = q.index(), ki = k.index(), vi = v.index();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.record(
      std::move(out), {q, k, v},
      [qi, ki, vi, rq, rk, tq, tk, dim, dh, heads, batch, inv_sqrt, probs, self](Tape& t) {
        const auto g = grad_view(t, self, rq, dim);
        const auto Q = view(t.value(qi), rq, dim);
        const auto K = view(t.value(ki), rk, dim);
        const auto V = view(t.value(vi), rk, dim);
        const bool gq = t.requires_grad(qi), gk = t.requires_grad(ki), gv = t.requires_grad(vi);
        const Idx sq = static_cast<Idx>(tq), sk = static_cast<Idx>(tk);
        RowMat ds;
        for (std::size_t b = 0; b < batch; ++b) {
          const Idx q0 = static_cast<Idx>(b * tq), k0 = static_cast<Idx>(b * tk);
          for (std::size_t h = 0; h < heads; ++h) {
            const Idx c0 = static_cast<Idx>(h * dh), w = static_cast<Idx>(dh);
            const RowMat& a = (*probs)[b * heads + h];
            const auto gh = g.block(q0, c0, sq, w);
            if (gv) grad_view(t, vi, rk, dim).block(k0, c0, sk, w).noalias() += a.transpose() * gh;
            if (!gq && !gk) continue;
            ds.noalias() = gh * V.block(k0, c0, sk, w).transpose();
            softmax_adjoint_inplace(ds, a);
            if (gq) {
              grad_view(t, qi, rq, dim).block(q0, c0, sq, w).noalias() +=
                  (ds * K.block(k0, c0, sk, w)) * inv_sqrt;
            }
            if (gk) {
              grad_view(t, ki, rk, dim).block(k0, c0, sk, w).noalias() +=
                  (ds.transpose() * Q.block(q0, c0, sq, w)) * inv_sqrt;
            }
          }
        }
      });
}

}  // namespace affalign
