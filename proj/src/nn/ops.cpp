// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ifal/errors.hpp"

namespace ifal::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_mat(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap as_mat(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Tensor mat(std::size_t r, std::size_t c, double fill = 0.0) { return Tensor({r, c}, fill); }

Tensor checked(Tensor t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  return t;
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

const Tensor& pval(Node& n, std::size_t i) { return n.parents[i]->value; }
bool pwants(Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

template <typename F, typename D>
Var unary(const Var& a, const char* name, F f, D df) {
  Tensor out = a.value().reshaped({a.rows(), a.cols()});
  for (auto& v : out.data()) v = f(v);
  out = checked(std::move(out), name);
  return Var::make(std::move(out), {a}, [df](Node& n) {
    const Tensor& x = pval(n, 0);
    const Tensor& y = n.value;
    Tensor g = mat(y.rows(), y.cols());
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * df(x[i], y[i]);
    n.parents[0]->accumulate(g);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = mat(a.rows(), b.cols());
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  out = checked(std::move(out), "matmul");
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = pval(n, 0);
    const Tensor& bv = pval(n, 1);
    if (pwants(n, 0)) {
      Tensor ga = mat(av.rows(), av.cols());
      as_mat(ga).noalias() = as_mat(n.grad) * as_mat(bv).transpose();
      n.parents[0]->accumulate(ga);
    }
    if (pwants(n, 1)) {
      Tensor gb = mat(bv.rows(), bv.cols());
      as_mat(gb).noalias() = as_mat(av).transpose() * as_mat(n.grad);
      n.parents[1]->accumulate(gb);
    }
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_bt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  Tensor out = mat(a.rows(), b.rows());
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value()).transpose();
  out = checked(std::move(out), "matmul_bt");
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = pval(n, 0);
    const Tensor& bv = pval(n, 1);
    if (pwants(n, 0)) {
      Tensor ga = mat(av.rows(), av.cols());
      as_mat(ga).noalias() = as_mat(n.grad) * as_mat(bv);
      n.parents[0]->accumulate(ga);
    }
    if (pwants(n, 1)) {
      Tensor gb = mat(bv.rows(), bv.cols());
      as_mat(gb).noalias() = as_mat(n.grad).transpose() * as_mat(av);
      n.parents[1]->accumulate(gb);
    }
  });
}

Var transpose(const Var& a) {
  Tensor out = mat(a.cols(), a.rows());
  as_mat(out) = as_mat(a.value()).transpose();
  return Var::make(std::move(out), {a}, [](Node& n) {
    Tensor g = mat(n.value.cols(), n.value.rows());
    as_mat(g) = as_mat(n.grad).transpose();
    n.parents[0]->accumulate(g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  out = checked(std::move(out), "add");
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    if (pwants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (pwants(n, 1)) n.parents[1]->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  out = checked(std::move(out), "sub");
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    if (pwants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (pwants(n, 1)) {
      Tensor g = n.grad;
      for (auto& v : g.data()) v = -v;
      n.parents[1]->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  out = checked(std::move(out), "mul");
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = pval(n, 0);
    const Tensor& bv = pval(n, 1);
    if (pwants(n, 0)) {
      Tensor g = mat(av.rows(), av.cols());
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * bv[i];
      n.parents[0]->accumulate(g);
    }
    if (pwants(n, 1)) {
      Tensor g = mat(bv.rows(), bv.cols());
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * av[i];
      n.parents[1]->accumulate(g);
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.value().numel() != a.cols()) {
    throw DimensionError("add_row: " + shape_str(a.shape()) + " + " + shape_str(row.shape()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = mat(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] + row.value()[j];
  out = checked(std::move(out), "add_row");
  return Var::make(std::move(out), {a, row}, [r, c](Node& n) {
    if (pwants(n, 0)) n.parents[0]->accumulate(n.grad);
    if (pwants(n, 1)) {
      Tensor g(n.parents[1]->value.shape(), 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
      n.parents[1]->accumulate(g);
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.value().numel() != a.rows()) {
    throw DimensionError("mul_col: " + shape_str(a.shape()) + " * " + shape_str(col.shape()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = mat(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.value()[i * c + j] * col.value()[i];
  out = checked(std::move(out), "mul_col");
  return Var::make(std::move(out), {a, col}, [r, c](Node& n) {
    const Tensor& av = pval(n, 0);
    const Tensor& cv = pval(n, 1);
    if (pwants(n, 0)) {
      Tensor g = mat(r, c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] = n.grad[i * c + j] * cv[i];
      n.parents[0]->accumulate(g);
    }
    if (pwants(n, 1)) {
      Tensor g(cv.shape(), 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i] += n.grad[i * c + j] * av[i * c + j];
      n.parents[1]->accumulate(g);
    }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().numel() != 1) throw DimensionError("mul_scalar: scale must have one element");
  const double k = s.value()[0];
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * k;
  out = checked(std::move(out), "mul_scalar");
  return Var::make(std::move(out), {a, s}, [](Node& n) {
    const Tensor& av = pval(n, 0);
    const double kv = pval(n, 1)[0];
    if (pwants(n, 0)) {
      Tensor g = mat(av.rows(), av.cols());
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * kv;
      n.parents[0]->accumulate(g);
    }
    if (pwants(n, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.numel(); ++i) acc += n.grad[i] * av[i];
      n.parents[1]->accumulate(Tensor(n.parents[1]->value.shape(), acc));
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = mat(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
  out = checked(std::move(out), "scale");
  return Var::make(std::move(out), {a}, [s](Node& n) {
    Tensor g = n.grad;
    for (auto& v : g.data()) v *= s;
    n.parents[0]->accumulate(g);
  });
}

Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(k * (x + c * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
      });
}

Var silu(const Var& a) {
  return unary(
      a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var tanh(const Var& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var square(const Var& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(const Var& a, const std::vector<bool>* live) {
  const std::size_t r = a.rows(), c = a.cols();
  if (live && live->size() != r) throw DimensionError("softmax_rows: live-row flags do not match rows");
  if (!a.value().all_finite()) throw NumericError("non-finite input to softmax_rows");
  Tensor out = mat(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.value().data().data() + i * c;
    double* y = out.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    if ((live && !(*live)[i]) || mx <= kMaskedLogit / 2) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= total;
  }
  return Var::make(std::move(out), {a}, [r, c](Node& n) {
    Tensor g = mat(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = n.value.data().data() + i * c;
      const double* dy = n.grad.data().data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] = y[j] * (dy[j] - dot);
    }
    n.parents[0]->accumulate(g);
  });
}

Var layer_norm_rows(const Var& a, double eps) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = mat(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.value().data().data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[j] - mu) * inv_std[i];
  }
  out = checked(std::move(out), "layer_norm_rows");
  return Var::make(std::move(out), {a}, [r, c, inv_std = std::move(inv_std)](Node& n) {
    Tensor g = mat(r, c);
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = n.value.data().data() + i * c;
      const double* dy = n.grad.data().data() + i * c;
      double m_dy = 0.0, m_dyy = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        m_dy += dy[j];
        m_dyy += dy[j] * y[j];
      }
      m_dy *= inv_c;
      m_dyy *= inv_c;
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] = inv_std[i] * (dy[j] - m_dy - y[j] * m_dyy);
    }
    n.parents[0]->accumulate(g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
  }
  Tensor out = mat(r, c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().numel();
  }
  return Var::make(std::move(out), {parts.begin(), parts.end()}, [](Node& n) {
    std::size_t off = 0;
    for (auto& parent : n.parents) {
      const std::size_t len = parent->value.numel();
      if (parent->requires_grad) {
        Tensor g(parent->value.shape(), std::vector<double>(n.grad.data().begin() + off,
                                                             n.grad.data().begin() + off + len));
        parent->accumulate(g);
      }
      off += len;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    c += p.cols();
  }
  Tensor out = mat(r, c);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * c + col0 + j] = p.value()[i * pc + j];
    col0 += pc;
  }
  return Var::make(std::move(out), {parts.begin(), parts.end()}, [r, c](Node& n) {
    std::size_t col = 0;
    for (auto& parent : n.parents) {
      const std::size_t pc = parent->value.cols();
      if (parent->requires_grad) {
        Tensor g(parent->value.shape(), 0.0);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] = n.grad[i * c + col + j];
        parent->accumulate(g);
      }
      col += pc;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) throw DimensionError("slice_rows out of range");
  const std::size_t c = a.cols();
  Tensor out(Shape{count, c},
             std::vector<double>(a.value().data().begin() + begin * c, a.value().data().begin() + (begin + count) * c));
  return Var::make(std::move(out), {a}, [begin, c](Node& n) {
    Tensor g(n.parents[0]->value.shape(), 0.0);
    std::copy(n.grad.data().begin(), n.grad.data().end(), g.data().begin() + begin * c);
    n.parents[0]->accumulate(g);
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw DimensionError("slice_cols out of range");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = mat(r, count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.value()[i * c + begin + j];
  return Var::make(std::move(out), {a}, [r, c, begin, count](Node& n) {
    Tensor g(n.parents[0]->value.shape(), 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] = n.grad[i * count + j];
    n.parents[0]->accumulate(g);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return Var::make(std::move(out), {a}, [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tensor out = checked(Tensor::scalar(s), "sum");
  return Var::make(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(Tensor(n.parents[0]->value.shape(), n.grad[0]));
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().numel());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tensor out = checked(Tensor::scalar(s * inv), "mean");
  return Var::make(std::move(out), {a}, [inv](Node& n) {
    n.parents[0]->accumulate(Tensor(n.parents[0]->value.shape(), n.grad[0] * inv));
  });
}

Var mse(const Var& a, const Var& b) {
  require_same(a, b, "mse");
  const std::size_t count = a.value().numel();
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  Tensor out = checked(Tensor::scalar(s / static_cast<double>(count)), "mse");
  return Var::make(std::move(out), {a, b}, [count](Node& n) {
    const Tensor& av = pval(n, 0);
    const Tensor& bv = pval(n, 1);
    const double k = 2.0 * n.grad[0] / static_cast<double>(count);
    Tensor g(av.shape(), 0.0);
    for (std::size_t i = 0; i < count; ++i) g[i] = k * (av[i] - bv[i]);
    if (pwants(n, 0)) n.parents[0]->accumulate(g);
    if (pwants(n, 1)) {
      for (auto& v : g.data()) v = -v;
      n.parents[1]->accumulate(g);
    }
  });
}

Var im2col3x3(const Var& a, std::size_t h, std::size_t w) {
  if (a.rows() != h * w) throw DimensionError("im2col3x3: rows != h*w");
  const std::size_t c = a.cols();
  const std::size_t oc = 9 * c;
  Tensor out = mat(h * w, oc);
  const double* src = a.value().data().data();
  double* dst = out.data().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* row = dst + (y * w + x) * oc;
      for (int dy = -1; dy <= 1; ++dy) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const long sx = static_cast<long>(x) + dx;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          const std::size_t k = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
          std::copy_n(src + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c, c, row + k * c);
        }
      }
    }
  }
  return Var::make(std::move(out), {a}, [h, w, c, oc](Node& n) {
    Tensor g = mat(h * w, c);
    const double* gsrc = n.grad.data().data();
    double* gdst = g.data().data();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double* row = gsrc + (y * w + x) * oc;
        for (int dy = -1; dy <= 1; ++dy) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const long sx = static_cast<long>(x) + dx;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            const std::size_t k = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
            double* d = gdst + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c;
            for (std::size_t j = 0; j < c; ++j) d[j] += row[k * c + j];
          }
        }
      }
    }
    n.parents[0]->accumulate(g);
  });
}

Var avg_pool2x2(const Var& a, std::size_t h, std::size_t w) {
  if (a.rows() != h * w || h % 2 || w % 2) throw DimensionError("avg_pool2x2: bad spatial shape");
  const std::size_t c = a.cols(), oh = h / 2, ow = w / 2;
  Tensor out = mat(oh * ow, c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t j = 0; j < c; ++j) out[((y / 2) * ow + x / 2) * c + j] += 0.25 * a.value()[(y * w + x) * c + j];
  return Var::make(std::move(out), {a}, [h, w, c, ow](Node& n) {
    Tensor g = mat(h * w, c);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t j = 0; j < c; ++j) g[(y * w + x) * c + j] = 0.25 * n.grad[((y / 2) * ow + x / 2) * c + j];
    n.parents[0]->accumulate(g);
  });
}

Var upsample2x(const Var& a, std::size_t h, std::size_t w) {
  if (a.rows() != h * w) throw DimensionError("upsample2x: rows != h*w");
  const std::size_t c = a.cols(), oh = 2 * h, ow = 2 * w;
  Tensor out = mat(oh * ow, c);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t j = 0; j < c; ++j) out[(y * ow + x) * c + j] = a.value()[((y / 2) * w + x / 2) * c + j];
  return Var::make(std::move(out), {a}, [h, w, c, oh, ow](Node& n) {
    Tensor g = mat(h * w, c);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t j = 0; j < c; ++j) g[((y / 2) * w + x / 2) * c + j] += n.grad[(y * ow + x) * c + j];
    n.parents[0]->accumulate(g);
  });
}

}  // namespace ifal::nn
