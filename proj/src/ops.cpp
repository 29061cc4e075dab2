// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapters/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "adapters/errors.hpp"

namespace adapters {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using StridedMap = Eigen::Map<RowMat, 0, Strided>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Strided>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (current_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor record(Tensor out, std::vector<Tensor> inputs, Tape::BackwardRule rule) {
  out.set_requires_grad(true);
  current_tape()->record(std::move(inputs), out, std::move(rule));
  return out;
}

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.values().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(std::span<double> buf, std::size_t rows, std::size_t cols) {
  return MatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatMap as_matrix(std::span<const double> buf, std::size_t rows, std::size_t cols) {
  return ConstMatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.rbegin(), part.rend(), whole.rbegin());
}

bool is_prefix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.begin(), part.end(), whole.begin());
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F forward, D derivative) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = forward(xv[i]);
  if (!tracking({&x})) return out;
  return record(out, {x}, [derivative](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto xv = in[0].values();
    auto yv = o.values();
    auto dx = in[0].grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1), m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  as_matrix(out.values(), m, n).noalias() = as_matrix(a, m, k) * as_matrix(b, k, n);
  if (!tracking({&a, &b})) return out;
  return record(out, {a, b}, [m, k, n](const Tensor& o, std::span<Tensor> in) {
    auto g = as_matrix(o.grad(), m, n);
    if (in[0].requires_grad()) {
      as_matrix(in[0].grad_buffer(), m, k).noalias() += g * as_matrix(in[1], k, n).transpose();
    }
    if (in[1].requires_grad()) {
      as_matrix(in[1].grad_buffer(), k, n).noalias() += as_matrix(in[0], m, k).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: cannot multiply " + shape_str(x.shape()) + " by " +
                     shape_str(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1), m = x.numel() / k;
  if (bias.defined() && bias.shape() != Shape{n}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match width " +
                     std::to_string(n));
  }
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  auto om = as_matrix(out.values(), m, n);
  om.noalias() = as_matrix(x, m, k) * as_matrix(w, k, n);
  if (bias.defined()) {
    om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(),
                                                         static_cast<Eigen::Index>(n));
  }
  if (!tracking({&x, &w, &bias})) return out;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return record(out, std::move(inputs), [m, k, n](const Tensor& o, std::span<Tensor> in) {
    auto g = as_matrix(o.grad(), m, n);
    if (in[0].requires_grad()) {
      as_matrix(in[0].grad_buffer(), m, k).noalias() += g * as_matrix(in[1], k, n).transpose();
    }
    if (in[1].requires_grad()) {
      as_matrix(in[1].grad_buffer(), k, n).noalias() += as_matrix(in[0], m, k).transpose() * g;
    }
    if (in.size() > 2 && in[2].requires_grad()) {
      auto db = in[2].grad_buffer();
      Eigen::Map<Eigen::RowVectorXd>(db.data(), static_cast<Eigen::Index>(n)) += g.colwise().sum();
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{c, r});
  as_matrix(out.values(), c, r) = as_matrix(a, r, c).transpose();
  if (!tracking({&a})) return out;
  return record(out, {a}, [r, c](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    as_matrix(in[0].grad_buffer(), r, c) += as_matrix(o.grad(), c, r).transpose();
  });
}

Tensor kron(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("kron: both factors must be matrices, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(0), q = b.dim(1);
  const std::size_t cols = n * q;
  Tensor out(Shape{m * p, cols});
  auto ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = a(i, j);
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t s = 0; s < q; ++s) ov[(i * p + r) * cols + j * q + s] = aij * b(r, s);
    }
  if (!tracking({&a, &b})) return out;
  return record(out, {a, b}, [m, n, p, q, cols](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    const bool ga = in[0].requires_grad(), gb = in[1].requires_grad();
    std::span<double> da, db;
    if (ga) da = in[0].grad_buffer();
    if (gb) db = in[1].grad_buffer();
    auto av = in[0].values();
    auto bv = in[1].values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < p; ++r)
          for (std::size_t s = 0; s < q; ++s) {
            const double gij = g[(i * p + r) * cols + j * q + s];
            if (ga) da[i * n + j] += gij * bv[r * q + s];
            if (gb) db[r * q + s] += gij * av[i * n + j];
          }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (!tracking({&a, &b})) return out;
  return record(out, {a, b}, [](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    for (auto& t : in) {
      if (!t.requires_grad()) continue;
      auto d = t.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (!tracking({&a, &b})) return out;
  return record(out, {a, b}, [](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (!tracking({&a, &b})) return out;
  return record(out, {a, b}, [](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    auto av = in[0].values(), bv = in[1].values();
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
  if (!tracking({&a})) return out;
  return record(out, {a}, [factor](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto d = in[0].grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
  });
}

Tensor add_trailing(const Tensor& x, const Tensor& y) {
  if (!is_suffix(x.shape(), y.shape())) {
    throw ShapeError("add_trailing: " + shape_str(y.shape()) + " is not a suffix of " +
                     shape_str(x.shape()));
  }
  const std::size_t inner = y.numel(), reps = x.numel() / inner;
  Tensor out(x.shape());
  auto xv = x.values(), yv = y.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < inner; ++i) ov[r * inner + i] = xv[r * inner + i] + yv[i];
  if (!tracking({&x, &y})) return out;
  return record(out, {x, y}, [inner, reps](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < inner; ++i) d[i] += g[r * inner + i];
    }
  });
}

Tensor mul_trailing(const Tensor& x, const Tensor& y) {
  if (!is_suffix(x.shape(), y.shape())) {
    throw ShapeError("mul_trailing: " + shape_str(y.shape()) + " is not a suffix of " +
                     shape_str(x.shape()));
  }
  const std::size_t inner = y.numel(), reps = x.numel() / inner;
  Tensor out(x.shape());
  auto xv = x.values(), yv = y.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < inner; ++i) ov[r * inner + i] = xv[r * inner + i] * yv[i];
  if (!tracking({&x, &y})) return out;
  return record(out, {x, y}, [inner, reps](const Tensor& o, std::span<Tensor> in) {
    auto g = o.grad();
    auto xv = in[0].values(), yv = in[1].values();
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < inner; ++i) d[r * inner + i] += g[r * inner + i] * yv[i];
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < inner; ++i) d[i] += g[r * inner + i] * xv[r * inner + i];
    }
  });
}

Tensor mul_leading(const Tensor& x, const Tensor& g) {
  if (!is_prefix(x.shape(), g.shape())) {
    throw ShapeError("mul_leading: " + shape_str(g.shape()) + " is not a prefix of " +
                     shape_str(x.shape()));
  }
  const std::size_t outer = g.numel(), inner = x.numel() / outer;
  Tensor out(x.shape());
  auto xv = x.values(), gv = g.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < outer; ++r)
    for (std::size_t i = 0; i < inner; ++i) ov[r * inner + i] = xv[r * inner + i] * gv[r];
  if (!tracking({&x, &g})) return out;
  return record(out, {x, g}, [outer, inner](const Tensor& o, std::span<Tensor> in) {
    auto go = o.grad();
    auto xv = in[0].values(), gv = in[1].values();
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t i = 0; i < inner; ++i) d[r * inner + i] += go[r * inner + i] * gv[r];
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t r = 0; r < outer; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) acc += go[r * inner + i] * xv[r * inner + i];
        d[r] += acc;
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor activate(const Tensor& x, Activation f) {
  switch (f) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kGelu:
      return gelu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
  }
  return x;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), n = s[axis], inner = prod(s, axis + 1, s.size());
  Tensor out(s);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        ov[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) ov[base + j * inner] /= total;
    }
  if (!tracking({&x})) return out;
  return record(out, {x}, [outer, n, inner](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto y = o.values();
    auto d = in[0].grad_buffer();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = a * n * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t p = base + j * inner;
          d[p] += y[p] * (g[p] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match last axis of " +
                     shape_str(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double denom = var + eps;
    rstd[r] = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * n + j] = h;
      ov[r * n + j] = gv[j] * h + bv[j];
    }
  }
  if (!tracking({&x, &gamma, &beta})) return out;
  return record(out, {x, gamma, beta},
                [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
                    const Tensor& o, std::span<Tensor> in) {
                  auto g = o.grad();
                  auto gv = in[1].values();
                  if (in[1].requires_grad()) {
                    auto d = in[1].grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j] * xhat[r * n + j];
                  }
                  if (in[2].requires_grad()) {
                    auto d = in[2].grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
                  }
                  if (!in[0].requires_grad()) return;
                  auto d = in[0].grad_buffer();
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double dh = g[r * n + j] * gv[j];
                      m1 += dh;
                      m2 += dh * xhat[r * n + j];
                    }
                    m1 *= inv_n;
                    m2 *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double dh = g[r * n + j] * gv[j];
                      d[r * n + j] += rstd[r] * (dh - m1 - xhat[r * n + j] * m2);
                    }
                  }
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (!tracking({&x})) return out;
  return record(out, {x}, [](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    const double g = o.grad()[0];
    for (auto& d : in[0].grad_buffer()) d += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (!tracking({&x})) return out;
  return record(out, {x}, [](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto d = in[0].grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    }
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const std::size_t outer = prod(first, 0, axis), inner = prod(first, axis + 1, first.size());
  Tensor out(out_shape);
  auto ov = out.values();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.dim(axis) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len), len,
                  ov.begin() + static_cast<std::ptrdiff_t>(o * total * inner + off * inner));
    }
    off += p.dim(axis);
  }
  bool any = false;
  for (const auto& p : parts) any = any || tracking({&p});
  if (!any) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record(out, std::move(inputs),
                [axis, outer, inner, total, offsets](const Tensor& o, std::span<Tensor> in) {
                  auto g = o.grad();
                  for (std::size_t k = 0; k < in.size(); ++k) {
                    if (!in[k].requires_grad()) continue;
                    const std::size_t len = in[k].dim(axis) * inner;
                    auto d = in[k].grad_buffer();
                    for (std::size_t a = 0; a < outer; ++a)
                      for (std::size_t i = 0; i < len; ++i)
                        d[a * len + i] += g[a * total * inner + offsets[k] * inner + i];
                  }
                });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") on axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()),
                    extent = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * extent + start) * inner),
                length * inner, ov.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
  }
  if (!tracking({&x})) return out;
  return record(out, {x},
                [outer, inner, extent, start, length](const Tensor& o, std::span<Tensor> in) {
                  if (!in[0].requires_grad()) return;
                  auto g = o.grad();
                  auto d = in[0].grad_buffer();
                  for (std::size_t a = 0; a < outer; ++a)
                    for (std::size_t i = 0; i < length * inner; ++i)
                      d[(a * extent + start) * inner + i] += g[a * length * inner + i];
                });
}

Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
  if (axis >= x.rank() || indices.empty()) {
    throw ShapeError("index_select: invalid axis or empty index list for " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()),
                    extent = s[axis], count = indices.size();
  for (auto idx : indices) {
    if (idx >= extent) throw ShapeError("index_select: index out of range");
  }
  Shape out_shape = s;
  out_shape[axis] = count;
  Tensor out(out_shape);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < count; ++c)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * extent + indices[c]) * inner),
                  inner, ov.begin() + static_cast<std::ptrdiff_t>((o * count + c) * inner));
  if (!tracking({&x})) return out;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record(out, {x},
                [outer, inner, extent, idx = std::move(idx)](const Tensor& o,
                                                             std::span<Tensor> in) {
                  if (!in[0].requires_grad()) return;
                  auto g = o.grad();
                  auto d = in[0].grad_buffer();
                  const std::size_t count = idx.size();
                  for (std::size_t a = 0; a < outer; ++a)
                    for (std::size_t c = 0; c < count; ++c)
                      for (std::size_t i = 0; i < inner; ++i)
                        d[(a * extent + idx[c]) * inner + i] += g[(a * count + c) * inner + i];
                });
}

Tensor stitch(std::span<const Tensor> pieces, std::span<const std::vector<std::size_t>> positions,
              std::size_t axis, std::size_t extent) {
  if (pieces.empty() || pieces.size() != positions.size()) {
    throw ShapeError("stitch: pieces and position lists disagree");
  }
  const Shape& first = pieces[0].shape();
  if (axis >= first.size()) throw ShapeError("stitch: axis out of range");
  std::vector<int> seen(extent, 0);
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto& s = pieces[k].shape();
    bool ok = s.size() == first.size() && s[axis] == positions[k].size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("stitch: piece shape " + shape_str(s) + " is inconsistent");
    for (auto p : positions[k]) {
      if (p >= extent || seen[p]++) throw ShapeError("stitch: positions do not partition the axis");
    }
  }
  for (int c : seen) {
    if (c != 1) throw ShapeError("stitch: positions do not cover the axis");
  }
  Shape out_shape = first;
  out_shape[axis] = extent;
  const std::size_t outer = prod(first, 0, axis), inner = prod(first, axis + 1, first.size());
  Tensor out(out_shape);
  auto ov = out.values();
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    auto pv = pieces[k].values();
    const auto& pos = positions[k];
    const std::size_t cnt = pos.size();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < cnt; ++c)
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>((o * cnt + c) * inner), inner,
                    ov.begin() + static_cast<std::ptrdiff_t>((o * extent + pos[c]) * inner));
  }
  bool any = false;
  for (const auto& p : pieces) any = any || tracking({&p});
  if (!any) return out;
  std::vector<Tensor> inputs(pieces.begin(), pieces.end());
  std::vector<std::vector<std::size_t>> pos(positions.begin(), positions.end());
  return record(out, std::move(inputs),
                [outer, inner, extent, pos = std::move(pos)](const Tensor& o,
                                                             std::span<Tensor> in) {
                  auto g = o.grad();
                  for (std::size_t k = 0; k < in.size(); ++k) {
                    if (!in[k].requires_grad()) continue;
                    auto d = in[k].grad_buffer();
                    const std::size_t cnt = pos[k].size();
                    for (std::size_t a = 0; a < outer; ++a)
                      for (std::size_t c = 0; c < cnt; ++c)
                        for (std::size_t i = 0; i < inner; ++i)
                          d[(a * cnt + c) * inner + i] += g[(a * extent + pos[k][c]) * inner + i];
                  }
                });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& lead) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be a matrix");
  if (shape_numel(lead) != ids.size()) throw ShapeError("embedding: id count does not match shape");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }
  Shape out_shape = lead;
  out_shape.push_back(d);
  Tensor out(out_shape);
  auto tv = table.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                ov.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  if (!tracking({&table})) return out;
  std::vector<int> idv(ids.begin(), ids.end());
  return record(out, {table}, [d, idv = std::move(idv)](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto dt = in[0].grad_buffer();
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        dt[static_cast<std::size_t>(idv[i]) * d + j] += g[i * d + j];
  });
}

Tensor repeat_leading(const Tensor& x, std::size_t n) {
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  Tensor out(out_shape);
  auto xv = x.values();
  auto ov = out.values();
  const std::size_t inner = xv.size();
  for (std::size_t r = 0; r < n; ++r)
    std::copy(xv.begin(), xv.end(), ov.begin() + static_cast<std::ptrdiff_t>(r * inner));
  if (!tracking({&x})) return out;
  return record(out, {x}, [n, inner](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    auto g = o.grad();
    auto d = in[0].grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < inner; ++i) d[i] += g[r * inner + i];
  });
}

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
  if (x.rank() != 3 || mask.rank() != 2 || mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(1)) {
    throw ShapeError("masked_mean: mask " + shape_str(mask.shape()) + " does not fit " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), s = x.dim(1), c = x.dim(2);
  std::vector<double> inv(n, 0.0);
  auto mv = mask.values();
  for (std::size_t i = 0; i < n; ++i) {
    double cnt = 0.0;
    for (std::size_t t = 0; t < s; ++t) cnt += mv[i * s + t];
    inv[i] = cnt > 0.0 ? 1.0 / cnt : 0.0;
  }
  Tensor out(Shape{n, c});
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < s; ++t) {
      const double w = mv[i * s + t] * inv[i];
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) ov[i * c + j] += w * xv[(i * s + t) * c + j];
    }
  if (!tracking({&x})) return out;
  return record(out, {x, mask},
                [n, s, c, inv = std::move(inv)](const Tensor& o, std::span<Tensor> in) {
                  if (!in[0].requires_grad()) return;
                  auto g = o.grad();
                  auto mv = in[1].values();
                  auto d = in[0].grad_buffer();
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t t = 0; t < s; ++t) {
                      const double w = mv[i * s + t] * inv[i];
                      if (w == 0.0) continue;
                      for (std::size_t j = 0; j < c; ++j) d[(i * s + t) * c + j] += w * g[i * c + j];
                    }
                });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask,
                 std::size_t heads) {
  if (q.rank() != 3 || k.rank() != 3 || v.shape() != k.shape() || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2)) {
    throw ShapeError("attention: incompatible q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t n = q.dim(0), sq = q.dim(1), sk = k.dim(1), d = q.dim(2);
  if (key_mask.shape() != Shape{n, sk}) {
    throw ShapeError("attention: key mask " + shape_str(key_mask.shape()) + " does not match keys " +
                     shape_str(k.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible into " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto di = static_cast<Eigen::Index>(d);
  const auto sqi = static_cast<Eigen::Index>(sq), ski = static_cast<Eigen::Index>(sk),
             dhi = static_cast<Eigen::Index>(dh);

  // probs[(b * heads + h) * sq * sk + i * sk + j]
  std::vector<double> probs(n * heads * sq * sk);
  Tensor out(q.shape());
  auto mv = key_mask.values();
  RowMat scores(sqi, ski);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStridedMap qh(q.values().data() + b * sq * d + h * dh, sqi, dhi, Strided(di));
      ConstStridedMap kh(k.values().data() + b * sk * d + h * dh, ski, dhi, Strided(di));
      ConstStridedMap vh(v.values().data() + b * sk * d + h * dh, ski, dhi, Strided(di));
      scores.noalias() = (qh * kh.transpose()) * inv_scale;
      MatMap p(probs.data() + (b * heads + h) * sq * sk, sqi, ski);
      for (Eigen::Index i = 0; i < sqi; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < ski; ++j)
          if (mv[b * sk + static_cast<std::size_t>(j)] != 0.0) mx = std::max(mx, scores(i, j));
        double total = 0.0;
        for (Eigen::Index j = 0; j < ski; ++j) {
          const double e =
              mv[b * sk + static_cast<std::size_t>(j)] != 0.0 ? std::exp(scores(i, j) - mx) : 0.0;
          p(i, j) = e;
          total += e;
        }
        if (total > 0.0) p.row(i) /= total;
      }
      StridedMap oh(out.values().data() + b * sq * d + h * dh, sqi, dhi, Strided(di));
      oh.noalias() = p * vh;
    }
  if (!tracking({&q, &k, &v})) return out;
  return record(
      out, {q, k, v},
      [n, sq, sk, d, dh, heads, inv_scale, probs = std::move(probs)](const Tensor& o,
                                                                     std::span<Tensor> in) {
        const auto di = static_cast<Eigen::Index>(d);
        const auto sqi = static_cast<Eigen::Index>(sq), ski = static_cast<Eigen::Index>(sk),
                   dhi = static_cast<Eigen::Index>(dh);
        const bool gq = in[0].requires_grad(), gk = in[1].requires_grad(),
                   gv = in[2].requires_grad();
        std::span<double> dq, dk, dv;
        if (gq) dq = in[0].grad_buffer();
        if (gk) dk = in[1].grad_buffer();
        if (gv) dv = in[2].grad_buffer();
        auto g = o.grad();
        RowMat dp(sqi, ski), ds(sqi, ski);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t qoff = b * sq * d + h * dh, koff = b * sk * d + h * dh;
            ConstStridedMap qh(in[0].values().data() + qoff, sqi, dhi, Strided(di));
            ConstStridedMap kh(in[1].values().data() + koff, ski, dhi, Strided(di));
            ConstStridedMap vh(in[2].values().data() + koff, ski, dhi, Strided(di));
            ConstStridedMap goh(g.data() + qoff, sqi, dhi, Strided(di));
            ConstMatMap p(probs.data() + (b * heads + h) * sq * sk, sqi, ski);
            if (gv) {
              StridedMap dvh(dv.data() + koff, ski, dhi, Strided(di));
              dvh.noalias() += p.transpose() * goh;
            }
            if (!gq && !gk) continue;
            dp.noalias() = goh * vh.transpose();
            for (Eigen::Index i = 0; i < sqi; ++i) {
              const double dot = dp.row(i).dot(p.row(i));
              ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            ds *= inv_scale;
            if (gq) {
              StridedMap dqh(dq.data() + qoff, sqi, dhi, Strided(di));
              dqh.noalias() += ds * kh;
            }
            if (gk) {
              StridedMap dkh(dk.data() + koff, ski, dhi, Strided(di));
              dkh.noalias() += ds.transpose() * qh;
            }
          }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  auto lv = logits.values();
  std::vector<double> probs(n * c, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= c) throw InputError("cross_entropy: label out of range");
    const double* row = lv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx) / z;
    total += -(row[labels[i]] - mx - std::log(z));
    ++counted;
  }
  const double inv = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  Tensor out = Tensor::scalar(total * inv);
  if (!tracking({&logits})) return out;
  std::vector<int> lab(labels.begin(), labels.end());
  return record(out, {logits},
                [n, c, inv, probs = std::move(probs), lab = std::move(lab)](const Tensor& o,
                                                                            std::span<Tensor> in) {
                  if (!in[0].requires_grad()) return;
                  const double g = o.grad()[0] * inv;
                  auto d = in[0].grad_buffer();
                  for (std::size_t i = 0; i < n; ++i) {
                    if (lab[i] < 0) continue;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                      d[i * c + j] += g * (probs[i * c + j] - onehot);
                    }
                  }
                });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  Tensor diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

}  // namespace adapters
