// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "tokreg/errors.hpp"

namespace tokreg::numerics {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::atomic<BackwardFault> g_fault{BackwardFault::kNone};

// Multiplier applied to a backward rule's output when its fault is injected.
double fault_factor(BackwardFault which) {
  return g_fault.load(std::memory_order_relaxed) == which ? 1.01 : 1.0;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::logic_error("operands recorded on different tapes");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

ConstMatMap as_matrix(const Tensor& t) { return ConstMatMap(t.raw(), t.rows(), t.cols()); }
MatMap as_matrix(Tensor& t) { return MatMap(t.raw(), t.rows(), t.cols()); }

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// rows x cols block starting at column `offset` of a row-major buffer whose
// rows are `stride` apart.
ConstStridedMap head_block(const double* base, std::size_t offset, Eigen::Index rows,
                           std::size_t cols, std::size_t stride) {
  return ConstStridedMap(base + offset, rows, static_cast<Eigen::Index>(cols),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}
StridedMap head_block(double* base, std::size_t offset, Eigen::Index rows, std::size_t cols,
                      std::size_t stride) {
  return StridedMap(base + offset, rows, static_cast<Eigen::Index>(cols),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(stride)));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

// tanh(sqrt(2/pi) * (v + 0.044715 v^3)) written through exp, which vectorizes.
Eigen::ArrayXd gelu_tanh(const ConstArrayMap& v) {
  const Eigen::ArrayXd u = kGeluC * (v + kGeluA * v.cube());
  return 1.0 - 2.0 / (1.0 + (2.0 * u).exp());
}

}  // namespace

void inject_backward_fault(BackwardFault fault) noexcept { g_fault.store(fault); }
BackwardFault active_backward_fault() noexcept { return g_fault.load(); }

double stable_sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) noexcept {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> row) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : row) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(av.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  Tensor out(Shape{av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const double f = fault_factor(BackwardFault::kMatmul);
    auto g = as_matrix(*tp.grad(self));
    if (tp.requires_grad(ai)) {
      as_matrix(tp.grad_buffer(ai)).noalias() += f * g * as_matrix(tp.value(bi)).transpose();
    }
    if (tp.requires_grad(bi)) {
      as_matrix(tp.grad_buffer(bi)).noalias() += as_matrix(tp.value(ai)).transpose() * g;
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self)->data();
    for (std::size_t in : {ai, bi}) {
      if (!tp.requires_grad(in)) continue;
      auto d = tp.grad_buffer(in).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self)->data();
    if (tp.requires_grad(ai)) {
      auto d = tp.grad_buffer(ai).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      auto d = tp.grad_buffer(bi).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  out.set_requires_grad(false);
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self)->data();
    if (tp.requires_grad(ai)) {
      const auto other = tp.value(bi).data();
      auto d = tp.grad_buffer(ai).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
    if (tp.requires_grad(bi)) {
      const auto other = tp.value(ai).data();
      auto d = tp.grad_buffer(bi).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  out.set_requires_grad(false);
  for (double& v : out.data()) v *= factor;
  const std::size_t ai = a.id();
  return t.record(std::move(out), {ai}, [ai, factor](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self)->data();
    auto d = tp.grad_buffer(ai).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_row(Var x, Var bias) {
  require_same_tape(x, bias);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.size() != xv.cols()) {
    throw DimensionError("add_row: shapes " + shape_to_string(xv.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  Tensor out = xv;
  out.set_requires_grad(false);
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.raw() + r * m;
    for (std::size_t c = 0; c < m; ++c) row[c] += bv[c];
  }
  const std::size_t xi = x.id(), bi = bias.id();
  return t.record(std::move(out), {xi, bi}, [xi, bi, n, m](Tape& tp, std::size_t self) {
    const Tensor& g = *tp.grad(self);
    if (tp.requires_grad(xi)) {
      auto d = tp.grad_buffer(xi).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor& d = tp.grad_buffer(bi);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = g.raw() + r * m;
        for (std::size_t c = 0; c < m; ++c) d[c] += row[c];
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  const std::size_t v = tv.rows(), d = tv.cols();
  Tensor out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(tv.raw() + static_cast<std::size_t>(ids[i]) * d, d, out.raw() + i * d);
  }
  const std::size_t ti = table.id();
  std::vector<int> id_copy(ids.begin(), ids.end());
  return t.record(std::move(out), {ti},
                  [ti, d, id_copy = std::move(id_copy)](Tape& tp, std::size_t self) {
                    const Tensor& g = *tp.grad(self);
                    Tensor& dt = tp.grad_buffer(ti);
                    for (std::size_t i = 0; i < id_copy.size(); ++i) {
                      double* dst = dt.raw() + static_cast<std::size_t>(id_copy[i]) * d;
                      const double* src = g.raw() + i * d;
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out(Shape{rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " >= " +
                                       std::to_string(n));
    std::copy_n(xv.raw() + rows[i] * m, m, out.raw() + i * m);
  }
  const std::size_t xi = x.id();
  std::vector<std::size_t> row_copy(rows.begin(), rows.end());
  return t.record(std::move(out), {xi},
                  [xi, m, row_copy = std::move(row_copy)](Tape& tp, std::size_t self) {
                    const Tensor& g = *tp.grad(self);
                    Tensor& dx = tp.grad_buffer(xi);
                    for (std::size_t i = 0; i < row_copy.size(); ++i) {
                      double* dst = dx.raw() + row_copy[i] * m;
                      const double* src = g.raw() + i * m;
                      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
                    }
                  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: gamma/beta width does not match " +
                         shape_to_string(xv.shape()));
  }
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  Tensor out(xv.shape());
  std::vector<double> xhat(n * d);
  std::vector<double> rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.raw() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * rstd[r];
      xhat[r * d + c] = h;
      out[r * d + c] = gv[c] * h + bv[c];
    }
  }
  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return t.record(
      std::move(out), {xi, gi, bi},
      [xi, gi, bi, n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp,
                                                                         std::size_t self) {
        const Tensor& g = *tp.grad(self);
        const auto gv = tp.value(gi).data();
        if (tp.requires_grad(gi) || tp.requires_grad(bi)) {
          Tensor* dg = tp.requires_grad(gi) ? &tp.grad_buffer(gi) : nullptr;
          Tensor* db = tp.requires_grad(bi) ? &tp.grad_buffer(bi) : nullptr;
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              const double gg = g[r * d + c];
              if (dg) (*dg)[c] += gg * xhat[r * d + c];
              if (db) (*db)[c] += gg;
            }
          }
        }
        if (!tp.requires_grad(xi)) return;
        Tensor& dx = tp.grad_buffer(xi);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < n; ++r) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dh = g[r * d + c] * gv[c];
            sum_dh += dh;
            sum_dh_h += dh * xhat[r * d + c];
          }
          for (std::size_t c = 0; c < d; ++c) {
            const double dh = g[r * d + c] * gv[c];
            dx[r * d + c] +=
                rstd[r] * (dh - inv_d * sum_dh - xhat[r * d + c] * inv_d * sum_dh_h);
          }
        }
      });
}

Var gelu(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  const auto n = static_cast<Eigen::Index>(xv.size());
  const ConstArrayMap v(xv.raw(), n);
  ArrayMap(out.raw(), n) = 0.5 * v * (1.0 + gelu_tanh(v));
  const std::size_t xi = x.id();
  return t.record(std::move(out), {xi}, [xi, n](Tape& tp, std::size_t self) {
    const ConstArrayMap g(tp.grad(self)->raw(), n);
    const ConstArrayMap v(tp.value(xi).raw(), n);
    const Eigen::ArrayXd th = gelu_tanh(v);
    const Eigen::ArrayXd du = kGeluC * (1.0 + 3.0 * kGeluA * v.square());
    ArrayMap(tp.grad_buffer(xi).raw(), n) +=
        g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th.square()) * du);
  });
}

Var causal_attention(Var qkv, std::span<const std::size_t> lengths, std::size_t seq_len,
                     std::size_t n_heads) {
  Tape& t = tape_of(qkv);
  const Tensor& in = qkv.value();
  const std::size_t batch = lengths.size();
  if (in.rank() != 2 || in.rows() != batch * seq_len || in.cols() % 3 != 0 ||
      (in.cols() / 3) % n_heads != 0) {
    throw DimensionError("causal_attention: qkv shape " + shape_to_string(in.shape()) +
                         " incompatible with batch " + std::to_string(batch) + ", length " +
                         std::to_string(seq_len) + ", heads " + std::to_string(n_heads));
  }
  const std::size_t d = in.cols() / 3;
  const std::size_t dh = d / n_heads;
  const std::size_t width = 3 * d;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t len : lengths) {
    if (len > seq_len) throw DimensionError("causal_attention: length exceeds padded length");
  }

  Tensor out(Shape{batch * seq_len, d});
  // One lower-triangular lengths[b] x lengths[b] probability block per (b, h).
  std::vector<RowMatrix> probs(batch * n_heads);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto len = static_cast<Eigen::Index>(lengths[b]);
    if (len == 0) continue;
    const double* base = in.raw() + b * seq_len * width;
    for (std::size_t h = 0; h < n_heads; ++h) {
      const auto q = head_block(base, h * dh, len, dh, width);
      const auto k = head_block(base, d + h * dh, len, dh, width);
      const auto v = head_block(base, 2 * d + h * dh, len, dh, width);
      RowMatrix& p = probs[b * n_heads + h];
      p.noalias() = inv_sqrt * (q * k.transpose());
      for (Eigen::Index r = 0; r < len; ++r) {
        auto row = p.row(r);
        const double mx = row.head(r + 1).maxCoeff();
        row.head(r + 1) = (row.head(r + 1).array() - mx).exp();
        row.head(r + 1) /= row.head(r + 1).sum();
        row.tail(len - r - 1).setZero();
      }
      head_block(out.raw() + b * seq_len * d, h * dh, len, dh, d).noalias() = p * v;
    }
  }

  const std::size_t qi = qkv.id();
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  return t.record(
      std::move(out), {qi},
      [qi, seq_len, n_heads, d, dh, width, inv_sqrt, lens = std::move(lens),
       probs = std::move(probs)](Tape& tp, std::size_t self) {
        const Tensor& g = *tp.grad(self);
        const Tensor& in = tp.value(qi);
        Tensor& din = tp.grad_buffer(qi);
        RowMatrix ds;
        for (std::size_t b = 0; b < lens.size(); ++b) {
          const auto len = static_cast<Eigen::Index>(lens[b]);
          if (len == 0) continue;
          const double* base = in.raw() + b * seq_len * width;
          double* dbase = din.raw() + b * seq_len * width;
          const double* gbase = g.raw() + b * seq_len * d;
          for (std::size_t h = 0; h < n_heads; ++h) {
            const RowMatrix& p = probs[b * n_heads + h];
            const auto q = head_block(base, h * dh, len, dh, width);
            const auto k = head_block(base, d + h * dh, len, dh, width);
            const auto v = head_block(base, 2 * d + h * dh, len, dh, width);
            const auto go = head_block(gbase, h * dh, len, dh, d);
            head_block(dbase, 2 * d + h * dh, len, dh, width).noalias() += p.transpose() * go;
            ds.noalias() = go * v.transpose();
            const Eigen::VectorXd dot = (ds.array() * p.array()).rowwise().sum();
            ds = (p.array() * (ds.colwise() - dot).array()) * inv_sqrt;
            head_block(dbase, h * dh, len, dh, width).noalias() += ds * k;
            head_block(dbase, d + h * dh, len, dh, width).noalias() += ds.transpose() * q;
          }
        }
      });
}

Var log_softmax_gather(Var logits, std::span<const int> targets) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.rows() != targets.size()) {
    throw DimensionError("log_softmax_gather: logits " + shape_to_string(lv.shape()) + " with " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = lv.rows(), v = lv.cols();
  Tensor out(Shape{n});
  std::vector<double> lse(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw IndexError("log_softmax_gather: target " + std::to_string(targets[r]) +
                       " outside vocabulary of " + std::to_string(v));
    }
    const std::span<const double> row(lv.raw() + r * v, v);
    lse[r] = log_sum_exp(row);
    out[r] = row[static_cast<std::size_t>(targets[r])] - lse[r];
  }
  const std::size_t li = logits.id();
  std::vector<int> tgt(targets.begin(), targets.end());
  return t.record(
      std::move(out), {li},
      [li, n, v, tgt = std::move(tgt), lse = std::move(lse)](Tape& tp, std::size_t self) {
        const double f = fault_factor(BackwardFault::kLogSoftmaxGather);
        const Tensor& g = *tp.grad(self);
        const Tensor& lv = tp.value(li);
        Tensor& d = tp.grad_buffer(li);
        for (std::size_t r = 0; r < n; ++r) {
          const double gr = g[r] * f;
          if (gr == 0.0) continue;
          const double* row = lv.raw() + r * v;
          double* drow = d.raw() + r * v;
          for (std::size_t c = 0; c < v; ++c) drow[c] -= gr * std::exp(row[c] - lse[r]);
          drow[static_cast<std::size_t>(tgt[r])] += gr;
        }
      });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor out(x.value().shape());
  const auto xs = x.value().data();
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = stable_sigmoid(xs[i]);
  const std::size_t xi = x.id();
  return t.record(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const double f = fault_factor(BackwardFault::kSigmoid);
    const auto g = tp.grad(self)->data();
    const auto y = tp.value(self).data();
    auto d = tp.grad_buffer(xi).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += f * g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor out(x.value().shape());
  const auto xs = x.value().data();
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = stable_log_sigmoid(xs[i]);
  const std::size_t xi = x.id();
  return t.record(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const double f = fault_factor(BackwardFault::kSigmoid);
    const auto g = tp.grad(self)->data();
    const auto xs = tp.value(xi).data();
    auto d = tp.grad_buffer(xi).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += f * g[i] * stable_sigmoid(-xs[i]);
  });
}

Var detach(Var x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  out.set_requires_grad(false);
  return t.record_detached(std::move(out), x.id());
}

Var segment_sum(Var x, std::span<const std::size_t> segment_of, std::span<const double> weights,
                std::size_t n_segments) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (segment_of.size() != xv.size() || weights.size() != xv.size()) {
    throw DimensionError("segment_sum: " + std::to_string(xv.size()) + " values, " +
                         std::to_string(segment_of.size()) + " segment ids, " +
                         std::to_string(weights.size()) + " weights");
  }
  Tensor out(Shape{n_segments});
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (segment_of[i] == kNoSegment) continue;
    if (segment_of[i] >= n_segments) throw IndexError("segment_sum: segment id out of range");
    out[segment_of[i]] += weights[i] * xv[i];
  }
  const std::size_t xi = x.id();
  std::vector<std::size_t> seg(segment_of.begin(), segment_of.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.record(std::move(out), {xi},
                  [xi, seg = std::move(seg), w = std::move(w)](Tape& tp, std::size_t self) {
                    const Tensor& g = *tp.grad(self);
                    auto d = tp.grad_buffer(xi).data();
                    for (std::size_t i = 0; i < d.size(); ++i) {
                      if (seg[i] != kNoSegment) d[i] += w[i] * g[seg[i]];
                    }
                  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xi = x.id();
  return t.record(Tensor::scalar(s), {xi}, [xi](Tape& tp, std::size_t self) {
    const double g = (*tp.grad(self))[0];
    for (double& v : tp.grad_buffer(xi).data()) v += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace tokreg::numerics
