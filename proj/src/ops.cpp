#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "rfcm/autodiff.hpp"
#include "rfcm/errors.hpp"

namespace rfcm::ad {

namespace {

void transpose_into(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// C[m×p] += A[m×n] · B[n×p], all row-major.  Four rows of C are updated per
// pass over B so each loaded row of B feeds four multiply-adds.
void gemm_acc(const double* __restrict A, const double* __restrict B, double* __restrict C, std::size_t m,
              std::size_t n, std::size_t p) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = C + i * p;
    double* __restrict c1 = c0 + p;
    double* __restrict c2 = c1 + p;
    double* __restrict c3 = c2 + p;
    for (std::size_t k = 0; k < n; ++k) {
      const double a0 = A[i * n + k], a1 = A[(i + 1) * n + k], a2 = A[(i + 2) * n + k], a3 = A[(i + 3) * n + k];
      const double* b = B + k * p;
      for (std::size_t j = 0; j < p; ++j) {
        const double bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* c = C + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = A[i * n + k];
      const double* b = B + k * p;
      for (std::size_t j = 0; j < p; ++j) c[j] += a * b[j];
    }
  }
}

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Accumulates scale * g into the gradient of node `id` when it needs one.
void accumulate(Tape& tape, std::size_t id, std::span<const double> g, double scale = 1.0) {
  if (!tape.requires_grad(id)) return;
  auto buf = tape.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += scale * g[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.shape()[0], n = av.shape()[1], p = bv.shape()[1];
  if (bv.shape()[0] != n) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " · " +
                         shape_string(bv.shape()));
  }
  Tensor out({m, p});
  const double* A = av.data().data();
  const double* B = bv.data().data();
  double* C = out.data().data();
  gemm_acc(A, B, C, m, n, p);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, p](Tape& t, const Tensor& g) {
    const double* G = g.data().data();
    if (t.requires_grad(ia)) {
      std::vector<double> bt(p * n);
      transpose_into(t.value(ib).data().data(), n, p, bt.data());
      gemm_acc(G, bt.data(), t.grad_buffer(ia).data(), m, p, n);
    }
    if (t.requires_grad(ib)) {
      std::vector<double> at(n * m);
      transpose_into(t.value(ia).data().data(), m, n, at.data());
      gemm_acc(at.data(), G, t.grad_buffer(ib).data(), n, m, p);
    }
  });
}

namespace {

Var linear_impl(Var x, Var weight, const Var* bias) {
  same_tape(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_matrix(wv, "linear weight");
  const std::size_t m = xv.rows(), n = xv.cols(), out_dim = wv.shape()[0];
  if (wv.shape()[1] != n) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " vs weight " +
                         shape_string(wv.shape()));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().size() != out_dim)) {
    throw DimensionError("linear: bias " + shape_string(bias->value().shape()) + " vs weight " +
                         shape_string(wv.shape()));
  }
  Tensor out({m, out_dim});
  const double* X = xv.data().data();
  const double* W = wv.data().data();
  double* Y = out.data().data();
  std::vector<double> wt(n * out_dim);
  transpose_into(W, out_dim, n, wt.data());
  if (bias) {
    const double* b = bias->value().data().data();
    for (std::size_t i = 0; i < m; ++i) std::copy(b, b + out_dim, Y + i * out_dim);
  }
  gemm_acc(X, wt.data(), Y, m, n, out_dim);
  const std::size_t ix = x.id(), iw = weight.id();
  const std::size_t ib = bias ? bias->id() : ix;
  const bool has_bias = bias != nullptr;
  auto backward = [ix, iw, ib, has_bias, m, n, out_dim](Tape& t, const Tensor& g) {
    const double* G = g.data().data();
    if (t.requires_grad(ix)) {
      gemm_acc(G, t.value(iw).data().data(), t.grad_buffer(ix).data(), m, out_dim, n);
    }
    if (t.requires_grad(iw)) {
      std::vector<double> gt(out_dim * m);
      transpose_into(G, m, out_dim, gt.data());
      gemm_acc(gt.data(), t.value(ix).data().data(), t.grad_buffer(iw).data(), out_dim, m, n);
    }
    if (has_bias && t.requires_grad(ib)) {
      double* GB = t.grad_buffer(ib).data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t o = 0; o < out_dim; ++o) GB[o] += G[i * out_dim + o];
      }
    }
  };
  if (bias) return x.tape().record(std::move(out), {x, weight, *bias}, std::move(backward));
  return x.tape().record(std::move(out), {x, weight}, std::move(backward));
}

}  // namespace

Var linear(Var x, Var weight, Var bias) { return linear_impl(x, weight, &bias); }
Var linear(Var x, Var weight) { return linear_impl(x, weight, nullptr); }

Var add(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    accumulate(t, ia, g.values());
    accumulate(t, ib, g.values());
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    accumulate(t, ia, g.values());
    accumulate(t, ib, g.values(), -1.0);
  });
}

Var hadamard(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const std::size_t n = g.size();
    if (t.requires_grad(ia)) {
      const auto& bv = t.value(ib).data();
      auto ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const auto& av = t.value(ia).data();
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia, s](Tape& t, const Tensor& g) { accumulate(t, ia, g.values(), s); });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia](Tape& t, const Tensor& g) { accumulate(t, ia, g.values()); });
}

Var elementwise(Elementwise op, Var a, Var b) {
  switch (op) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::hadamard: return hadamard(a, b);
    case Elementwise::scale:
      if (b.value().size() != 1) throw DimensionError("scale expects a scalar right operand");
      return hadamard(a, a.tape().constant(Tensor::filled(a.value().shape(), b.value()[0])));
  }
  throw ContractError("unknown elementwise op");
}

Var elementwise(Elementwise op, Var a, double b) {
  switch (op) {
    case Elementwise::add: return add_scalar(a, b);
    case Elementwise::sub: return add_scalar(a, -b);
    case Elementwise::hadamard:
    case Elementwise::scale: return scale(a, b);
  }
  throw ContractError("unknown elementwise op");
}

namespace {
std::atomic<bool> g_gelu_fault{false};
}  // namespace

void set_gelu_gradient_fault(bool enabled) { g_gelu_fault = enabled; }
bool gelu_gradient_fault() { return g_gelu_fault; }

Var gelu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    const auto& xv = t.value(ix).data();
    auto gx = t.grad_buffer(ix);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const double pdf_term = g_gelu_fault ? 0.0 : 1.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + pdf_term * v * pdf);
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    const auto& xv = t.value(ix).data();
    auto gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (const auto v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (auto& v : gx) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (const auto v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor::scalar(s / n), {x}, [ix, n](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (auto& v : gx) v += g[0] / n;
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(xv.shape()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  // Softmax runs along `axis`; lanes are the independent 1-D slices.
  const bool along_cols = xv.rank() == 1 || axis == 1;
  const std::size_t lanes = along_cols ? rows : cols;
  const std::size_t len = along_cols ? cols : rows;
  const std::size_t stride = along_cols ? 1 : cols;
  auto at = [=](std::size_t lane, std::size_t i) {
    return along_cols ? lane * cols + i * stride : i * stride + lane;
  };
  Tensor out(xv.shape());
  for (std::size_t l = 0; l < lanes; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[at(l, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[at(l, i)] - mx);
      out[at(l, i)] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[at(l, i)] /= z;
  }
  const std::size_t ix = x.id();
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [ix, saved = std::move(saved), lanes, len, at](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (std::size_t l = 0; l < lanes; ++l) {
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += g[at(l, i)] * saved[at(l, i)];
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = at(l, i);
        gx[k] += saved[k] * (g[k] - dot);
      }
    }
  });
}

Var masked_softmax(Var x, std::shared_ptr<const Mask> mask) {
  const Tensor& xv = x.value();
  require_matrix(xv, "masked_softmax");
  const std::size_t rows = xv.shape()[0], cols = xv.shape()[1];
  if (!mask || mask->size() != rows * cols) {
    throw DimensionError("masked_softmax: mask does not match " + shape_string(xv.shape()));
  }
  const Mask& m = *mask;
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (m[r * cols + c]) {
        mx = std::max(mx, xv.at(r, c));
        any = true;
      }
    }
    if (!any) throw ContractError("masked_softmax: row " + std::to_string(r) + " has no allowed column");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!m[r * cols + c]) continue;
      const double e = std::exp(xv.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  const std::size_t ix = x.id();
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [ix, saved = std::move(saved), rows, cols](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * saved.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += saved.at(r, c) * (g.at(r, c) - dot);
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.value().shape()) + " vs input " +
                         shape_string(xv.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const auto& gv = gain.value().data();
  const auto& bv = bias.value().data();
  Tensor out(xv.shape());
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xv.at(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double e = xv.at(r, c) - mu;
      var += e * e;
    }
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xv.at(r, c) - mu) * inv_std[r];
      normalized.at(r, c) = xh;
      out.at(r, c) = gv[c] * xh + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        if (t.requires_grad(ix)) {
          const auto& gv = t.value(ig).data();
          auto gx = t.grad_buffer(ix);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double gh = g.at(r, c) * gv[c];
              mean_g += gh;
              mean_gx += gh * normalized.at(r, c);
            }
            mean_g *= inv_d;
            mean_gx *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const double gh = g.at(r, c) * gv[c];
              gx[r * d + c] += inv_std[r] * (gh - mean_g - normalized.at(r, c) * mean_gx);
            }
          }
        }
        if (t.requires_grad(ig)) {
          auto gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) gg[c] += g.at(r, c) * normalized.at(r, c);
          }
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) gb[c] += g.at(r, c);
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows(), vocab = lv.cols();
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  Tensor probs(lv.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[r]) + " >= vocabulary " +
                       std::to_string(vocab));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < vocab; ++c) mx = std::max(mx, lv.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      const double e = std::exp(lv.at(r, c) - mx);
      probs.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < vocab; ++c) probs.at(r, c) /= z;
    total += -(lv.at(r, targets[r]) - mx - std::log(z));
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const std::size_t il = logits.id();
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(total * inv_rows), {logits},
      [il, probs = std::move(probs), tgt = std::move(tgt), inv_rows, rows, vocab](Tape& t, const Tensor& g) {
        auto gl = t.grad_buffer(il);
        const double s = g[0] * inv_rows;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < vocab; ++c) {
            const double onehot = c == tgt[r] ? 1.0 : 0.0;
            gl[r * vocab + c] += s * (probs.at(r, c) - onehot);
          }
        }
      });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Tensor& first = parts[0].value();
  const bool vectors = first.rank() == 1;
  if (axis > 1 || (vectors && axis != 0)) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for " + shape_string(first.shape()));
  }
  // Stacking rows (or vectors) copies contiguous blocks; axis 1 interleaves.
  const bool blocks = vectors || axis == 0;
  const std::size_t rows = first.rows(), cols = first.cols();
  std::vector<std::size_t> ids, extents;
  std::size_t total = 0;
  for (const Var p : parts) {
    same_tape(parts[0], p);
    const Tensor& v = p.value();
    if (v.rank() != first.rank()) throw DimensionError("concat: rank mismatch");
    if (!vectors && axis == 0 && v.cols() != cols) {
      throw DimensionError("concat axis 0: column mismatch " + shape_string(first.shape()) + " vs " +
                           shape_string(v.shape()));
    }
    if (!vectors && axis == 1 && v.rows() != rows) {
      throw DimensionError("concat axis 1: row mismatch " + shape_string(first.shape()) + " vs " +
                           shape_string(v.shape()));
    }
    ids.push_back(p.id());
    const std::size_t extent = vectors ? v.size() : (axis == 0 ? v.rows() : v.cols());
    extents.push_back(extent);
    total += extent;
  }
  const Shape shape = vectors ? Shape{total} : (axis == 0 ? Shape{total, cols} : Shape{rows, total});
  Tensor out(shape);
  const std::size_t unit = vectors ? 1 : cols;
  const std::size_t out_cols = out.cols();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    if (blocks) {
      std::copy(v.data().begin(), v.data().end(),
                out.data().begin() + static_cast<std::ptrdiff_t>(offset * unit));
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < extents[k]; ++c) out.at(r, offset + c) = v.at(r, c);
      }
    }
    offset += extents[k];
  }
  return parts[0].tape().record(
      std::move(out), parts, [ids, extents, blocks, unit, rows, out_cols](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            auto gk = t.grad_buffer(ids[k]);
            if (blocks) {
              for (std::size_t i = 0; i < extents[k] * unit; ++i) gk[i] += g[offset * unit + i];
            } else {
              for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < extents[k]; ++c) {
                  gk[r * extents[k] + c] += g[r * out_cols + offset + c];
                }
              }
            }
          }
          offset += extents[k];
        }
      });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var flatten(Var x) { return reshape(x, {x.value().size()}); }

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("reshape: " + shape_string(x.value().shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.value().data());
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix](Tape& t, const Tensor& g) { accumulate(t, ix, g.values()); });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "transpose");
  const std::size_t r = xv.shape()[0], c = xv.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, r, c](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (count == 0 || begin + count > xv.shape()[0]) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_string(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  const auto first = xv.data().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  Tensor out({count, cols}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols)));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, cols](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t rows = xv.shape()[0], cols = xv.shape()[1];
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_string(xv.shape()));
  }
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = xv.at(r, begin + c);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, count, rows, cols](Tape& t, const Tensor& g) {
    auto gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) gx[r * cols + begin + c] += g[r * count + c];
    }
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding_lookup");
  const std::size_t vocab = tv.shape()[0], d = tv.shape()[1];
  if (ids.empty()) throw ContractError("embedding_lookup with no ids");
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " >= table rows " +
                       std::to_string(vocab));
    }
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = tv.at(ids[i], c);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [it, rows = std::move(rows), d](Tape& t, const Tensor& g) {
    auto gt = t.grad_buffer(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) gt[rows[i] * d + c] += g[i * d + c];
    }
  });
}

}  // namespace rfcm::ad
