#include "sisr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "sisr/error.hpp"

namespace sisr::ad {

namespace {

// Wraps a freshly computed value into a Tensor, recording it on the active
// tape when any input needs a gradient.
template <typename Backward>
Tensor finish(Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, const char* op,
              Backward&& backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  Tape* tape = Tape::active();
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (tape != nullptr && any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor* in : inputs) node->inputs.push_back(in->node());
    node->backward = std::forward<Backward>(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

Tensor finish_n(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                const char* op, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  Tape* tape = Tape::active();
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (tape != nullptr && any) {
    node->requires_grad = true;
    for (const Tensor& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input `i`, or nullptr when it does not need one.
double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMatrix>;
using View = Eigen::Map<RowMatrix>;

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  View(c, mi, ni).noalias() += ConstView(a, mi, ki) * ConstView(b, ki, ni);
}

// C[m x k] += D[m x n] * B^T with B[k x n]
void gemm_nt(const double* d, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  View(c, mi, ki).noalias() += ConstView(d, mi, ni) * ConstView(b, ki, ni).transpose();
}

// C[k x n] += A^T * D with A[m x k], D[m x n]
void gemm_tn(const double* a, const double* d, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  View(c, ki, ni).noalias() += ConstView(a, mi, ki).transpose() * ConstView(d, mi, ni);
}

std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return finish({m, n}, std::move(out), {&a, &b}, "matmul", [m, k, n](Node& self) {
    const Node& na = *self.inputs[0];
    const Node& nb = *self.inputs[1];
    if (double* ga = grad_of(self, 0)) {
      // dA = dC * B^T
      gemm_nt(self.grad.data(), nb.data.data(), ga, m, k, n);
    }
    if (double* gb = grad_of(self, 1)) {
      // dB = A^T * dC
      gemm_tn(na.data.data(), self.grad.data(), gb, m, k, n);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  return finish({c, r}, transposed(a.data().data(), r, c), {&a}, "transpose",
                [r, c](Node& self) {
                  if (double* ga = grad_of(self, 0)) {
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, "add", [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, "sub", [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, "mul", [](Node& self) {
    const auto& da = self.inputs[0]->data;
    const auto& db = self.inputs[1]->data;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * db[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * da[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return finish(a.shape(), std::move(out), {&a}, "scale", [factor](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t c = a.cols();
  if (bias.numel() != c) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not match rows of " +
                     shape_string(a.shape()));
  }
  const std::size_t r = a.numel() / c;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] + bias[j];
  return finish(a.shape(), std::move(out), {&a, &bias}, "add_bias", [r, c](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
  });
}

Tensor gelu(const Tensor& a) {
  // tanh approximation
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  }
  return finish(a.shape(), std::move(out), {&a}, "gelu", [](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& xs = self.inputs[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = xs[i];
      const double u = kC * (x + kA * x * x * x);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * x * x);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
    }
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
  return finish(a.shape(), std::move(out), {&a}, "square", [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const auto& xs = self.inputs[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += 2.0 * xs[i] * self.grad[i];
    }
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a[i], kLogFloor));
  return finish(a.shape(), std::move(out), {&a}, "log", [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const auto& xs = self.inputs[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xs[i] > kLogFloor) g[i] += self.grad[i] / xs[i];
    }
  });
}

Tensor row_norms(const Tensor& a) {
  const std::size_t c = a.cols(), r = a.numel() / c;
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a[i * c + j] * a[i * c + j];
    out[i] = std::sqrt(s);
  }
  return finish({r}, std::move(out), {&a}, "row_norms", [r, c](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    const auto& xs = self.inputs[0]->data;
    for (std::size_t i = 0; i < r; ++i) {
      const double norm = self.data[i];
      if (norm == 0.0) continue;  // subgradient 0 at the origin
      const double f = self.grad[i] / norm;
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += f * xs[i * c + j];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_string(x.shape()));
  }
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double e = std::exp(x[base + t * inner] - mx);
        out[base + t * inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= total;
    }
  }
  return finish(shape, std::move(out), {&x}, "softmax", [outer, inner, len](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t)
          dot += self.grad[base + t * inner] * self.data[base + t * inner];
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t p = base + t * inner;
          g[p] += self.data[p] * (self.grad[p] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t c = x.cols(), r = x.numel() / c;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return finish(x.shape(), std::move(out), {&x}, "log_softmax", [r, c](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += self.grad[i * c + j] - std::exp(self.data[i * c + j]) * gsum;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (d < 2) {
    throw ShapeError("layer_norm: degenerate normalized dimension " + std::to_string(d) +
                     " (need at least 2)");
  }
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not match width " + std::to_string(d));
  }
  const std::size_t r = x.numel() / d;
  std::vector<double> out(x.numel());
  // Saved per-row inverse std and normalized values for backward.
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * is;
      out[i * d + j] = xhat[i * d + j] * gain[j] + bias[j];
    }
  }
  return finish(x.shape(), std::move(out), {&x, &gain, &bias}, "layer_norm",
                [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  const auto& gn = self.inputs[1]->data;
                  if (double* gx = grad_of(self, 0)) {
                    std::vector<double> dxhat(d);
                    for (std::size_t i = 0; i < r; ++i) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        dxhat[j] = self.grad[i * d + j] * gn[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[i * d + j];
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      for (std::size_t j = 0; j < d; ++j)
                        gx[i * d + j] += inv_std[i] * (dxhat[j] - m1 - xhat[i * d + j] * m2);
                    }
                  }
                  if (double* gg = grad_of(self, 1))
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j)
                        gg[j] += self.grad[i * d + j] * xhat[i * d + j];
                  if (double* gb = grad_of(self, 2))
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) gb[j] += self.grad[i * d + j];
                });
}

namespace {

// Cosine similarities between rows of a [na x d] and rows of b [nb x d].
Tensor cosine_impl(const Tensor& a, const Tensor& b, std::size_t d, Shape out_shape,
                   const char* op) {
  const std::size_t na = a.numel() / d, nb = b.numel() / d;
  std::vector<double> norm_a(na), norm_b(nb);
  for (std::size_t i = 0; i < na; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * a[i * d + j];
    norm_a[i] = std::sqrt(s);
    if (norm_a[i] == 0.0) {
      throw UndefinedError(std::string(op) + ": cosine similarity undefined for zero-norm row " +
                           std::to_string(i) + " of the first operand");
    }
  }
  for (std::size_t i = 0; i < nb; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += b[i * d + j] * b[i * d + j];
    norm_b[i] = std::sqrt(s);
    if (norm_b[i] == 0.0) {
      throw UndefinedError(std::string(op) + ": cosine similarity undefined for zero-norm row " +
                           std::to_string(i) + " of the second operand");
    }
  }
  std::vector<double> out(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t k = 0; k < nb; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += a[i * d + j] * b[k * d + j];
      out[i * nb + k] = std::clamp(dot / (norm_a[i] * norm_b[k]), -1.0, 1.0);
    }
  return finish(std::move(out_shape), std::move(out), {&a, &b}, op,
                [na, nb, d, norm_a = std::move(norm_a), norm_b = std::move(norm_b)](Node& self) {
                  const auto& av = self.inputs[0]->data;
                  const auto& bv = self.inputs[1]->data;
                  double* ga = grad_of(self, 0);
                  double* gb = grad_of(self, 1);
                  for (std::size_t i = 0; i < na; ++i)
                    for (std::size_t k = 0; k < nb; ++k) {
                      const double g = self.grad[i * nb + k];
                      if (g == 0.0) continue;
                      // Unclamped value for the derivative.
                      double dot = 0.0;
                      for (std::size_t j = 0; j < d; ++j) dot += av[i * d + j] * bv[k * d + j];
                      const double nn = norm_a[i] * norm_b[k];
                      const double c = dot / nn;
                      if (ga) {
                        const double inv_aa = 1.0 / (norm_a[i] * norm_a[i]);
                        for (std::size_t j = 0; j < d; ++j)
                          ga[i * d + j] += g * (bv[k * d + j] / nn - c * av[i * d + j] * inv_aa);
                      }
                      if (gb) {
                        const double inv_bb = 1.0 / (norm_b[k] * norm_b[k]);
                        for (std::size_t j = 0; j < d; ++j)
                          gb[k * d + j] += g * (av[i * d + j] / nn - c * bv[k * d + j] * inv_bb);
                      }
                    }
                });
}

}  // namespace

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.numel() != v.numel()) {
    throw ShapeError("cosine_similarity: length mismatch " + shape_string(u.shape()) + " vs " +
                     shape_string(v.shape()));
  }
  return cosine_impl(u, v, u.numel(), {1}, "cosine_similarity");
}

Tensor cosine_rows(const Tensor& x, const Tensor& v) {
  const std::size_t d = x.cols();
  if (v.numel() != d) {
    throw ShapeError("cosine_rows: vector " + shape_string(v.shape()) + " does not match rows of " +
                     shape_string(x.shape()));
  }
  return cosine_impl(x, v, d, {x.numel() / d}, "cosine_rows");
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_matrix: width mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const std::size_t d = a.cols();
  return cosine_impl(a, b, d, {a.numel() / d, b.numel() / d}, "cosine_matrix");
}

Tensor max_over_tokens(const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError("max_over_tokens expects [tokens x width], got " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = x[j];
    for (std::size_t i = 1; i < n; ++i) {
      if (x[i * d + j] > best) {
        best = x[i * d + j];
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return finish({d}, std::move(out), {&x}, "max_over_tokens",
                [d, arg = std::move(arg)](Node& self) {
                  if (double* g = grad_of(self, 0))
                    for (std::size_t j = 0; j < d; ++j) g[arg[j] * d + j] += self.grad[j];
                });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish({1}, std::vector<double>{s}, {&x}, "sum", [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const double d = self.grad[0];
      const std::size_t n = self.inputs[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += d;
    }
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const std::size_t c = table.cols(), r = table.numel() / c;
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= r) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_string(table.shape()));
    }
    std::copy_n(table.data().data() + indices[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish({indices.size(), c}, std::move(out), {&table}, "gather_rows",
                [c, idx = std::move(idx)](Node& self) {
                  if (double* g = grad_of(self, 0))
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
                });
}

Tensor replace_rows(const Tensor& x, std::span<const std::size_t> indices, const Tensor& row) {
  require_rank2(x, "replace_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (row.numel() != c) {
    throw ShapeError("replace_rows: row " + shape_string(row.shape()) + " does not match " +
                     shape_string(x.shape()));
  }
  std::vector<char> replaced(n, 0);
  for (auto i : indices) {
    if (i >= n) throw ShapeError("replace_rows: index " + std::to_string(i) + " out of range");
    replaced[i] = 1;
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i)
    if (replaced[i]) std::copy_n(row.data().data(), c, out.data() + i * c);
  return finish(x.shape(), std::move(out), {&x, &row}, "replace_rows",
                [n, c, replaced = std::move(replaced)](Node& self) {
                  double* gx = grad_of(self, 0);
                  double* gr = grad_of(self, 1);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      const double g = self.grad[i * c + j];
                      if (replaced[i]) {
                        if (gr) gr[j] += g;
                      } else if (gx) {
                        gx[i * c + j] += g;
                      }
                    }
                });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw ShapeError("concat_rows: width mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    offsets.push_back(rows * c);
    rows += p.numel() / c;
  }
  std::vector<double> out;
  out.reserve(rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return finish_n({rows, c}, std::move(out), parts, "concat_rows",
                  [offsets = std::move(offsets)](Node& self) {
                    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                      if (double* g = grad_of(self, k)) {
                        const std::size_t len = self.inputs[k]->data.size();
                        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offsets[k] + i];
                      }
                    }
                  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t c = x.cols(), r = x.numel() / c;
  if (count == 0 || begin + count > r) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin() + begin * c, x.data().begin() + (begin + count) * c);
  return finish({count, c}, std::move(out), {&x}, "slice_rows", [begin, c](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != r) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.data().data() + i * widths[k], widths[k], out.data() + i * total + off);
    off += widths[k];
  }
  return finish_n({r, total}, std::move(out), parts, "concat_cols",
                  [r, total, widths = std::move(widths)](Node& self) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                      const std::size_t w = widths[k];
                      if (double* g = grad_of(self, k))
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < w; ++j)
                            g[i * w + j] += self.grad[i * total + off + j];
                      off += w;
                    }
                  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || begin + count > c) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     shape_string(x.shape()));
  }
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.data().data() + i * c + begin, count, out.data() + i * count);
  return finish({r, count}, std::move(out), {&x}, "slice_cols", [r, c, begin, count](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] += self.grad[i * count + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish(std::move(shape), std::move(out), {&x}, "reshape", [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  const std::size_t c = x.cols(), r = x.numel() / c;
  if (cols.size() != r) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " column indices for " +
                     shape_string(x.shape()));
  }
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (cols[i] >= c) throw ShapeError("pick: column " + std::to_string(cols[i]) + " out of range");
    out[i] = x[i * c + cols[i]];
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return finish({r}, std::move(out), {&x}, "pick", [c, idx = std::move(idx)](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += self.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t c = logits.cols(), r = logits.numel() / c;
  if (targets.size() != r || r == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  // Saved probabilities for backward.
  std::vector<double> probs(logits.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[i]) + " >= " +
                       std::to_string(c));
    }
    const double* row = logits.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total -= row[targets[i]] - mx - std::log(z);
  }
  const double inv_r = 1.0 / static_cast<double>(r);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return finish({1}, std::vector<double>{total * inv_r}, {&logits}, "cross_entropy",
                [r, c, inv_r, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
                  double* g = grad_of(self, 0);
                  if (!g) return;
                  const double d = self.grad[0] * inv_r;
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      g[i * c + j] += d * (probs[i * c + j] - (j == tgt[i] ? 1.0 : 0.0));
                });
}

}  // namespace sisr::ad
