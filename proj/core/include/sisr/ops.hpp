#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sisr/tensor.hpp"

// Differentiable primitives. Every op evaluates eagerly; when a tape is
// active and any input requires grad the result is recorded for backward.
// Unless noted, "rows" means the leading extents flattened and "cols" the
// last extent.
namespace sisr::ad {

// Lower clamp applied inside guarded logarithms.
inline constexpr double kLogFloor = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

// c[i,j] = sum_t a[i,t] * b[t,j]; both operands rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// Adds a length-cols vector to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor gelu(const Tensor& a);
Tensor square(const Tensor& a);
// log(max(x, kLogFloor)).
Tensor log(const Tensor& a);
// Euclidean norm of every row, shape [rows].
Tensor row_norms(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
// Row-wise log-softmax over the last axis.
Tensor log_softmax(const Tensor& x);

// Standardizes each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// Scalar cosine similarity of two equal-length vectors.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
// out[i] = cos(x[i,:], v), shape [rows].
Tensor cosine_rows(const Tensor& x, const Tensor& v);
// out[i,j] = cos(a[i,:], b[j,:]).
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

// Column-wise max over the token (row) axis; gradient flows to the first
// argmax row of each column.
Tensor max_over_tokens(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Selects rows of a rank-2 tensor (also serves as an embedding lookup).
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
// Copy of x with each listed row replaced by the vector `row`.
Tensor replace_rows(const Tensor& x, std::span<const std::size_t> indices,
                    const Tensor& row);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);
// out[i] = x[i, cols[i]].
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);

// Mean over rows of -log_softmax(logits)[i, targets[i]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace sisr::ad
