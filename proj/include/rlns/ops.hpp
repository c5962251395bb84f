#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rlns/tensor.hpp"

namespace rlns {

// All primitives operate on f64 tensors, record themselves on the active
// tape when an input requires grad, and use fixed sequential reduction
// orders so identical inputs give bit-identical results.

Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k]x[k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor add_rows(const Tensor& a, const Tensor& bias);  // [m,n] + [n]
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);  // 2-d
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);  // 2-d, axis 0 or 1

// Row selection and its inverses. take_rows is the slice-by-index-set
// primitive; scatter_rows places rows into a zero [n_rows, n] tensor,
// accumulating where indices repeat.
Tensor take_rows(const Tensor& a, std::span<const int64_t> idx);
Tensor scatter_rows(const Tensor& rows, std::span<const int64_t> idx, int64_t n_rows);
Tensor take_elems(const Tensor& a, std::span<const int64_t> flat_idx);  // -> [k]
Tensor scale_rows(const Tensor& a, const Tensor& w);                    // [m,n] * w[m]

Tensor softmax(const Tensor& a, int axis);  // max-subtraction stabilized
// Row-wise softmax over the positions with mask!=0; masked positions are
// exactly zero in the output and receive no gradient. A row whose mask is
// all zero yields an all-zero row.
Tensor masked_softmax_rows(const Tensor& a, const std::vector<uint8_t>& mask);
Tensor causal_softmax(const Tensor& scores);  // row i normalized over cols 0..i

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);  // row-wise
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form

Tensor embedding(const Tensor& table, std::span<const int> ids);  // gather rows
Tensor sum_all(const Tensor& a);                                  // -> scalar
Tensor mean_over_rows(const Tensor& a);                           // [m,n] -> [n]

// Mean negative log-likelihood over positions weighted by mask.
// Gradient is softmax(logits) - one_hot, scaled by mask / sum(mask).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> mask);

// Indices of the k largest values; ties broken toward the lower index;
// result sorted ascending. Pure selection, never differentiable.
std::vector<int64_t> top_k_indices(std::span<const double> x, int64_t k);

// Scaled dot-product attention with causal masking, composed from the
// primitives above. Returns (output [T,dh], probabilities [T,T]).
std::pair<Tensor, Tensor> causal_attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace rlns
