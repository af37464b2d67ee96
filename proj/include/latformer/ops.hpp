#pragma once

#include "latformer/array.hpp"

#include <cstdint>
#include <vector>

namespace latformer::ad {

enum class Reduce { max, mean };

Array matmul(const Array& a, const Array& b);      // (m x k)(k x n) -> m x n
Array matmul_nt(const Array& a, const Array& b);   // (m x k)(n x k)^T -> m x n

// x (N x Din) * w (Din x Dout) + row-broadcast b (Dout)
Array linear(const Array& x, const Array& w, const Array& b);

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array mul_scalar(const Array& a, double s);
Array sigmoid(const Array& x);
Array relu(const Array& x);
Array sum_all(const Array& x);                     // -> shape {1}

// Removes `axis`. Max routes the gradient to the first (lowest-index) maximum;
// mean accumulates the slice in ascending value order so the result does not
// depend on element order, and spreads the gradient uniformly.
Array reduce(const Array& x, std::size_t axis, Reduce mode);

Array concat(const std::vector<Array>& parts, std::size_t axis);
Array reshape(const Array& x, std::vector<std::size_t> shape);
Array slice_cols(const Array& x, std::size_t start, std::size_t width);
Array gather_rows(const Array& x, std::vector<std::size_t> idx);

// out[g] = columnwise max over rows flat_idx[offsets[g] .. offsets[g+1]).
// Value ties go to the smallest row index.
Array group_max(const Array& x, std::vector<std::size_t> flat_idx,
                std::vector<std::size_t> offsets);

// Elementwise max across equally shaped arrays; ties go to the first part.
Array max_list(const std::vector<Array>& parts);

Array row_softmax(const Array& x);

struct GateResult {
    Array alpha;                      // sigma(omega) where > beta, else 0
    std::vector<std::uint8_t> mask;   // 1 where retained
};
GateResult threshold_gate(const Array& omega, double beta);

// out[t] = sum_z alpha[t,z] v[z] / (sum_z alpha[t,z] + eps)
Array weighted_average_rows(const Array& alpha, const Array& v, double eps);

// Mean over rows of -log softmax(logits)[label], max-shifted.
Array cross_entropy(const Array& logits, const std::vector<int>& labels);

} // namespace latformer::ad
