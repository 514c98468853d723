#pragma once

#include <vector>

#include "mbbr/tensor.hpp"

namespace mbbr::ad {

// Elementwise. Shapes must match exactly; there is no general broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

// x: [..., D], bias: [D], added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a: [M,K], b: [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// a: [B,M,K], b: [B,K,N] -> [B,M,N]. With transpose_b, b is [B,N,K].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);

// Normalizes over the last dim. gain/bias: [D].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor swap_axes(const Tensor& x, size_t i, size_t j);

// All parts share leading dims, concatenated on the last dim.
Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor concat_lastdim(const Tensor& a, const Tensor& b);

// x: [R,C]; picks rows, duplicates allowed. Backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::vector<size_t> indices);

// Parts are [r_i, C] with a common C; stacked vertically into [sum r_i, C].
Tensor stack_rows(const std::vector<Tensor>& parts);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Mean over all elements of squared difference.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// logits: [N,C], labels: N class ids. Mean negative log likelihood.
Tensor cross_entropy(const Tensor& logits, const std::vector<size_t>& labels);

// Leaf copy, cut from the graph.
Tensor detach(const Tensor& x);

}  // namespace mbbr::ad
