#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msw/tensor.hpp"

// Differentiable tensor operations. Every op validates extents and throws
// DimensionError naming the offending shapes.
namespace msw::ops {

// Elementwise. `b` may also carry a trailing suffix of a's shape, in which
// case it is broadcast over the leading extents.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [N,m,k] x [N,k,n] -> [N,m,n]; with transpose_b, b is [N,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x[..., in] * w[in, out] (+ b[out]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
std::vector<Tensor> split(const Tensor& x, std::size_t axis,
                          const std::vector<std::size_t>& lengths);
// out.flat[i] = x.flat[indices[i]]; backward scatter-adds.
Tensor gather(const Tensor& x, std::vector<std::size_t> indices, Shape out_shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor softmax_lastdim(const Tensor& x);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Inverted dropout: survivors are scaled by 1/(1-p) so evaluation is the
// identity. With train == false the input is returned unchanged.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

}  // namespace msw::ops
