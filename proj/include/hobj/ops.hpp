#pragma once

#include <hobj/tensor.hpp>

#include <memory>
#include <vector>

namespace hobj {

// Structural operations copy values exactly, so flip/flip, transpose/transpose
// and split/concat round-trip bitwise.

/// [M x K] x [K x N] -> [M x N].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

/// x[..., D] + v[D], v broadcast over all leading positions.
Tensor add_row_vector(const Tensor& x, const Tensor& v);
/// x[..., D] * v[D].
Tensor mul_row_vector(const Tensor& x, const Tensor& v);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Normalizes every position over the trailing dimension, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

/// Per-channel 2D correlation with zero "same" padding. x: [C x H x W], k: [C x kh x kw], kh and kw odd.
Tensor depthwise_conv(const Tensor& x, const Tensor& k);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<Index>& sizes);
Tensor flip(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
/// Rank-2 transpose.
Tensor transpose(const Tensor& x);

/// out.flat[i] = x.flat[indices[i]]; the backward pass scatter-adds.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<Index>> indices, Shape out_shape, std::string op = "gather");

/// Half-pixel-centred bilinear resampling of [C x h x w] to [C x H x W], edges clamped.
Tensor bilinear_resize(const Tensor& x, Index out_h, Index out_w);

/// Column-wise log-softmax of [K x P] (normalizes over the K rows of each column).
Tensor log_softmax(const Tensor& x);

// Layout helpers between feature maps [C x H x W] and token matrices [H*W x C].
Tensor to_tokens(const Tensor& feature_map);
Tensor from_tokens(const Tensor& tokens, Index height, Index width);

/// tokens [L x in] * weight [in x out] + bias [out].
Tensor linear(const Tensor& tokens, const Tensor& weight, const Tensor& bias);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

} // namespace hobj
