#pragma once

#include <vector>

#include "patcher/tensor.hpp"

namespace patcher {

// Differentiable primitive ops. Every op validates shapes, computes the
// forward value eagerly, and records its backward rule on the thread's tape
// when recording is enabled and any input requires grad.
//
// Broadcasting policy: none except (a) matmul leading batch dims and
// (b) the explicit expand() op. Elementwise ops require identical shapes.

// -- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, float s);
Tensor mul_scalar(const Tensor& x, float s);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);

// -- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int64_t>& axes);
Tensor transpose(const Tensor& x, int64_t a, int64_t b);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t end);
Tensor expand(const Tensor& x, Shape shape);  // broadcast singleton dims

// -- reductions ---------------------------------------------------------
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// -- linear algebra -----------------------------------------------------
// a: [..., M, K], b: [..., K, N] -> [..., M, N]; leading dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// -- neural-net ops -----------------------------------------------------
// x: [B,C,H,W], w: [O,C/groups,k,k], bias: [O] or undefined.
// Cross-correlation via im2col + matmul; depthwise = groups == C.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad, int64_t groups = 1);

// Normalizes over the last axis; gamma/beta: [D].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-6f);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int64_t axis);

// Zero padding of the trailing two (spatial) axes.
Tensor pad2d(const Tensor& x, int64_t left, int64_t right, int64_t top, int64_t bottom);

// x: [B,C,H,W] -> [B,C,out_h,out_w], align-corners=false half-pixel centers.
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace patcher
