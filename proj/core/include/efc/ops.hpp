#pragma once

#include "efc/tensor.hpp"

namespace efc {

// Layer ops. Inputs are (B,C,H,W) or (C,H,W); the batch axis is preserved.
// Pass a Tape to record the backward closure; nullptr runs inference-only.
// Every op validates shapes up front (config_error) and checks its output
// for NaN/Inf (numeric_error).

// weight (C_out,C_in,k,k), optional bias (C_out). Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, Tape* tape = nullptr);

// Exact x * Phi(x) with Phi the standard normal CDF (erf form).
Tensor gelu(const Tensor& x, Tape* tape = nullptr);

// y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2), per spatial location.
// beta (C) must be > 0 and gamma (C,C) >= 0 elementwise.
Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, Tape* tape = nullptr);

Tensor upsample2x_nearest(const Tensor& x, Tape* tape = nullptr);

// Global average pool over H,W then affine: logits_k = w[k,:] . mean(feature) + b[k].
Tensor dense_head(const Tensor& feature, const Tensor& weight, const Tensor& bias,
                  Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// Elementwise ln(1+e^x); reparameterization for positivity constraints.
Tensor softplus(const Tensor& x, Tape* tape = nullptr);

Tensor add_const(const Tensor& x, float c, Tape* tape = nullptr);

// Scalar combination sum_i coeff_i * term_i; every term must be scalar.
Tensor weighted_sum(const std::vector<std::pair<float, Tensor>>& terms, Tape* tape = nullptr);

// Deterministic pairwise f32 reduction (error O(log n) * eps).
float pairwise_sum(const float* p, int64_t n);

// Row-wise softmax of (B,K) or (K) logits, numerically stable. Not taped;
// inference/reporting helper.
Tensor softmax(const Tensor& logits);

}  // namespace efc
