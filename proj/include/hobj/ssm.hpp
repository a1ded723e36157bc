#pragma once

#include <hobj/params.hpp>
#include <hobj/tensor.hpp>

#include <optional>
#include <string>

namespace hobj {

/// Learnable selective-scan parameters for D channels and state size N.
struct SSMParams {
    Tensor a_log;      // [D x N], A = -exp(a_log)
    Tensor w_B;        // [D x N]
    Tensor w_C;        // [D x N]
    Tensor w_delta;    // [D x D]
    Tensor delta_bias; // [D]
    std::optional<Tensor> d_skip; // [D]

    Index channels() const { return a_log.dim(0); }
    Index state() const { return a_log.dim(1); }
};

/// Registers one parameter set under `prefix`. a_log starts at log(1..N) per
/// channel; delta_bias is set so that softplus(delta_bias) is log-uniform in [1e-3, 1e-1].
SSMParams make_ssm_params(ParameterSet& params, const std::string& prefix, Index channels, Index state, bool with_skip, SplitMix64& rng);

struct InputParams {
    Tensor B;     // [L x N]
    Tensor C;     // [L x N]
    Tensor delta; // [L x D], strictly positive
};

/// B = x w_B, C = x w_C, delta = softplus(x w_delta + delta_bias), for x: [L x D].
InputParams make_input_params(const Tensor& x, const SSMParams& p);

/// A = -exp(a_log).
Tensor state_matrix(const SSMParams& p);

/// Differentiable selective scan (discretization + recurrence), with the
/// gradient supplied by the adjoint kernel.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C, const std::optional<Tensor>& d_skip = std::nullopt);

/// Full S6 pass over x: [L x D]. When c_source is given, C is projected from it instead of x.
Tensor ssm_forward(const Tensor& x, const SSMParams& p, const Tensor* c_source = nullptr);

} // namespace hobj
