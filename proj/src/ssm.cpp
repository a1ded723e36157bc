#include <hobj/ssm.hpp>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>
#include <hobj/scan.hpp>

#include <cmath>

namespace hobj {

using detail::NodePtr;
using Eigen::ArrayXd;
using ConstMatMap = Eigen::Map<const RowMatrixXd>;

SSMParams make_ssm_params(ParameterSet& params, const std::string& prefix, Index channels, Index state, bool with_skip, SplitMix64& rng)
{
    if (channels < 1 || state < 1)
        throw ConfigError("ssm parameters need positive channel and state dimensions");
    SSMParams p;
    ArrayXd a_log(channels * state);
    for (Index c = 0; c < channels; ++c)
        for (Index s = 0; s < state; ++s)
            a_log[c * state + s] = std::log(static_cast<double>(s + 1));
    p.a_log = params.add(prefix + ".a_log", {channels, state}, std::move(a_log));
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    p.w_B = params.add_uniform(prefix + ".w_B", {channels, state}, bound, rng);
    p.w_C = params.add_uniform(prefix + ".w_C", {channels, state}, bound, rng);
    p.w_delta = params.add_uniform(prefix + ".w_delta", {channels, channels}, 0.1 * bound, rng);
    ArrayXd bias(channels);
    for (Index c = 0; c < channels; ++c) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        bias[c] = dt + std::log(-std::expm1(-dt));
    }
    p.delta_bias = params.add(prefix + ".delta_bias", {channels}, std::move(bias));
    if (with_skip)
        p.d_skip = params.add_constant(prefix + ".d_skip", {channels}, 1.0);
    return p;
}

InputParams make_input_params(const Tensor& x, const SSMParams& p)
{
    if (x.rank() != 2 || x.dim(1) != p.channels())
        throw DimensionError("make_input_params: input " + shape_string(x.shape()) + " does not have " + std::to_string(p.channels()) + " channels");
    return {matmul(x, p.w_B), matmul(x, p.w_C), softplus(add_row_vector(matmul(x, p.w_delta), p.delta_bias))};
}

Tensor state_matrix(const SSMParams& p) { return neg(exp(p.a_log)); }

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C, const std::optional<Tensor>& d_skip)
{
    if (x.rank() != 2 || delta.shape() != x.shape() || A.rank() != 2 || A.dim(0) != x.dim(1) || B.rank() != 2 || B.shape() != C.shape() || B.dim(0) != x.dim(0) || B.dim(1) != A.dim(1))
        throw DimensionError("selective_scan: x " + shape_string(x.shape()) + ", delta " + shape_string(delta.shape()) + ", A " + shape_string(A.shape()) + ", B " + shape_string(B.shape()) + ", C " + shape_string(C.shape()));
    const Index l = x.dim(0), d = x.dim(1), n = A.dim(1);
    std::optional<VectorX<double>> skip;
    if (d_skip) {
        if (d_skip->rank() != 1 || d_skip->dim(0) != d)
            throw DimensionError("selective_scan: d_skip " + shape_string(d_skip->shape()) + " for " + std::to_string(d) + " channels");
        skip = d_skip->data().matrix();
    }
    const auto dp = scan::discretize_zoh<double>(A.matrix(), B.matrix(), delta.matrix());
    const RowMatrixXd y = scan::scan_sequential<double>(x.matrix(), dp, C.matrix(), skip);
    ArrayXd out(l * d);
    Eigen::Map<RowMatrixXd>(out.data(), l, d) = y;

    std::vector<Tensor> inputs{x, delta, A, B, C};
    if (d_skip)
        inputs.push_back(*d_skip);
    return make_result("selective_scan", {l, d}, std::move(out), inputs, [l, d, n](const ArrayXd& g, const std::vector<NodePtr>& in) {
        std::optional<VectorX<double>> skip;
        if (in.size() > 5)
            skip = in[5]->value.matrix();
        const auto grads = scan::scan_backward<double>(ConstMatMap(in[0]->value.data(), l, d), ConstMatMap(in[2]->value.data(), d, n), ConstMatMap(in[3]->value.data(), l, n), ConstMatMap(in[4]->value.data(), l, n),
                                                       ConstMatMap(in[1]->value.data(), l, d), skip, ConstMatMap(g.data(), l, d));
        auto acc = [](const NodePtr& node, const RowMatrixXd& m) {
            if (detail::wants_grad(node))
                node->grad += Eigen::Map<const ArrayXd>(m.data(), m.size());
        };
        acc(in[0], grads.x);
        acc(in[1], grads.delta);
        acc(in[2], grads.A);
        acc(in[3], grads.B);
        acc(in[4], grads.C);
        if (in.size() > 5 && detail::wants_grad(in[5]))
            in[5]->grad += grads.d_skip->array();
    });
}

Tensor ssm_forward(const Tensor& x, const SSMParams& p, const Tensor* c_source)
{
    InputParams ip = make_input_params(x, p);
    if (c_source) {
        if (c_source->shape() != x.shape())
            throw DimensionError("ssm_forward: c_source " + shape_string(c_source->shape()) + " vs input " + shape_string(x.shape()));
        ip.C = matmul(*c_source, p.w_C);
    }
    return selective_scan(x, ip.delta, state_matrix(p), ip.B, ip.C, p.d_skip);
}

} // namespace hobj
