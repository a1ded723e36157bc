#include <hobj/mmff.hpp>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>

#include <cmath>

namespace hobj {

namespace {

ModalityBranch make_branch(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    ModalityBranch b;
    b.in_w = params.add_uniform(prefix + ".in.weight", {channels, channels}, bound, rng);
    b.in_b = params.add_constant(prefix + ".in.bias", {channels}, 0.0);
    b.dw_kernel = params.add_uniform(prefix + ".dwconv.kernel", {channels, 3, 3}, 1.0 / 3.0, rng);
    b.w_B = params.add_uniform(prefix + ".w_B", {channels, state}, bound, rng);
    b.w_delta = params.add_uniform(prefix + ".w_delta", {channels, channels}, 0.1 * bound, rng);
    Eigen::ArrayXd bias(channels);
    for (Index c = 0; c < channels; ++c) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        bias[c] = dt + std::log(-std::expm1(-dt));
    }
    b.delta_bias = params.add(prefix + ".delta_bias", {channels}, std::move(bias));
    b.w_C = params.add_uniform(prefix + ".w_C", {channels, state}, bound, rng);
    return b;
}

// linear -> depthwise conv -> flatten (row-major) to [L x C].
Tensor branch_sequence(const Tensor& f, const ModalityBranch& b)
{
    const Index h = f.dim(1), w = f.dim(2);
    Tensor t = linear(to_tokens(f), b.in_w, b.in_b);
    return to_tokens(depthwise_conv(from_tokens(t, h, w), b.dw_kernel));
}

} // namespace

MMFFBlock make_mmff_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng)
{
    MMFFBlock blk;
    blk.channels = channels;
    blk.state = state;
    blk.rgb = make_branch(params, prefix + ".rgb", channels, state, rng);
    blk.x = make_branch(params, prefix + ".x", channels, state, rng);
    Eigen::ArrayXd a_log(channels * state);
    for (Index c = 0; c < channels; ++c)
        for (Index s = 0; s < state; ++s)
            a_log[c * state + s] = std::log(static_cast<double>(s + 1));
    blk.a_log = params.add(prefix + ".a_log", {channels, state}, std::move(a_log));
    blk.scale_rgb = params.add_constant(prefix + ".scale_rgb", {channels}, 1.0);
    blk.scale_x = params.add_constant(prefix + ".scale_x", {channels}, 1.0);
    blk.out_w = params.add_uniform(prefix + ".out.weight", {2 * channels, channels}, 1.0 / std::sqrt(2.0 * static_cast<double>(channels)), rng);
    blk.out_b = params.add_constant(prefix + ".out.bias", {channels}, 0.0);
    return blk;
}

ConcatScan default_concat_scan()
{
    return [](const Tensor& seq, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C) { return selective_scan(seq, delta, A, B, C); };
}

Tensor bidirectional_scan(const Tensor& seq, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C, const ConcatScan& scan)
{
    Tensor forward = scan(seq, delta, A, B, C);
    Tensor reversed = scan(flip(seq, 0), flip(delta, 0), A, flip(B, 0), flip(C, 0));
    return add(forward, flip(reversed, 0));
}

Tensor mmff_features(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk, const ConcatScan& scan)
{
    if (f_rgb.shape() != f_x.shape())
        throw DimensionError("mmff: rgb feature " + shape_string(f_rgb.shape()) + " vs x feature " + shape_string(f_x.shape()));
    if (f_rgb.rank() != 3 || f_rgb.dim(0) != blk.channels)
        throw DimensionError("mmff: feature " + shape_string(f_rgb.shape()) + " for a block with " + std::to_string(blk.channels) + " channels");
    const Index l = f_rgb.dim(1) * f_rgb.dim(2);

    const Tensor seq_rgb = branch_sequence(f_rgb, blk.rgb);
    const Tensor seq_x = branch_sequence(f_x, blk.x);

    auto delta_of = [](const Tensor& seq, const ModalityBranch& b) { return softplus(add_row_vector(matmul(seq, b.w_delta), b.delta_bias)); };
    // Positions of each half read out their state with a C generated from the other modality.
    const Tensor seq = concat({seq_rgb, seq_x}, 0);
    const Tensor delta = concat({delta_of(seq_rgb, blk.rgb), delta_of(seq_x, blk.x)}, 0);
    const Tensor B = concat({matmul(seq_rgb, blk.rgb.w_B), matmul(seq_x, blk.x.w_B)}, 0);
    const Tensor C = concat({matmul(seq_x, blk.x.w_C), matmul(seq_rgb, blk.rgb.w_C)}, 0);
    const Tensor A = neg(exp(blk.a_log));

    const Tensor z = bidirectional_scan(seq, delta, A, B, C, scan);
    const auto halves = split(z, 0, {l, l});
    return concat({mul_row_vector(halves[0], blk.scale_rgb), mul_row_vector(halves[1], blk.scale_x)}, 1);
}

Tensor mmff_forward(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk) { return mmff_forward(f_rgb, f_x, blk, default_concat_scan()); }

Tensor mmff_forward(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk, const ConcatScan& scan)
{
    const Tensor features = mmff_features(f_rgb, f_x, blk, scan);
    return from_tokens(linear(features, blk.out_w, blk.out_b), f_rgb.dim(1), f_rgb.dim(2));
}

Pyramid fuse_pyramids(const Pyramid& rgb, const Pyramid& x, const std::vector<MMFFBlock>& blocks)
{
    if (rgb.size() != x.size() || rgb.size() != blocks.size())
        throw DimensionError("fuse_pyramids: " + std::to_string(rgb.size()) + " rgb levels, " + std::to_string(x.size()) + " x levels, " + std::to_string(blocks.size()) + " fusion blocks");
    Pyramid fused;
    for (std::size_t i = 0; i < rgb.size(); ++i)
        fused.push_back(mmff_forward(rgb[i], x[i], blocks[i]));
    return fused;
}

} // namespace hobj
