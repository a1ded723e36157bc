#include <hobj/blocks.hpp>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>

#include <cmath>
#include <memory>

namespace hobj {

namespace {
double fan_in_bound(Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
} // namespace

void StageConfig::validate() const
{
    if (channels.empty() || depths.size() != channels.size())
        throw ConfigError("stage config needs one depth per stage (got " + std::to_string(depths.size()) + " depths, " + std::to_string(channels.size()) + " channel counts)");
    if (patch_size < 1)
        throw ConfigError("patch size must be positive");
    for (std::size_t s = 0; s < channels.size(); ++s) {
        if (channels[s] < 1 || depths[s] < 0)
            throw ConfigError("stage " + std::to_string(s) + " has invalid depth/channels");
        if (s > 0 && channels[s] != 2 * channels[s - 1])
            throw ConfigError("stage channels must double per stage (patch merge maps C -> 2C), got " + std::to_string(channels[s - 1]) + " then " + std::to_string(channels[s]));
    }
}

PatchEmbed make_patch_embed(ParameterSet& params, const std::string& prefix, Index in_channels, Index patch, Index out_channels, SplitMix64& rng)
{
    if (patch < 1)
        throw ConfigError("patch size must be positive");
    PatchEmbed pe;
    pe.patch = patch;
    pe.in_channels = in_channels;
    const Index fan = in_channels * patch * patch;
    pe.weight = params.add_uniform(prefix + ".weight", {fan, out_channels}, fan_in_bound(fan), rng);
    pe.bias = params.add_constant(prefix + ".bias", {out_channels}, 0.0);
    return pe;
}

Tensor patch_embed(const Tensor& img, const PatchEmbed& pe)
{
    if (img.rank() != 3 || img.dim(0) != pe.in_channels)
        throw DimensionError("patch_embed: image " + shape_string(img.shape()) + " needs " + std::to_string(pe.in_channels) + " channels");
    const Index c = img.dim(0), h = img.dim(1), w = img.dim(2), p = pe.patch;
    if (h % p != 0 || w % p != 0)
        throw ConfigError("patch_embed: " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " + std::to_string(p));
    const Index hp = h / p, wp = w / p, fan = c * p * p;
    auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(hp * wp * fan));
    for (Index i = 0; i < hp; ++i)
        for (Index j = 0; j < wp; ++j)
            for (Index ch = 0; ch < c; ++ch)
                for (Index dy = 0; dy < p; ++dy)
                    for (Index dx = 0; dx < p; ++dx)
                        (*idx)[static_cast<std::size_t>((i * wp + j) * fan + (ch * p + dy) * p + dx)] = (ch * h + i * p + dy) * w + j * p + dx;
    Tensor patches = gather(img, std::move(idx), {hp * wp, fan}, "patch_gather");
    return from_tokens(linear(patches, pe.weight, pe.bias), hp, wp);
}

EncoderBlock make_encoder_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng)
{
    EncoderBlock b;
    b.channels = channels;
    const double bound = fan_in_bound(channels);
    b.ln_gamma = params.add_constant(prefix + ".ln.gamma", {channels}, 1.0);
    b.ln_beta = params.add_constant(prefix + ".ln.beta", {channels}, 0.0);
    b.in_w = params.add_uniform(prefix + ".in.weight", {channels, channels}, bound, rng);
    b.in_b = params.add_constant(prefix + ".in.bias", {channels}, 0.0);
    b.dw_kernel = params.add_uniform(prefix + ".dwconv.kernel", {channels, 3, 3}, 1.0 / 3.0, rng);
    b.ss2d = make_ss2d_block(params, prefix + ".ss2d", channels, state, rng);
    b.out_w = params.add_uniform(prefix + ".out.weight", {channels, channels}, bound, rng);
    b.out_b = params.add_constant(prefix + ".out.bias", {channels}, 0.0);
    return b;
}

Tensor encoder_block_forward(const Tensor& f, const EncoderBlock& blk)
{
    if (f.rank() != 3 || f.dim(0) != blk.channels)
        throw DimensionError("encoder block: input " + shape_string(f.shape()) + " for " + std::to_string(blk.channels) + " channels");
    const Index h = f.dim(1), w = f.dim(2);
    Tensor t = layer_norm(to_tokens(f), blk.ln_gamma, blk.ln_beta);
    t = linear(t, blk.in_w, blk.in_b);
    Tensor g = silu(depthwise_conv(from_tokens(t, h, w), blk.dw_kernel));
    g = ss2d_forward(g, blk.ss2d);
    Tensor out = linear(to_tokens(g), blk.out_w, blk.out_b);
    return add(f, from_tokens(out, h, w));
}

Downsample make_downsample(ParameterSet& params, const std::string& prefix, Index channels, SplitMix64& rng)
{
    Downsample ds;
    ds.channels = channels;
    ds.weight = params.add_uniform(prefix + ".weight", {4 * channels, 2 * channels}, fan_in_bound(4 * channels), rng);
    ds.bias = params.add_constant(prefix + ".bias", {2 * channels}, 0.0);
    return ds;
}

Tensor phase_gather(const Tensor& f)
{
    if (f.rank() != 3)
        throw DimensionError("phase_gather: needs [C x H x W], got " + shape_string(f.shape()));
    const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ConfigError("downsample: extents must be even, got " + std::to_string(h) + "x" + std::to_string(w));
    const Index h2 = h / 2, w2 = w / 2;
    auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(h2 * w2 * 4 * c));
    for (Index i = 0; i < h2; ++i)
        for (Index j = 0; j < w2; ++j)
            for (Index phase = 0; phase < 4; ++phase)
                for (Index ch = 0; ch < c; ++ch)
                    (*idx)[static_cast<std::size_t>((i * w2 + j) * 4 * c + phase * c + ch)] = (ch * h + 2 * i + phase / 2) * w + 2 * j + phase % 2;
    return gather(f, std::move(idx), {h2 * w2, 4 * c}, "phase_gather");
}

Tensor downsample(const Tensor& f, const Downsample& ds)
{
    if (f.rank() != 3 || f.dim(0) != ds.channels)
        throw DimensionError("downsample: input " + shape_string(f.shape()) + " for " + std::to_string(ds.channels) + " channels");
    return from_tokens(linear(phase_gather(f), ds.weight, ds.bias), f.dim(1) / 2, f.dim(2) / 2);
}

Tensor replicate_channels(const Tensor& img, Index channels)
{
    if (img.rank() != 3 || img.dim(0) != 1)
        throw DimensionError("replicate_channels: needs [1 x H x W], got " + shape_string(img.shape()));
    const Index plane = img.dim(1) * img.dim(2);
    auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(channels * plane));
    for (Index ch = 0; ch < channels; ++ch)
        for (Index i = 0; i < plane; ++i)
            (*idx)[static_cast<std::size_t>(ch * plane + i)] = i;
    return gather(img, std::move(idx), {channels, img.dim(1), img.dim(2)}, "replicate_channels");
}

Encoder make_encoder(ParameterSet& params, const std::string& prefix, const StageConfig& cfg, Index state, SplitMix64& rng)
{
    cfg.validate();
    Encoder enc;
    enc.config = cfg;
    enc.embed = make_patch_embed(params, prefix + ".patch_embed", 3, cfg.patch_size, cfg.channels[0], rng);
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
        if (s > 0)
            enc.merges.push_back(make_downsample(params, prefix + ".merge" + std::to_string(s), cfg.channels[s - 1], rng));
        std::vector<EncoderBlock> blocks;
        for (Index b = 0; b < cfg.depths[s]; ++b)
            blocks.push_back(make_encoder_block(params, prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(b), cfg.channels[s], state, rng));
        enc.stages.push_back(std::move(blocks));
    }
    return enc;
}

Pyramid encode(const Tensor& img, const Encoder& enc)
{
    Pyramid levels;
    Tensor f = patch_embed(img, enc.embed);
    for (std::size_t s = 0; s < enc.stages.size(); ++s) {
        if (s > 0)
            f = downsample(f, enc.merges[s - 1]);
        for (const auto& blk : enc.stages[s])
            f = encoder_block_forward(f, blk);
        levels.push_back(f);
    }
    return levels;
}

std::pair<Pyramid, Pyramid> dual_stream_encode(const Tensor& rgb, const Tensor& x, const Encoder& enc)
{
    if (rgb.rank() != 3 || x.rank() != 3 || rgb.dim(1) != x.dim(1) || rgb.dim(2) != x.dim(2))
        throw DimensionError("dual_stream_encode: resolution mismatch between rgb " + shape_string(rgb.shape()) + " and x " + shape_string(x.shape()));
    const Tensor x3 = x.dim(0) == 1 ? replicate_channels(x) : x;
    return {encode(rgb, enc), encode(x3, enc)};
}

} // namespace hobj
