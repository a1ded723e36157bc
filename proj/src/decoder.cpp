#include <hobj/decoder.hpp>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>

#include <cmath>
#include <memory>

namespace hobj {

Tensor pixel_shuffle(const Tensor& f)
{
    if (f.rank() != 3)
        throw DimensionError("pixel_shuffle: needs [C x H x W], got " + shape_string(f.shape()));
    const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
    if (c % 4 != 0)
        throw ConfigError("upsample_shuffle: channel count " + std::to_string(c) + " is not divisible by 4");
    const Index groups = c / 4, oh = 2 * h, ow = 2 * w;
    auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(f.numel()));
    for (Index g = 0; g < groups; ++g)
        for (Index oi = 0; oi < oh; ++oi)
            for (Index oj = 0; oj < ow; ++oj) {
                const Index src_c = 4 * g + 2 * (oi % 2) + oj % 2;
                (*idx)[static_cast<std::size_t>((g * oh + oi) * ow + oj)] = (src_c * h + oi / 2) * w + oj / 2;
            }
    return gather(f, std::move(idx), {groups, oh, ow}, "pixel_shuffle");
}

DecoderStage make_decoder_stage(ParameterSet& params, const std::string& prefix, Index in_channels, Index state, SplitMix64& rng)
{
    if (in_channels % 4 != 0)
        throw ConfigError("decoder stage needs input channels divisible by 4, got " + std::to_string(in_channels));
    DecoderStage st;
    st.in_channels = in_channels;
    const Index q = in_channels / 4, half = in_channels / 2;
    st.up_w = params.add_uniform(prefix + ".up.weight", {q, half}, 1.0 / std::sqrt(static_cast<double>(q)), rng);
    st.up_b = params.add_constant(prefix + ".up.bias", {half}, 0.0);
    st.ss2d = make_ss2d_block(params, prefix + ".ss2d", half, state, rng);
    st.post_w = params.add_uniform(prefix + ".post.weight", {half, half}, 1.0 / std::sqrt(static_cast<double>(half)), rng);
    st.post_b = params.add_constant(prefix + ".post.bias", {half}, 0.0);
    return st;
}

Tensor upsample_shuffle(const Tensor& f, const DecoderStage& stage)
{
    if (f.rank() != 3 || f.dim(0) != stage.in_channels)
        throw DimensionError("upsample_shuffle: input " + shape_string(f.shape()) + " for a stage expecting " + std::to_string(stage.in_channels) + " channels");
    Tensor shuffled = pixel_shuffle(f);
    const Index h = shuffled.dim(1), w = shuffled.dim(2);
    return from_tokens(linear(to_tokens(shuffled), stage.up_w, stage.up_b), h, w);
}

Tensor decoder_stage(const Tensor& f_low, const Tensor& f_high, const DecoderStage& stage)
{
    const Tensor up = upsample_shuffle(f_low, stage);
    if (up.shape() != f_high.shape())
        throw DimensionError("decoder_stage: upsampled lower level " + shape_string(up.shape()) + " does not match higher level " + shape_string(f_high.shape()));
    const Tensor s = ss2d_forward(up, stage.ss2d, &f_high);
    const Tensor merged = add(add(up, s), f_high);
    return from_tokens(linear(to_tokens(merged), stage.post_w, stage.post_b), up.dim(1), up.dim(2));
}

SegHead make_seg_head(ParameterSet& params, const std::string& prefix, Index channels, Index num_classes, SplitMix64& rng)
{
    if (num_classes < 1)
        throw ConfigError("segmentation head needs at least one class");
    SegHead head;
    head.num_classes = num_classes;
    head.weight = params.add_uniform(prefix + ".weight", {channels, num_classes}, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
    head.bias = params.add_constant(prefix + ".bias", {num_classes}, 0.0);
    return head;
}

Tensor seg_head(const Tensor& f, const SegHead& head, Index out_h, Index out_w)
{
    if (f.rank() != 3 || f.dim(0) != head.weight.dim(0))
        throw DimensionError("seg_head: feature " + shape_string(f.shape()) + " for a head over " + std::to_string(head.weight.dim(0)) + " channels");
    const Tensor logits = from_tokens(linear(to_tokens(f), head.weight, head.bias), f.dim(1), f.dim(2));
    if (logits.dim(1) == out_h && logits.dim(2) == out_w)
        return logits;
    return bilinear_resize(logits, out_h, out_w);
}

Decoder make_decoder(ParameterSet& params, const std::string& prefix, const std::vector<Index>& level_channels, Index state, Index num_classes, SplitMix64& rng)
{
    if (level_channels.empty())
        throw ConfigError("decoder needs at least one level");
    Decoder dec;
    for (std::size_t i = 0; i + 1 < level_channels.size(); ++i) {
        if (level_channels[i + 1] != 2 * level_channels[i])
            throw ConfigError("decoder expects level channels to double per level");
        dec.stages.push_back(make_decoder_stage(params, prefix + ".stage" + std::to_string(i), level_channels[i + 1], state, rng));
    }
    dec.head = make_seg_head(params, prefix + ".head", level_channels.front(), num_classes, rng);
    return dec;
}

Tensor decode(const std::vector<Tensor>& fused, const Decoder& dec, Index out_h, Index out_w)
{
    if (fused.size() != dec.stages.size() + 1)
        throw DimensionError("decode: " + std::to_string(fused.size()) + " fused levels for a decoder with " + std::to_string(dec.stages.size()) + " stages");
    Tensor cur = fused.back();
    for (std::size_t i = dec.stages.size(); i-- > 0;)
        cur = decoder_stage(cur, fused[i], dec.stages[i]);
    return seg_head(cur, dec.head, out_h, out_w);
}

} // namespace hobj
