#pragma once

#include <hobj/ss2d.hpp>

#include <vector>

namespace hobj {

/// Channel-to-space rearrangement: [C x h x w] -> [C/4 x 2h x 2w]; channel 4g + 2dy + dx
/// of pixel (i, j) lands at output channel g, pixel (2i + dy, 2j + dx).
Tensor pixel_shuffle(const Tensor& f);

struct DecoderStage {
    Tensor up_w, up_b;     // [C/4 x C/2], [C/2]
    SS2DBlock ss2d;        // at C/2 channels
    Tensor post_w, post_b; // [C/2 x C/2], [C/2]
    Index in_channels = 0; // C, channels of the lower-level (coarser) input
};

DecoderStage make_decoder_stage(ParameterSet& params, const std::string& prefix, Index in_channels, Index state, SplitMix64& rng);

/// pixel_shuffle then a linear map C/4 -> C/2: [C x h x w] -> [C/2 x 2h x 2w].
Tensor upsample_shuffle(const Tensor& f, const DecoderStage& stage);

/// u = upsample_shuffle(f_low); s = SS2D(u) with C read from f_high;
/// out = Proj(u + s + f_high).
Tensor decoder_stage(const Tensor& f_low, const Tensor& f_high, const DecoderStage& stage);

struct SegHead {
    Tensor weight; // [C x K]
    Tensor bias;   // [K]
    Index num_classes = 1;
};

SegHead make_seg_head(ParameterSet& params, const std::string& prefix, Index channels, Index num_classes, SplitMix64& rng);

/// 1x1 projection to K logits, then bilinear upsampling to out_h x out_w.
Tensor seg_head(const Tensor& f, const SegHead& head, Index out_h, Index out_w);

struct Decoder {
    std::vector<DecoderStage> stages; // stages[i] consumes fused levels i + 1 (low) and i (high)
    SegHead head;
};

Decoder make_decoder(ParameterSet& params, const std::string& prefix, const std::vector<Index>& level_channels, Index state, Index num_classes, SplitMix64& rng);

/// Cascades from the coarsest level to the finest, then applies the head.
Tensor decode(const std::vector<Tensor>& fused, const Decoder& dec, Index out_h, Index out_w);

} // namespace hobj
