#pragma once

#include <hobj/ss2d.hpp>

#include <utility>
#include <vector>

namespace hobj {

/// Encoder geometry. Stage s runs depths[s] blocks at channels[s]; stages after
/// the first open with a 2x2 patch merge, so channels must double per stage.
struct StageConfig {
    std::vector<Index> depths{2, 2};
    std::vector<Index> channels{16, 32};
    Index patch_size = 4;

    Index num_stages() const { return static_cast<Index>(channels.size()); }
    void validate() const;

    static StageConfig toy() { return {}; }
    static StageConfig full() { return {{2, 2, 9, 2}, {64, 128, 256, 512}, 4}; }
};

struct PatchEmbed {
    Tensor weight; // [in_channels * p * p x out]
    Tensor bias;   // [out]
    Index patch = 1;
    Index in_channels = 3;
};

PatchEmbed make_patch_embed(ParameterSet& params, const std::string& prefix, Index in_channels, Index patch, Index out_channels, SplitMix64& rng);

/// Non-overlapping p x p patches, each projected linearly: [Cin x H x W] -> [out x H/p x W/p].
Tensor patch_embed(const Tensor& img, const PatchEmbed& pe);

struct EncoderBlock {
    Tensor ln_gamma, ln_beta; // [C]
    Tensor in_w, in_b;        // [C x C], [C]
    Tensor dw_kernel;         // [C x 3 x 3]
    SS2DBlock ss2d;
    Tensor out_w, out_b;      // [C x C], [C]
    Index channels = 0;
};

EncoderBlock make_encoder_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng);

/// f + Proj(SS2D(SiLU(DWConv(Linear(LN(f)))))).
Tensor encoder_block_forward(const Tensor& f, const EncoderBlock& blk);

struct Downsample {
    Tensor weight; // [4C x 2C]
    Tensor bias;   // [2C]
    Index channels = 0;
};

Downsample make_downsample(ParameterSet& params, const std::string& prefix, Index channels, SplitMix64& rng);

/// 2x2 phase gather: [C x H x W] -> tokens [(H/2 * W/2) x 4C], phases ordered
/// (top-left, top-right, bottom-left, bottom-right), channel fastest.
Tensor phase_gather(const Tensor& f);

/// Patch merge: phase_gather then project 4C -> 2C. [C x H x W] -> [2C x H/2 x W/2].
Tensor downsample(const Tensor& f, const Downsample& ds);

/// Repeats a single-channel image to three channels.
Tensor replicate_channels(const Tensor& img, Index channels = 3);

using Pyramid = std::vector<Tensor>;

struct Encoder {
    StageConfig config;
    PatchEmbed embed;
    std::vector<std::vector<EncoderBlock>> stages;
    std::vector<Downsample> merges; // merges[s] opens stage s + 1
};

Encoder make_encoder(ParameterSet& params, const std::string& prefix, const StageConfig& cfg, Index state, SplitMix64& rng);

/// Per-stage features of one image, finest first.
Pyramid encode(const Tensor& img, const Encoder& enc);

/// Both modalities through the same encoder weights. A single-channel x is replicated to 3 channels.
std::pair<Pyramid, Pyramid> dual_stream_encode(const Tensor& rgb, const Tensor& x, const Encoder& enc);

} // namespace hobj
