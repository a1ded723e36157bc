#pragma once

#include <hobj/blocks.hpp>

#include <functional>
#include <vector>

namespace hobj {

/// Per-modality half of a fusion block: input mixing plus the generators for
/// this modality's B/delta and for the C it hands to the other modality.
struct ModalityBranch {
    Tensor in_w, in_b;    // [C x C], [C]
    Tensor dw_kernel;     // [C x 3 x 3]
    Tensor w_B;           // [C x N]
    Tensor w_delta;       // [C x C]
    Tensor delta_bias;    // [C]
    Tensor w_C;           // [C x N], applied to this modality, consumed by the other one's positions
};

struct MMFFBlock {
    ModalityBranch rgb, x;
    Tensor a_log;                // [C x N], shared by the forward and reversed scans
    Tensor scale_rgb, scale_x;   // [C], initialized to 1
    Tensor out_w, out_b;         // [2C x C], [C]
    Index channels = 0;
    Index state = 0;
};

MMFFBlock make_mmff_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng);

/// Scan used on the concatenated sequences: (seq, delta, A, B, C) -> output.
using ConcatScan = std::function<Tensor(const Tensor& seq, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C)>;

ConcatScan default_concat_scan();

/// scan(seq) + flip(scan(flip(seq))) with every per-position input flipped alongside.
Tensor bidirectional_scan(const Tensor& seq, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C, const ConcatScan& scan);

/// Pre-projection fused tokens [L x 2C]: the scanned RGB half times scale_rgb,
/// then the scanned X half times scale_x.
Tensor mmff_features(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk, const ConcatScan& scan);

/// Fuses two [C x H x W] maps into one [C x H x W].
Tensor mmff_forward(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk);
Tensor mmff_forward(const Tensor& f_rgb, const Tensor& f_x, const MMFFBlock& blk, const ConcatScan& scan);

Pyramid fuse_pyramids(const Pyramid& rgb, const Pyramid& x, const std::vector<MMFFBlock>& blocks);

} // namespace hobj
