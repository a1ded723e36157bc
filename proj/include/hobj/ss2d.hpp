#pragma once

#include <hobj/ssm.hpp>

#include <array>
#include <functional>
#include <vector>

namespace hobj {

/// The four traversal orders of an H x W grid.
///
/// forward(dir)[s] is the row-major pixel index visited at sequence position s:
///   dir 0: row-major from the top-left
///   dir 1: reverse of dir 0
///   dir 2: column-major from the top-left
///   dir 3: reverse of dir 2
/// inverse(dir) maps a pixel index back to its sequence position.
class ScanLayout {
public:
    static constexpr int kDirections = 4;

    ScanLayout(Index height, Index width);

    Index height() const { return height_; }
    Index width() const { return width_; }
    Index length() const { return height_ * width_; }

    const std::vector<Index>& forward(int dir) const { return fwd_.at(static_cast<std::size_t>(dir)); }
    const std::vector<Index>& inverse(int dir) const { return inv_.at(static_cast<std::size_t>(dir)); }

private:
    Index height_, width_;
    std::array<std::vector<Index>, kDirections> fwd_, inv_;
};

using DirectionalSequences = std::array<Tensor, ScanLayout::kDirections>;

/// [C x H x W] -> four [L x C] sequences.
DirectionalSequences cross_scan(const Tensor& f, const ScanLayout& layout);

/// Inverse-reorders each [L x C] sequence onto the grid and sums: -> [C x H x W].
Tensor cross_merge(const DirectionalSequences& ys, const ScanLayout& layout);

struct SS2DBlock {
    std::array<SSMParams, ScanLayout::kDirections> directions;
    Index channels = 0;
};

SS2DBlock make_ss2d_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng, bool with_skip = false);

/// Per-direction sequence model: (sequence, parameters, optional C-source sequence) -> sequence.
using SequenceScan = std::function<Tensor(const Tensor& seq, const SSMParams& p, const Tensor* c_seq)>;

/// Cross-scan, one selective scan per direction, cross-merge. B and delta come from f;
/// C comes from c_source when given, else from f.
Tensor ss2d_forward(const Tensor& f, const SS2DBlock& block, const Tensor* c_source = nullptr);
Tensor ss2d_forward(const Tensor& f, const SS2DBlock& block, const Tensor* c_source, const SequenceScan& scan);

} // namespace hobj
