#include <hobj/ss2d.hpp>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>

#include <algorithm>
#include <memory>

namespace hobj {

ScanLayout::ScanLayout(Index height, Index width) : height_(height), width_(width)
{
    if (height < 1 || width < 1)
        throw ConfigError("scan layout needs a non-empty grid");
    const Index n = height * width;
    auto& row_major = fwd_[0];
    auto& col_major = fwd_[2];
    row_major.resize(static_cast<std::size_t>(n));
    col_major.resize(static_cast<std::size_t>(n));
    for (Index s = 0; s < n; ++s) {
        row_major[static_cast<std::size_t>(s)] = s;
        col_major[static_cast<std::size_t>(s)] = (s % height) * width + s / height;
    }
    fwd_[1].assign(row_major.rbegin(), row_major.rend());
    fwd_[3].assign(col_major.rbegin(), col_major.rend());
    for (int dir = 0; dir < kDirections; ++dir) {
        auto& inv = inv_[static_cast<std::size_t>(dir)];
        inv.resize(static_cast<std::size_t>(n));
        const auto& fwd = fwd_[static_cast<std::size_t>(dir)];
        for (Index s = 0; s < n; ++s)
            inv[static_cast<std::size_t>(fwd[static_cast<std::size_t>(s)])] = s;
    }
}

DirectionalSequences cross_scan(const Tensor& f, const ScanLayout& layout)
{
    if (f.rank() != 3 || f.dim(1) != layout.height() || f.dim(2) != layout.width())
        throw DimensionError("cross_scan: feature map " + shape_string(f.shape()) + " does not match a " + std::to_string(layout.height()) + "x" + std::to_string(layout.width()) + " layout");
    const Index c = f.dim(0), l = layout.length();
    DirectionalSequences out;
    for (int dir = 0; dir < ScanLayout::kDirections; ++dir) {
        auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(l * c));
        const auto& perm = layout.forward(dir);
        for (Index s = 0; s < l; ++s)
            for (Index ch = 0; ch < c; ++ch)
                (*idx)[static_cast<std::size_t>(s * c + ch)] = ch * l + perm[static_cast<std::size_t>(s)];
        out[static_cast<std::size_t>(dir)] = gather(f, std::move(idx), {l, c}, "cross_scan");
    }
    return out;
}

Tensor cross_merge(const DirectionalSequences& ys, const ScanLayout& layout)
{
    const Index l = layout.length();
    const Index c = ys[0].rank() == 2 ? ys[0].dim(1) : 0;
    for (const auto& y : ys)
        if (y.rank() != 2 || y.dim(0) != l || y.dim(1) != c)
            throw DimensionError("cross_merge: sequence " + shape_string(y.shape()) + " inconsistent with length " + std::to_string(l) + " and " + std::to_string(c) + " channels");
    Tensor merged;
    for (int dir = 0; dir < ScanLayout::kDirections; ++dir) {
        auto idx = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(l * c));
        const auto& inv = layout.inverse(dir);
        for (Index ch = 0; ch < c; ++ch)
            for (Index g = 0; g < l; ++g)
                (*idx)[static_cast<std::size_t>(ch * l + g)] = inv[static_cast<std::size_t>(g)] * c + ch;
        Tensor grid = gather(ys[static_cast<std::size_t>(dir)], std::move(idx), {c, layout.height(), layout.width()}, "cross_merge");
        merged = merged.defined() ? add(merged, grid) : grid;
    }
    return merged;
}

SS2DBlock make_ss2d_block(ParameterSet& params, const std::string& prefix, Index channels, Index state, SplitMix64& rng, bool with_skip)
{
    SS2DBlock b;
    b.channels = channels;
    for (int dir = 0; dir < ScanLayout::kDirections; ++dir)
        b.directions[static_cast<std::size_t>(dir)] = make_ssm_params(params, prefix + ".dir" + std::to_string(dir), channels, state, with_skip, rng);
    return b;
}

Tensor ss2d_forward(const Tensor& f, const SS2DBlock& block, const Tensor* c_source)
{
    return ss2d_forward(f, block, c_source, [](const Tensor& seq, const SSMParams& p, const Tensor* c_seq) { return ssm_forward(seq, p, c_seq); });
}

Tensor ss2d_forward(const Tensor& f, const SS2DBlock& block, const Tensor* c_source, const SequenceScan& scan)
{
    if (f.rank() != 3 || f.dim(0) != block.channels)
        throw DimensionError("ss2d_forward: input " + shape_string(f.shape()) + " for a block with " + std::to_string(block.channels) + " channels");
    if (c_source && c_source->shape() != f.shape())
        throw DimensionError("ss2d_forward: c_source " + shape_string(c_source->shape()) + " does not match input " + shape_string(f.shape()));
    const ScanLayout layout(f.dim(1), f.dim(2));
    const DirectionalSequences seqs = cross_scan(f, layout);
    DirectionalSequences c_seqs;
    if (c_source)
        c_seqs = cross_scan(*c_source, layout);
    DirectionalSequences ys;
    for (std::size_t dir = 0; dir < ys.size(); ++dir)
        ys[dir] = scan(seqs[dir], block.directions[dir], c_source ? &c_seqs[dir] : nullptr);
    return cross_merge(ys, layout);
}

} // namespace hobj
