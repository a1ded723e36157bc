#include <doctest.h>

#include <hobj/decoder.hpp>
#include <hobj/error.hpp>
#include <hobj/mmff.hpp>
#include <hobj/ops.hpp>
#include <hobj/scan.hpp>

#include <algorithm>
#include <cmath>

using namespace hobj;

namespace {

Tensor random(Shape shape, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
        t.mutable_data()[i] = rng.uniform(-1, 1);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && (a.data() == b.data()).all(); }

void randomize(Tensor& t, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    for (Index i = 0; i < t.numel(); ++i)
        t.mutable_data()[i] = rng.uniform(-0.5, 0.5);
}

MMFFBlock block(Index c, Index n, std::uint64_t seed, ParameterSet& params)
{
    SplitMix64 rng(seed);
    return make_mmff_block(params, "mmff", c, n, rng);
}

// Sequence of one pixel through a branch: linear, then only the centre tap of the 3x3 kernel.
Eigen::RowVectorXd branch_token(const Tensor& f, const ModalityBranch& b)
{
    const Index c = f.dim(0);
    Eigen::RowVectorXd v = Eigen::Map<const Eigen::RowVectorXd>(f.data().data(), c) * b.in_w.matrix();
    for (Index k = 0; k < c; ++k)
        v[k] = (v[k] + b.in_b.at(k)) * b.dw_kernel.at(k * 9 + 4);
    return v;
}

} // namespace

TEST_CASE("mmff degenerate inputs")
{
    ParameterSet params;
    MMFFBlock blk = block(4, 3, 1, params);
    const Tensor zero = mmff_forward(Tensor({4, 3, 3}), Tensor({4, 3, 3}), blk);
    CHECK((zero.data() == 0.0).all());

    randomize(blk.out_b, 2);
    blk.scale_rgb.mutable_data().setZero();
    blk.scale_x.mutable_data().setZero();
    const Tensor gated = mmff_forward(random({4, 3, 3}, 3), random({4, 3, 3}, 4), blk);
    for (Index c = 0; c < 4; ++c)
        for (Index i = 0; i < 9; ++i)
            CHECK(gated.at(c * 9 + i) == blk.out_b.at(c));

    CHECK_THROWS_AS(mmff_forward(Tensor({4, 3, 3}), Tensor({4, 3, 2}), blk), DimensionError);
    CHECK_THROWS_AS(mmff_forward(Tensor({2, 3, 3}), Tensor({2, 3, 3}), blk), DimensionError);
}

TEST_CASE("single pixel against a two-step scan oracle")
{
    ParameterSet params;
    MMFFBlock blk = block(3, 2, 5, params);
    randomize(blk.scale_rgb, 6);
    randomize(blk.scale_x, 7);
    randomize(blk.out_b, 8);
    randomize(blk.rgb.in_b, 9);
    const Tensor fr = random({3, 1, 1}, 10), fx = random({3, 1, 1}, 11);
    const Tensor out = mmff_forward(fr, fx, blk);

    const Eigen::RowVectorXd sr = branch_token(fr, blk.rgb), sx = branch_token(fx, blk.x);
    auto delta_row = [](const Eigen::RowVectorXd& s, const ModalityBranch& b) {
        Eigen::RowVectorXd d = s * b.w_delta.matrix();
        for (Index k = 0; k < d.size(); ++k)
            d[k] = std::log1p(std::exp(d[k] + b.delta_bias.at(k)));
        return d;
    };
    RowMatrixXd x(2, 3), delta(2, 3), B(2, 2), C(2, 2);
    x << sr, sx;
    delta << delta_row(sr, blk.rgb), delta_row(sx, blk.x);
    B << sr * blk.rgb.w_B.matrix(), sx * blk.x.w_B.matrix();
    C << sx * blk.x.w_C.matrix(), sr * blk.rgb.w_C.matrix();
    const RowMatrixXd A = -blk.a_log.matrix().array().exp().matrix();

    const RowMatrixXd fwd = scan::scan_sequential<double>(x, scan::discretize_zoh<double>(A, B, delta), C);
    const RowMatrixXd xr = x.colwise().reverse(), dr = delta.colwise().reverse(), br = B.colwise().reverse(), cr = C.colwise().reverse();
    const RowMatrixXd rev = scan::scan_sequential<double>(xr, scan::discretize_zoh<double>(A, br, dr), cr).colwise().reverse();
    const RowMatrixXd z = fwd + rev;

    Eigen::RowVectorXd feat(6);
    for (Index c = 0; c < 3; ++c) {
        feat[c] = z(0, c) * blk.scale_rgb.at(c);
        feat[3 + c] = z(1, c) * blk.scale_x.at(c);
    }
    const Eigen::RowVectorXd expect = feat * blk.out_w.matrix();
    for (Index c = 0; c < 3; ++c)
        CHECK(out.at(c) == doctest::Approx(expect[c] + blk.out_b.at(c)).epsilon(1e-13));
}

TEST_CASE("identity stub scan doubles the concatenated sequence")
{
    const ConcatScan stub = [](const Tensor& seq, const Tensor&, const Tensor&, const Tensor&, const Tensor&) { return seq; };
    const Tensor seq = random({10, 3}, 12);
    const Tensor r = bidirectional_scan(seq, Tensor({10, 3}, 0.1), Tensor({3, 2}, -1.0), Tensor({10, 2}), Tensor({10, 2}), stub);
    CHECK(bitwise_equal(r, scale(seq, 2.0)));
}

TEST_CASE("information crosses between modalities")
{
    ParameterSet params;
    const MMFFBlock blk = block(4, 3, 13, params);
    const Tensor fr = random({4, 3, 3}, 14), fx = random({4, 3, 3}, 15);
    const Tensor base = mmff_features(fr, fx, blk, default_concat_scan());
    Tensor bumped = fr.detach();
    bumped.mutable_data()[5] += 0.1;
    const Tensor moved = mmff_features(bumped, fx, blk, default_concat_scan());
    REQUIRE(base.shape() == Shape{9, 8});
    double x_half = 0;
    for (Index r = 0; r < 9; ++r)
        for (Index c = 4; c < 8; ++c)
            x_half = std::max(x_half, std::abs(moved.at(r * 8 + c) - base.at(r * 8 + c)));
    CHECK(x_half > 1e-8);
}

TEST_CASE("swapping modalities with tied branches swaps the feature halves")
{
    ParameterSet params;
    MMFFBlock blk = block(3, 2, 16, params);
    blk.x = blk.rgb;
    const Tensor a = random({3, 1, 1}, 17), b = random({3, 1, 1}, 18);
    const Tensor ab = mmff_features(a, b, blk, default_concat_scan());
    const Tensor ba = mmff_features(b, a, blk, default_concat_scan());
    for (Index c = 0; c < 3; ++c) {
        CHECK(ab.at(c) == ba.at(3 + c));
        CHECK(ab.at(3 + c) == ba.at(c));
    }

    // Tie the two halves of the output projection: the fused output is then swap invariant.
    for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 3; ++c)
            blk.out_w.mutable_data()[(3 + r) * 3 + c] = blk.out_w.at(r * 3 + c);
    CHECK(mmff_forward(a, b, blk).data().isApprox(mmff_forward(b, a, blk).data(), 1e-15));
    const Tensor same = random({3, 2, 2}, 19);
    CHECK(bitwise_equal(mmff_forward(same, same, blk), mmff_forward(same, same, blk)));
}

TEST_CASE("fused pyramids")
{
    ParameterSet params;
    SplitMix64 rng(20);
    std::vector<MMFFBlock> blocks{make_mmff_block(params, "f0", 4, 2, rng), make_mmff_block(params, "f1", 8, 2, rng)};
    const Pyramid rgb{random({4, 4, 4}, 21), random({8, 2, 2}, 22)};
    const Pyramid x{random({4, 4, 4}, 23), random({8, 2, 2}, 24)};
    const Pyramid fused = fuse_pyramids(rgb, x, blocks);
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].shape() == Shape{4, 4, 4});
    CHECK(fused[1].shape() == Shape{8, 2, 2});
    CHECK(fused[1].data().allFinite());
    CHECK_THROWS_AS(fuse_pyramids(rgb, {x[0]}, blocks), DimensionError);
}

TEST_CASE("pixel shuffle")
{
    Tensor f({4, 1, 1});
    f.mutable_data() << 1, 2, 3, 4;
    const Tensor s = pixel_shuffle(f);
    CHECK(s.shape() == Shape{1, 2, 2});
    CHECK(s.at(0) == 1.0);
    CHECK(s.at(1) == 2.0);
    CHECK(s.at(2) == 3.0);
    CHECK(s.at(3) == 4.0);

    const Tensor big = random({16, 4, 4}, 25);
    const Tensor shuffled = pixel_shuffle(big);
    CHECK(shuffled.shape() == Shape{4, 8, 8});
    std::vector<double> before(big.data().begin(), big.data().end()), after(shuffled.data().begin(), shuffled.data().end());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    CHECK(before == after);

    ParameterSet params;
    SplitMix64 rng(26);
    const DecoderStage st = make_decoder_stage(params, "d", 16, 2, rng);
    CHECK(upsample_shuffle(big, st).shape() == Shape{8, 8, 8});
    CHECK_THROWS_AS(pixel_shuffle(random({6, 2, 2}, 1)), ConfigError);
    CHECK_THROWS_AS(make_decoder_stage(params, "bad", 6, 2, rng), ConfigError);
}

TEST_CASE("decoder stage")
{
    ParameterSet params;
    SplitMix64 rng(27);
    DecoderStage st = make_decoder_stage(params, "d", 8, 3, rng);
    randomize(st.up_b, 28);
    const Tensor low = random({8, 2, 3}, 29), high = random({4, 4, 6}, 30);
    const Tensor out = decoder_stage(low, high, st);
    CHECK(out.shape() == Shape{4, 4, 6});
    CHECK(out.data().allFinite());

    // A zero higher level zeroes C, so the scan path vanishes and only Proj(up) remains.
    const Tensor up = upsample_shuffle(low, st);
    const Tensor residual_only = decoder_stage(low, Tensor({4, 4, 6}), st);
    const Tensor expect = from_tokens(linear(to_tokens(up), st.post_w, st.post_b), 4, 6);
    CHECK(bitwise_equal(residual_only, expect));

    CHECK_THROWS_AS(decoder_stage(low, random({4, 4, 4}, 1), st), DimensionError);
    CHECK_THROWS_AS(decoder_stage(random({4, 2, 3}, 1), high, st), DimensionError);
}

TEST_CASE("segmentation head")
{
    ParameterSet params;
    SplitMix64 rng(31);
    SegHead head = make_seg_head(params, "h", 4, 3, rng);
    const Tensor flat = seg_head(Tensor({4, 2, 2}, 0.4), head, 8, 8);
    CHECK(flat.shape() == Shape{3, 8, 8});
    for (Index k = 0; k < 3; ++k)
        for (Index i = 1; i < 64; ++i)
            CHECK(flat.at(k * 64 + i) == doctest::Approx(flat.at(k * 64)).epsilon(1e-15));

    SegHead unit = make_seg_head(params, "u", 1, 1, rng);
    unit.weight.mutable_data() << 1.0;
    Tensor f({1, 2, 2});
    f.mutable_data() << 0, 1, 2, 3;
    const Tensor up = seg_head(f, unit, 4, 4);
    // Half-pixel bilinear sampling with edge clamping.
    const double rows[4] = {0, 0.5, 1.5, 2};
    const double cols[4] = {0, 0.25, 0.75, 1};
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j)
            CHECK(up.at(i * 4 + j) == doctest::Approx(rows[i] + cols[j]).epsilon(1e-15));
    CHECK_THROWS_AS(make_seg_head(params, "z", 4, 0, rng), ConfigError);
}

TEST_CASE("decoder cascade over a toy pyramid")
{
    ParameterSet params;
    SplitMix64 rng(32);
    const Decoder dec = make_decoder(params, "dec", {16, 32}, 2, 1, rng);
    const Tensor logits = decode({random({16, 8, 8}, 33), random({32, 4, 4}, 34)}, dec, 32, 32);
    CHECK(logits.shape() == Shape{1, 32, 32});
    CHECK(logits.data().allFinite());
}
