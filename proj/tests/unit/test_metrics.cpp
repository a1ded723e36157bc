#include <doctest.h>

#include <hobj/error.hpp>
#include <hobj/metrics.hpp>
#include <hobj/rng.hpp>

using namespace hobj;
using namespace hobj::metrics;

namespace {

ImageD blob(Index h, Index w, Index r0, Index r1, Index c0, Index c1)
{
    ImageD m = ImageD::Zero(h, w);
    m.block(r0, c0, r1 - r0, c1 - c0).setOnes();
    return m;
}

ImageD noisy(const ImageD& gt, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    ImageD p = gt;
    for (Index i = 0; i < p.size(); ++i)
        p(i) = std::clamp(p(i) + rng.uniform(-0.45, 0.45), 0.0, 1.0);
    return p;
}

LabelImage labels(Index h, Index w, std::initializer_list<int> v)
{
    LabelImage l(h, w);
    Index i = 0;
    for (int x : v)
        l(i++) = x;
    return l;
}

} // namespace

TEST_CASE("perfect prediction scores one")
{
    const ImageD gt = blob(12, 10, 2, 7, 3, 8);
    const SaliencyPair<double> p(gt, gt);
    CHECK(s_measure(p) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(e_measure(p) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(weighted_fbeta(p).value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(foreground_iou(p) == 1.0);
    CHECK(soft_iou(p) == 1.0);

    for (Index k : {2, 3, 5}) {
        LabelImage l(4, 5);
        for (Index i = 0; i < l.size(); ++i)
            l(i) = static_cast<int>(i % k);
        ConfusionMatrix cm(k);
        cm.add(l, l);
        const auto s = miou_macc(cm);
        CHECK(s.miou == 1.0);
        CHECK(s.macc == 1.0);
    }
}

TEST_CASE("degenerate ground truth")
{
    const ImageD zero = ImageD::Zero(4, 4), one = ImageD::Ones(4, 4);
    CHECK(s_measure(SaliencyPair<double>(zero, zero)) == 1.0);
    CHECK(s_measure(SaliencyPair<double>(one, one)) == 1.0);
    ImageD quarter = zero;
    quarter.row(0).setConstant(1.0);
    CHECK(s_measure(SaliencyPair<double>(quarter, zero)) == doctest::Approx(0.75));
    CHECK(s_measure(SaliencyPair<double>(quarter, one)) == doctest::Approx(0.25));

    CHECK(e_measure(SaliencyPair<double>(zero, zero)) == 1.0);
    CHECK(e_measure(SaliencyPair<double>(one, one)) == 1.0);
    CHECK(e_measure(SaliencyPair<double>(one, zero)) == 0.0);

    const auto empty = weighted_fbeta(SaliencyPair<double>(quarter, zero));
    CHECK(empty.empty_truth);
    CHECK(empty.value == 0.0);

    // The object sits at least 3 pixels from the border, so the zero-padded smoothing
    // window never leaves the image and the dependency term stays at full error.
    const ImageD gt = blob(16, 16, 5, 11, 4, 12);
    CHECK(weighted_fbeta(SaliencyPair<double>(ImageD::Zero(16, 16), gt)).value < 1e-12);
    CHECK(foreground_iou(SaliencyPair<double>(zero, zero)) == 1.0);

    CHECK_THROWS_AS(SaliencyPair<double>(ImageD::Zero(3, 4), zero), DimensionError);
    CHECK_THROWS_AS(SaliencyPair<double>(ImageD(0, 0), ImageD(0, 0)), DimensionError);
}

TEST_CASE("structure measure walkthrough for an inverted half-foreground map")
{
    // GT: top two rows of a 4x4 grid; prediction is its complement.
    const ImageD gt = blob(4, 4, 0, 2, 0, 4);
    const SaliencyPair<double> p(1.0 - gt, gt);
    // Object term: the prediction inside the foreground is all 0 (mean 0, score 0), and
    // 1 - prediction inside the background is all 0 as well, so S_object = 0.
    CHECK(s_object(p) == 0.0);
    // Centroid (1-based) is column 2.5 -> 3 and row 1.5 -> 2, so the split is at x = 3, y = 2.
    CHECK(gt_centroid(p.truth) == std::pair<Index, Index>{3, 2});
    // Each quadrant holds constant prediction and constant GT: zero variances give
    // alpha = beta = 0, whose SSIM is 1; area weights sum to 1, so S_region = 1.
    CHECK(s_region(p) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s_measure(p) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("enhanced alignment walkthrough on a 2x2 inverted map")
{
    const ImageD gt = blob(2, 2, 0, 1, 0, 2);
    const SaliencyPair<double> p(1.0 - gt, gt);
    // The adaptive threshold is min(2 * 0.5, 1) = 1, so the binary map equals 1 - GT.
    CHECK((adaptive_binarize(p.prediction) == 1.0 - gt).all());
    // Centred maps are +-0.5 with opposite signs: xi = 2(-0.25)/(0.5) = -1 and (1 + xi)^2 / 4 = 0.
    CHECK(e_measure(p) < 1e-12);
}

TEST_CASE("weighted F orders near and far background errors")
{
    // Values from tests/oracles/weighted_f.py. The reference weighting grows with the
    // distance to the object, so the far error costs more than the adjacent one.
    const ImageD gt4 = blob(4, 4, 0, 2, 0, 2);
    ImageD near4 = gt4, far4 = gt4;
    near4(0, 2) = 1.0;
    far4(3, 3) = 1.0;
    const double qn4 = weighted_fbeta(SaliencyPair<double>(near4, gt4)).value;
    const double qf4 = weighted_fbeta(SaliencyPair<double>(far4, gt4)).value;
    CHECK(qn4 == doctest::Approx(0.8762850438534597).epsilon(1e-12));
    CHECK(qf4 == doctest::Approx(0.857967211600303).epsilon(1e-12));
    CHECK(qf4 < qn4);

    const ImageD gt16 = blob(16, 16, 6, 10, 6, 10);
    ImageD near16 = gt16, far16 = gt16;
    near16(5, 7) = 1.0;
    far16(0, 0) = 1.0;
    CHECK(weighted_fbeta(SaliencyPair<double>(near16, gt16)).value == doctest::Approx(0.9659079925592554).epsilon(1e-12));
    CHECK(weighted_fbeta(SaliencyPair<double>(far16, gt16)).value == doctest::Approx(0.9497920556100615).epsilon(1e-12));
}

TEST_CASE("hand-counted segmentation case")
{
    const LabelImage gt = labels(2, 2, {0, 0, 1, 1});
    const LabelImage pred = labels(2, 2, {0, 1, 1, 1});
    ConfusionMatrix cm(2);
    cm.add(gt, pred);
    const auto s = miou_macc(cm);
    CHECK(s.iou[0] == 0.5);
    CHECK(s.iou[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.miou == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
    CHECK(s.acc[0] == 0.5);
    CHECK(s.acc[1] == 1.0);
    CHECK(s.macc == 0.75);

    ConfusionMatrix three(3);
    three.add(gt, pred);
    const auto t = miou_macc(three);
    CHECK_FALSE(t.present[2]);
    CHECK(t.miou == s.miou);
    CHECK(t.macc == s.macc);

    ConfusionMatrix ignored(2);
    ignored.add(labels(2, 2, {255, 0, 1, 1}), labels(2, 2, {1, 0, 1, 1}));
    CHECK(ignored.total() == 3);
    CHECK(miou_macc(ignored).miou == 1.0);

    CHECK_THROWS_AS(miou_macc(ConfusionMatrix(2)), DomainError);
    CHECK_THROWS_AS(cm.add(gt, labels(2, 2, {0, 1, 2, 1})), DomainError);
    CHECK_THROWS_AS(cm.add(gt, LabelImage::Zero(1, 4)), DimensionError);
}

TEST_CASE("corrupting more pixels never improves mIoU or weighted F")
{
    const ImageD gt = blob(12, 12, 3, 9, 2, 8);
    LabelImage truth = gt.cast<int>();
    SplitMix64 rng(5);
    ImageD pred = gt;
    double last_f = weighted_fbeta(SaliencyPair<double>(pred, gt)).value;
    double last_miou = 1.0;
    for (int step = 0; step < 40; ++step) {
        Index i = 0;
        do {
            i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(pred.size())));
        } while (pred(i) != gt(i));
        pred(i) = 1.0 - gt(i);
        const double f = weighted_fbeta(SaliencyPair<double>(pred, gt)).value;
        ConfusionMatrix cm(2);
        cm.add(truth, pred.cast<int>());
        const double miou = miou_macc(cm).miou;
        CHECK(f <= last_f + 1e-15);
        CHECK(miou <= last_miou + 1e-15);
        last_f = f;
        last_miou = miou;
    }
}

TEST_CASE("saliency metrics are transposition invariant")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ImageD gt = blob(9, 13, 1 + static_cast<Index>(seed), 7, 2, 10 - static_cast<Index>(seed));
        const ImageD pred = noisy(gt, seed);
        const SaliencyPair<double> p(pred, gt);
        const SaliencyPair<double> t(ImageD(pred.transpose()), ImageD(gt.transpose()));
        CHECK(s_measure(t) == doctest::Approx(s_measure(p)).epsilon(1e-12));
        CHECK(e_measure(t) == doctest::Approx(e_measure(p)).epsilon(1e-12));
        CHECK(weighted_fbeta(t).value == doctest::Approx(weighted_fbeta(p).value).epsilon(1e-12));
    }
}

TEST_CASE("scores stay in the unit interval")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ImageD gt = blob(10, 10, static_cast<Index>(seed % 4), 6 + static_cast<Index>(seed % 3), 1, 9);
        const auto s = saliency_scores(SaliencyPair<double>(noisy(gt, 50 + seed), gt));
        for (double v : {s.s_alpha, s.e_phi, s.f_beta_w, s.iou}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("report aggregation")
{
    ReportBuilder builder(3);
    std::vector<SaliencyScores> scores;
    ConfusionMatrix pooled(3);
    for (std::uint64_t i = 0; i < 6; ++i) {
        const ImageD gt = blob(8, 8, 1, 4 + static_cast<Index>(i % 3), 2, 7);
        const ImageD pred = noisy(gt, 100 + i);
        const SaliencyPair<double> p(pred, gt);
        builder.add_saliency("img" + std::to_string(i), p);
        scores.push_back(saliency_scores(p));

        LabelImage truth(4, 4), guess(4, 4);
        SplitMix64 rng(200 + i);
        for (Index k = 0; k < 16; ++k) {
            truth(k) = static_cast<int>(rng.below(3));
            guess(k) = rng.uniform() < 0.6 ? truth(k) : static_cast<int>(rng.below(3));
        }
        builder.add_segmentation("img" + std::to_string(i), truth, guess);
        pooled.add(truth, guess);
    }
    const MetricsReport r = builder.finish();
    double s = 0, e = 0, f = 0;
    for (const auto& sc : scores) {
        s += sc.s_alpha;
        e += sc.e_phi;
        f += sc.f_beta_w;
    }
    CHECK(std::abs(r.mean.s_alpha - s / 6) < 1e-12);
    CHECK(std::abs(r.mean.e_phi - e / 6) < 1e-12);
    CHECK(std::abs(r.mean.f_beta_w - f / 6) < 1e-12);
    const auto ref = miou_macc(pooled);
    CHECK(std::abs(r.pooled.miou - ref.miou) < 1e-12);
    CHECK(std::abs(r.pooled.macc - ref.macc) < 1e-12);
    CHECK(r.ids.size() == 6);
}
