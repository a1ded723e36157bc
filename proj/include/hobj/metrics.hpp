#pragma once

// Saliency and segmentation metrics on Eigen images, templated on the scalar type.
//
// S-measure, E-measure and the weighted F-measure follow the reference MATLAB
// implementations of their original authors (structure measure: object term
// with sample std, region term split at the rounded 1-based GT centroid;
// enhanced alignment on the adaptive-threshold binarization; weighted F with a
// 7x7 sigma-5 Gaussian and a 5-pixel half-life background distance weight).

#include <hobj/error.hpp>
#include <hobj/types.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace hobj::metrics {

/// MATLAB's eps, used where the reference formulas guard divisions.
inline constexpr double kEps = 2.220446049250313e-16;

/// Prediction clamped to [0, 1] and a binary ground truth (values > 0.5 are foreground).
template <typename Scalar>
struct SaliencyPair {
    Image<Scalar> prediction;
    Image<Scalar> truth;

    SaliencyPair(const Image<Scalar>& pred, const Image<Scalar>& gt)
    {
        if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
            throw DimensionError("saliency pair: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) + " vs ground truth " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
        if (pred.size() == 0)
            throw DimensionError("saliency pair: empty image");
        prediction = pred.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
        truth = (gt > Scalar(0.5)).template cast<Scalar>();
    }

    Index rows() const { return truth.rows(); }
    Index cols() const { return truth.cols(); }
};

namespace detail {

template <typename Scalar>
Scalar object_similarity(const Image<Scalar>& values, const Image<Scalar>& mask)
{
    const double n = static_cast<double>(mask.sum());
    if (n <= 0)
        return 0;
    const double mu = static_cast<double>((values * mask).sum()) / n;
    double ss = 0;
    for (Index i = 0; i < values.size(); ++i)
        if (mask(i) > Scalar(0.5)) {
            const double d = static_cast<double>(values(i)) - mu;
            ss += d * d;
        }
    const double sigma = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    return static_cast<Scalar>(2.0 * mu / (mu * mu + 1.0 + sigma + kEps));
}

template <typename DerivedP, typename DerivedG>
double region_ssim(const Eigen::ArrayBase<DerivedP>& pred, const Eigen::ArrayBase<DerivedG>& gt)
{
    const double n = static_cast<double>(pred.size());
    if (n == 0)
        return 0.0;
    const double x = static_cast<double>(pred.sum()) / n;
    const double y = static_cast<double>(gt.sum()) / n;
    double sx2 = 0, sy2 = 0, sxy = 0;
    for (Index i = 0; i < pred.rows(); ++i)
        for (Index j = 0; j < pred.cols(); ++j) {
            const double dp = static_cast<double>(pred(i, j)) - x;
            const double dg = static_cast<double>(gt(i, j)) - y;
            sx2 += dp * dp;
            sy2 += dg * dg;
            sxy += dp * dg;
        }
    const double denom = n - 1 + kEps;
    sx2 /= denom;
    sy2 /= denom;
    sxy /= denom;
    const double alpha = 4 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx2 + sy2);
    if (alpha != 0)
        return alpha / (beta + kEps);
    return beta == 0 ? 1.0 : 0.0;
}

} // namespace detail

/// Object-aware term: mu * O(pred | fg) + (1 - mu) * O(1 - pred | bg).
template <typename Scalar>
Scalar s_object(const SaliencyPair<Scalar>& p)
{
    const Image<Scalar> bg = Scalar(1) - p.truth;
    const Scalar fg_score = detail::object_similarity<Scalar>(p.prediction, p.truth);
    const Scalar bg_score = detail::object_similarity<Scalar>(Image<Scalar>(Scalar(1) - p.prediction), bg);
    const Scalar mu = p.truth.mean();
    return mu * fg_score + (Scalar(1) - mu) * bg_score;
}

/// 1-based rounded centroid (x = column, y = row) of the ground truth; grid centre when empty.
template <typename Scalar>
std::pair<Index, Index> gt_centroid(const Image<Scalar>& gt)
{
    const double total = static_cast<double>(gt.sum());
    if (total == 0)
        return {static_cast<Index>(std::lround(gt.cols() / 2.0)), static_cast<Index>(std::lround(gt.rows() / 2.0))};
    double sx = 0, sy = 0;
    for (Index i = 0; i < gt.rows(); ++i)
        for (Index j = 0; j < gt.cols(); ++j) {
            sx += static_cast<double>(gt(i, j)) * static_cast<double>(j + 1);
            sy += static_cast<double>(gt(i, j)) * static_cast<double>(i + 1);
        }
    return {static_cast<Index>(std::lround(sx / total)), static_cast<Index>(std::lround(sy / total))};
}

/// Region-aware term: area-weighted SSIM over the four quadrants around the GT centroid.
template <typename Scalar>
Scalar s_region(const SaliencyPair<Scalar>& p)
{
    const auto [x, y] = gt_centroid(p.truth);
    const Index h = p.rows(), w = p.cols();
    const double area = static_cast<double>(h * w);
    double q = 0;
    const Index r0[4] = {0, 0, y, y}, rn[4] = {y, y, h - y, h - y};
    const Index c0[4] = {0, x, 0, x}, cn[4] = {x, w - x, x, w - x};
    for (int k = 0; k < 4; ++k) {
        if (rn[k] == 0 || cn[k] == 0)
            continue;
        const double weight = static_cast<double>(rn[k] * cn[k]) / area;
        q += weight * detail::region_ssim(p.prediction.block(r0[k], c0[k], rn[k], cn[k]), p.truth.block(r0[k], c0[k], rn[k], cn[k]));
    }
    return static_cast<Scalar>(q);
}

/// Structure measure, clamped to [0, 1]. All-background GT scores 1 - mean(pred);
/// all-foreground GT scores mean(pred).
template <typename Scalar>
Scalar s_measure(const SaliencyPair<Scalar>& p, Scalar alpha = Scalar(0.5))
{
    const Scalar mu = p.truth.mean();
    Scalar q;
    if (mu == Scalar(0))
        q = Scalar(1) - p.prediction.mean();
    else if (mu == Scalar(1))
        q = p.prediction.mean();
    else
        q = alpha * s_object(p) + (Scalar(1) - alpha) * s_region(p);
    return std::clamp(q, Scalar(0), Scalar(1));
}

/// Binarization used for the reported E-measure: pred >= min(2 * mean(pred), 1), and pred > 0.
template <typename Scalar>
Image<Scalar> adaptive_binarize(const Image<Scalar>& pred)
{
    const Scalar thr = std::min(Scalar(2) * pred.mean(), Scalar(1));
    return ((pred >= thr) && (pred > Scalar(0))).template cast<Scalar>();
}

/// Mean of the enhanced alignment matrix between a binary map and the ground truth.
template <typename Scalar>
Scalar enhanced_alignment(const Image<Scalar>& binary, const Image<Scalar>& gt)
{
    if (binary.rows() != gt.rows() || binary.cols() != gt.cols())
        throw DimensionError("enhanced_alignment: shape mismatch");
    const double n = static_cast<double>(gt.size());
    const double fg = static_cast<double>(gt.sum());
    if (fg == 0)
        return static_cast<Scalar>((Scalar(1) - binary).sum() / n);
    if (fg == n)
        return static_cast<Scalar>(binary.sum() / n);
    const Scalar mu_fm = binary.mean(), mu_gt = gt.mean();
    const Image<Scalar> a_fm = binary - mu_fm;
    const Image<Scalar> a_gt = gt - mu_gt;
    const Image<Scalar> align = Scalar(2) * (a_gt * a_fm) / (a_gt.square() + a_fm.square() + Scalar(kEps));
    const Image<Scalar> enhanced = (align + Scalar(1)).square() / Scalar(4);
    return static_cast<Scalar>(enhanced.sum() / n);
}

/// Enhanced-alignment measure of the adaptively binarized prediction.
template <typename Scalar>
Scalar e_measure(const SaliencyPair<Scalar>& p)
{
    return enhanced_alignment<Scalar>(adaptive_binarize(p.prediction), p.truth);
}

/// Normalized 7x7 (size 2r+1) Gaussian, entries below eps * max zeroed.
inline RowMatrixXd gaussian_kernel(int radius = 3, double sigma = 5.0)
{
    const int n = 2 * radius + 1;
    RowMatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dx = j - radius, dy = i - radius;
            k(i, j) = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        }
    const double cut = kEps * k.maxCoeff();
    k = k.unaryExpr([cut](double v) { return v < cut ? 0.0 : v; });
    return k / k.sum();
}

template <typename Scalar>
struct WeightedF {
    Scalar value = 0;
    bool empty_truth = false;
};

/// Weighted F-measure. An empty ground truth yields value 0 with empty_truth set.
template <typename Scalar>
WeightedF<Scalar> weighted_fbeta(const SaliencyPair<Scalar>& p, Scalar beta2 = Scalar(1))
{
    WeightedF<Scalar> out;
    const Index h = p.rows(), w = p.cols();
    const Image<double> gt = p.truth.template cast<double>();
    if (gt.sum() == 0) {
        out.empty_truth = true;
        return out;
    }
    const Image<double> err = (p.prediction.template cast<double>() - gt).abs();

    // Nearest-foreground lookup for background pixels. The nearest foreground pixel is
    // always on the foreground's 4-boundary; among equidistant ones the largest error is taken.
    std::vector<std::pair<Index, Index>> boundary;
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            if (gt(i, j) == 0)
                continue;
            const bool edge = (i > 0 && gt(i - 1, j) == 0) || (i + 1 < h && gt(i + 1, j) == 0) || (j > 0 && gt(i, j - 1) == 0) || (j + 1 < w && gt(i, j + 1) == 0);
            if (edge)
                boundary.emplace_back(i, j);
        }
    Image<double> dist = Image<double>::Zero(h, w);
    Image<double> et = err;
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            if (gt(i, j) != 0)
                continue;
            Index best = std::numeric_limits<Index>::max();
            double best_err = 0;
            for (const auto& [bi, bj] : boundary) {
                const Index d2 = (bi - i) * (bi - i) + (bj - j) * (bj - j);
                if (d2 < best || (d2 == best && err(bi, bj) > best_err)) {
                    best = d2;
                    best_err = err(bi, bj);
                }
            }
            dist(i, j) = std::sqrt(static_cast<double>(best));
            et(i, j) = best_err;
        }

    const RowMatrixXd k = gaussian_kernel();
    const Index r = k.rows() / 2;
    Image<double> ea = Image<double>::Zero(h, w);
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            double acc = 0;
            for (Index u = -r; u <= r; ++u)
                for (Index v = -r; v <= r; ++v) {
                    const Index y = i + u, x = j + v;
                    if (y >= 0 && y < h && x >= 0 && x < w)
                        acc += k(u + r, v + r) * et(y, x);
                }
            ea(i, j) = acc;
        }

    double fg_count = 0, fg_err = 0, bg_err = 0;
    const double decay = std::log(0.5) / 5.0;
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            if (gt(i, j) != 0) {
                fg_count += 1;
                fg_err += std::min(err(i, j), ea(i, j));
            } else {
                bg_err += err(i, j) * (2.0 - std::exp(decay * dist(i, j)));
            }
        }
    const double tp = fg_count - fg_err;
    const double recall = 1.0 - fg_err / fg_count;
    const double precision = tp / (kEps + tp + bg_err);
    const double b2 = static_cast<double>(beta2);
    out.value = static_cast<Scalar>((1 + b2) * recall * precision / (kEps + recall + b2 * precision));
    return out;
}

/// Binary foreground IoU of pred > threshold against the ground truth; 1 when both are empty.
template <typename Scalar>
Scalar foreground_iou(const SaliencyPair<Scalar>& p, Scalar threshold = Scalar(0.5))
{
    const auto pred = (p.prediction > threshold);
    const auto gt = (p.truth > Scalar(0.5));
    const double inter = static_cast<double>((pred && gt).count());
    const double uni = static_cast<double>((pred || gt).count());
    return uni == 0 ? Scalar(1) : static_cast<Scalar>(inter / uni);
}

/// sum(p * g) / sum(p + g - p * g) on the soft prediction; 1 when both are empty.
template <typename Scalar>
Scalar soft_iou(const SaliencyPair<Scalar>& p)
{
    const double inter = static_cast<double>((p.prediction * p.truth).sum());
    const double uni = static_cast<double>((p.prediction + p.truth - p.prediction * p.truth).sum());
    return uni == 0 ? Scalar(1) : static_cast<Scalar>(inter / uni);
}

/// K x K pixel counts; rows are ground-truth classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(Index classes) : counts_(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(classes, classes))
    {
        if (classes < 1)
            throw ConfigError("confusion matrix needs at least one class");
    }

    /// Adds every pixel whose ground truth is not ignore_index.
    void add(const LabelImage& truth, const LabelImage& pred, int ignore_index = 255)
    {
        if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
            throw DimensionError("confusion matrix: label maps differ in shape");
        const Index k = classes();
        for (Index i = 0; i < truth.size(); ++i) {
            const int g = truth(i);
            if (g == ignore_index)
                continue;
            const int q = pred(i);
            if (g < 0 || g >= k || q < 0 || q >= k)
                throw DomainError("confusion matrix: label out of range [0, " + std::to_string(k) + ")");
            counts_(g, q) += 1;
        }
    }

    void merge(const ConfusionMatrix& other)
    {
        if (other.classes() != classes())
            throw DimensionError("confusion matrix: class count mismatch");
        counts_ += other.counts_;
    }

    Index classes() const { return counts_.rows(); }
    std::int64_t total() const { return counts_.sum(); }
    std::int64_t operator()(Index truth, Index pred) const { return counts_(truth, pred); }
    std::int64_t& operator()(Index truth, Index pred) { return counts_(truth, pred); }

private:
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

struct SegmentationScores {
    double miou = 0;
    double macc = 0;
    Eigen::VectorXd iou;
    Eigen::VectorXd acc;
    std::vector<bool> present; // class occurs in the ground truth
};

/// IoU_k = tp/(tp+fp+fn), acc_k = tp/(tp+fn); means over classes present in the ground truth.
inline SegmentationScores miou_macc(const ConfusionMatrix& cm)
{
    if (cm.total() == 0)
        throw DomainError("miou_macc: confusion matrix is empty");
    const Index k = cm.classes();
    SegmentationScores s;
    s.iou = Eigen::VectorXd::Zero(k);
    s.acc = Eigen::VectorXd::Zero(k);
    s.present.assign(static_cast<std::size_t>(k), false);
    double n = 0;
    for (Index c = 0; c < k; ++c) {
        double tp = static_cast<double>(cm(c, c)), row = 0, col = 0;
        for (Index j = 0; j < k; ++j) {
            row += static_cast<double>(cm(c, j));
            col += static_cast<double>(cm(j, c));
        }
        if (row == 0)
            continue;
        s.present[static_cast<std::size_t>(c)] = true;
        s.iou[c] = tp / (row + col - tp);
        s.acc[c] = tp / row;
        s.miou += s.iou[c];
        s.macc += s.acc[c];
        n += 1;
    }
    s.miou /= n;
    s.macc /= n;
    return s;
}

struct SaliencyScores {
    double s_alpha = 0;
    double e_phi = 0;
    double f_beta_w = 0;
    double iou = 0;
    bool empty_truth = false;
};

template <typename Scalar>
SaliencyScores saliency_scores(const SaliencyPair<Scalar>& p)
{
    SaliencyScores s;
    s.s_alpha = static_cast<double>(s_measure(p));
    s.e_phi = static_cast<double>(e_measure(p));
    const auto fw = weighted_fbeta(p);
    s.f_beta_w = static_cast<double>(fw.value);
    s.empty_truth = fw.empty_truth;
    s.iou = static_cast<double>(foreground_iou(p));
    return s;
}

/// Per-image saliency scores with their means, and pooled segmentation scores.
struct MetricsReport {
    std::vector<std::string> ids;
    std::vector<SaliencyScores> per_image;
    SaliencyScores mean;
    std::vector<SegmentationScores> per_image_segmentation;
    SegmentationScores pooled;
    bool has_saliency = false;
    bool has_segmentation = false;
};

class ReportBuilder {
public:
    explicit ReportBuilder(Index classes = 2) : pooled_(classes) {}

    template <typename Scalar>
    void add_saliency(const std::string& id, const SaliencyPair<Scalar>& p)
    {
        report_.has_saliency = true;
        report_.ids.push_back(id);
        report_.per_image.push_back(saliency_scores(p));
    }

    void add_segmentation(const std::string& id, const LabelImage& truth, const LabelImage& pred, int ignore_index = 255)
    {
        report_.has_segmentation = true;
        ConfusionMatrix cm(pooled_.classes());
        cm.add(truth, pred, ignore_index);
        pooled_.merge(cm);
        if (!report_.has_saliency)
            report_.ids.push_back(id);
        report_.per_image_segmentation.push_back(cm.total() > 0 ? miou_macc(cm) : SegmentationScores{});
    }

    MetricsReport finish() const
    {
        MetricsReport r = report_;
        if (!r.per_image.empty()) {
            const double n = static_cast<double>(r.per_image.size());
            for (const auto& s : r.per_image) {
                r.mean.s_alpha += s.s_alpha / n;
                r.mean.e_phi += s.e_phi / n;
                r.mean.f_beta_w += s.f_beta_w / n;
                r.mean.iou += s.iou / n;
            }
        }
        if (r.has_segmentation && pooled_.total() > 0)
            r.pooled = miou_macc(pooled_);
        return r;
    }

    const ConfusionMatrix& pooled() const { return pooled_; }

private:
    MetricsReport report_;
    ConfusionMatrix pooled_;
};

} // namespace hobj::metrics
