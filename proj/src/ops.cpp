#include <hobj/ops.hpp>

#include <hobj/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hobj {

using detail::NodePtr;
using detail::wants_grad;
using Eigen::ArrayXd;

namespace {

using MatMap = Eigen::Map<RowMatrixXd>;
using ConstMatMap = Eigen::Map<const RowMatrixXd>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_axis(const char* op, const Tensor& x, std::size_t axis)
{
    if (axis >= x.rank())
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " + shape_string(x.shape()));
}

Index trailing(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

double softplus_value(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
double sigmoid_value(double v)
{
    if (v >= 0)
        return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

template <typename Fn, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fn fn, Deriv deriv)
{
    ArrayXd out = x.data().unaryExpr(fn);
    return make_result(op, x.shape(), std::move(out), {x}, [deriv](const ArrayXd& g, const std::vector<NodePtr>& in) {
        const ArrayXd& xv = in[0]->value;
        in[0]->grad += g * xv.unaryExpr(deriv);
    });
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    ArrayXd out(m * n);
    MatMap(out.data(), m, n).noalias() = a.matrix() * b.matrix();
    return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](const ArrayXd& g, const std::vector<NodePtr>& in) {
        ConstMatMap gm(g.data(), m, n);
        if (wants_grad(in[0]))
            MatMap(in[0]->grad.data(), m, k).noalias() += gm * ConstMatMap(in[1]->value.data(), k, n).transpose();
        if (wants_grad(in[1]))
            MatMap(in[1]->grad.data(), k, n).noalias() += ConstMatMap(in[0]->value.data(), m, k).transpose() * gm;
    });
}

Tensor add(const Tensor& a, const Tensor& b)
{
    require_same_shape("add", a, b);
    return make_result("add", a.shape(), a.data() + b.data(), {a, b}, [](const ArrayXd& g, const std::vector<NodePtr>& in) {
        if (wants_grad(in[0]))
            in[0]->grad += g;
        if (wants_grad(in[1]))
            in[1]->grad += g;
    });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    require_same_shape("sub", a, b);
    return make_result("sub", a.shape(), a.data() - b.data(), {a, b}, [](const ArrayXd& g, const std::vector<NodePtr>& in) {
        if (wants_grad(in[0]))
            in[0]->grad += g;
        if (wants_grad(in[1]))
            in[1]->grad -= g;
    });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    require_same_shape("mul", a, b);
    return make_result("mul", a.shape(), a.data() * b.data(), {a, b}, [](const ArrayXd& g, const std::vector<NodePtr>& in) {
        if (wants_grad(in[0]))
            in[0]->grad += g * in[1]->value;
        if (wants_grad(in[1]))
            in[1]->grad += g * in[0]->value;
    });
}

Tensor scale(const Tensor& a, double s)
{
    return make_result("scale", a.shape(), a.data() * s, {a}, [s](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g * s; });
}

Tensor add_scalar(const Tensor& a, double s)
{
    return make_result("add_scalar", a.shape(), a.data() + s, {a}, [](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_row_vector(const Tensor& x, const Tensor& v)
{
    const Index d = trailing(x);
    if (v.rank() != 1 || v.dim(0) != d)
        throw DimensionError("add_row_vector: " + shape_string(v.shape()) + " does not match trailing extent of " + shape_string(x.shape()));
    const Index rows = x.numel() / d;
    ArrayXd out(x.numel());
    MatMap(out.data(), rows, d) = ConstMatMap(x.data().data(), rows, d).rowwise() + v.data().matrix().transpose();
    return make_result("add_row_vector", x.shape(), std::move(out), {x, v}, [rows, d](const ArrayXd& g, const std::vector<NodePtr>& in) {
        if (wants_grad(in[0]))
            in[0]->grad += g;
        if (wants_grad(in[1]))
            in[1]->grad.matrix() += ConstMatMap(g.data(), rows, d).colwise().sum().transpose();
    });
}

Tensor mul_row_vector(const Tensor& x, const Tensor& v)
{
    const Index d = trailing(x);
    if (v.rank() != 1 || v.dim(0) != d)
        throw DimensionError("mul_row_vector: " + shape_string(v.shape()) + " does not match trailing extent of " + shape_string(x.shape()));
    const Index rows = x.numel() / d;
    ArrayXd out(x.numel());
    MatMap(out.data(), rows, d) = ConstMatMap(x.data().data(), rows, d) * v.data().matrix().asDiagonal();
    return make_result("mul_row_vector", x.shape(), std::move(out), {x, v}, [rows, d](const ArrayXd& g, const std::vector<NodePtr>& in) {
        ConstMatMap gm(g.data(), rows, d);
        if (wants_grad(in[0]))
            MatMap(in[0]->grad.data(), rows, d) += gm * in[1]->value.matrix().asDiagonal();
        if (wants_grad(in[1]))
            in[1]->grad.matrix() += gm.cwiseProduct(ConstMatMap(in[0]->value.data(), rows, d)).colwise().sum().transpose();
    });
}

Tensor sigmoid(const Tensor& x)
{
    return unary("sigmoid", x, sigmoid_value, [](double v) {
        const double s = sigmoid_value(v);
        return s * (1.0 - s);
    });
}

Tensor silu(const Tensor& x)
{
    return unary("silu", x, [](double v) { return v * sigmoid_value(v); }, [](double v) {
        const double s = sigmoid_value(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

Tensor softplus(const Tensor& x) { return unary("softplus", x, softplus_value, sigmoid_value); }

Tensor exp(const Tensor& x)
{
    ArrayXd out = x.data().exp();
    return make_result("exp", x.shape(), out, {x}, [out](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g * out; });
}

Tensor log(const Tensor& x)
{
    if ((x.data() <= 0.0).any())
        throw DomainError("log of a non-positive value");
    return make_result("log", x.shape(), x.data().log(), {x}, [](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g / in[0]->value; });
}

Tensor sum(const Tensor& x)
{
    ArrayXd out(1);
    out[0] = x.data().sum();
    return make_result("sum", {}, std::move(out), {x}, [](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g[0]; });
}

Tensor mean(const Tensor& x)
{
    const double n = static_cast<double>(x.numel());
    ArrayXd out(1);
    out[0] = x.data().sum() / n;
    return make_result("mean", {}, std::move(out), {x}, [n](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g[0] / n; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    const Index d = trailing(x);
    if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != d || beta.dim(0) != d)
        throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " + shape_string(beta.shape()) + " vs input " + shape_string(x.shape()));
    if (eps < 0)
        throw ConfigError("layer_norm: eps must be non-negative");
    const Index rows = x.numel() / d;
    ConstMatMap xm(x.data().data(), rows, d);
    auto xhat = std::make_shared<RowMatrixXd>(rows, d);
    auto rstd = std::make_shared<VectorX<double>>(rows);
    for (Index r = 0; r < rows; ++r) {
        const double mu = xm.row(r).mean();
        const double var = (xm.row(r).array() - mu).square().mean();
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        xhat->row(r) = (xm.row(r).array() - mu) * rs;
    }
    ArrayXd out(x.numel());
    MatMap om(out.data(), rows, d);
    om = (xhat->array().rowwise() * gamma.data().transpose()).rowwise() + beta.data().transpose();
    return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [rows, d, xhat, rstd](const ArrayXd& g, const std::vector<NodePtr>& in) {
        ConstMatMap gm(g.data(), rows, d);
        if (wants_grad(in[1]))
            in[1]->grad.matrix() += gm.cwiseProduct(*xhat).colwise().sum().transpose();
        if (wants_grad(in[2]))
            in[2]->grad.matrix() += gm.colwise().sum().transpose();
        if (wants_grad(in[0])) {
            MatMap gx(in[0]->grad.data(), rows, d);
            const RowMatrixXd gxhat = gm * in[1]->value.matrix().asDiagonal();
            for (Index r = 0; r < rows; ++r) {
                const double m1 = gxhat.row(r).mean();
                const double m2 = gxhat.row(r).dot(xhat->row(r)) / static_cast<double>(d);
                gx.row(r).array() += (*rstd)[r] * (gxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
            }
        }
    });
}

Tensor depthwise_conv(const Tensor& x, const Tensor& k)
{
    if (x.rank() != 3 || k.rank() != 3 || k.dim(0) != x.dim(0))
        throw DimensionError("depthwise_conv: input " + shape_string(x.shape()) + " with kernel " + shape_string(k.shape()));
    const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), kh = k.dim(1), kw = k.dim(2);
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ConfigError("depthwise_conv: kernel extents must be odd, got " + shape_string(k.shape()));
    const Index ph = kh / 2, pw = kw / 2;
    const double* xv = x.data().data();
    const double* kv = k.data().data();
    ArrayXd out = ArrayXd::Zero(x.numel());
    for (Index ch = 0; ch < c; ++ch)
        for (Index u = 0; u < kh; ++u)
            for (Index v = 0; v < kw; ++v) {
                const double kk = kv[(ch * kh + u) * kw + v];
                const Index dy = u - ph, dx = v - pw;
                for (Index i = std::max<Index>(0, -dy); i < std::min(h, h - dy); ++i)
                    for (Index j = std::max<Index>(0, -dx); j < std::min(w, w - dx); ++j)
                        out[(ch * h + i) * w + j] += kk * xv[(ch * h + i + dy) * w + j + dx];
            }
    return make_result("depthwise_conv", x.shape(), std::move(out), {x, k}, [c, h, w, kh, kw, ph, pw](const ArrayXd& g, const std::vector<NodePtr>& in) {
        const double* xv = in[0]->value.data();
        const double* kv = in[1]->value.data();
        const bool gx = wants_grad(in[0]), gk = wants_grad(in[1]);
        for (Index ch = 0; ch < c; ++ch)
            for (Index u = 0; u < kh; ++u)
                for (Index v = 0; v < kw; ++v) {
                    const Index kidx = (ch * kh + u) * kw + v;
                    const double kk = kv[kidx];
                    const Index dy = u - ph, dx = v - pw;
                    double acc = 0.0;
                    for (Index i = std::max<Index>(0, -dy); i < std::min(h, h - dy); ++i)
                        for (Index j = std::max<Index>(0, -dx); j < std::min(w, w - dx); ++j) {
                            const Index o = (ch * h + i) * w + j;
                            const Index s = (ch * h + i + dy) * w + j + dx;
                            if (gx)
                                in[0]->grad[s] += kk * g[o];
                            acc += xv[s] * g[o];
                        }
                    if (gk)
                        in[1]->grad[kidx] += acc;
                }
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis)
{
    if (parts.empty())
        throw DimensionError("concat: no inputs");
    require_axis("concat", parts[0], axis);
    Shape shape = parts[0].shape();
    Index total = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size())
            throw DimensionError("concat: rank mismatch " + shape_string(p.shape()) + " vs " + shape_string(shape));
        for (std::size_t i = 0; i < shape.size(); ++i)
            if (i != axis && p.shape()[i] != shape[i])
                throw DimensionError("concat: shape mismatch " + shape_string(p.shape()) + " vs " + shape_string(shape) + " off axis " + std::to_string(axis));
        total += p.shape()[axis];
    }
    shape[axis] = total;
    Index outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i)
        outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        inner *= shape[i];
    std::vector<Index> widths;
    for (const auto& p : parts)
        widths.push_back(p.shape()[axis] * inner);
    const Index row = total * inner;
    ArrayXd out(shape_numel(shape));
    Index offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const double* src = parts[pi].data().data();
        for (Index o = 0; o < outer; ++o)
            std::copy_n(src + o * widths[pi], widths[pi], out.data() + o * row + offset);
        offset += widths[pi];
    }
    return make_result("concat", shape, std::move(out), parts, [outer, row, widths](const ArrayXd& g, const std::vector<NodePtr>& in) {
        Index offset = 0;
        for (std::size_t pi = 0; pi < in.size(); ++pi) {
            if (wants_grad(in[pi]))
                for (Index o = 0; o < outer; ++o)
                    in[pi]->grad.segment(o * widths[pi], widths[pi]) += g.segment(o * row + offset, widths[pi]);
            offset += widths[pi];
        }
    });
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<Index>& sizes)
{
    require_axis("split", x, axis);
    const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
    if (total != x.shape()[axis])
        throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis " + std::to_string(axis) + " of " + shape_string(x.shape()) + " has extent " + std::to_string(x.shape()[axis]));
    Index outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i)
        outer *= x.shape()[i];
    for (std::size_t i = axis + 1; i < x.rank(); ++i)
        inner *= x.shape()[i];
    const Index row = total * inner;
    std::vector<Tensor> result;
    Index offset = 0;
    for (Index s : sizes) {
        Shape shape = x.shape();
        shape[axis] = s;
        const Index width = s * inner;
        ArrayXd out(outer * width);
        for (Index o = 0; o < outer; ++o)
            out.segment(o * width, width) = x.data().segment(o * row + offset, width);
        result.push_back(make_result("split", shape, std::move(out), {x}, [outer, row, width, offset](const ArrayXd& g, const std::vector<NodePtr>& in) {
            for (Index o = 0; o < outer; ++o)
                in[0]->grad.segment(o * row + offset, width) += g.segment(o * width, width);
        }));
        offset += width;
    }
    return result;
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<Index>> indices, Shape out_shape, std::string op)
{
    const Index n = shape_numel(out_shape);
    if (static_cast<Index>(indices->size()) != n)
        throw DimensionError(op + ": index count " + std::to_string(indices->size()) + " does not match output shape " + shape_string(out_shape));
    const double* src = x.data().data();
    const Index limit = x.numel();
    ArrayXd out(n);
    for (Index i = 0; i < n; ++i) {
        const Index s = (*indices)[static_cast<std::size_t>(i)];
        if (s < 0 || s >= limit)
            throw DimensionError(op + ": index " + std::to_string(s) + " out of range for " + shape_string(x.shape()));
        out[i] = src[s];
    }
    return make_result(std::move(op), std::move(out_shape), std::move(out), {x}, [indices](const ArrayXd& g, const std::vector<NodePtr>& in) {
        double* dst = in[0]->grad.data();
        const auto& idx = *indices;
        for (std::size_t i = 0; i < idx.size(); ++i)
            dst[idx[i]] += g[static_cast<Index>(i)];
    });
}

Tensor flip(const Tensor& x, std::size_t axis)
{
    require_axis("flip", x, axis);
    const Shape& s = x.shape();
    Index outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i)
        outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i)
        inner *= s[i];
    const Index n = s[axis];
    auto idx = std::make_shared<std::vector<Index>>();
    idx->reserve(static_cast<std::size_t>(x.numel()));
    for (Index o = 0; o < outer; ++o)
        for (Index a = 0; a < n; ++a)
            for (Index i = 0; i < inner; ++i)
                idx->push_back((o * n + (n - 1 - a)) * inner + i);
    return gather(x, std::move(idx), s, "flip");
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    return make_result("reshape", std::move(shape), x.data(), {x}, [](const ArrayXd& g, const std::vector<NodePtr>& in) { in[0]->grad += g; });
}

Tensor transpose(const Tensor& x)
{
    if (x.rank() != 2)
        throw DimensionError("transpose: needs rank 2, got " + shape_string(x.shape()));
    const Index r = x.dim(0), c = x.dim(1);
    ArrayXd out(x.numel());
    MatMap(out.data(), c, r) = x.matrix().transpose();
    return make_result("transpose", {c, r}, std::move(out), {x}, [r, c](const ArrayXd& g, const std::vector<NodePtr>& in) {
        MatMap(in[0]->grad.data(), r, c) += ConstMatMap(g.data(), c, r).transpose();
    });
}

namespace {
struct Tap {
    Index i0, i1;
    double w1;
};

std::vector<Tap> bilinear_taps(Index in, Index out)
{
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const Index i0 = static_cast<Index>(std::floor(src));
        const Index i1 = std::min(i0 + 1, in - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}
} // namespace

Tensor bilinear_resize(const Tensor& x, Index out_h, Index out_w)
{
    if (x.rank() != 3)
        throw DimensionError("bilinear_resize: needs [C x H x W], got " + shape_string(x.shape()));
    if (out_h < 1 || out_w < 1)
        throw ConfigError("bilinear_resize: output extents must be positive");
    const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto rows = std::make_shared<std::vector<Tap>>(bilinear_taps(h, out_h));
    auto cols = std::make_shared<std::vector<Tap>>(bilinear_taps(w, out_w));
    const double* xv = x.data().data();
    ArrayXd out(c * out_h * out_w);
    for (Index ch = 0; ch < c; ++ch)
        for (Index i = 0; i < out_h; ++i) {
            const Tap& r = (*rows)[static_cast<std::size_t>(i)];
            for (Index j = 0; j < out_w; ++j) {
                const Tap& q = (*cols)[static_cast<std::size_t>(j)];
                const double* base = xv + ch * h * w;
                const double top = (1.0 - q.w1) * base[r.i0 * w + q.i0] + q.w1 * base[r.i0 * w + q.i1];
                const double bot = (1.0 - q.w1) * base[r.i1 * w + q.i0] + q.w1 * base[r.i1 * w + q.i1];
                out[(ch * out_h + i) * out_w + j] = (1.0 - r.w1) * top + r.w1 * bot;
            }
        }
    return make_result("bilinear_resize", {c, out_h, out_w}, std::move(out), {x}, [c, h, w, out_h, out_w, rows, cols](const ArrayXd& g, const std::vector<NodePtr>& in) {
        double* gx = in[0]->grad.data();
        for (Index ch = 0; ch < c; ++ch)
            for (Index i = 0; i < out_h; ++i) {
                const Tap& r = (*rows)[static_cast<std::size_t>(i)];
                for (Index j = 0; j < out_w; ++j) {
                    const Tap& q = (*cols)[static_cast<std::size_t>(j)];
                    const double go = g[(ch * out_h + i) * out_w + j];
                    double* base = gx + ch * h * w;
                    base[r.i0 * w + q.i0] += go * (1.0 - r.w1) * (1.0 - q.w1);
                    base[r.i0 * w + q.i1] += go * (1.0 - r.w1) * q.w1;
                    base[r.i1 * w + q.i0] += go * r.w1 * (1.0 - q.w1);
                    base[r.i1 * w + q.i1] += go * r.w1 * q.w1;
                }
            }
    });
}

Tensor log_softmax(const Tensor& x)
{
    if (x.rank() != 2)
        throw DimensionError("log_softmax: needs [K x P], got " + shape_string(x.shape()));
    const Index k = x.dim(0), p = x.dim(1);
    ConstMatMap xm(x.data().data(), k, p);
    const Eigen::RowVectorXd mx = xm.colwise().maxCoeff();
    const Eigen::RowVectorXd lse = mx.array() + (xm.rowwise() - mx).array().exp().colwise().sum().log();
    ArrayXd out(x.numel());
    MatMap(out.data(), k, p) = xm.rowwise() - lse;
    auto soft = std::make_shared<RowMatrixXd>(ConstMatMap(out.data(), k, p).array().exp().matrix());
    return make_result("log_softmax", x.shape(), std::move(out), {x}, [k, p, soft](const ArrayXd& g, const std::vector<NodePtr>& in) {
        ConstMatMap gm(g.data(), k, p);
        const Eigen::RowVectorXd gsum = gm.colwise().sum();
        MatMap(in[0]->grad.data(), k, p) += gm - RowMatrixXd(soft->array().rowwise() * gsum.array());
    });
}

Tensor to_tokens(const Tensor& feature_map)
{
    if (feature_map.rank() != 3)
        throw DimensionError("to_tokens: needs [C x H x W], got " + shape_string(feature_map.shape()));
    const Index c = feature_map.dim(0), h = feature_map.dim(1), w = feature_map.dim(2);
    return transpose(reshape(feature_map, {c, h * w}));
}

Tensor from_tokens(const Tensor& tokens, Index height, Index width)
{
    if (tokens.rank() != 2 || tokens.dim(0) != height * width)
        throw DimensionError("from_tokens: " + shape_string(tokens.shape()) + " is not a token matrix for " + std::to_string(height) + "x" + std::to_string(width));
    const Index c = tokens.dim(1);
    return reshape(transpose(tokens), {c, height, width});
}

Tensor linear(const Tensor& tokens, const Tensor& weight, const Tensor& bias) { return add_row_vector(matmul(tokens, weight), bias); }

} // namespace hobj
