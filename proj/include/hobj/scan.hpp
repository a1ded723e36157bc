#pragma once

// Selective state-space scan kernels on plain Eigen data.
//
// Shapes (row-major throughout):
//   x, delta : L x D        input sequence and per-position timescale
//   A        : D x N        diagonal state matrix, one N-vector per channel
//   B, C     : L x N        input-dependent projections, shared across channels
//   a_bar, b_bar : L x (D*N), column d*N + n
//
// Recurrence, per channel d and state n, with h_0 = 0:
//   h_k = a_bar[k] * h_{k-1} + b_bar[k] * x[k]
//   y_k = sum_n C[k,n] * h_k[n] + d_skip[d] * x[k]

#include <hobj/error.hpp>
#include <hobj/parallel.hpp>
#include <hobj/types.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace hobj::scan {

struct SSMDims {
    Index length = 1;   // L
    Index state = 1;    // N
    Index channels = 1; // D
};

template <typename Scalar>
struct Discretized {
    RowMatrix<Scalar> a_bar;
    RowMatrix<Scalar> b_bar;
    Index state = 0;

    Index length() const { return a_bar.rows(); }
    Index channels() const { return state == 0 ? 0 : a_bar.cols() / state; }
};

template <typename Scalar>
struct Gradients {
    RowMatrix<Scalar> x, A, B, C, delta;
    std::optional<VectorX<Scalar>> d_skip;
};

template <typename Scalar>
using ConstMatrixRef = Eigen::Ref<const RowMatrix<Scalar>>;

namespace detail {

template <typename Scalar>
void check_dims(const char* op, Index l, Index d, Index n, Index x_rows, Index x_cols, Index c_rows, Index c_cols)
{
    if (x_rows != l || x_cols != d || c_rows != l || c_cols != n)
        throw DimensionError(std::string(op) + ": inconsistent shapes (x " + std::to_string(x_rows) + "x" + std::to_string(x_cols) + ", C " + std::to_string(c_rows) + "x" + std::to_string(c_cols) + ", expected L=" + std::to_string(l) + " D=" + std::to_string(d) + " N=" + std::to_string(n) + ")");
}

template <typename Scalar>
void check_skip(const char* op, const std::optional<VectorX<Scalar>>& d_skip, Index d)
{
    if (d_skip && d_skip->size() != d)
        throw DimensionError(std::string(op) + ": d_skip has " + std::to_string(d_skip->size()) + " entries, expected " + std::to_string(d));
}

// One recurrence step. Every implementation goes through this so that equal
// operand sequences give bitwise-equal states.
template <typename Scalar>
inline Scalar step(Scalar a, Scalar h, Scalar b, Scalar x)
{
    return a * h + b * x;
}

} // namespace detail

/// A = -exp(a_log): strictly negative diagonal entries.
template <typename Derived>
RowMatrix<typename Derived::Scalar> state_matrix(const Eigen::MatrixBase<Derived>& a_log)
{
    return -a_log.array().exp().matrix();
}

/// a_bar = exp(delta * A); b_bar = delta * B (first-order Taylor form of the ZOH input matrix).
template <typename Scalar>
Discretized<Scalar> discretize_zoh(const ConstMatrixRef<Scalar>& A, const ConstMatrixRef<Scalar>& B, const ConstMatrixRef<Scalar>& delta, bool check_domain = true)
{
    const Index d = A.rows(), n = A.cols(), l = delta.rows();
    if (delta.cols() != d || B.rows() != l || B.cols() != n)
        throw DimensionError("discretize_zoh: A " + std::to_string(d) + "x" + std::to_string(n) + ", B " + std::to_string(B.rows()) + "x" + std::to_string(B.cols()) + ", delta " + std::to_string(delta.rows()) + "x" + std::to_string(delta.cols()));
    if (check_domain && (delta.array() <= Scalar(0)).any())
        throw DomainError("discretize_zoh: timescale delta must be strictly positive");
    Discretized<Scalar> out;
    out.state = n;
    out.a_bar.resize(l, d * n);
    out.b_bar.resize(l, d * n);
    for (Index k = 0; k < l; ++k)
        for (Index c = 0; c < d; ++c) {
            const Scalar dt = delta(k, c);
            for (Index s = 0; s < n; ++s) {
                out.a_bar(k, c * n + s) = std::exp(dt * A(c, s));
                out.b_bar(k, c * n + s) = dt * B(k, s);
            }
        }
    return out;
}

/// Direct loop over the recurrence; the reference every other scan is checked against.
template <typename Scalar>
RowMatrix<Scalar> scan_sequential(const ConstMatrixRef<Scalar>& x, const Discretized<Scalar>& dp, const ConstMatrixRef<Scalar>& C, const std::optional<VectorX<Scalar>>& d_skip = std::nullopt)
{
    const Index l = dp.length(), d = dp.channels(), n = dp.state;
    detail::check_dims<Scalar>("scan_sequential", l, d, n, x.rows(), x.cols(), C.rows(), C.cols());
    detail::check_skip("scan_sequential", d_skip, d);
    RowMatrix<Scalar> y(l, d);
    VectorX<Scalar> h = VectorX<Scalar>::Zero(d * n);
    for (Index k = 0; k < l; ++k)
        for (Index c = 0; c < d; ++c) {
            Scalar acc = 0;
            const Scalar xv = x(k, c);
            for (Index s = 0; s < n; ++s) {
                const Index j = c * n + s;
                h[j] = detail::step(dp.a_bar(k, j), h[j], dp.b_bar(k, j), xv);
                acc += C(k, s) * h[j];
            }
            y(k, c) = d_skip ? acc + (*d_skip)[c] * xv : acc;
        }
    return y;
}

/// Sequential recurrence with the discretization computed on the fly: only the
/// D x N state is live, so memory traffic is O(L (D + N)) instead of O(L D N).
/// Bitwise equal to scan_sequential(x, discretize_zoh(A, B, delta), C, d_skip).
template <typename Scalar>
RowMatrix<Scalar> scan_streaming(const ConstMatrixRef<Scalar>& x, const ConstMatrixRef<Scalar>& A, const ConstMatrixRef<Scalar>& B, const ConstMatrixRef<Scalar>& C, const ConstMatrixRef<Scalar>& delta, const std::optional<VectorX<Scalar>>& d_skip = std::nullopt, bool check_domain = true)
{
    const Index l = x.rows(), d = A.rows(), n = A.cols();
    detail::check_dims<Scalar>("scan_streaming", l, d, n, x.rows(), x.cols(), C.rows(), C.cols());
    detail::check_skip("scan_streaming", d_skip, d);
    if (B.rows() != l || B.cols() != n || delta.rows() != l || delta.cols() != d)
        throw DimensionError("scan_streaming: B or delta shape inconsistent with x and A");
    RowMatrix<Scalar> y(l, d);
    VectorX<Scalar> h = VectorX<Scalar>::Zero(d * n);
    for (Index k = 0; k < l; ++k)
        for (Index c = 0; c < d; ++c) {
            const Scalar dt = delta(k, c);
            if (check_domain && !(dt > Scalar(0)))
                throw DomainError("scan_streaming: timescale delta must be strictly positive");
            Scalar acc = 0;
            const Scalar xv = x(k, c);
            for (Index s = 0; s < n; ++s) {
                const Index j = c * n + s;
                h[j] = detail::step(std::exp(dt * A(c, s)), h[j], dt * B(k, s), xv);
                acc += C(k, s) * h[j];
            }
            y(k, c) = d_skip ? acc + (*d_skip)[c] * xv : acc;
        }
    return y;
}

/// Chunked scan. Each chunk's recurrence is an affine map h -> a*h + b; the maps
/// are composed per chunk (independently, so in parallel when allowed), the chunk
/// carries are propagated sequentially, and a final pass reconstructs outputs
/// from each chunk's incoming state.
template <typename Scalar>
RowMatrix<Scalar> scan_chunked(const ConstMatrixRef<Scalar>& x, const Discretized<Scalar>& dp, const ConstMatrixRef<Scalar>& C, const std::optional<VectorX<Scalar>>& d_skip, Index chunk)
{
    if (chunk < 1)
        throw ConfigError("scan_chunked: chunk size must be >= 1, got " + std::to_string(chunk));
    const Index l = dp.length(), d = dp.channels(), n = dp.state;
    detail::check_dims<Scalar>("scan_chunked", l, d, n, x.rows(), x.cols(), C.rows(), C.cols());
    detail::check_skip("scan_chunked", d_skip, d);
    const Index width = d * n;
    const Index chunks = (l + chunk - 1) / chunk;

    RowMatrix<Scalar> comp_a(chunks, width), comp_b(chunks, width);
    parallel_for(0, chunks, [&](Index j) {
        const Index lo = j * chunk, hi = std::min(l, lo + chunk);
        for (Index c = 0; c < d; ++c)
            for (Index s = 0; s < n; ++s) {
                const Index col = c * n + s;
                Scalar a = 1, b = 0;
                for (Index k = lo; k < hi; ++k) {
                    const Scalar ak = dp.a_bar(k, col);
                    b = detail::step(ak, b, dp.b_bar(k, col), x(k, c));
                    a = ak * a;
                }
                comp_a(j, col) = a;
                comp_b(j, col) = b;
            }
    });

    // carry.row(j) is the state entering chunk j.
    RowMatrix<Scalar> carry(chunks, width);
    carry.row(0).setZero();
    for (Index j = 1; j < chunks; ++j)
        for (Index col = 0; col < width; ++col)
            carry(j, col) = comp_a(j - 1, col) * carry(j - 1, col) + comp_b(j - 1, col);

    RowMatrix<Scalar> y(l, d);
    parallel_for(0, chunks, [&](Index j) {
        const Index lo = j * chunk, hi = std::min(l, lo + chunk);
        VectorX<Scalar> h = carry.row(j).transpose();
        for (Index k = lo; k < hi; ++k)
            for (Index c = 0; c < d; ++c) {
                Scalar acc = 0;
                const Scalar xv = x(k, c);
                for (Index s = 0; s < n; ++s) {
                    const Index col = c * n + s;
                    h[col] = detail::step(dp.a_bar(k, col), h[col], dp.b_bar(k, col), xv);
                    acc += C(k, s) * h[col];
                }
                y(k, c) = d_skip ? acc + (*d_skip)[c] * xv : acc;
            }
    });
    return y;
}

/// Adjoint of discretize_zoh followed by scan_sequential, given dL/dy.
template <typename Scalar>
Gradients<Scalar> scan_backward(const ConstMatrixRef<Scalar>& x, const ConstMatrixRef<Scalar>& A, const ConstMatrixRef<Scalar>& B, const ConstMatrixRef<Scalar>& C, const ConstMatrixRef<Scalar>& delta, const std::optional<VectorX<Scalar>>& d_skip, const ConstMatrixRef<Scalar>& grad_y)
{
    const Index l = x.rows(), d = A.rows(), n = A.cols();
    detail::check_dims<Scalar>("scan_backward", l, d, n, x.rows(), x.cols(), C.rows(), C.cols());
    detail::check_skip("scan_backward", d_skip, d);
    if (grad_y.rows() != l || grad_y.cols() != d || delta.rows() != l || delta.cols() != d || B.rows() != l || B.cols() != n)
        throw DimensionError("scan_backward: gradient/delta/B shapes inconsistent with x");

    const auto dp = discretize_zoh<Scalar>(A, B, delta, false);
    const Index width = d * n;
    // states.row(k) = h_{k+1}; row 0 of the shifted view is h_0 = 0.
    RowMatrix<Scalar> states(l + 1, width);
    states.row(0).setZero();
    for (Index k = 0; k < l; ++k)
        for (Index c = 0; c < d; ++c)
            for (Index s = 0; s < n; ++s) {
                const Index col = c * n + s;
                states(k + 1, col) = detail::step(dp.a_bar(k, col), states(k, col), dp.b_bar(k, col), x(k, c));
            }

    Gradients<Scalar> g;
    g.x = RowMatrix<Scalar>::Zero(l, d);
    g.A = RowMatrix<Scalar>::Zero(d, n);
    g.B = RowMatrix<Scalar>::Zero(l, n);
    g.C = RowMatrix<Scalar>::Zero(l, n);
    g.delta = RowMatrix<Scalar>::Zero(l, d);
    if (d_skip) {
        g.d_skip = VectorX<Scalar>::Zero(d);
        for (Index k = 0; k < l; ++k)
            for (Index c = 0; c < d; ++c) {
                (*g.d_skip)[c] += grad_y(k, c) * x(k, c);
                g.x(k, c) += grad_y(k, c) * (*d_skip)[c];
            }
    }

    VectorX<Scalar> gh = VectorX<Scalar>::Zero(width);
    for (Index k = l - 1; k >= 0; --k)
        for (Index c = 0; c < d; ++c) {
            const Scalar gy = grad_y(k, c);
            const Scalar xv = x(k, c);
            const Scalar dt = delta(k, c);
            Scalar g_dt = 0, g_x = 0;
            for (Index s = 0; s < n; ++s) {
                const Index col = c * n + s;
                g.C(k, s) += gy * states(k + 1, col);
                const Scalar ghk = gh[col] + C(k, s) * gy;
                const Scalar a = dp.a_bar(k, col);
                // h_k = a * h_{k-1} + dt * B * x
                const Scalar g_a = ghk * states(k, col);
                g_dt += g_a * a * A(c, s) + ghk * B(k, s) * xv;
                g.A(c, s) += g_a * a * dt;
                g.B(k, s) += ghk * dt * xv;
                g_x += ghk * dt * B(k, s);
                gh[col] = ghk * a;
            }
            g.delta(k, c) += g_dt;
            g.x(k, c) += g_x;
        }
    return g;
}

/// Per-channel normwise relative error: the max over columns c of
/// max_k |y(k, c) - ref(k, c)| / max_k |ref(k, c)|, the denominator floored at the
/// smallest normal. Elementwise ratios are not used because outputs that cancel to
/// near zero make them meaningless.
template <typename DerivedA, typename DerivedB>
double max_relative_error(const Eigen::MatrixBase<DerivedA>& y, const Eigen::MatrixBase<DerivedB>& ref)
{
    if (y.rows() != ref.rows() || y.cols() != ref.cols())
        throw DimensionError("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (Index j = 0; j < ref.cols(); ++j) {
        double err = 0.0, scale = 0.0;
        for (Index i = 0; i < ref.rows(); ++i) {
            const double r = static_cast<double>(ref(i, j));
            err = std::max(err, std::abs(static_cast<double>(y(i, j)) - r));
            scale = std::max(scale, std::abs(r));
        }
        worst = std::max(worst, err / std::max(scale, std::numeric_limits<double>::min()));
    }
    return worst;
}

} // namespace hobj::scan
