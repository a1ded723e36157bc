#include <doctest.h>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>
#include <hobj/rng.hpp>
#include <hobj/scan.hpp>
#include <hobj/ssm.hpp>

#include <cmath>
#include <numbers>

using namespace hobj;
using namespace hobj::scan;

namespace {

RowMatrixXd uniform(Index rows, Index cols, double lo, double hi, SplitMix64& rng)
{
    RowMatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = rng.uniform(lo, hi);
    return m;
}

struct Case {
    RowMatrixXd x, A, B, C, delta;
};

Case random_case(Index l, Index n, Index d, SplitMix64& rng)
{
    Case c;
    c.x = uniform(l, d, -1, 1, rng);
    c.A = -uniform(d, n, 0.5, 2, rng);
    c.B = uniform(l, n, -1, 1, rng);
    c.C = uniform(l, n, -1, 1, rng);
    c.delta = uniform(l, d, 0.05, 0.5, rng);
    return c;
}

RowMatrixXd reference(const Case& c, const std::optional<Eigen::VectorXd>& skip = std::nullopt)
{
    return scan_sequential<double>(c.x, discretize_zoh<double>(c.A, c.B, c.delta), c.C, skip);
}

} // namespace

TEST_CASE("discretize_zoh identities")
{
    RowMatrixXd A(1, 1), B(1, 1), delta(1, 1);
    A << -1.0;
    B << 3.0;
    delta << 0.0;
    auto dp = discretize_zoh<double>(A, B, delta, false);
    CHECK(std::abs(dp.a_bar(0, 0) - 1.0) <= 1e-12);
    CHECK(std::abs(dp.b_bar(0, 0)) <= 1e-12);
    CHECK_THROWS_AS(discretize_zoh<double>(A, B, delta), DomainError);

    delta << -0.5;
    CHECK_THROWS_AS(discretize_zoh<double>(A, B, delta), DomainError);

    delta << std::numbers::ln2;
    dp = discretize_zoh<double>(A, B, delta);
    CHECK(std::abs(dp.a_bar(0, 0) - 0.5) <= 1e-15);

    delta << 1.0;
    dp = discretize_zoh<double>(A, B, delta);
    CHECK(dp.b_bar(0, 0) == 3.0);
}

TEST_CASE("one-step scan and the zero input")
{
    SplitMix64 rng(5);
    const Case c = random_case(1, 3, 2, rng);
    const auto dp = discretize_zoh<double>(c.A, c.B, c.delta);
    const RowMatrixXd y = scan_sequential<double>(c.x, dp, c.C);
    for (Index d = 0; d < 2; ++d) {
        double expect = 0;
        for (Index n = 0; n < 3; ++n)
            expect += c.C(0, n) * dp.b_bar(0, d * 3 + n) * c.x(0, d);
        CHECK(y(0, d) == doctest::Approx(expect).epsilon(1e-15));
    }

    Case z = random_case(9, 4, 3, rng);
    z.x.setZero();
    CHECK((reference(z).array() == 0.0).all());
}

TEST_CASE("golden 4-step recurrence")
{
    // Values from tests/oracles/scan_golden.py; draw order x, A, B, C, delta.
    SplitMix64 rng(42);
    Case c;
    c.x = uniform(4, 1, -1, 1, rng);
    c.A = -uniform(1, 2, 0.5, 2, rng);
    c.B = uniform(4, 2, -1, 1, rng);
    c.C = uniform(4, 2, -1, 1, rng);
    c.delta = uniform(4, 1, 0.05, 0.5, rng);
    const RowMatrixXd y = reference(c);
    const double golden[4] = {-0.08387432310279487, 0.000690190769747887, -0.0173950669613178, 0.018490398362376655};
    for (Index k = 0; k < 4; ++k)
        CHECK(y(k, 0) == doctest::Approx(golden[k]).epsilon(1e-14));
}

TEST_CASE("chunked scan matches the sequential oracle")
{
    SplitMix64 rng(17);
    const Case c = random_case(37, 5, 3, rng);
    const auto dp = discretize_zoh<double>(c.A, c.B, c.delta);
    Eigen::VectorXd skip(3);
    skip << 0.5, -1.0, 2.0;
    const RowMatrixXd ref = scan_sequential<double>(c.x, dp, c.C, skip);

    const RowMatrixXd whole = scan_chunked<double>(c.x, dp, c.C, skip, 37);
    CHECK((whole.array() == ref.array()).all());
    CHECK((scan_chunked<double>(c.x, dp, c.C, skip, 100).array() == ref.array()).all());
    CHECK(max_relative_error(scan_chunked<double>(c.x, dp, c.C, skip, 1), ref) < 1e-12);
    CHECK_THROWS_AS(scan_chunked<double>(c.x, dp, c.C, skip, 0), ConfigError);

    SplitMix64 sweep(2024);
    const Index chunks[] = {2, 3, 8};
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const Index l = 1 + static_cast<Index>(sweep.below(64));
        const Index n = 1 + static_cast<Index>(sweep.below(16));
        const Index d = 1 + static_cast<Index>(sweep.below(8));
        const Case r = random_case(l, n, d, sweep);
        const auto rdp = discretize_zoh<double>(r.A, r.B, r.delta);
        const RowMatrixXd oracle = scan_sequential<double>(r.x, rdp, r.C);
        worst = std::max(worst, max_relative_error(scan_chunked<double>(r.x, rdp, r.C, std::nullopt, chunks[i % 3]), oracle));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("streaming scan is bitwise equal to discretize then scan")
{
    SplitMix64 rng(23);
    const Case c = random_case(50, 6, 4, rng);
    Eigen::VectorXd skip = Eigen::VectorXd::Constant(4, 0.75);
    const RowMatrixXd ref = reference(c, skip);
    const RowMatrixXd s = scan_streaming<double>(c.x, c.A, c.B, c.C, c.delta, skip);
    CHECK((s.array() == ref.array()).all());

    RowMatrixXd bad = c.delta;
    bad(3, 1) = 0.0;
    CHECK_THROWS_AS(scan_streaming<double>(c.x, c.A, c.B, c.C, bad), DomainError);
}

TEST_CASE("shape mismatches are rejected")
{
    SplitMix64 rng(29);
    const Case c = random_case(6, 3, 2, rng);
    const auto dp = discretize_zoh<double>(c.A, c.B, c.delta);
    CHECK_THROWS_AS(scan_sequential<double>(c.x.topRows(5), dp, c.C), DimensionError);
    CHECK_THROWS_AS(scan_sequential<double>(c.x, dp, c.C.leftCols(2)), DimensionError);
    CHECK_THROWS_AS(scan_sequential<double>(c.x, dp, c.C, Eigen::VectorXd::Zero(3)), DimensionError);
    CHECK_THROWS_AS(discretize_zoh<double>(c.A, c.B.topRows(5), c.delta), DimensionError);
}

TEST_CASE("state stays bounded over a long scan")
{
    const Index l = 100000, d = 2, n = 4;
    SplitMix64 rng(31);
    Case c = random_case(l, n, d, rng);
    const auto dp = discretize_zoh<double>(c.A, c.B, c.delta);

    // Track h directly and check the per-step bound on every step.
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d * n);
    bool bound_ok = true;
    for (Index k = 0; k < l; ++k) {
        const double prev = h.cwiseAbs().maxCoeff();
        double amax = 0, drive = 0;
        for (Index col = 0; col < d * n; ++col) {
            const double xv = c.x(k, col / n);
            h[col] = dp.a_bar(k, col) * h[col] + dp.b_bar(k, col) * xv;
            amax = std::max(amax, dp.a_bar(k, col));
            drive = std::max(drive, std::abs(dp.b_bar(k, col) * xv));
        }
        bound_ok = bound_ok && h.cwiseAbs().maxCoeff() <= prev * amax + drive + 1e-15;
    }
    CHECK(bound_ok);
    CHECK(h.allFinite());
    CHECK(reference(c).allFinite());
}

TEST_CASE("linearity in x with fixed parameters")
{
    SplitMix64 rng(37);
    const Case c = random_case(40, 7, 3, rng);
    const RowMatrixXd x2 = uniform(40, 3, -1, 1, rng);
    const auto dp = discretize_zoh<double>(c.A, c.B, c.delta);
    const double alpha = 0.7, beta = -1.3;
    const RowMatrixXd lhs = scan_sequential<double>(alpha * c.x + beta * x2, dp, c.C);
    const RowMatrixXd rhs = alpha * scan_sequential<double>(c.x, dp, c.C) + beta * scan_sequential<double>(x2, dp, c.C);
    CHECK(max_relative_error(lhs, rhs) < 1e-10);
}

TEST_CASE("causality: a change at position k leaves earlier outputs untouched")
{
    SplitMix64 rng(41);
    const Case c = random_case(30, 4, 2, rng);
    const RowMatrixXd base = reference(c);
    Case perturbed = c;
    perturbed.x(17, 1) += 0.5;
    perturbed.x(17, 0) -= 0.25;
    const RowMatrixXd y = reference(perturbed);
    CHECK((y.topRows(17).array() == base.topRows(17).array()).all());
    CHECK((y.row(17).array() != base.row(17).array()).any());
}

TEST_CASE("adjoint special cases")
{
    SplitMix64 rng(43);
    const Case c = random_case(8, 4, 2, rng);
    const RowMatrixXd ones = RowMatrixXd::Ones(8, 2);
    const Eigen::VectorXd skip = Eigen::VectorXd::Constant(2, 0.3);
    const auto g = scan_backward<double>(c.x, c.A, c.B, c.C, c.delta, skip, ones);
    REQUIRE(g.d_skip.has_value());
    for (Index d = 0; d < 2; ++d)
        CHECK((*g.d_skip)[d] == doctest::Approx(c.x.col(d).sum()).epsilon(1e-14));

    const RowMatrixXd zero_c = RowMatrixXd::Zero(8, 4);
    const auto gz = scan_backward<double>(c.x, c.A, c.B, zero_c, c.delta, std::nullopt, ones);
    CHECK((gz.A.array() == 0.0).all());
    CHECK((gz.B.array() == 0.0).all());
    CHECK((gz.delta.array() == 0.0).all());
    CHECK((gz.x.array() == 0.0).all());
}

TEST_CASE("selective scan op gradients agree with the raw adjoint")
{
    SplitMix64 rng(47);
    const Case c = random_case(6, 3, 2, rng);
    Tensor x = Tensor::from_matrix(c.x).set_requires_grad();
    Tensor A = Tensor::from_matrix(c.A).set_requires_grad();
    Tensor B = Tensor::from_matrix(c.B).set_requires_grad();
    Tensor C = Tensor::from_matrix(c.C).set_requires_grad();
    Tensor delta = Tensor::from_matrix(c.delta).set_requires_grad();
    const Tensor y = selective_scan(x, delta, A, B, C);
    CHECK((y.matrix().array() == reference(c).array()).all());
    backward(sum(y));
    const auto g = scan_backward<double>(c.x, c.A, c.B, c.C, c.delta, std::nullopt, RowMatrixXd::Ones(6, 2));
    CHECK((x.grad() == Eigen::Map<const Eigen::ArrayXd>(g.x.data(), g.x.size())).all());
    CHECK((delta.grad() == Eigen::Map<const Eigen::ArrayXd>(g.delta.data(), g.delta.size())).all());
}

TEST_CASE("input-dependent parameters")
{
    SplitMix64 rng(53);
    ParameterSet params;
    SSMParams p = make_ssm_params(params, "s", 3, 4, false, rng);
    const RowMatrixXd xm = uniform(5, 3, -1, 1, rng);
    const Tensor x = Tensor::from_matrix(xm);

    const InputParams ip = make_input_params(x, p);
    const RowMatrixXd b_oracle = xm * p.w_B.matrix();
    CHECK((ip.B.matrix().array() == b_oracle.array()).all());
    CHECK((ip.C.matrix().array() == (xm * p.w_C.matrix()).array()).all());
    CHECK((ip.delta.data() > 0.0).all());

    p.w_delta.mutable_data().setZero();
    p.delta_bias.mutable_data().setConstant(0.2);
    const InputParams flat = make_input_params(x, p);
    const double sp = std::log1p(std::exp(0.2));
    for (Index i = 0; i < flat.delta.numel(); ++i)
        CHECK(flat.delta.at(i) == doctest::Approx(sp).epsilon(1e-15));

    const InputParams zero = make_input_params(Tensor({5, 3}), p);
    CHECK((zero.B.data() == 0.0).all());
    CHECK((zero.C.data() == 0.0).all());

    CHECK_THROWS_AS(make_input_params(Tensor({5, 2}), p), DimensionError);

    const Tensor A = state_matrix(p);
    CHECK((A.data() < 0.0).all());
    CHECK(A.at(3) == doctest::Approx(-4.0).epsilon(1e-15));
}
