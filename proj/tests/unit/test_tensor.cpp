#include <doctest.h>

#include <hobj/error.hpp>
#include <hobj/ops.hpp>
#include <hobj/params.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hobj;

namespace {

Tensor seq(Shape shape, double start = 1.0)
{
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
        t.mutable_data()[i] = start + static_cast<double>(i);
    return t;
}

Tensor random(Shape shape, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
        t.mutable_data()[i] = rng.uniform(-1, 1);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b)
{
    return a.shape() == b.shape() && (a.data() == b.data()).all();
}

} // namespace

TEST_CASE("matmul")
{
    const Tensor a = seq({2, 2});
    Tensor id({2, 2});
    id.mutable_data() << 1, 0, 0, 1;
    CHECK(bitwise_equal(matmul(id, a), a));

    const Tensor r = matmul(a, Tensor({2, 1}, 1.0));
    CHECK(r.shape() == Shape{2, 1});
    CHECK(r.at(0) == 3.0);
    CHECK(r.at(1) == 7.0);

    CHECK_THROWS_AS(matmul(a, Tensor({3, 1})), DimensionError);
}

TEST_CASE("matmul gradient against a ones matrix is the broadcast column sum")
{
    Tensor a = random({3, 4}, 1).set_requires_grad();
    Tensor b = random({4, 2}, 2).set_requires_grad();
    backward(sum(matmul(a, b)));
    const auto bm = b.matrix();
    for (Index i = 0; i < 3; ++i)
        for (Index k = 0; k < 4; ++k)
            CHECK(a.grad()[i * 4 + k] == doctest::Approx(bm.row(k).sum()).epsilon(1e-14));
    const auto am = a.matrix();
    for (Index k = 0; k < 4; ++k)
        for (Index j = 0; j < 2; ++j)
            CHECK(b.grad()[k * 2 + j] == doctest::Approx(am.col(k).sum()).epsilon(1e-14));
}

TEST_CASE("depthwise conv")
{
    const Tensor ones({1, 3, 3}, 1.0);
    const Tensor r = depthwise_conv(ones, Tensor({1, 3, 3}, 1.0));
    CHECK(r.at(4) == 9.0);
    CHECK(r.at(0) == 4.0);
    CHECK(r.at(1) == 6.0);

    const Tensor x = random({2, 5, 4}, 3);
    Tensor ident({2, 3, 3});
    ident.mutable_data()[4] = 1.0;
    ident.mutable_data()[9 + 4] = 1.0;
    CHECK(bitwise_equal(depthwise_conv(x, ident), x));

    Tensor k1({2, 1, 1});
    k1.mutable_data() << 2.0, -3.0;
    const Tensor s = depthwise_conv(x, k1);
    for (Index i = 0; i < 20; ++i) {
        CHECK(s.at(i) == 2.0 * x.at(i));
        CHECK(s.at(20 + i) == -3.0 * x.at(20 + i));
    }

    CHECK_THROWS_AS(depthwise_conv(x, Tensor({2, 2, 2})), ConfigError);
    CHECK_THROWS_AS(depthwise_conv(x, Tensor({3, 3, 3})), DimensionError);
}

TEST_CASE("layer norm")
{
    const Tensor gamma({2}, 1.0), beta({2}, 0.0);
    const Tensor flat = layer_norm(Tensor({3, 2}, 5.0), gamma, beta);
    CHECK((flat.data() == 0.0).all());

    Tensor x({1, 2});
    x.mutable_data() << 1.0, -1.0;
    const Tensor r = layer_norm(x, gamma, beta, 0.0);
    CHECK(r.at(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.at(1) == doctest::Approx(-1.0).epsilon(1e-15));

    Tensor b2({2});
    b2.mutable_data() << 0.5, -0.25;
    const Tensor shifted = layer_norm(Tensor({1, 2}, 3.0), gamma, b2);
    CHECK(shifted.at(0) == 0.5);
    CHECK(shifted.at(1) == -0.25);
}

TEST_CASE("pointwise activations")
{
    Tensor x({3});
    x.mutable_data() << 0.0, 1.0, -2.0;
    const Tensor s = silu(x);
    CHECK(s.at(0) == 0.0);
    CHECK(s.at(1) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
    CHECK(s.at(2) == doctest::Approx(-2.0 / (1.0 + std::exp(2.0))).epsilon(1e-15));

    const Tensor sp = softplus(x);
    CHECK(sp.at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(softplus(Tensor({1}, 800.0)).at(0) == 800.0);
    CHECK(softplus(Tensor({1}, -800.0)).at(0) >= 0.0);
    CHECK(sigmoid(Tensor({1}, -800.0)).at(0) >= 0.0);
}

TEST_CASE("structural round trips are bitwise")
{
    const Tensor x = random({4, 3, 5}, 7);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const Index n = x.dim(axis);
        const auto parts = split(x, axis, {1, n - 1});
        CHECK(bitwise_equal(concat(parts, axis), x));
        CHECK(bitwise_equal(flip(flip(x, axis), axis), x));
    }
    const Tensor m = random({3, 7}, 8);
    CHECK(bitwise_equal(transpose(transpose(m)), m));
    CHECK(transpose(m).at(1 * 3 + 2) == m.at(2 * 7 + 1));
    CHECK(bitwise_equal(from_tokens(to_tokens(x), 3, 5), x));

    CHECK_THROWS_AS(flip(x, 3), DimensionError);
    CHECK_THROWS_AS(split(x, 0, {1, 1}), DimensionError);
    CHECK_THROWS_AS(concat({x, random({4, 2, 4}, 1)}, 0), DimensionError);
}

TEST_CASE("backward")
{
    Tensor x = random({2, 3}, 11).set_requires_grad();
    backward(sum(x));
    CHECK((x.grad() == 1.0).all());

    x.zero_grad();
    const Tensor sq = mul(x, x);
    backward(sum(sq));
    for (Index i = 0; i < 6; ++i)
        CHECK(x.grad()[i] == 2.0 * x.at(i));

    Tensor y = random({3}, 12).set_requires_grad();
    const Tensor loss = sum(exp(y));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);
    CHECK_THROWS_AS(backward(exp(y)), GraphError);
}

TEST_CASE("leaf gradients accumulate between zero_grad calls")
{
    Tensor x = random({4}, 13).set_requires_grad();
    backward(sum(scale(x, 2.0)));
    backward(sum(scale(x, 3.0)));
    CHECK((x.grad() == 5.0).all());
    x.zero_grad();
    CHECK((x.grad() == 0.0).all());
}

TEST_CASE("bilinear resize")
{
    Tensor x({1, 2, 1});
    x.mutable_data() << 2.0, 6.0;
    const Tensor r = bilinear_resize(x, 4, 1);
    CHECK(r.at(0) == 2.0);
    CHECK(r.at(1) == doctest::Approx(0.75 * 2 + 0.25 * 6).epsilon(1e-15));
    CHECK(r.at(2) == doctest::Approx(0.25 * 2 + 0.75 * 6).epsilon(1e-15));
    CHECK(r.at(3) == 6.0);

    const Tensor c = bilinear_resize(Tensor({2, 3, 3}, 1.5), 7, 5);
    CHECK((c.data() == 1.5).all());
    const Tensor same = random({2, 3, 4}, 5);
    CHECK(bitwise_equal(bilinear_resize(same, 3, 4), same));
}

TEST_CASE("log softmax normalizes each column")
{
    const Tensor x = random({5, 4}, 21);
    const Tensor ls = log_softmax(x);
    for (Index c = 0; c < 4; ++c) {
        double total = 0;
        for (Index r = 0; r < 5; ++r)
            total += std::exp(ls.at(r * 4 + c));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("checkpoint round trip and integrity")
{
    SplitMix64 rng(3);
    ParameterSet params;
    params.add_uniform("layer.weight", {3, 4}, 0.5, rng);
    params.add_constant("layer.bias", {4}, 0.25);
    CHECK(params.total_size() == 16);
    CHECK_THROWS_AS(params.add_constant("layer.bias", {1}, 0.0), ConfigError);

    const auto dir = std::filesystem::temp_directory_path() / "hobj_test_tensor";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "p.ckpt").string();
    save_checkpoint(path, params, "{\"k\":1}");
    const Checkpoint ck = read_checkpoint(path);
    CHECK(ck.config_json == "{\"k\":1}");
    REQUIRE(ck.names.size() == 2);
    CHECK(ck.names[0] == "layer.weight");

    ParameterSet other;
    SplitMix64 rng2(99);
    other.add_uniform("layer.weight", {3, 4}, 0.5, rng2);
    other.add_constant("layer.bias", {4}, 0.0);
    load_parameters(ck, other);
    CHECK((other.entries()[0].tensor.data() == params.entries()[0].tensor.data()).all());
    CHECK((other.entries()[1].tensor.data() == 0.25).all());

    ParameterSet renamed;
    renamed.add_constant("layer.w", {3, 4}, 0.0);
    renamed.add_constant("layer.bias", {4}, 0.0);
    CHECK_THROWS_AS(load_parameters(ck, renamed), VersionError);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    CHECK_THROWS_AS(read_checkpoint(path), IntegrityError);
    CHECK_THROWS_AS(read_checkpoint((dir / "missing.ckpt").string()), IoError);
    std::filesystem::remove_all(dir);
}
