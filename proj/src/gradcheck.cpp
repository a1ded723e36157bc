#include <hobj/gradcheck.hpp>

#include <hobj/blocks.hpp>
#include <hobj/decoder.hpp>
#include <hobj/error.hpp>
#include <hobj/mmff.hpp>
#include <hobj/model.hpp>
#include <hobj/ops.hpp>
#include <hobj/ss2d.hpp>
#include <hobj/ssm.hpp>
#include <hobj/train.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>

namespace hobj {

using Eigen::ArrayXd;

GradcheckResult check_gradients(const GradcheckCase& c, std::uint64_t seed, double step)
{
    GradcheckResult res;
    res.scope = c.scope;
    res.name = c.name;
    res.tolerance = c.tolerance;
    for (const auto& leaf : c.leaves) {
        Tensor t = leaf.tensor;
        if (!t.requires_grad())
            t.set_requires_grad();
        t.zero_grad();
    }
    const Tensor loss = c.loss();
    if (loss.numel() != 1)
        throw DimensionError("gradcheck '" + c.name + "': loss must be scalar, got " + shape_string(loss.shape()));
    backward(loss);

    SplitMix64 rng = SplitMix64::stream(seed, std::hash<std::string>{}(c.scope + "/" + c.name) & 0xFFFF);
    for (const auto& leaf : c.leaves) {
        Tensor t = leaf.tensor;
        const ArrayXd analytic_all = t.grad();
        std::vector<Index> idx(static_cast<std::size_t>(t.numel()));
        std::iota(idx.begin(), idx.end(), Index{0});
        if (c.max_entries > 0 && t.numel() > c.max_entries) {
            for (Index i = 0; i < c.max_entries; ++i)
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t.numel() - i))))]);
            idx.resize(static_cast<std::size_t>(c.max_entries));
        }
        double diff2 = 0, norm2 = 0;
        for (Index k : idx) {
            ArrayXd& v = t.mutable_data();
            const double orig = v[k];
            v[k] = orig + step;
            const double up = c.loss().item();
            v[k] = orig - step;
            const double down = c.loss().item();
            v[k] = orig;
            const double numeric = (up - down) / (2 * step);
            const double a = analytic_all[k];
            diff2 += (a - numeric) * (a - numeric);
            norm2 += a * a;
        }
        LeafCheck lc{leaf.name, static_cast<Index>(idx.size()), std::sqrt(diff2) / (std::sqrt(norm2) + 1e-8)};
        if (!std::isfinite(lc.rel_error))
            lc.rel_error = std::numeric_limits<double>::infinity();
        if (lc.rel_error >= res.max_rel_error) {
            res.max_rel_error = lc.rel_error;
            res.worst_leaf = lc.name;
        }
        res.leaves.push_back(lc);
    }
    res.pass = res.max_rel_error < c.tolerance;
    return res;
}

namespace {

Tensor random_leaf(Shape shape, SplitMix64& rng, double lo = -2.0, double hi = 2.0)
{
    ArrayXd v(shape_numel(shape));
    for (auto& e : v)
        e = rng.uniform(lo, hi);
    Tensor t(std::move(shape), std::move(v));
    t.set_requires_grad();
    return t;
}

/// sum(out * R) with R fixed, so every output entry contributes a distinct weight.
std::function<Tensor()> weighted(std::function<Tensor()> f, std::uint64_t seed)
{
    auto weights = std::make_shared<Tensor>();
    return [f = std::move(f), weights, seed]() {
        const Tensor out = f();
        if (!weights->defined() || weights->shape() != out.shape()) {
            SplitMix64 r(seed);
            ArrayXd v(out.numel());
            for (auto& e : v)
                e = r.uniform(-1.0, 1.0);
            *weights = Tensor(out.shape(), std::move(v));
        }
        return sum(mul(out, *weights));
    };
}

std::vector<NamedTensor> with_params(std::vector<NamedTensor> inputs, const ParameterSet& params)
{
    for (const auto& e : params.entries())
        inputs.push_back(e);
    return inputs;
}

using CaseList = std::vector<GradcheckCase>;

void add_case(CaseList& out, const std::string& scope, const std::string& name, std::function<Tensor()> f, std::vector<NamedTensor> leaves, std::uint64_t seed, double tol = 1e-4, Index max_entries = 0)
{
    out.push_back({scope, name, weighted(std::move(f), seed ^ out.size()), std::move(leaves), tol, max_entries});
}

CaseList tensor_cases(std::uint64_t seed)
{
    const std::string s = "tensor-autodiff";
    SplitMix64 rng = SplitMix64::stream(seed, 1);
    CaseList out;
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({4, 2}, rng), c = random_leaf({3, 4}, rng);
    Tensor v = random_leaf({4}, rng), pos = random_leaf({3, 4}, rng, 0.5, 2.0);
    add_case(out, s, "matmul", [=] { return matmul(a, b); }, {{"a", a}, {"b", b}}, seed);
    add_case(out, s, "add", [=] { return add(a, c); }, {{"a", a}, {"b", c}}, seed);
    add_case(out, s, "sub", [=] { return sub(a, c); }, {{"a", a}, {"b", c}}, seed);
    add_case(out, s, "mul", [=] { return mul(a, c); }, {{"a", a}, {"b", c}}, seed);
    add_case(out, s, "scale", [=] { return scale(a, -1.7); }, {{"a", a}}, seed);
    add_case(out, s, "add_scalar", [=] { return add_scalar(a, 0.3); }, {{"a", a}}, seed);
    add_case(out, s, "neg", [=] { return neg(a); }, {{"a", a}}, seed);
    add_case(out, s, "add_row_vector", [=] { return add_row_vector(a, v); }, {{"x", a}, {"v", v}}, seed);
    add_case(out, s, "mul_row_vector", [=] { return mul_row_vector(a, v); }, {{"x", a}, {"v", v}}, seed);
    add_case(out, s, "sigmoid", [=] { return sigmoid(a); }, {{"x", a}}, seed);
    add_case(out, s, "silu", [=] { return silu(a); }, {{"x", a}}, seed);
    add_case(out, s, "softplus", [=] { return softplus(a); }, {{"x", a}}, seed);
    add_case(out, s, "exp", [=] { return exp(a); }, {{"x", a}}, seed);
    add_case(out, s, "log", [=] { return log(pos); }, {{"x", pos}}, seed);
    add_case(out, s, "sum", [=] { return sum(mul(a, a)); }, {{"x", a}}, seed);
    add_case(out, s, "mean", [=] { return mean(mul(a, c)); }, {{"a", a}, {"b", c}}, seed);

    Tensor gamma = random_leaf({4}, rng), beta = random_leaf({4}, rng);
    add_case(out, s, "layer_norm", [=] { return layer_norm(a, gamma, beta); }, {{"x", a}, {"gamma", gamma}, {"beta", beta}}, seed);
    Tensor img = random_leaf({2, 4, 5}, rng), ker = random_leaf({2, 3, 3}, rng);
    add_case(out, s, "depthwise_conv", [=] { return depthwise_conv(img, ker); }, {{"x", img}, {"kernel", ker}}, seed);
    add_case(out, s, "concat", [=] { return concat({a, c}, 1); }, {{"a", a}, {"b", c}}, seed);
    add_case(out, s, "split", [=] { auto parts = split(a, 1, {1, 3}); return concat({parts[1], scale(parts[0], 2.0)}, 1); }, {{"x", a}}, seed);
    add_case(out, s, "flip", [=] { return flip(img, 2); }, {{"x", img}}, seed);
    add_case(out, s, "reshape", [=] { return reshape(a, {2, 6}); }, {{"x", a}}, seed);
    add_case(out, s, "transpose", [=] { return transpose(a); }, {{"x", a}}, seed);
    auto gidx = std::make_shared<const std::vector<Index>>(std::vector<Index>{0, 5, 5, 11, 2});
    add_case(out, s, "gather", [=] { return gather(a, gidx, {5}); }, {{"x", a}}, seed);
    add_case(out, s, "bilinear_resize", [=] { return bilinear_resize(img, 7, 9); }, {{"x", img}}, seed);
    add_case(out, s, "log_softmax", [=] { return log_softmax(a); }, {{"x", a}}, seed);
    add_case(out, s, "to_tokens", [=] { return to_tokens(img); }, {{"x", img}}, seed);
    add_case(out, s, "from_tokens", [=] { return from_tokens(a, 1, 3); }, {{"x", a}}, seed);
    Tensor w = random_leaf({2, 3}, rng), bias = random_leaf({3}, rng), tok = random_leaf({5, 2}, rng);
    add_case(out, s, "linear", [=] { return linear(tok, w, bias); }, {{"tokens", tok}, {"weight", w}, {"bias", bias}}, seed);
    add_case(out, s, "chain layer_norm-silu-matmul", [=] { return matmul(silu(layer_norm(a, gamma, beta)), b); }, {{"x", a}, {"gamma", gamma}, {"beta", beta}, {"w", b}}, seed);

    Tensor logit = random_leaf({1, 4, 4}, rng);
    ImageD mask(4, 4);
    for (Index i = 0; i < mask.size(); ++i)
        mask(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    out.push_back({s, "loss_saliency", [=] { return loss_saliency(logit, mask).total; }, {{"logits", logit}}, 1e-4, 0});
    Tensor logits3 = random_leaf({3, 3, 3}, rng);
    LabelImage labels(3, 3);
    labels << 0, 1, 2, 255, 1, 0, 2, 2, 255;
    out.push_back({s, "loss_semantic", [=] { return loss_semantic(logits3, labels).total; }, {{"logits", logits3}}, 1e-4, 0});
    return out;
}

CaseList scan_cases(std::uint64_t seed)
{
    const std::string s = "ssm-scan";
    SplitMix64 rng = SplitMix64::stream(seed, 2);
    CaseList out;
    const Index l = 8, d = 2, n = 4;
    Tensor x = random_leaf({l, d}, rng), delta = random_leaf({l, d}, rng, 0.05, 1.0), A = random_leaf({d, n}, rng, -2.0, -0.1);
    Tensor B = random_leaf({l, n}, rng), C = random_leaf({l, n}, rng), dsk = random_leaf({d}, rng);
    add_case(out, s, "selective_scan", [=] { return selective_scan(x, delta, A, B, C); }, {{"x", x}, {"delta", delta}, {"A", A}, {"B", B}, {"C", C}}, seed);
    add_case(out, s, "selective_scan with skip", [=] { return selective_scan(x, delta, A, B, C, dsk); }, {{"x", x}, {"delta", delta}, {"A", A}, {"B", B}, {"C", C}, {"d_skip", dsk}}, seed);

    auto params = std::make_shared<ParameterSet>();
    const SSMParams p = make_ssm_params(*params, "ssm", d, n, true, rng);
    Tensor src = random_leaf({l, d}, rng);
    add_case(out, s, "ssm_forward", [=] { return ssm_forward(x, p); }, with_params({{"x", x}}, *params), seed);
    add_case(out, s, "ssm_forward with C source", [=] { return ssm_forward(x, p, &src); }, with_params({{"x", x}, {"c_source", src}}, *params), seed);
    return out;
}

CaseList ss2d_cases(std::uint64_t seed)
{
    const std::string s = "ss2d";
    SplitMix64 rng = SplitMix64::stream(seed, 3);
    CaseList out;
    Tensor f = random_leaf({3, 3, 4}, rng), src = random_leaf({3, 3, 4}, rng);
    const ScanLayout layout(3, 4);
    add_case(out, s, "cross_merge(cross_scan)", [=] { auto seqs = cross_scan(f, layout); for (auto& q : seqs) q = mul(q, q); return cross_merge(seqs, layout); }, {{"f", f}}, seed);
    auto params = std::make_shared<ParameterSet>();
    const SS2DBlock blk = make_ss2d_block(*params, "ss2d", 3, 3, rng);
    add_case(out, s, "ss2d_forward", [=] { return ss2d_forward(f, blk); }, with_params({{"f", f}}, *params), seed);
    add_case(out, s, "ss2d_forward with C source", [=] { return ss2d_forward(f, blk, &src); }, with_params({{"f", f}, {"c_source", src}}, *params), seed);
    return out;
}

CaseList block_cases(std::uint64_t seed)
{
    const std::string s = "net-blocks";
    SplitMix64 rng = SplitMix64::stream(seed, 4);
    CaseList out;
    auto params = std::make_shared<ParameterSet>();
    const PatchEmbed pe = make_patch_embed(*params, "embed", 3, 2, 4, rng);
    Tensor img = random_leaf({3, 4, 6}, rng);
    add_case(out, s, "patch_embed", [=] { return patch_embed(img, pe); }, with_params({{"img", img}}, *params), seed);
    Tensor f = random_leaf({4, 3, 4}, rng);
    auto eb_params = std::make_shared<ParameterSet>();
    const EncoderBlock eb = make_encoder_block(*eb_params, "block", 4, 3, rng);
    add_case(out, s, "encoder_block", [=] { return encoder_block_forward(f, eb); }, with_params({{"f", f}}, *eb_params), seed);
    auto ds_params = std::make_shared<ParameterSet>();
    const Downsample ds = make_downsample(*ds_params, "merge", 4, rng);
    Tensor g = random_leaf({4, 4, 6}, rng);
    add_case(out, s, "phase_gather", [=] { return phase_gather(g); }, {{"f", g}}, seed);
    add_case(out, s, "downsample", [=] { return downsample(g, ds); }, with_params({{"f", g}}, *ds_params), seed);
    Tensor grey = random_leaf({1, 3, 3}, rng);
    add_case(out, s, "replicate_channels", [=] { return replicate_channels(grey); }, {{"img", grey}}, seed);

    // Both streams run through one parameter set, so the shared leaves collect two contributions.
    auto enc_params = std::make_shared<ParameterSet>();
    const Encoder enc = make_encoder(*enc_params, "enc", StageConfig{{1}, {4}, 2}, 2, rng);
    Tensor rgb = random_leaf({3, 8, 8}, rng, 0.0, 1.0), x = random_leaf({1, 8, 8}, rng, 0.0, 1.0);
    add_case(out, s, "dual_stream_encode", [=] { const auto [a, b] = dual_stream_encode(rgb, x, enc); return concat({a.back(), b.back()}, 0); }, with_params({{"rgb", rgb}, {"x", x}}, *enc_params), seed, 1e-4, 6);
    return out;
}

CaseList mmff_cases(std::uint64_t seed)
{
    const std::string s = "mmff";
    SplitMix64 rng = SplitMix64::stream(seed, 5);
    CaseList out;
    auto params = std::make_shared<ParameterSet>();
    const MMFFBlock blk = make_mmff_block(*params, "fusion", 4, 3, rng);
    Tensor fr = random_leaf({4, 3, 3}, rng), fx = random_leaf({4, 3, 3}, rng);
    add_case(out, s, "mmff_forward", [=] { return mmff_forward(fr, fx, blk); }, with_params({{"f_rgb", fr}, {"f_x", fx}}, *params), seed);
    add_case(out, s, "mmff_forward self-fusion", [=] { return mmff_forward(fr, fr, blk); }, with_params({{"f_rgb", fr}}, *params), seed);
    return out;
}

CaseList decoder_cases(std::uint64_t seed)
{
    const std::string s = "decoder";
    SplitMix64 rng = SplitMix64::stream(seed, 6);
    CaseList out;
    Tensor low = random_leaf({8, 2, 3}, rng), high = random_leaf({4, 4, 6}, rng);
    add_case(out, s, "pixel_shuffle", [=] { return pixel_shuffle(low); }, {{"f", low}}, seed);
    auto params = std::make_shared<ParameterSet>();
    const DecoderStage st = make_decoder_stage(*params, "stage", 8, 3, rng);
    add_case(out, s, "decoder_stage", [=] { return decoder_stage(low, high, st); }, with_params({{"f_low", low}, {"f_high", high}}, *params), seed);
    auto head_params = std::make_shared<ParameterSet>();
    const SegHead head = make_seg_head(*head_params, "head", 4, 2, rng);
    add_case(out, s, "seg_head", [=] { return seg_head(high, head, 8, 12); }, with_params({{"f", high}}, *head_params), seed);
    return out;
}

CaseList model_cases(std::uint64_t seed)
{
    SplitMix64 rng = SplitMix64::stream(seed, 7);
    CaseList out;
    auto model = std::make_shared<Model>(ModelConfig::toy(8, 8), seed);
    Tensor rgb = random_leaf({3, 8, 8}, rng, 0.0, 1.0), x = random_leaf({1, 8, 8}, rng, 0.0, 1.0);
    add_case(out, "model", "model forward 8x8", [=] { return model->forward(rgb, &x); }, with_params({{"rgb", rgb}, {"x", x}}, model->parameters()), seed, 1e-3, 4);
    return out;
}

} // namespace

const std::vector<std::string>& gradcheck_scopes()
{
    static const std::vector<std::string> scopes{"tensor-autodiff", "ssm-scan", "ss2d", "net-blocks", "mmff", "decoder", "model"};
    return scopes;
}

std::vector<GradcheckCase> builtin_cases(const std::string& scope, std::uint64_t seed)
{
    if (scope == "all") {
        std::vector<GradcheckCase> all;
        for (const auto& s : gradcheck_scopes()) {
            auto part = builtin_cases(s, seed);
            all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
        return all;
    }
    if (scope == "tensor-autodiff")
        return tensor_cases(seed);
    if (scope == "ssm-scan")
        return scan_cases(seed);
    if (scope == "ss2d")
        return ss2d_cases(seed);
    if (scope == "net-blocks")
        return block_cases(seed);
    if (scope == "mmff")
        return mmff_cases(seed);
    if (scope == "decoder")
        return decoder_cases(seed);
    if (scope == "model")
        return model_cases(seed);
    std::string known;
    for (const auto& s : gradcheck_scopes())
        known += " " + s;
    throw ConfigError("unknown gradcheck scope '" + scope + "' (known: all" + known + ")");
}

GradcheckCase wrong_sign_fixture(std::uint64_t seed)
{
    SplitMix64 rng = SplitMix64::stream(seed, 99);
    Tensor x = random_leaf({2, 3}, rng);
    auto f = [x] {
        const ArrayXd v = x.data().square();
        const Tensor sq = make_result("wrong_sign_square", x.shape(), v, {x}, [](const ArrayXd& g, const std::vector<detail::NodePtr>& in) { in[0]->grad -= 2.0 * g * in[0]->value; });
        return sq;
    };
    CaseList out;
    add_case(out, "fixture", "wrong_sign_square", f, {{"x", x}}, seed);
    return out.front();
}

std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases, std::ostream* report, std::uint64_t seed)
{
    std::vector<GradcheckResult> results;
    for (const auto& c : cases) {
        results.push_back(check_gradients(c, seed));
        const auto& r = results.back();
        if (report)
            *report << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(16) << r.scope << ' ' << std::setw(32) << r.name << " rel_err " << std::scientific << std::setprecision(3) << r.max_rel_error << " (tol " << r.tolerance << ", worst " << r.worst_leaf << ")" << std::defaultfloat << '\n';
    }
    return results;
}

} // namespace hobj
