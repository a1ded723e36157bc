#include <hobj/synth.hpp>

#include <hobj/error.hpp>
#include <hobj/parallel.hpp>
#include <hobj/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace hobj {

void SceneConfig::validate() const
{
    if (height < 8 || width < 8)
        throw ConfigError("scene resolution must be at least 8x8");
    if (min_objects < 0 || max_objects < min_objects)
        throw ConfigError("scene object count range is empty");
    if (!allow_empty && max_objects < 1)
        throw ConfigError("scenes without objects require allow_empty");
    if (!(kappa >= 0.0 && kappa <= 1.0))
        throw ConfigError("kappa must lie in [0, 1]");
    if (!(modality_strength >= 0.0 && modality_strength <= 1.0))
        throw ConfigError("modality strength must lie in [0, 1]");
    if (!(occluder_density >= 0.0) || !(noise_sigma >= 0.0))
        throw ConfigError("occluder density and noise sigma must be non-negative");
}

namespace {

constexpr int kMaxRedraws = 64;

struct Ellipse {
    double cy, cx, a, b, theta;
    bool contains(double y, double x) const
    {
        const double dy = y - cy, dx = x - cx;
        const double u = dx * std::cos(theta) + dy * std::sin(theta);
        const double v = -dx * std::sin(theta) + dy * std::cos(theta);
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

SceneLayers draw(const SceneConfig& cfg, SplitMix64& rng, std::uint64_t index)
{
    const Index h = cfg.height, w = cfg.width, plane = h * w;
    const double size = static_cast<double>(std::min(h, w));

    // Background: per-channel base plus a fine sinusoidal texture.
    double base[3], phase[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rng.uniform(0.3, 0.7);
        phase[c] = rng.uniform(0.0, 2 * std::numbers::pi);
    }
    const double period = rng.uniform(4.0, 6.0);
    const double orient = rng.uniform(0.0, std::numbers::pi);
    const double fy = std::sin(orient) / period, fx = std::cos(orient) / period;
    const double amp = 0.06;
    Eigen::ArrayXd bg_rgb(3 * plane);
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < h; ++i)
            for (Index j = 0; j < w; ++j)
                bg_rgb[c * plane + i * w + j] = base[c] + amp * std::sin(2 * std::numbers::pi * (fy * i + fx * j) + phase[c]);

    // Extra modality background: smooth ramp.
    const double x_base = rng.uniform(0.15, 0.35);
    const double ramp_y = rng.uniform(-0.1, 0.1), ramp_x = rng.uniform(-0.1, 0.1);
    Eigen::ArrayXd bg_x(plane);
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j)
            bg_x[i * w + j] = x_base + ramp_y * (static_cast<double>(i) / h - 0.5) + ramp_x * (static_cast<double>(j) / w - 0.5);

    SceneLayers out;
    out.objects = ImageD::Zero(h, w);
    out.occluders = ImageD::Zero(h, w);
    out.background_rgb_mean = ImageD::Zero(h, w);
    for (Index p = 0; p < plane; ++p)
        out.background_rgb_mean(p) = (bg_rgb[p] + bg_rgb[plane + p] + bg_rgb[2 * plane + p]) / 3.0;

    Eigen::ArrayXd rgb = bg_rgb, xm = bg_x;

    const Index n_obj = cfg.min_objects + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
    for (Index o = 0; o < n_obj; ++o) {
        Ellipse e{rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w, rng.uniform(0.15, 0.3) * size, rng.uniform(0.15, 0.3) * size, rng.uniform(0.0, std::numbers::pi)};
        // Object colour: a clear offset from the base in every channel, staying inside [0, 1].
        double color[3];
        for (int c = 0; c < 3; ++c) {
            const double gap = rng.uniform(0.3, 0.45);
            color[c] = base[c] > 0.5 ? base[c] - gap : base[c] + gap;
        }
        for (Index i = 0; i < h; ++i)
            for (Index j = 0; j < w; ++j) {
                if (!e.contains(i + 0.5, j + 0.5))
                    continue;
                const Index p = i * w + j;
                out.objects(i, j) = 1.0;
                for (int c = 0; c < 3; ++c)
                    rgb[c * plane + p] = (1.0 - cfg.kappa) * color[c] + cfg.kappa * bg_rgb[c * plane + p];
                xm[p] = bg_x[p] + cfg.modality_strength;
            }
    }

    // Occluders: axis-aligned bars crossing the scene, visible in both modalities.
    Index n_occ = 0;
    {
        // Poisson draw by inversion, capped.
        const double limit = std::exp(-cfg.occluder_density);
        double prod = rng.uniform();
        while (prod > limit && n_occ < 8) {
            ++n_occ;
            prod *= rng.uniform();
        }
    }
    for (Index o = 0; o < n_occ; ++o) {
        const bool horizontal = rng.uniform() < 0.5;
        const Index thick = std::max<Index>(2, static_cast<Index>(std::lround(rng.uniform(0.12, 0.18) * size)));
        const Index extent = horizontal ? h : w;
        const Index start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::max<Index>(1, extent - thick))));
        const double len_frac = rng.uniform(0.5, 1.0);
        const Index other = horizontal ? w : h;
        const Index len = std::max<Index>(1, static_cast<Index>(std::lround(len_frac * other)));
        const Index from = static_cast<Index>(rng.below(static_cast<std::uint64_t>(other - len + 1)));
        const double grey = rng.uniform(0.05, 0.95);
        const double x_val = rng.uniform(0.0, 0.15);
        for (Index a = start; a < std::min(extent, start + thick); ++a)
            for (Index b = from; b < from + len; ++b) {
                const Index i = horizontal ? a : b, j = horizontal ? b : a;
                const Index p = i * w + j;
                out.occluders(i, j) = 1.0;
                for (int c = 0; c < 3; ++c)
                    rgb[c * plane + p] = grey;
                xm[p] = x_val;
            }
    }

    for (Index k = 0; k < rgb.size(); ++k)
        rgb[k] = std::clamp(rgb[k] + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
    for (Index k = 0; k < xm.size(); ++k)
        xm[k] = std::clamp(xm[k] + cfg.noise_sigma * rng.normal(), 0.0, 1.0);

    ModalityPair& pair = out.pair;
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05llu", static_cast<unsigned long long>(index));
    pair.id = id;
    pair.rgb = Tensor({3, h, w}, rgb);
    pair.xmod = Tensor({1, h, w}, xm);
    pair.mask = out.objects * (1.0 - out.occluders);
    pair.labels = pair.mask.cast<int>();
    return out;
}

} // namespace

SceneLayers generate_scene_layers(const SceneConfig& cfg, std::uint64_t index)
{
    cfg.validate();
    SplitMix64 rng = SplitMix64::stream(cfg.seed, index);
    for (int attempt = 0;; ++attempt) {
        SceneLayers s = draw(cfg, rng, index);
        if (cfg.allow_empty || s.pair.mask.sum() > 0 || attempt + 1 >= kMaxRedraws)
            return s;
    }
}

ModalityPair generate_scene(const SceneConfig& cfg, std::uint64_t index) { return generate_scene_layers(cfg, index).pair; }

std::vector<ModalityPair> generate_dataset(const SceneConfig& cfg, std::uint64_t count)
{
    cfg.validate();
    std::vector<ModalityPair> out(static_cast<std::size_t>(count));
    parallel_for(0, static_cast<std::ptrdiff_t>(count), [&](std::ptrdiff_t i) { out[static_cast<std::size_t>(i)] = generate_scene(cfg, static_cast<std::uint64_t>(i)); });
    return out;
}

} // namespace hobj
