#include <doctest.h>

#include <hobj/dataset.hpp>
#include <hobj/error.hpp>
#include <hobj/netpbm.hpp>
#include <hobj/synth.hpp>

#include <filesystem>

using namespace hobj;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name)
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// Largest per-channel gap between the mean RGB over visible object pixels and over clear background.
double region_gap(const SceneLayers& s)
{
    const Index h = s.pair.height(), w = s.pair.width();
    double worst = 0;
    for (Index c = 0; c < 3; ++c) {
        double obj = 0, bg = 0, n_obj = 0, n_bg = 0;
        for (Index i = 0; i < h * w; ++i) {
            if (s.occluders(i) > 0)
                continue;
            const double v = s.pair.rgb.at(c * h * w + i);
            if (s.objects(i) > 0) {
                obj += v;
                n_obj += 1;
            } else {
                bg += v;
                n_bg += 1;
            }
        }
        if (n_obj > 0 && n_bg > 0)
            worst = std::max(worst, std::abs(obj / n_obj - bg / n_bg));
    }
    return worst;
}

} // namespace

TEST_CASE("camouflage strength")
{
    SceneConfig cfg;
    cfg.occluder_density = 0.0;
    cfg.kappa = 0.0;
    for (std::uint64_t i = 0; i < 8; ++i)
        CHECK(region_gap(generate_scene_layers(cfg, i)) > 0.2);

    cfg.kappa = 1.0;
    double mean_gap = 0;
    for (std::uint64_t i = 0; i < 8; ++i)
        mean_gap += region_gap(generate_scene_layers(cfg, i)) / 8;
    CHECK(mean_gap < cfg.noise_sigma);
}

TEST_CASE("the extra modality shows the object at full camouflage")
{
    SceneConfig cfg;
    cfg.kappa = 1.0;
    const SceneLayers s = generate_scene_layers(cfg, 3);
    double obj = 0, bg = 0, n_obj = 0, n_bg = 0;
    for (Index i = 0; i < s.objects.size(); ++i) {
        if (s.occluders(i) > 0)
            continue;
        (s.objects(i) > 0 ? obj : bg) += s.pair.xmod.at(i);
        (s.objects(i) > 0 ? n_obj : n_bg) += 1;
    }
    CHECK(obj / n_obj - bg / n_bg > 0.6 * cfg.modality_strength);
}

TEST_CASE("scenes are deterministic and masks lie inside objects")
{
    SceneConfig cfg;
    cfg.seed = 77;
    for (std::uint64_t i = 0; i < 6; ++i) {
        const SceneLayers a = generate_scene_layers(cfg, i), b = generate_scene_layers(cfg, i);
        CHECK((a.pair.rgb.data() == b.pair.rgb.data()).all());
        CHECK((a.pair.xmod.data() == b.pair.xmod.data()).all());
        CHECK((a.pair.mask == b.pair.mask).all());
        CHECK(a.pair.id == b.pair.id);
        CHECK(a.pair.mask.sum() > 0);
        CHECK(((a.pair.mask > 0) <= (a.objects > 0)).all());
        CHECK((a.pair.rgb.data() >= 0.0).all());
        CHECK((a.pair.rgb.data() <= 1.0).all());
    }
    const ModalityPair first = generate_scene(cfg, 0), second = generate_scene(cfg, 1);
    CHECK((first.rgb.data() != second.rgb.data()).any());
    const auto batch = generate_dataset(cfg, 4);
    REQUIRE(batch.size() == 4);
    CHECK((batch[1].rgb.data() == second.rgb.data()).all());
}

TEST_CASE("config validation")
{
    SceneConfig cfg;
    cfg.kappa = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SceneConfig{};
    cfg.min_objects = 3;
    cfg.max_objects = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset directory round trip")
{
    TempDir tmp("hobj_test_synth");
    const std::string root = tmp.path.string();
    const LoadReport empty = load_dataset(root);
    CHECK(empty.pairs.empty());
    CHECK(empty.errors.empty());

    SceneConfig cfg;
    cfg.height = 8;
    cfg.width = 12;
    const auto pairs = generate_dataset(cfg, 3);
    save_dataset(root, pairs);
    const LoadReport loaded = load_dataset(root);
    REQUIRE(loaded.pairs.size() == 3);
    CHECK(loaded.errors.empty());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded.pairs[i].id == pairs[i].id);
        CHECK((loaded.pairs[i].mask == pairs[i].mask).all());
        CHECK((loaded.pairs[i].rgb.data() - pairs[i].rgb.data()).abs().maxCoeff() <= 0.5 / 255 + 1e-12);
    }
    CHECK(loaded.pairs[0].id < loaded.pairs[1].id);

    // A second save of the loaded (already quantized) data is byte-identical on disk.
    TempDir again("hobj_test_synth_again");
    save_dataset(again.path.string(), loaded.pairs);
    const auto rgb_a = read_netpbm((tmp.path / "rgb" / (pairs[1].id + ".ppm")).string());
    const auto rgb_b = read_netpbm((again.path / "rgb" / (pairs[1].id + ".ppm")).string());
    CHECK(rgb_a == rgb_b);

    std::filesystem::remove(tmp.path / "mask" / (pairs[2].id + ".pgm"));
    const LoadReport partial = load_dataset(root);
    CHECK(partial.pairs.size() == 2);
    REQUIRE(partial.errors.size() == 1);
    CHECK(partial.errors[0].find(pairs[2].id) != std::string::npos);
    CHECK(partial.errors[0].find("mask") != std::string::npos);

    CHECK_THROWS_AS(load_dataset((tmp.path / "nowhere").string()), IoError);
}

TEST_CASE("16-bit extra modality and horizontal flip")
{
    TempDir tmp("hobj_test_synth16");
    SceneConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    const auto pairs = generate_dataset(cfg, 1);
    save_dataset(tmp.path.string(), pairs, 65535);
    const auto raster = read_netpbm((tmp.path / "x" / (pairs[0].id + ".pgm")).string());
    CHECK(raster.maxval == 65535);
    const LoadReport loaded = load_dataset(tmp.path.string());
    REQUIRE(loaded.pairs.size() == 1);
    CHECK((loaded.pairs[0].xmod.data() - pairs[0].xmod.data()).abs().maxCoeff() <= 0.5 / 65535 + 1e-12);

    const ModalityPair f = hflip(pairs[0]);
    CHECK(f.mask(2, 0) == pairs[0].mask(2, 7));
    CHECK(f.rgb.at(1 * 64 + 3 * 8 + 1) == pairs[0].rgb.at(1 * 64 + 3 * 8 + 6));
    const ModalityPair ff = hflip(f);
    CHECK((ff.rgb.data() == pairs[0].rgb.data()).all());
}
