#pragma once

#include <hobj/dataset.hpp>

#include <cstdint>

namespace hobj {

/// Synthetic hidden-object scenes: textured background, elliptical objects whose RGB
/// colour is blended toward the local background by kappa, a fixed object offset in the
/// extra modality, bar occluders drawn in both modalities, additive Gaussian noise.
struct SceneConfig {
    Index height = 32;
    Index width = 32;
    Index min_objects = 1;
    Index max_objects = 2;
    double kappa = 0.5;             // 0: object fully visible in RGB, 1: invisible
    double modality_strength = 0.35; // object offset in xmod
    double occluder_density = 0.5;  // expected occluder bars per scene
    double noise_sigma = 0.03;
    bool allow_empty = false;       // otherwise scenes with an empty mask are redrawn
    std::uint64_t seed = 0;

    void validate() const;
};

/// The generated pair together with the layers it was composed from.
struct SceneLayers {
    ModalityPair pair;
    ImageD objects;   // union of object shapes before occlusion
    ImageD occluders;
    ImageD background_rgb_mean; // per-pixel mean over channels of the noise-free RGB background
};

SceneLayers generate_scene_layers(const SceneConfig& cfg, std::uint64_t index);

/// Depends only on (cfg, index); ids are "scene_<index>" zero-padded to 5 digits.
ModalityPair generate_scene(const SceneConfig& cfg, std::uint64_t index);

std::vector<ModalityPair> generate_dataset(const SceneConfig& cfg, std::uint64_t count);

} // namespace hobj
