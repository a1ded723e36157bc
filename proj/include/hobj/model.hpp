#pragma once

#include <hobj/blocks.hpp>
#include <hobj/decoder.hpp>
#include <hobj/mmff.hpp>

#include <cstdint>
#include <string>

namespace hobj {

enum class TaskKind { saliency, semantic };

std::string to_string(TaskKind task);
TaskKind parse_task(const std::string& name);

struct ModelConfig {
    StageConfig stages;
    Index state = 4;
    Index num_classes = 1;
    TaskKind task = TaskKind::saliency;
    Index height = 32;
    Index width = 32;

    /// Resolution must be divisible by patch * 2^(stages - 1).
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    /// Patch 4, two stages of depth 2 at 16/32 channels, N = 4, 32x32, one saliency class.
    static ModelConfig toy(Index height = 32, Index width = 32);
};

/// Dual-stream encoder, per-level fusion, decoder cascade, head.
class Model {
public:
    explicit Model(ModelConfig cfg, std::uint64_t seed = 0);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    /// rgb: [3 x H x W]; x: [1 or 3 x H x W]. Without x, the RGB stream is fused with itself.
    Tensor forward(const Tensor& rgb, const Tensor* x = nullptr) const;

    const ModelConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    Index parameter_count() const { return params_.total_size(); }

    const Encoder& encoder() const { return encoder_; }
    const std::vector<MMFFBlock>& fusion() const { return fusion_; }
    const Decoder& decoder() const { return decoder_; }

    void save(const std::string& path) const;
    /// Rebuilds the model from the checkpoint's stored configuration and loads its weights.
    static Model load(const std::string& path);
    /// Loads weights into this model; the checkpoint manifest must match exactly.
    void load_weights(const std::string& path);

private:
    ModelConfig config_;
    ParameterSet params_;
    Encoder encoder_;
    std::vector<MMFFBlock> fusion_;
    Decoder decoder_;
};

} // namespace hobj
