#include <hobj/model.hpp>

#include <hobj/error.hpp>

#include <json.hpp>

namespace hobj {

std::string to_string(TaskKind task) { return task == TaskKind::saliency ? "saliency" : "semantic"; }

TaskKind parse_task(const std::string& name)
{
    if (name == "saliency")
        return TaskKind::saliency;
    if (name == "semantic")
        return TaskKind::semantic;
    throw ConfigError("unknown task '" + name + "' (expected saliency or semantic)");
}

void ModelConfig::validate() const
{
    stages.validate();
    if (state < 1)
        throw ConfigError("state dimension must be positive");
    if (num_classes < 1)
        throw ConfigError("num_classes must be positive");
    if (task == TaskKind::saliency && num_classes != 1)
        throw ConfigError("saliency task uses a single logit channel");
    if (stages.channels.back() % 4 != 0 && stages.num_stages() > 1)
        throw ConfigError("decoder needs coarse-level channels divisible by 4");
    const Index unit = stages.patch_size << (stages.num_stages() - 1);
    if (height < 1 || width < 1 || height % unit != 0 || width % unit != 0)
        throw ConfigError("input resolution " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by patch * 2^(stages-1) = " + std::to_string(unit));
}

std::string ModelConfig::to_json() const
{
    nlohmann::json j;
    j["depths"] = stages.depths;
    j["channels"] = stages.channels;
    j["patch_size"] = stages.patch_size;
    j["state"] = state;
    j["num_classes"] = num_classes;
    j["task"] = hobj::to_string(task);
    j["height"] = height;
    j["width"] = width;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        ModelConfig c;
        c.stages.depths = j.at("depths").get<std::vector<Index>>();
        c.stages.channels = j.at("channels").get<std::vector<Index>>();
        c.stages.patch_size = j.at("patch_size").get<Index>();
        c.state = j.at("state").get<Index>();
        c.num_classes = j.at("num_classes").get<Index>();
        c.task = parse_task(j.at("task").get<std::string>());
        c.height = j.at("height").get<Index>();
        c.width = j.at("width").get<Index>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw VersionError(std::string("model configuration in checkpoint is unreadable: ") + e.what());
    }
}

ModelConfig ModelConfig::toy(Index height, Index width)
{
    ModelConfig c;
    c.height = height;
    c.width = width;
    return c;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : config_(std::move(cfg))
{
    config_.validate();
    SplitMix64 rng(seed);
    encoder_ = make_encoder(params_, "encoder", config_.stages, config_.state, rng);
    for (std::size_t s = 0; s < config_.stages.channels.size(); ++s)
        fusion_.push_back(make_mmff_block(params_, "fusion" + std::to_string(s), config_.stages.channels[s], config_.state, rng));
    decoder_ = make_decoder(params_, "decoder", config_.stages.channels, config_.state, config_.num_classes, rng);
}

Tensor Model::forward(const Tensor& rgb, const Tensor* x) const
{
    const auto check = [this](const Tensor& img, const char* what, bool allow_single) {
        const bool channels_ok = img.rank() == 3 && (img.dim(0) == 3 || (allow_single && img.dim(0) == 1));
        if (!channels_ok || img.dim(1) != config_.height || img.dim(2) != config_.width)
            throw DimensionError(std::string("model input ") + what + " has shape " + shape_string(img.shape()) + " but the model is configured for " + std::to_string(config_.height) + "x" + std::to_string(config_.width));
    };
    check(rgb, "rgb", false);
    Pyramid pyr_rgb = encode(rgb, encoder_);
    Pyramid pyr_x;
    if (x) {
        check(*x, "x", true);
        pyr_x = encode(x->dim(0) == 1 ? replicate_channels(*x) : *x, encoder_);
    } else {
        pyr_x = pyr_rgb;
    }
    const Pyramid fused = fuse_pyramids(pyr_rgb, pyr_x, fusion_);
    return decode(fused, decoder_, config_.height, config_.width);
}

void Model::save(const std::string& path) const { save_checkpoint(path, params_, config_.to_json()); }

Model Model::load(const std::string& path)
{
    const Checkpoint ck = read_checkpoint(path);
    Model m(ModelConfig::from_json(ck.config_json));
    load_parameters(ck, m.params_);
    return m;
}

void Model::load_weights(const std::string& path)
{
    const Checkpoint ck = read_checkpoint(path);
    load_parameters(ck, params_);
}

} // namespace hobj
