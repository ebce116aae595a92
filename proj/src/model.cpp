#include "lmde/model.hpp"

#include "lmde/errors.hpp"

#include <string>

namespace lmde {

std::string_view to_string(LoraScheme scheme) {
    switch (scheme) {
        case LoraScheme::frozen_frozen: return "frozen_frozen";
        case LoraScheme::lora_vision: return "lora_vision";
        case LoraScheme::lora_vision_text: return "lora_vision_text";
    }
    return "?";
}

LoraScheme parse_lora_scheme(std::string_view name) {
    if (name == "frozen_frozen") return LoraScheme::frozen_frozen;
    if (name == "lora_vision") return LoraScheme::lora_vision;
    if (name == "lora_vision_text") return LoraScheme::lora_vision_text;
    throw ConfigError("unknown LoRA scheme '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    backbone.validate();
    if (prototypes < 1 || prototypes > backbone.vocab_size / 4) {
        throw ConfigError("prototype count must lie in [1, V/4]; got " + std::to_string(prototypes));
    }
    if (reprogram_heads < 1 || backbone.vision_width % reprogram_heads != 0) {
        throw ConfigError("reprogramming heads must divide the vision width");
    }
    HeadConfig{backbone.text_width, backbone.grid(), head_channels, backbone.image_size}.validate();
    if (!(d_min > 0.0) || !(d_min < d_max)) throw ConfigError("depth range needs 0 < d_min < d_max");
    if (lora_scheme != LoraScheme::frozen_frozen) {
        check_lora_rank(backbone.vision_width, backbone.vision_width, lora.vision_rank);
        if (!(lora.vision_alpha > 0.0)) throw ConfigError("vision LoRA alpha must be positive");
    }
    if (lora_scheme == LoraScheme::lora_vision_text) {
        check_lora_rank(backbone.text_width, backbone.text_width, lora.text_rank);
        if (!(lora.text_alpha > 0.0)) throw ConfigError("text LoRA alpha must be positive");
    }
}

DepthModel::DepthModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), tokenizer_(cfg.backbone.vocab_size, cfg.templates, {"nyu", "synthetic", cfg.dataset_name}) {
    cfg_.validate();
    backbones_ = init_backbones(cfg_.backbone, cfg_.backbone_seed, store_);
    std::mt19937_64 rng(seed);
    reprogrammer_ = Reprogrammer(cfg_.backbone, cfg_.prototypes, cfg_.reprogram_heads, store_, rng);
    head_ = AdaptationHead(
        HeadConfig{cfg_.backbone.text_width, cfg_.backbone.grid(), cfg_.head_channels, cfg_.backbone.image_size},
        store_, rng);
    if (cfg_.lora_scheme != LoraScheme::frozen_frozen) {
        attach_block_adapters(backbones_.vision.blocks(), store_, "vit", cfg_.lora.vision_rank, cfg_.lora.vision_alpha,
                              rng);
        store_.set_trainable_prefix("lora.vit.", true);
    }
    if (cfg_.lora_scheme == LoraScheme::lora_vision_text) {
        attach_block_adapters(backbones_.text.blocks(), store_, "llm", cfg_.lora.text_rank, cfg_.lora.text_alpha, rng);
        store_.set_trainable_prefix("lora.llm.", true);
    }
}

std::vector<int> DepthModel::prompt_ids(const RgbImage& image) const {
    std::vector<int> ids =
        build_prompt_bundle(image, cfg_.dataset_name, tokenizer_, cfg_.prompt_mode, cfg_.templates).token_ids;
    const auto cap = static_cast<std::size_t>(cfg_.backbone.max_prompt_tokens);
    if (ids.size() > cap) ids.resize(cap);
    return ids;
}

RgbImage DepthModel::prepare(const RgbImage& image) const {
    const Index s = cfg_.backbone.image_size;
    if (image.height == s && image.width == s) return image;
    return resize_bilinear(image, s, s);
}

ad::Var DepthModel::encode(const RgbImage& image, const ad::Var& prototypes, ForwardContext& ctx) {
    const ad::Var patches = ad::constant(patchify(image, cfg_.backbone.patch_size));
    const ad::Var xp = backbones_.vision.forward(patches, ctx);
    const ad::Var f = reprogrammer_.reprogram(xp, prototypes);
    const std::vector<int> ids = prompt_ids(image);
    const ad::Var prompt = ids.empty() ? ad::Var{} : backbones_.words.embed(ids);
    const FusedSequence seq = reprogrammer_.fuse(f, prompt);
    return backbones_.text.forward(seq.tokens, ctx);
}

ad::Var DepthModel::forward(const std::vector<const RgbImage*>& images, bool training, std::mt19937_64* rng) {
    if (images.empty()) throw ShapeError("DepthModel::forward: empty batch");
    ForwardContext ctx{training, rng};
    const ad::Var prototypes = reprogrammer_.prototypes(backbones_.words);
    std::vector<ad::Var> hidden;
    hidden.reserve(images.size());
    for (const RgbImage* img : images) {
        if (img->height == cfg_.backbone.image_size && img->width == cfg_.backbone.image_size) {
            hidden.push_back(encode(*img, prototypes, ctx));
        } else {
            hidden.push_back(encode(prepare(*img), prototypes, ctx));
        }
    }
    const ad::Var unit = head_.forward(hidden, training, cfg_.backbone.num_patches());
    return ad::add_scalar(ad::scale(unit, cfg_.d_max - cfg_.d_min), cfg_.d_min);
}

std::vector<DepthMap> DepthModel::predict_batch(const std::vector<const RgbImage*>& images) {
    const ad::Var depth = forward(images, false);
    const int s = cfg_.backbone.image_size;
    std::vector<DepthMap> out;
    out.reserve(images.size());
    for (std::size_t b = 0; b < images.size(); ++b) {
        DepthMap d(s, s);
        const Matrix m = unit_map(depth.value(), static_cast<Index>(b), s);
        for (Index i = 0; i < m.size(); ++i) d.depth[static_cast<std::size_t>(i)] = m.data()[i];
        out.push_back(std::move(d));
    }
    return out;
}

DepthMap DepthModel::predict(const RgbImage& image) { return predict_batch({&image}).front(); }

void DepthModel::save(const std::filesystem::path& path) const { save_weights(path, cfg_.backbone, store_); }

void DepthModel::load(const std::filesystem::path& path) { load_weights(path, cfg_.backbone, store_); }

}  // namespace lmde
