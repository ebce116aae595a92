#pragma once

// The assembled depth model: patchify -> vision encoder -> reprogramming ->
// prompt embedding -> fusion -> text encoder -> adaptation head -> metric depth.

#include "lmde/apg.hpp"
#include "lmde/backbone.hpp"
#include "lmde/dataset.hpp"
#include "lmde/head.hpp"
#include "lmde/params.hpp"
#include "lmde/reprogramming.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace lmde {

/// Which backbones carry adapters. Everything else in the backbones stays frozen.
enum class LoraScheme { frozen_frozen, lora_vision, lora_vision_text };

std::string_view to_string(LoraScheme scheme);
/// Throws ConfigError for unknown names.
LoraScheme parse_lora_scheme(std::string_view name);

struct LoraSettings {
    int vision_rank = 5;
    double vision_alpha = 10.0;
    int text_rank = 3;
    double text_alpha = 3.0;

    bool operator==(const LoraSettings&) const = default;
};

struct ModelConfig {
    BackboneConfig backbone = BackboneConfig::desk();
    int prototypes = 32;  // V'
    int reprogram_heads = 4;
    std::array<int, 4> head_channels{16, 8, 8, 4};
    PromptMode prompt_mode = PromptMode::apg;
    LoraScheme lora_scheme = LoraScheme::lora_vision_text;
    LoraSettings lora;
    double d_min = 0.1;
    double d_max = 10.0;
    std::string dataset_name = "synthetic";
    PromptTemplates templates;
    /// Seeds the stand-in pretrained backbone weights, shared by every run.
    std::uint64_t backbone_seed = 20240611;

    /// Throws ConfigError on inconsistent fields, including LoRA ranks that
    /// the active scheme would attach.
    void validate() const;
};

class DepthModel {
public:
    /// Backbones come from `backbone_seed`; reprogramming, head and adapters
    /// from `seed`.
    DepthModel(const ModelConfig& cfg, std::uint64_t seed);

    DepthModel(const DepthModel&) = delete;
    DepthModel& operator=(const DepthModel&) = delete;

    /// Prompt token ids for one image under the configured mode, truncated to
    /// max_prompt_tokens.
    std::vector<int> prompt_ids(const RgbImage& image) const;

    /// Text-encoder hidden states (T + N) x D for one image.
    ad::Var encode(const RgbImage& image, const ad::Var& prototypes, ForwardContext& ctx);

    /// Metric depth for a batch, stacked (B * S^2) x 1 with S the image size.
    /// Training mode enables dropout (when `rng` is given) and batch statistics.
    ad::Var forward(const std::vector<const RgbImage*>& images, bool training, std::mt19937_64* rng = nullptr);

    /// Eval-mode prediction at the model resolution.
    DepthMap predict(const RgbImage& image);
    std::vector<DepthMap> predict_batch(const std::vector<const RgbImage*>& images);

    /// Brings an image to the model resolution (bilinear) when needed.
    RgbImage prepare(const RgbImage& image) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    std::size_t trainable_parameter_count() const { return store_.trainable_count(); }
    const ModelConfig& config() const { return cfg_; }
    Backbones& backbones() { return backbones_; }
    Reprogrammer& reprogrammer() { return reprogrammer_; }
    AdaptationHead& head() { return head_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    void save(const std::filesystem::path& path) const;
    /// The file must come from a model with the same configuration.
    void load(const std::filesystem::path& path);

private:
    ModelConfig cfg_;
    ParamStore store_;
    Backbones backbones_;
    Reprogrammer reprogrammer_;
    AdaptationHead head_;
    Tokenizer tokenizer_;
};

}  // namespace lmde
