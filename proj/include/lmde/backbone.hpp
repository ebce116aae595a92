#pragma once

// Vision encoder (patch transformer), word-embedding table and text encoder.
// Both encoders are pre-norm transformer stacks; the text stack is non-causal.

#include "lmde/autodiff.hpp"
#include "lmde/lora.hpp"
#include "lmde/params.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lmde {

struct BackboneConfig {
    int vision_width = 64;  // d_m
    int text_width = 64;    // D
    int vocab_size = 512;   // V
    int vision_layers = 2;
    int text_layers = 2;
    int heads = 4;
    int patch_size = 16;
    int image_size = 64;
    int max_prompt_tokens = 64;
    int mlp_ratio = 4;
    double dropout = 0.1;

    int grid() const { return image_size / patch_size; }
    int num_patches() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * 3; }
    int max_sequence() const { return max_prompt_tokens + num_patches(); }

    /// Throws ConfigError on inconsistent fields.
    void validate() const;

    static BackboneConfig desk() { return {}; }
    /// ViT-base / 12-layer BERT widths at 224 px.
    static BackboneConfig full_scale();

    bool operator==(const BackboneConfig&) const = default;
};

/// Dropout and batch-norm mode for one forward pass.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;

    bool dropout_active() const { return training && rng != nullptr; }
};

struct AttentionWeights {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;  // weights stored out x in
    std::optional<AttachedLora> lora_q;
    std::optional<AttachedLora> lora_v;
};

struct BlockWeights {
    ad::Var ln1_g, ln1_b;
    AttentionWeights attn;
    ad::Var ln2_g, ln2_b;
    ad::Var fc1_w, fc1_b, fc2_w, fc2_b;
};

BlockWeights make_block(ParamStore& store, const std::string& prefix, int width, int mlp_ratio, std::mt19937_64& rng);

ad::Var self_attention(const ad::Var& x, const AttentionWeights& w, int heads, double dropout, ForwardContext& ctx);

/// x + Attn(LN(x)), then + MLP(LN(x)).
ad::Var transformer_block(const ad::Var& x, const BlockWeights& w, int heads, double dropout, ForwardContext& ctx);

class VisionEncoder {
public:
    VisionEncoder() = default;
    VisionEncoder(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng);

    /// patches: N x patch_dim -> N x d_m.
    ad::Var forward(const ad::Var& patches, ForwardContext& ctx) const;
    Matrix encode(const Matrix& patches) const;

    std::vector<BlockWeights>& blocks() { return blocks_; }
    const std::vector<BlockWeights>& blocks() const { return blocks_; }

private:
    BackboneConfig cfg_;
    ad::Var patch_w_, patch_b_, pos_, lnf_g_, lnf_b_;
    std::vector<BlockWeights> blocks_;
};

class WordEmbedding {
public:
    WordEmbedding() = default;
    WordEmbedding(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng);

    /// Row t equals E[ids[t]]; an id >= V raises VocabError.
    ad::Var embed(const std::vector<int>& ids) const;
    const ad::Var& table() const { return table_; }
    int vocab_size() const { return static_cast<int>(table_.rows()); }
    int width() const { return static_cast<int>(table_.cols()); }

private:
    ad::Var table_;
};

class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng);

    /// seq: T x D -> T x D, T in [1, max_sequence].
    ad::Var forward(const ad::Var& seq, ForwardContext& ctx) const;
    Matrix encode(const Matrix& seq) const;

    std::vector<BlockWeights>& blocks() { return blocks_; }
    const std::vector<BlockWeights>& blocks() const { return blocks_; }

private:
    BackboneConfig cfg_;
    ad::Var pos_;
    std::vector<BlockWeights> blocks_;
};

struct Backbones {
    VisionEncoder vision;
    WordEmbedding words;
    TextEncoder text;
};

/// Registers backbone tensors ("vit.*", "llm.*") in `store`, all frozen, with
/// deterministic scaled-Gaussian values.
Backbones init_backbones(const BackboneConfig& cfg, std::uint64_t seed, ParamStore& store);

/// Attaches adapters to W^Q and W^V of every attention block of `blocks`;
/// targets are named <prefix>.layer<l>.attn.{q,v}.
void attach_block_adapters(std::vector<BlockWeights>& blocks, ParamStore& store, const std::string& prefix,
                           int rank, double alpha, std::mt19937_64& rng);
/// Folds every live adapter of `blocks` into its frozen weight.
void merge_block_adapters(std::vector<BlockWeights>& blocks);

// Weight file: "LMDE1", the BackboneConfig integers as int32, a uint32 tensor
// count, then per tensor: uint32 name length, name bytes, uint32 rank, uint32
// dims, float32 row-major data. Everything little-endian.

void save_weights(const std::filesystem::path& path, const BackboneConfig& cfg, const ParamStore& store);

/// Overwrites every tensor named in the file. Header or shape mismatches and
/// unknown names raise WeightLoadError.
void load_weights(const std::filesystem::path& path, const BackboneConfig& cfg, ParamStore& store);

}  // namespace lmde
