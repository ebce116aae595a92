#pragma once

// Adaptive depth prompt generation: Dataset / Task / Pixel / Class prompt
// strings built from image statistics, plus the word-level tokenizer.

#include "lmde/image.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmde {

/// Luminance statistics; the median is the lower-middle element for even counts.
struct PixelStats {
    double min = 0.0;
    double max = 0.0;
    double median = 0.0;
    double mean = 0.0;
};

PixelStats compute_pixel_stats(const RgbImage& image);

enum class ClassLabel { giant, extremely_close, close, not_in_distance, a_little_remote, far, unseen };

inline constexpr std::array<std::string_view, 7> kClassLabelNames{
    "giant", "extremely close", "close", "not in distance", "a little remote", "far", "unseen"};

std::string_view label_name(ClassLabel label);

/// Median luminance in 7 equal-width bins over [0, 1]; a value on a bin edge
/// falls in the lower bin.
ClassLabel classify_image(const PixelStats& stats);

enum class PromptMode { apg, fixed, none };

std::string_view to_string(PromptMode mode);
/// Throws ConfigError for unknown names.
PromptMode parse_prompt_mode(std::string_view name);

/// Placeholders: {name} {min} {max} {median} {class}.
struct PromptTemplates {
    std::string dataset = "dataset {name} indoor monocular images";
    std::string task = "estimate a dense depth map for this image";
    std::string pixel = "pixel statistics min {min} max {max} median {median}";
    std::string scene_class = "overall scene distance class {class}";

    /// UTF-8 file, one template per line in dataset/task/pixel/class order; a
    /// line may instead be prefixed `dataset:`, `task:`, `pixel:` or `class:`.
    static PromptTemplates load(const std::filesystem::path& path);
};

/// Deterministic word-level vocabulary: specials, the ten digits, "unknown",
/// then every word of the templates and class labels in first-seen order.
class Tokenizer {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnknownId = 1;

    explicit Tokenizer(int vocab_size, const PromptTemplates& templates = {},
                       const std::vector<std::string>& extra_words = {"nyu", "synthetic"});

    /// Lowercases, splits on whitespace and punctuation and emits each digit as
    /// its own token; unseen words map to kUnknownId.
    std::vector<int> tokenize(std::string_view text) const;

    int id(const std::string& word) const;
    int vocab_size() const { return vocab_size_; }
    std::size_t word_count() const { return words_.size(); }

    /// Lowercased word pieces of `text` before id lookup.
    static std::vector<std::string> split_words(std::string_view text);

private:
    void add_word(const std::string& w);

    int vocab_size_;
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

struct PromptBundle {
    std::string dataset_text;
    std::string task_text;
    std::string pixel_text;
    std::string class_text;
    std::vector<int> token_ids;
};

/// apg fills templates from live statistics; fixed replaces every statistic
/// with "unknown"; none yields an empty bundle.
PromptBundle build_prompt_bundle(const RgbImage& image, const std::string& dataset_name, const Tokenizer& tokenizer,
                                 PromptMode mode, const PromptTemplates& templates = {});

std::vector<int> tokenize_prompts(const Tokenizer& tokenizer, std::string_view text);

}  // namespace lmde
