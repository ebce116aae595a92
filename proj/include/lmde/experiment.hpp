#pragma once

// Experiment harness: key=value configuration, the protocol presets, per-run
// artifacts (history CSV, metrics JSON, depth PNGs) and the summary report.

#include "lmde/dataset.hpp"
#include "lmde/metrics.hpp"
#include "lmde/model.hpp"
#include "lmde/training.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmde {

enum class ExperimentKind { few_shot, zero_shot, ablation_prompts, ablation_lora, hparam_grid, train, eval };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Split used by the single-run verbs and the ablations.
struct SplitChoice {
    SplitProtocol protocol = SplitProtocol::k_shot;
    int k = 4;
    std::string train_scene = "bedroom";

    /// "k_shot:<k>", "one_per_scene" or "zero_shot:<scene>".
    std::string to_string() const;
    static SplitChoice parse(std::string_view text);
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::few_shot;
    std::uint64_t seed = 7;
    std::filesystem::path out = "runs";

    // dataset: a directory with index.txt, or synthetic scenes when empty
    std::filesystem::path data_dir;
    double depth_scale = 1e-3;
    int synthetic_per_scene = 3;

    SplitChoice split;
    int per_class_cap = 50;
    /// Restricts test metrics to one scene label when set.
    std::string eval_scene;

    ModelConfig model;
    TrainConfig train;

    std::optional<double> depth_cap = 10.0;
    int depth_images = 8;
    /// eval: weights to load; train: where to save (default <out>/<run>/model.lmde).
    std::filesystem::path weights;
    bool device_free = true;

    /// Throws ConfigError on conflicting fields.
    void validate() const;

    /// key=value lines, one per field, in a fixed order; parse(to_text(c)) == c.
    std::string to_text() const;
    /// Unknown keys and malformed values raise ConfigError. `#` starts a comment.
    static ExperimentConfig parse(std::string_view text, ExperimentConfig base);
    static ExperimentConfig parse(std::string_view text);
    static ExperimentConfig load(const std::filesystem::path& path, ExperimentConfig base);
    static ExperimentConfig load(const std::filesystem::path& path);
    /// Applies a single key=value pair.
    void set(const std::string& key, const std::string& value);
};

struct RunRecord {
    std::string name;
    std::string tag;
    /// Config text reproducing this run as a `train` experiment.
    std::string config_snapshot;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> history;
    MetricsReport metrics;
    std::map<std::string, std::string> metadata;
    std::size_t test_images = 0;
    double wall_seconds = 0.0;
};

/// The eight hyperparameter-grid schemes at full scale.
struct GridScheme {
    int alpha_vit;
    int rank_vit;
    int rank_llm;
    int batch_size;
    double lr;
};
const std::array<GridScheme, 8>& hparam_grid_schemes();

/// Desk-scale LoRA settings for a scheme: ranks scaled by width/768 and
/// clamped to [1, width/2], alpha keeping the full-scale alpha/rank ratio, LLM
/// alpha equal to its rank.
LoraSettings scale_grid_lora(const GridScheme& s, int vision_width, int text_width);

/// Builds the sample pool of `cfg`.
std::vector<SceneSample> load_pool(const ExperimentConfig& cfg);

/// Runs the configured protocol, writing artifacts under cfg.out.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

/// Min-max normalized over valid pixels to 8-bit gray; a constant map gives
/// 128 and invalid pixels are 0.
std::vector<std::uint8_t> depth_to_gray(const DepthMap& depth);
void render_depth_image(const DepthMap& depth, const std::filesystem::path& path);

/// Deterministic metrics JSON of one run (wall time excluded).
nlohmann::ordered_json record_json(const RunRecord& r, bool with_wall_time = false);

/// Summary CSV text with a `best` column naming the metrics a run wins.
std::string summary_csv(const std::vector<RunRecord>& records);

/// Writes <dir>/summary.csv and <dir>/report.json. Empty input raises ReportError.
void write_report(const std::vector<RunRecord>& records, const std::filesystem::path& dir);

}  // namespace lmde
