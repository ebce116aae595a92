#pragma once

// Scene samples: NYU-format directory ingestion, procedural desk-scale scenes
// with exact depth, few-/zero-shot splits and patch extraction.

#include "lmde/autodiff.hpp"
#include "lmde/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lmde {

struct SceneSample {
    RgbImage image;
    DepthMap depth;
    std::string scene_label;
};

struct ManifestEntry {
    std::filesystem::path rgb;    // relative to the manifest root
    std::filesystem::path depth;  // relative to the manifest root
    std::string scene_label;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    double depth_scale = 1e-3;  // raw depth unit -> meters
};

/// Parses <dir>/index.txt: one `rgb<TAB>depth<TAB>label` entry per line.
DatasetManifest load_manifest(const std::filesystem::path& dir, double depth_scale = 1e-3);

/// Image bilinearly and depth nearest-neighbour resized to resolution^2; raw
/// depth multiplied by depth_scale and zero-depth pixels marked invalid.
SceneSample load_sample(const DatasetManifest& manifest, std::size_t index, int resolution, int patch_size = 16);

/// Writes `samples` as an index.txt directory (8-bit RGB, 16-bit depth in
/// units of `depth_scale`).
DatasetManifest export_dataset(const std::filesystem::path& dir, const std::vector<SceneSample>& samples,
                               double depth_scale = 1e-3);

// ---- synthetic scenes -------------------------------------------------------

inline constexpr double kSyntheticMinDepth = 0.5;
inline constexpr double kSyntheticMaxDepth = 10.0;

/// Image-plane rectangle in normalized [0,1] coordinates at constant depth.
struct SyntheticBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double depth = 1.0;
    std::array<double, 3> albedo{};
};

/// A back wall above `horizon` (fraction of image height) and a floor below
/// whose inverse depth grows linearly from the wall to `near_depth` at the
/// bottom edge, occluded by 1-3 boxes.
struct SyntheticLayout {
    double wall_depth = 8.0;
    double near_depth = 1.0;
    double horizon = 0.5;
    std::array<double, 3> wall_albedo{};
    std::array<double, 3> floor_albedo{};
    std::vector<SyntheticBox> boxes;
};

SyntheticLayout synthetic_layout(std::uint64_t seed, const std::string& scene_label);
SceneSample render_synthetic(const SyntheticLayout& layout, int resolution, const std::string& scene_label);
SceneSample generate_synthetic_scene(std::uint64_t seed, int resolution, const std::string& scene_label,
                                     int patch_size = 16);

/// `per_label` scenes for each label, label-major order.
std::vector<SceneSample> synthetic_pool(const std::vector<std::string>& labels, int per_label, std::uint64_t seed,
                                        int resolution, int patch_size = 16);

// ---- splits -------------------------------------------------------------------

/// Bedroom, bathroom, diningroom, kitchen: the classes added shot by shot.
const std::array<std::string, 4>& shot_classes();
/// The 28 indoor scene types of the one-image-per-scene protocol.
const std::vector<std::string>& scene_types();
/// Zero-shot evaluation scenes: bathroom, diningroom, kitchen, livingroom.
const std::array<std::string, 4>& zero_shot_test_scenes();

enum class SplitProtocol { k_shot, few_shot_one_per_scene, zero_shot };

struct SplitSpec {
    SplitProtocol protocol = SplitProtocol::k_shot;
    int k = 1;                              // k_shot only, 1..4
    std::string train_scene = "bedroom";    // zero_shot only
    std::uint64_t seed = 0;
    int per_class_cap = 50;                 // train images per class

    static SplitSpec k_shot(int k, std::uint64_t seed = 0);
    static SplitSpec one_per_scene(std::uint64_t seed = 0);
    static SplitSpec zero_shot(std::string scene, std::uint64_t seed = 0);
};

/// Indices into the pool.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

Split make_split(const std::vector<std::string>& pool_labels, const SplitSpec& spec);

// ---- patches --------------------------------------------------------------------

/// N x (p*p*3); patches in row-major grid order, each flattened (row, col, channel).
Matrix patchify(const RgbImage& image, int patch_size);
RgbImage unpatchify(const Matrix& patches, Index height, Index width, int patch_size);

}  // namespace lmde
