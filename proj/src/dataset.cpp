#include "lmde/dataset.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace lmde {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \r\n") - b + 1);
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& dir, double depth_scale) {
    const auto index = dir / "index.txt";
    std::ifstream is(index);
    if (!is) throw IngestError("missing index file: " + index.string());
    DatasetManifest m;
    m.root = dir;
    m.depth_scale = depth_scale;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 3) {
            throw IngestError("expected 3 tab-separated fields, got " + std::to_string(fields.size()), lineno);
        }
        ManifestEntry e{fields[0], fields[1], trim(fields[2])};
        if (e.scene_label.empty()) throw IngestError("empty scene label", lineno);
        for (const auto& p : {e.rgb, e.depth}) {
            if (!std::filesystem::exists(dir / p)) throw IngestError("missing file " + (dir / p).string(), lineno);
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

SceneSample load_sample(const DatasetManifest& manifest, std::size_t index, int resolution, int patch_size) {
    if (index >= manifest.entries.size()) {
        throw RangeError("sample index " + std::to_string(index) + " outside manifest of " +
                         std::to_string(manifest.entries.size()));
    }
    if (resolution <= 0 || patch_size <= 0 || resolution % patch_size != 0) {
        throw ShapeError("resolution must be a positive multiple of the patch size");
    }
    const auto& e = manifest.entries[index];
    RgbImage rgb;
    Gray16 raw;
    try {
        rgb = read_rgb_png(manifest.root / e.rgb);
        raw = read_gray16_png(manifest.root / e.depth);
    } catch (const IoError& err) {
        throw IngestError(err.what(), index + 1);
    }
    DepthMap depth(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        depth.depth[i] = static_cast<double>(raw.values[i]) * manifest.depth_scale;
        depth.valid[i] = raw.values[i] != 0;
    }
    return {resize_bilinear(rgb, resolution, resolution), resize_nearest(depth, resolution, resolution),
            e.scene_label};
}

DatasetManifest export_dataset(const std::filesystem::path& dir, const std::vector<SceneSample>& samples,
                               double depth_scale) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.txt");
    if (!index) throw IoError("cannot write " + (dir / "index.txt").string());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const std::string rgb = "rgb_" + std::to_string(i) + ".png";
        const std::string dep = "depth_" + std::to_string(i) + ".png";
        write_rgb_png(dir / rgb, s.image);
        Gray16 g{s.depth.height, s.depth.width, std::vector<std::uint16_t>(s.depth.size())};
        for (std::size_t p = 0; p < g.values.size(); ++p) {
            const double units = s.depth.valid[p] ? std::round(s.depth.depth[p] / depth_scale) : 0.0;
            g.values[p] = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
        }
        write_gray16_png(dir / dep, g);
        index << rgb << '\t' << dep << '\t' << s.scene_label << '\n';
    }
    index.close();
    return load_manifest(dir, depth_scale);
}

// ---- synthetic ------------------------------------------------------------------

SyntheticLayout synthetic_layout(std::uint64_t seed, const std::string& scene_label) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull ^ fnv1a(scene_label));
    std::mt19937_64 tint_rng(fnv1a(scene_label));
    std::array<double, 3> tint{};
    for (auto& t : tint) t = uniform(tint_rng, 0.7, 1.0);
    auto albedo = [&] {
        std::array<double, 3> a{};
        for (std::size_t c = 0; c < 3; ++c) a[c] = uniform(rng, 0.35, 1.0) * tint[c];
        return a;
    };

    SyntheticLayout l;
    l.wall_depth = uniform(rng, 6.0, kSyntheticMaxDepth);
    l.near_depth = uniform(rng, kSyntheticMinDepth, 1.5);
    l.horizon = uniform(rng, 0.35, 0.6);
    l.wall_albedo = albedo();
    l.floor_albedo = albedo();
    const int boxes = 1 + static_cast<int>(rng() % 3);
    for (int b = 0; b < boxes; ++b) {
        SyntheticBox box;
        box.x0 = uniform(rng, 0.0, 0.7);
        box.x1 = std::min(1.0, box.x0 + uniform(rng, 0.15, 0.4));
        box.y0 = uniform(rng, 0.1, 0.6);
        box.y1 = std::min(1.0, box.y0 + uniform(rng, 0.15, 0.4));
        box.depth = uniform(rng, 0.8, 0.9 * l.wall_depth);
        box.albedo = albedo();
        l.boxes.push_back(box);
    }
    return l;
}

SceneSample render_synthetic(const SyntheticLayout& l, int resolution, const std::string& scene_label) {
    if (resolution <= 0) throw ShapeError("synthetic resolution must be positive");
    SceneSample s{RgbImage(resolution, resolution), DepthMap(resolution, resolution), scene_label};
    const double inv_far = 1.0 / kSyntheticMaxDepth, inv_near = 1.0 / kSyntheticMinDepth;
    for (int y = 0; y < resolution; ++y) {
        const double v = (y + 0.5) / resolution;
        for (int x = 0; x < resolution; ++x) {
            const double u = (x + 0.5) / resolution;
            double depth;
            const std::array<double, 3>* albedo;
            if (v < l.horizon) {
                depth = l.wall_depth;
                albedo = &l.wall_albedo;
            } else {
                const double t = (v - l.horizon) / (1.0 - l.horizon);
                depth = 1.0 / (1.0 / l.wall_depth + t * (1.0 / l.near_depth - 1.0 / l.wall_depth));
                albedo = &l.floor_albedo;
            }
            for (const auto& b : l.boxes) {
                if (u >= b.x0 && u < b.x1 && v >= b.y0 && v < b.y1 && b.depth < depth) {
                    depth = b.depth;
                    albedo = &b.albedo;
                }
            }
            s.depth.at(y, x) = depth;
            const double shade = 0.2 + 0.8 * (1.0 / depth - inv_far) / (inv_near - inv_far);
            for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = std::clamp((*albedo)[c] * shade, 0.0, 1.0);
        }
    }
    return s;
}

SceneSample generate_synthetic_scene(std::uint64_t seed, int resolution, const std::string& scene_label,
                                     int patch_size) {
    if (patch_size <= 0 || resolution < 2 * patch_size) {
        throw ShapeError("synthetic resolution must be at least two patches");
    }
    return render_synthetic(synthetic_layout(seed, scene_label), resolution, scene_label);
}

std::vector<SceneSample> synthetic_pool(const std::vector<std::string>& labels, int per_label, std::uint64_t seed,
                                        int resolution, int patch_size) {
    std::vector<SceneSample> pool;
    pool.reserve(labels.size() * static_cast<std::size_t>(std::max(per_label, 0)));
    for (const auto& label : labels) {
        for (int i = 0; i < per_label; ++i) {
            pool.push_back(generate_synthetic_scene(seed * 100003ull + static_cast<std::uint64_t>(i), resolution, label,
                                                    patch_size));
        }
    }
    return pool;
}

// ---- splits -------------------------------------------------------------------------

const std::array<std::string, 4>& shot_classes() {
    static const std::array<std::string, 4> k{"bedroom", "bathroom", "diningroom", "kitchen"};
    return k;
}

const std::vector<std::string>& scene_types() {
    static const std::vector<std::string> k{
        "bedroom",      "bathroom",        "diningroom",     "kitchen",       "livingroom",  "basement",
        "bookstore",    "cafe",            "classroom",      "computer_lab",  "conference_room",
        "dinette",      "exercise_room",   "foyer",          "furniture_store", "home_office",
        "home_storage", "indoor_balcony",  "laundry_room",   "office",        "office_kitchen",
        "playroom",     "printer_room",    "reception_room", "student_lounge", "study",
        "study_room",   "nyu_office"};
    return k;
}

const std::array<std::string, 4>& zero_shot_test_scenes() {
    static const std::array<std::string, 4> k{"bathroom", "diningroom", "kitchen", "livingroom"};
    return k;
}

SplitSpec SplitSpec::k_shot(int k, std::uint64_t seed) {
    SplitSpec s;
    s.protocol = SplitProtocol::k_shot;
    s.k = k;
    s.seed = seed;
    return s;
}

SplitSpec SplitSpec::one_per_scene(std::uint64_t seed) {
    SplitSpec s;
    s.protocol = SplitProtocol::few_shot_one_per_scene;
    s.seed = seed;
    return s;
}

SplitSpec SplitSpec::zero_shot(std::string scene, std::uint64_t seed) {
    SplitSpec s;
    s.protocol = SplitProtocol::zero_shot;
    s.train_scene = std::move(scene);
    s.seed = seed;
    return s;
}

Split make_split(const std::vector<std::string>& pool_labels, const SplitSpec& spec) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < pool_labels.size(); ++i) by_label[pool_labels[i]].push_back(i);

    std::set<std::string> train_classes;
    switch (spec.protocol) {
        case SplitProtocol::k_shot:
            if (spec.k < 1 || spec.k > 4) throw ConfigError("k_shot requires k in 1..4");
            for (int i = 0; i < spec.k; ++i) train_classes.insert(shot_classes()[static_cast<std::size_t>(i)]);
            break;
        case SplitProtocol::few_shot_one_per_scene:
            for (const auto& [label, idx] : by_label) train_classes.insert(label);
            if (train_classes.empty()) throw SplitError("empty sample pool");
            break;
        case SplitProtocol::zero_shot:
            train_classes.insert(spec.train_scene);
            break;
    }
    for (const auto& c : train_classes) {
        if (!by_label.count(c)) throw SplitError("pool has no samples of scene class '" + c + "'");
    }
    if (spec.per_class_cap < 1) throw ConfigError("per_class_cap must be >= 1");

    Split split;
    for (auto& [label, idx] : by_label) {
        std::mt19937_64 rng(spec.seed ^ fnv1a(label));
        std::shuffle(idx.begin(), idx.end(), rng);
        const bool trains = train_classes.count(label) != 0;
        const bool tests = spec.protocol != SplitProtocol::zero_shot || label != spec.train_scene;
        std::size_t at = 0;
        if (trains) {
            const std::size_t n = idx.size();
            std::size_t n_train = 1;
            if (spec.protocol != SplitProtocol::few_shot_one_per_scene) {
                const std::size_t reserve = n >= 3 ? 2 : n - 1;
                n_train = std::min<std::size_t>(static_cast<std::size_t>(spec.per_class_cap), n - reserve);
            }
            split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
            at = n_train;
            if (at < n) split.val.push_back(idx[at++]);
        }
        if (tests) split.test.insert(split.test.end(), idx.begin() + static_cast<long>(at), idx.end());
    }
    if (spec.protocol == SplitProtocol::zero_shot && split.test.empty()) {
        throw SplitError("zero-shot split has no held-out scene besides '" + spec.train_scene + "'");
    }
    return split;
}

// ---- patches ------------------------------------------------------------------------

Matrix patchify(const RgbImage& image, int p) {
    if (p <= 0 || image.height % p != 0 || image.width % p != 0) {
        throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " is not divisible by patch size " + std::to_string(p));
    }
    const Index gh = image.height / p, gw = image.width / p;
    Matrix out(gh * gw, static_cast<Index>(p) * p * 3);
    for (Index py = 0; py < gh; ++py) {
        for (Index px = 0; px < gw; ++px) {
            const Index row = py * gw + px;
            for (Index y = 0; y < p; ++y) {
                for (Index x = 0; x < p; ++x) {
                    for (Index c = 0; c < 3; ++c) out(row, (y * p + x) * 3 + c) = image.at(py * p + y, px * p + x, c);
                }
            }
        }
    }
    return out;
}

RgbImage unpatchify(const Matrix& patches, Index height, Index width, int p) {
    if (p <= 0 || height % p != 0 || width % p != 0 || patches.rows() != (height / p) * (width / p) ||
        patches.cols() != static_cast<Index>(p) * p * 3) {
        throw ShapeError("unpatchify: patch matrix does not match the requested image");
    }
    const Index gw = width / p;
    RgbImage img(height, width);
    for (Index row = 0; row < patches.rows(); ++row) {
        const Index py = row / gw, px = row % gw;
        for (Index y = 0; y < p; ++y) {
            for (Index x = 0; x < p; ++x) {
                for (Index c = 0; c < 3; ++c) img.at(py * p + y, px * p + x, c) = patches(row, (y * p + x) * 3 + c);
            }
        }
    }
    return img;
}

}  // namespace lmde
