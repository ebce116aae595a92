#include "lmde/experiment.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

namespace lmde {

namespace fs = std::filesystem;

std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::few_shot: return "few_shot";
        case ExperimentKind::zero_shot: return "zero_shot";
        case ExperimentKind::ablation_prompts: return "ablation_prompts";
        case ExperimentKind::ablation_lora: return "ablation_lora";
        case ExperimentKind::hparam_grid: return "hparam_grid";
        case ExperimentKind::train: return "train";
        case ExperimentKind::eval: return "eval";
    }
    return "?";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
    for (auto k : {ExperimentKind::few_shot, ExperimentKind::zero_shot, ExperimentKind::ablation_prompts,
                   ExperimentKind::ablation_lora, ExperimentKind::hparam_grid, ExperimentKind::train,
                   ExperimentKind::eval}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

long long to_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

int to_i32(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < -2147483647LL || x > 2147483647LL) throw ConfigError("config key '" + key + "': value out of range");
    return static_cast<int>(x);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out)) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a finite number");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

std::string SplitChoice::to_string() const {
    switch (protocol) {
        case SplitProtocol::k_shot: return "k_shot:" + std::to_string(k);
        case SplitProtocol::few_shot_one_per_scene: return "one_per_scene";
        case SplitProtocol::zero_shot: return "zero_shot:" + train_scene;
    }
    return "?";
}

SplitChoice SplitChoice::parse(std::string_view text) {
    SplitChoice c;
    const std::string t = trim(text);
    if (t == "one_per_scene") {
        c.protocol = SplitProtocol::few_shot_one_per_scene;
    } else if (t.rfind("k_shot:", 0) == 0) {
        c.protocol = SplitProtocol::k_shot;
        c.k = to_i32("split", t.substr(7));
        if (c.k < 1 || c.k > 4) throw ConfigError("split: k must lie in 1..4");
    } else if (t.rfind("zero_shot:", 0) == 0 && t.size() > 10) {
        c.protocol = SplitProtocol::zero_shot;
        c.train_scene = t.substr(10);
    } else {
        throw ConfigError("split: expected k_shot:<k>, one_per_scene or zero_shot:<scene>, got '" + t + "'");
    }
    return c;
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    if (data_dir.empty() && synthetic_per_scene < 1) throw ConfigError("synthetic count must be at least 1");
    if (!(depth_scale > 0.0)) throw ConfigError("depth_scale must be positive");
    if (per_class_cap < 1) throw ConfigError("per_class_cap must be at least 1");
    if (depth_images < 0) throw ConfigError("depth_images must be nonnegative");
    if (depth_cap && !(*depth_cap > 0.0)) throw ConfigError("depth_cap must be positive or off");
    if (experiment == ExperimentKind::eval && weights.empty()) throw ConfigError("eval needs a weights file");
    if (experiment != ExperimentKind::eval && experiment != ExperimentKind::train && !weights.empty()) {
        throw ConfigError("weights only apply to the train and eval experiments");
    }
    if (experiment == ExperimentKind::zero_shot && split.protocol != SplitProtocol::zero_shot &&
        split.protocol != SplitProtocol::k_shot) {
        throw ConfigError("zero_shot takes its training scene from split=zero_shot:<scene>");
    }
    if (experiment == ExperimentKind::zero_shot && !eval_scene.empty()) {
        throw ConfigError("zero_shot evaluates every held-out scene; eval_scene conflicts");
    }
    if (out.empty()) throw ConfigError("output directory must be set");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const std::string& v = value;
    auto& bb = model.backbone;
    if (key == "experiment") experiment = parse_experiment_kind(v);
    else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "out") out = v;
    else if (key == "data_dir") data_dir = v;
    else if (key == "depth_scale") depth_scale = to_double(key, v);
    else if (key == "synthetic") synthetic_per_scene = to_i32(key, v);
    else if (key == "split") split = SplitChoice::parse(v);
    else if (key == "per_class_cap") per_class_cap = to_i32(key, v);
    else if (key == "eval_scene") eval_scene = v;
    else if (key == "vision_width") bb.vision_width = to_i32(key, v);
    else if (key == "text_width") bb.text_width = to_i32(key, v);
    else if (key == "vocab_size") bb.vocab_size = to_i32(key, v);
    else if (key == "vision_layers") bb.vision_layers = to_i32(key, v);
    else if (key == "text_layers") bb.text_layers = to_i32(key, v);
    else if (key == "heads") bb.heads = to_i32(key, v);
    else if (key == "patch_size") bb.patch_size = to_i32(key, v);
    else if (key == "image_size") bb.image_size = to_i32(key, v);
    else if (key == "max_prompt_tokens") bb.max_prompt_tokens = to_i32(key, v);
    else if (key == "mlp_ratio") bb.mlp_ratio = to_i32(key, v);
    else if (key == "dropout") bb.dropout = to_double(key, v);
    else if (key == "prototypes") model.prototypes = to_i32(key, v);
    else if (key == "reprogram_heads") model.reprogram_heads = to_i32(key, v);
    else if (key == "head_channels") {
        std::stringstream ss(v);
        std::string part;
        std::vector<int> ch;
        while (std::getline(ss, part, ',')) ch.push_back(to_i32(key, trim(part)));
        if (ch.size() != 4) throw ConfigError("head_channels needs four comma-separated widths");
        std::copy(ch.begin(), ch.end(), model.head_channels.begin());
    }
    else if (key == "prompt_mode") model.prompt_mode = parse_prompt_mode(v);
    else if (key == "lora_scheme") model.lora_scheme = parse_lora_scheme(v);
    else if (key == "lora_vision_rank") model.lora.vision_rank = to_i32(key, v);
    else if (key == "lora_vision_alpha") model.lora.vision_alpha = to_double(key, v);
    else if (key == "lora_text_rank") model.lora.text_rank = to_i32(key, v);
    else if (key == "lora_text_alpha") model.lora.text_alpha = to_double(key, v);
    else if (key == "d_min") model.d_min = to_double(key, v);
    else if (key == "d_max") model.d_max = to_double(key, v);
    else if (key == "dataset_name") model.dataset_name = v;
    else if (key == "template_dataset") model.templates.dataset = v;
    else if (key == "template_task") model.templates.task = v;
    else if (key == "template_pixel") model.templates.pixel = v;
    else if (key == "template_class") model.templates.scene_class = v;
    else if (key == "templates_file") model.templates = PromptTemplates::load(v);
    else if (key == "backbone_seed") model.backbone_seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "batch_size") train.batch_size = to_i32(key, v);
    else if (key == "lr0") train.lr0 = to_double(key, v);
    else if (key == "lr_min_ratio") train.lr_min_ratio = to_double(key, v);
    else if (key == "epochs") train.epochs = to_i32(key, v);
    else if (key == "patience") train.patience = to_i32(key, v);
    else if (key == "max_steps") train.max_steps = to_int(key, v);
    else if (key == "beta1") train.adam.beta1 = to_double(key, v);
    else if (key == "beta2") train.adam.beta2 = to_double(key, v);
    else if (key == "adam_eps") train.adam.eps = to_double(key, v);
    else if (key == "weight_decay") train.adam.weight_decay = to_double(key, v);
    else if (key == "depth_cap") depth_cap = v == "off" ? std::nullopt : std::optional<double>(to_double(key, v));
    else if (key == "depth_images") depth_images = to_i32(key, v);
    else if (key == "weights") weights = v;
    else if (key == "device_free") device_free = to_bool(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

std::string ExperimentConfig::to_text() const {
    const auto& bb = model.backbone;
    std::vector<std::pair<std::string, std::string>> kv{
        {"experiment", std::string(lmde::to_string(experiment))},
        {"seed", std::to_string(seed)},
        {"out", out.string()},
        {"data_dir", data_dir.string()},
        {"depth_scale", fmt_double(depth_scale)},
        {"synthetic", std::to_string(synthetic_per_scene)},
        {"split", split.to_string()},
        {"per_class_cap", std::to_string(per_class_cap)},
        {"eval_scene", eval_scene},
        {"vision_width", std::to_string(bb.vision_width)},
        {"text_width", std::to_string(bb.text_width)},
        {"vocab_size", std::to_string(bb.vocab_size)},
        {"vision_layers", std::to_string(bb.vision_layers)},
        {"text_layers", std::to_string(bb.text_layers)},
        {"heads", std::to_string(bb.heads)},
        {"patch_size", std::to_string(bb.patch_size)},
        {"image_size", std::to_string(bb.image_size)},
        {"max_prompt_tokens", std::to_string(bb.max_prompt_tokens)},
        {"mlp_ratio", std::to_string(bb.mlp_ratio)},
        {"dropout", fmt_double(bb.dropout)},
        {"prototypes", std::to_string(model.prototypes)},
        {"reprogram_heads", std::to_string(model.reprogram_heads)},
        {"head_channels", std::to_string(model.head_channels[0]) + "," + std::to_string(model.head_channels[1]) + "," +
                              std::to_string(model.head_channels[2]) + "," + std::to_string(model.head_channels[3])},
        {"prompt_mode", std::string(lmde::to_string(model.prompt_mode))},
        {"lora_scheme", std::string(lmde::to_string(model.lora_scheme))},
        {"lora_vision_rank", std::to_string(model.lora.vision_rank)},
        {"lora_vision_alpha", fmt_double(model.lora.vision_alpha)},
        {"lora_text_rank", std::to_string(model.lora.text_rank)},
        {"lora_text_alpha", fmt_double(model.lora.text_alpha)},
        {"d_min", fmt_double(model.d_min)},
        {"d_max", fmt_double(model.d_max)},
        {"dataset_name", model.dataset_name},
        {"template_dataset", model.templates.dataset},
        {"template_task", model.templates.task},
        {"template_pixel", model.templates.pixel},
        {"template_class", model.templates.scene_class},
        {"backbone_seed", std::to_string(model.backbone_seed)},
        {"batch_size", std::to_string(train.batch_size)},
        {"lr0", fmt_double(train.lr0)},
        {"lr_min_ratio", fmt_double(train.lr_min_ratio)},
        {"epochs", std::to_string(train.epochs)},
        {"patience", std::to_string(train.patience)},
        {"max_steps", std::to_string(train.max_steps)},
        {"beta1", fmt_double(train.adam.beta1)},
        {"beta2", fmt_double(train.adam.beta2)},
        {"adam_eps", fmt_double(train.adam.eps)},
        {"weight_decay", fmt_double(train.adam.weight_decay)},
        {"depth_cap", depth_cap ? fmt_double(*depth_cap) : std::string("off")},
        {"depth_images", std::to_string(depth_images)},
        {"weights", weights.string()},
        {"device_free", device_free ? "true" : "false"},
    };
    std::string text;
    for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
    return text;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, ExperimentConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
        base.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) { return parse(text, ExperimentConfig{}); }

ExperimentConfig ExperimentConfig::load(const fs::path& path) { return load(path, ExperimentConfig{}); }

ExperimentConfig ExperimentConfig::load(const fs::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), std::move(base));
}

const std::array<GridScheme, 8>& hparam_grid_schemes() {
    static const std::array<GridScheme, 8> k{{
        {120, 60, 32, 32, 2e-5},
        {192, 192, 32, 32, 2e-5},
        {192, 96, 32, 32, 2e-5},
        {192, 96, 32, 32, 1e-4},
        {192, 96, 32, 16, 2e-5},
        {320, 160, 32, 32, 2e-5},
        {192, 96, 16, 32, 2e-5},
        {192, 96, 32, 48, 2e-5},
    }};
    return k;
}

LoraSettings scale_grid_lora(const GridScheme& s, int vision_width, int text_width) {
    auto scaled = [](int rank, int width) {
        const int r = static_cast<int>(std::lround(rank * static_cast<double>(width) / 768.0));
        return std::clamp(r, 1, std::max(1, width / 2));
    };
    LoraSettings out;
    out.vision_rank = scaled(s.rank_vit, vision_width);
    out.vision_alpha = out.vision_rank * static_cast<double>(s.alpha_vit) / s.rank_vit;
    out.text_rank = scaled(s.rank_llm, text_width);
    out.text_alpha = out.text_rank;
    return out;
}

std::vector<SceneSample> load_pool(const ExperimentConfig& cfg) {
    const auto& bb = cfg.model.backbone;
    if (cfg.data_dir.empty()) {
        return synthetic_pool(scene_types(), cfg.synthetic_per_scene, cfg.seed, bb.image_size, bb.patch_size);
    }
    const DatasetManifest m = load_manifest(cfg.data_dir, cfg.depth_scale);
    std::vector<SceneSample> pool;
    pool.reserve(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) pool.push_back(load_sample(m, i, bb.image_size, bb.patch_size));
    return pool;
}

std::vector<std::uint8_t> depth_to_gray(const DepthMap& depth) {
    double mn = 0, mx = 0;
    bool any = false;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!depth.valid[i] || !std::isfinite(depth.depth[i])) continue;
        mn = any ? std::min(mn, depth.depth[i]) : depth.depth[i];
        mx = any ? std::max(mx, depth.depth[i]) : depth.depth[i];
        any = true;
    }
    std::vector<std::uint8_t> out(depth.size(), 0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!depth.valid[i] || !std::isfinite(depth.depth[i])) continue;
        out[i] = mx > mn ? static_cast<std::uint8_t>(std::lround(255.0 * (depth.depth[i] - mn) / (mx - mn))) : 128;
    }
    return out;
}

void render_depth_image(const DepthMap& depth, const fs::path& path) {
    write_gray8_png(path, depth.height, depth.width, depth_to_gray(depth));
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

struct PlannedRun {
    std::string name;
    std::string tag;
    ExperimentConfig cfg;  // experiment=train (or eval) form of this run
    std::map<std::string, std::string> metadata;
};

struct Trained {
    std::unique_ptr<DepthModel> model;
    Split split;
    std::vector<EpochRecord> history;
};

SplitSpec split_spec(const ExperimentConfig& cfg) {
    SplitSpec s;
    switch (cfg.split.protocol) {
        case SplitProtocol::k_shot: s = SplitSpec::k_shot(cfg.split.k, cfg.seed); break;
        case SplitProtocol::few_shot_one_per_scene: s = SplitSpec::one_per_scene(cfg.seed); break;
        case SplitProtocol::zero_shot: s = SplitSpec::zero_shot(cfg.split.train_scene, cfg.seed); break;
    }
    s.per_class_cap = cfg.per_class_cap;
    return s;
}

std::vector<std::string> labels_of(const std::vector<SceneSample>& pool) {
    std::vector<std::string> out;
    out.reserve(pool.size());
    for (const auto& s : pool) out.push_back(s.scene_label);
    return out;
}

std::vector<std::size_t> test_indices(const ExperimentConfig& cfg, const std::vector<SceneSample>& pool,
                                      const Split& split) {
    std::vector<std::size_t> out;
    for (std::size_t i : split.test) {
        if (cfg.eval_scene.empty() || pool[i].scene_label == cfg.eval_scene) out.push_back(i);
    }
    if (out.empty()) {
        throw SplitError("no test images" + (cfg.eval_scene.empty() ? std::string() : " of scene '" + cfg.eval_scene + "'"));
    }
    return out;
}

Trained train_model(const ExperimentConfig& cfg, const std::vector<SceneSample>& pool, const fs::path& run_dir) {
    Trained t;
    t.split = make_split(labels_of(pool), split_spec(cfg));
    t.model = std::make_unique<DepthModel>(cfg.model, cfg.seed);
    if (cfg.experiment == ExperimentKind::eval) {
        t.model->load(cfg.weights);
        return t;
    }
    t.history = fit(*t.model, pool, t.split, cfg.train, cfg.seed).history;
    if (cfg.experiment == ExperimentKind::train) {
        const fs::path w = cfg.weights.empty() ? run_dir / "model.lmde" : cfg.weights;
        if (w.has_parent_path()) fs::create_directories(w.parent_path());
        t.model->save(w);
    }
    return t;
}

RunRecord evaluate(const PlannedRun& plan, const std::vector<SceneSample>& pool, Trained& t) {
    const ExperimentConfig& cfg = plan.cfg;
    RunRecord r;
    r.name = plan.name;
    r.tag = plan.tag;
    r.config_snapshot = cfg.to_text();
    r.seed = cfg.seed;
    r.history = t.history;
    r.metadata = plan.metadata;

    const std::vector<std::size_t> test = test_indices(cfg, pool, t.split);
    r.test_images = test.size();
    const fs::path run_dir = cfg.out / plan.name;
    fs::create_directories(run_dir);
    MetricsOptions opts{cfg.depth_cap};
    std::vector<MetricsReport> per_image;
    const auto bs = static_cast<std::size_t>(cfg.train.batch_size);
    for (std::size_t i = 0; i < test.size(); i += bs) {
        std::vector<const RgbImage*> images;
        for (std::size_t j = i; j < std::min(test.size(), i + bs); ++j) images.push_back(&pool[test[j]].image);
        const std::vector<DepthMap> preds = t.model->predict_batch(images);
        for (std::size_t j = 0; j < preds.size(); ++j) {
            const std::size_t k = i + j;
            per_image.push_back(compute_metrics(preds[j], pool[test[k]].depth, opts));
            if (k < static_cast<std::size_t>(cfg.depth_images)) {
                render_depth_image(preds[j], run_dir / ("depth_" + std::to_string(k) + ".png"));
            }
        }
    }
    r.metrics = average_reports(per_image);
    return r;
}

ExperimentConfig as_single(ExperimentConfig c) {
    if (c.experiment != ExperimentKind::eval) c.experiment = ExperimentKind::train;
    return c;
}

std::vector<PlannedRun> plan_runs(const ExperimentConfig& cfg) {
    std::vector<PlannedRun> runs;
    const ExperimentConfig single = as_single(cfg);
    switch (cfg.experiment) {
        case ExperimentKind::few_shot:
            for (int k = 1; k <= 4; ++k) {
                PlannedRun p{"shot_" + std::to_string(k), std::to_string(k) + "-shot", single, {}};
                p.cfg.split = SplitChoice{SplitProtocol::k_shot, k, "bedroom"};
                runs.push_back(std::move(p));
            }
            {
                PlannedRun p{"one_per_scene", "few-shot", single, {}};
                p.cfg.split = SplitChoice{SplitProtocol::few_shot_one_per_scene, 1, "bedroom"};
                runs.push_back(std::move(p));
            }
            break;
        case ExperimentKind::zero_shot: {
            const std::string scene =
                cfg.split.protocol == SplitProtocol::zero_shot ? cfg.split.train_scene : std::string("bedroom");
            for (const auto& held_out : zero_shot_test_scenes()) {
                if (held_out == scene) continue;
                PlannedRun p{"zero_shot_" + held_out, held_out, single, {{"train_scene", scene}}};
                p.cfg.split = SplitChoice{SplitProtocol::zero_shot, 1, scene};
                p.cfg.eval_scene = held_out;
                runs.push_back(std::move(p));
            }
            break;
        }
        case ExperimentKind::ablation_prompts: {
            const std::array<std::pair<PromptMode, const char*>, 3> modes{
                {{PromptMode::apg, "A"}, {PromptMode::fixed, "B"}, {PromptMode::none, "C"}}};
            for (const auto& [mode, tag] : modes) {
                PlannedRun p{"prompt_" + std::string(to_string(mode)), tag, single, {}};
                p.cfg.model.prompt_mode = mode;
                runs.push_back(std::move(p));
            }
            break;
        }
        case ExperimentKind::ablation_lora: {
            const std::array<LoraScheme, 3> schemes{LoraScheme::frozen_frozen, LoraScheme::lora_vision,
                                                    LoraScheme::lora_vision_text};
            for (std::size_t i = 0; i < schemes.size(); ++i) {
                PlannedRun p{"lora_scheme" + std::to_string(i + 1), std::string(to_string(schemes[i])), single, {}};
                p.cfg.model.lora_scheme = schemes[i];
                runs.push_back(std::move(p));
            }
            break;
        }
        case ExperimentKind::hparam_grid: {
            const auto& schemes = hparam_grid_schemes();
            for (std::size_t i = 0; i < schemes.size(); ++i) {
                const GridScheme& s = schemes[i];
                PlannedRun p{"grid_scheme" + std::to_string(i + 1), "scheme " + std::to_string(i + 1), single, {}};
                p.cfg.model.lora_scheme = LoraScheme::lora_vision_text;
                p.cfg.model.lora =
                    scale_grid_lora(s, cfg.model.backbone.vision_width, cfg.model.backbone.text_width);
                // Batch and learning rate keep their ratio to the base values (16, 1e-5).
                p.cfg.train.batch_size =
                    std::max(1, static_cast<int>(std::lround(s.batch_size * cfg.train.batch_size / 16.0)));
                p.cfg.train.lr0 = s.lr * (cfg.train.lr0 / 1e-5);
                p.metadata = {{"alpha_vit", std::to_string(s.alpha_vit)},
                              {"rank_vit", std::to_string(s.rank_vit)},
                              {"rank_llm", std::to_string(s.rank_llm)},
                              {"alpha_llm", "rank-matched"},
                              {"batch_size", std::to_string(s.batch_size)},
                              {"lr", fmt_short(s.lr)},
                              {"desk_alpha_vit", fmt_short(p.cfg.model.lora.vision_alpha)},
                              {"desk_rank_vit", std::to_string(p.cfg.model.lora.vision_rank)},
                              {"desk_rank_llm", std::to_string(p.cfg.model.lora.text_rank)},
                              {"desk_alpha_llm", fmt_short(p.cfg.model.lora.text_alpha)},
                              {"desk_batch_size", std::to_string(p.cfg.train.batch_size)},
                              {"desk_lr", fmt_short(p.cfg.train.lr0)}};
                runs.push_back(std::move(p));
            }
            break;
        }
        case ExperimentKind::train:
        case ExperimentKind::eval:
            runs.push_back({std::string(to_string(cfg.experiment)), std::string(to_string(cfg.experiment)), single, {}});
            break;
    }
    for (auto& p : runs) {
        p.metadata.emplace("experiment", std::string(to_string(cfg.experiment)));
        p.metadata.emplace("split", p.cfg.split.to_string());
        p.metadata.emplace("prompt_mode", std::string(to_string(p.cfg.model.prompt_mode)));
        p.metadata.emplace("lora_scheme", std::string(to_string(p.cfg.model.lora_scheme)));
        p.metadata.emplace("device_free", cfg.device_free ? "true" : "false");
    }
    return runs;
}

void write_run_artifacts(const RunRecord& r, const fs::path& out) {
    write_text(out / ("history_" + r.name + ".csv"), history_csv(r.history));
    write_text(out / ("metrics_" + r.name + ".json"), record_json(r).dump(2) + "\n");
}

}  // namespace

nlohmann::ordered_json record_json(const RunRecord& r, bool with_wall_time) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["tag"] = r.tag;
    j["seed"] = r.seed;
    j["test_images"] = r.test_images;
    j["metrics"] = to_json(r.metrics);
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.metadata) meta[k] = v;
    j["metadata"] = meta;
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const auto& e : r.history) {
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"lr", e.lr},
                        {"stopped", e.stopped}});
    }
    j["history"] = hist;
    j["config"] = r.config_snapshot;
    if (with_wall_time) j["wall_seconds"] = r.wall_seconds;
    return j;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<PlannedRun> plans = plan_runs(cfg);
    for (const auto& p : plans) p.cfg.validate();

    const std::vector<SceneSample> pool = load_pool(cfg);
    const std::vector<std::string> labels = labels_of(pool);
    // Splits are checked up front so a bad protocol fails before any training.
    for (const auto& p : plans) {
        const Split s = make_split(labels, split_spec(p.cfg));
        test_indices(p.cfg, pool, s);
    }
    fs::create_directories(cfg.out);

    std::vector<RunRecord> records;
    if (cfg.experiment == ExperimentKind::zero_shot) {
        const auto t0 = std::chrono::steady_clock::now();
        Trained t = train_model(plans.front().cfg, pool, cfg.out / plans.front().name);
        const double train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& p : plans) {
            const auto t1 = std::chrono::steady_clock::now();
            RunRecord r = evaluate(p, pool, t);
            r.wall_seconds = train_secs + std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
            write_run_artifacts(r, cfg.out);
            records.push_back(std::move(r));
        }
    } else {
        for (const auto& p : plans) {
            const auto t0 = std::chrono::steady_clock::now();
            Trained t = train_model(p.cfg, pool, cfg.out / p.name);
            RunRecord r = evaluate(p, pool, t);
            r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_run_artifacts(r, cfg.out);
            records.push_back(std::move(r));
        }
    }
    write_report(records, cfg.out);
    return records;
}

namespace {

struct MetricColumn {
    const char* name;
    double MetricsReport::*field;
    bool higher_is_better;
};

constexpr std::array<MetricColumn, 7> kColumns{{
    {"rmse", &MetricsReport::rmse, false},
    {"abs_rel", &MetricsReport::abs_rel, false},
    {"sq_rel", &MetricsReport::sq_rel, false},
    {"log_rmse", &MetricsReport::log_rmse, false},
    {"delta1", &MetricsReport::delta1, true},
    {"delta2", &MetricsReport::delta2, true},
    {"delta3", &MetricsReport::delta3, true},
}};

std::vector<std::size_t> best_per_metric(const std::vector<RunRecord>& records) {
    std::vector<std::size_t> best;
    for (const auto& col : kColumns) {
        std::size_t b = 0;
        for (std::size_t i = 1; i < records.size(); ++i) {
            const double v = records[i].metrics.*col.field, cur = records[b].metrics.*col.field;
            if (col.higher_is_better ? v > cur : v < cur) b = i;
        }
        best.push_back(b);
    }
    return best;
}

}  // namespace

std::string summary_csv(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ReportError("summary: no run records");
    const std::vector<std::size_t> best = best_per_metric(records);
    std::string out = "run,tag,split,prompt_mode,lora_scheme,seed,test_images," + metrics_csv_header() + ",best\n";
    auto meta = [](const RunRecord& r, const std::string& k) {
        const auto it = r.metadata.find(k);
        return it == r.metadata.end() ? std::string() : it->second;
    };
    for (std::size_t i = 0; i < records.size(); ++i) {
        const RunRecord& r = records[i];
        std::string flags;
        for (std::size_t c = 0; c < kColumns.size(); ++c) {
            if (best[c] != i) continue;
            if (!flags.empty()) flags += ";";
            flags += kColumns[c].name;
        }
        out += r.name + "," + r.tag + "," + meta(r, "split") + "," + meta(r, "prompt_mode") + "," +
               meta(r, "lora_scheme") + "," + std::to_string(r.seed) + "," + std::to_string(r.test_images) + "," +
               metrics_csv_row(r.metrics) + "," + flags + "\n";
    }
    return out;
}

void write_report(const std::vector<RunRecord>& records, const fs::path& dir) {
    if (records.empty()) throw ReportError("write_report: no run records");
    std::error_code ec;
    fs::create_directories(dir, ec);
    write_text(dir / "summary.csv", summary_csv(records));
    const std::vector<std::size_t> best = best_per_metric(records);
    nlohmann::ordered_json j;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : records) runs.push_back(record_json(r, true));
    j["runs"] = runs;
    nlohmann::ordered_json b;
    for (std::size_t c = 0; c < kColumns.size(); ++c) b[kColumns[c].name] = records[best[c]].name;
    j["best"] = b;
    write_text(dir / "report.json", j.dump(2) + "\n");
}

}  // namespace lmde
