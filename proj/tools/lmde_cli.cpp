// lmde: train, evaluate, run protocol experiments and render depth maps.

#include "lmde/errors.hpp"
#include "lmde/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string experiment;
    std::optional<int> synthetic;
    std::string weights;
    std::string data_dir;
    bool device_free = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_experiment) {
    cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--out", f.out, "output directory");
    if (with_experiment) cmd->add_option("--experiment", f.experiment, "few_shot|zero_shot|ablation_prompts|ablation_lora|hparam_grid|train|eval");
    cmd->add_option("--synthetic", f.synthetic, "synthetic images per scene type (replaces data_dir)");
    cmd->add_option("--data", f.data_dir, "dataset directory with index.txt");
    cmd->add_option("--weights", f.weights, "weight file to save (train) or load (eval)");
    cmd->add_flag("--device-free", f.device_free, "pure-CPU determinism mode");
}

// `kind` forces the experiment; otherwise the config file or --experiment picks it.
lmde::ExperimentConfig resolve(const CommonFlags& f, std::optional<lmde::ExperimentKind> kind) {
    lmde::ExperimentConfig cfg = f.config.empty() ? lmde::ExperimentConfig{} : lmde::ExperimentConfig::load(f.config);
    if (kind) cfg.experiment = *kind;
    if (!f.experiment.empty()) cfg.experiment = lmde::parse_experiment_kind(f.experiment);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.out.empty()) cfg.out = f.out;
    if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
    if (f.synthetic) {
        cfg.synthetic_per_scene = *f.synthetic;
        cfg.data_dir.clear();
    }
    if (!f.weights.empty()) cfg.weights = f.weights;
    if (f.device_free) cfg.device_free = true;
    return cfg;
}

int run(const lmde::ExperimentConfig& cfg) {
    const auto records = lmde::run_experiment(cfg);
    std::printf("%-22s %-18s %8s %8s %8s %8s %7s\n", "run", "tag", "rmse", "abs_rel", "sq_rel", "log_rmse", "d1");
    for (const auto& r : records) {
        std::printf("%-22s %-18s %8.4f %8.4f %8.4f %8.4f %7.4f\n", r.name.c_str(), r.tag.c_str(), r.metrics.rmse,
                    r.metrics.abs_rel, r.metrics.sq_rel, r.metrics.log_rmse, r.metrics.delta1);
    }
    std::printf("report: %s\n", (cfg.out / "summary.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth estimation through a reprogrammed language model"};
    app.require_subcommand(1);

    CommonFlags train_f, eval_f, exp_f, render_f;
    auto* train = app.add_subcommand("train", "train one model and save its weights");
    add_common(train, train_f, false);
    auto* eval = app.add_subcommand("eval", "evaluate saved weights on the test split");
    add_common(eval, eval_f, false);
    auto* exp = app.add_subcommand("experiment", "run a protocol preset");
    add_common(exp, exp_f, true);

    auto* render = app.add_subcommand("render", "write a depth map as an 8-bit PNG");
    std::string depth_in, image_in, render_out;
    double depth_scale = 1e-3;
    render->add_option("--depth", depth_in, "16-bit depth PNG to visualize")->check(CLI::ExistingFile);
    render->add_option("--image", image_in, "RGB image to predict from (needs --weights)")->check(CLI::ExistingFile);
    render->add_option("--depth-scale", depth_scale, "raw depth unit in meters");
    render->add_option("--config", render_f.config, "key=value config file")->check(CLI::ExistingFile);
    render->add_option("--weights", render_f.weights, "weight file");
    render->add_option("--seed", render_f.seed, "seed");
    render->add_option("--out", render_out, "output PNG")->required();
    render->add_flag("--device-free", render_f.device_free, "pure-CPU determinism mode");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return run(resolve(train_f, lmde::ExperimentKind::train));
        if (*eval) return run(resolve(eval_f, lmde::ExperimentKind::eval));
        if (*exp) return run(resolve(exp_f, std::nullopt));
        if (*render) {
            if (depth_in.empty() == image_in.empty()) throw lmde::ConfigError("render takes exactly one of --depth or --image");
            if (!depth_in.empty()) {
                const lmde::Gray16 raw = lmde::read_gray16_png(depth_in);
                lmde::DepthMap d(raw.height, raw.width);
                for (std::size_t i = 0; i < raw.values.size(); ++i) {
                    d.depth[i] = raw.values[i] * depth_scale;
                    d.valid[i] = raw.values[i] != 0;
                }
                lmde::render_depth_image(d, render_out);
                return 0;
            }
            lmde::ExperimentConfig cfg = resolve(render_f, lmde::ExperimentKind::eval);
            if (cfg.weights.empty()) throw lmde::ConfigError("render --image needs --weights");
            lmde::DepthModel model(cfg.model, cfg.seed);
            model.load(cfg.weights);
            lmde::render_depth_image(model.predict(lmde::read_rgb_png(image_in)), render_out);
            return 0;
        }
    } catch (const lmde::TrainError& e) {
        std::cerr << "training failed at step " << e.step() << ": " << e.what() << "\n";
        return 3;
    } catch (const lmde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const lmde::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
