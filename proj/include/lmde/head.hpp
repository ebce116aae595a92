#pragma once

// Adaptation head: text hidden states over the vision positions -> linear ->
// g x g feature map -> three UpsampleBN blocks (g -> 8g) -> 1x1 conv ->
// bilinear resize to the target resolution -> sigmoid.

#include "lmde/autodiff.hpp"
#include "lmde/backbone.hpp"
#include "lmde/image.hpp"
#include "lmde/params.hpp"
#include "lmde/spatial.hpp"

#include <array>
#include <optional>
#include <random>
#include <vector>

namespace lmde {

struct HeadConfig {
    int input_width = 64;  // D
    int grid = 4;          // g, with g^2 = N
    std::array<int, 4> channels{16, 8, 8, 4};
    int target = 64;
    double leaky_slope = 0.01;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    /// Throws ConfigError unless the fields are positive and 8g <= target.
    void validate() const;

    static HeadConfig desk(int input_width, int grid, int target) { return {input_width, grid, {16, 8, 8, 4}, target}; }
    static HeadConfig full_scale(int input_width, int grid, int target) {
        return {input_width, grid, {128, 64, 32, 16}, target};
    }
};

/// 2x nearest upsample -> 3x3 conv -> batch norm, plus a residual from the
/// upsampled input (1x1 projection when widths differ), then leaky ReLU.
struct UpsampleBnBlock {
    int in_channels = 0;
    int out_channels = 0;
    ad::Var conv_w;  // C_out x 9 C_in
    ad::Var conv_b;
    ad::Var bn_gamma;
    ad::Var bn_beta;
    ad::Var running_mean;  // buffer
    ad::Var running_var;   // buffer
    std::optional<ad::Var> proj_w;  // C_out x C_in
};

/// Batch norm over the rows of x (pixels) per channel. In training mode batch
/// statistics are used and the running buffers are updated with `momentum`
/// (unbiased variance); otherwise the running buffers normalize.
ad::Var batch_norm(const ad::Var& x, UpsampleBnBlock& block, bool training, double momentum, double eps);

/// Returns the pre-activation residual sum through `pre_activation` if given.
ad::Var upsample_bn_forward(const ad::Var& x, const FeatureShape& shape, UpsampleBnBlock& block, bool training,
                            const HeadConfig& cfg, ad::Var* pre_activation = nullptr);

class AdaptationHead {
public:
    AdaptationHead() = default;
    /// Tensors "head.linear.*", "head.block{i}.*", "head.out.*", all trainable.
    AdaptationHead(const HeadConfig& cfg, ParamStore& store, std::mt19937_64& rng);

    /// Each hidden matrix is (T_i + N) x D; the last N rows feed the head.
    /// Returns a (B * target^2) x 1 matrix of values in (0, 1), image-major and
    /// row-major within each image. A `vision_len` that is not a perfect square
    /// or differs from g^2 raises ShapeError.
    ad::Var forward(const std::vector<ad::Var>& hidden, bool training, Index vision_len = -1);

    const HeadConfig& config() const { return cfg_; }
    std::vector<UpsampleBnBlock>& blocks() { return blocks_; }

private:
    HeadConfig cfg_;
    ad::Var linear_w_, linear_b_, out_w_, out_b_;
    std::vector<UpsampleBnBlock> blocks_;
};

/// Extracts image `b` of a stacked head output as a target x target map.
Matrix unit_map(const Matrix& stacked, Index b, int target);

/// depth = d_min + unit * (d_max - d_min), all pixels valid.
DepthMap to_metric_depth(const Matrix& unit, double d_min, double d_max);

}  // namespace lmde
