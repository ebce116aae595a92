#include "lmde/head.hpp"

#include "lmde/errors.hpp"

#include <cmath>
#include <string>

namespace lmde {

void HeadConfig::validate() const {
    if (input_width <= 0 || grid <= 0 || target <= 0) throw ConfigError("head config: sizes must be positive");
    for (int c : channels) {
        if (c <= 0) throw ConfigError("head config: channel widths must be positive");
    }
    if (grid * 8 > target) {
        throw ConfigError("head config: grid " + std::to_string(grid) + " upsampled 8x exceeds target " +
                          std::to_string(target));
    }
    if (!(leaky_slope >= 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0)) {
        throw ConfigError("head config: slope, momentum or eps out of range");
    }
}

ad::Var batch_norm(const ad::Var& x, UpsampleBnBlock& block, bool training, double momentum, double eps) {
    const Index n = x.rows(), c = x.cols();
    const Matrix& v = x.value();
    Eigen::RowVectorXd mu(c), var(c);
    if (training) {
        if (n < 2) throw ShapeError("batch_norm: training mode needs at least two pixels");
        mu = v.colwise().mean();
        var = (v.rowwise() - mu).array().square().colwise().mean();
        Matrix& rm = block.running_mean.mutable_value();
        Matrix& rv = block.running_var.mutable_value();
        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        rm.row(0) = (1.0 - momentum) * rm.row(0) + momentum * mu;
        rv.row(0) = (1.0 - momentum) * rv.row(0) + momentum * unbias * var;
    } else {
        mu = block.running_mean.value().row(0);
        var = block.running_var.value().row(0);
    }
    const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
    Matrix xhat = (v.rowwise() - mu).array().rowwise() * inv_std.array();
    Matrix out = xhat.array().rowwise() * block.bn_gamma.value().row(0).array();
    out.rowwise() += block.bn_beta.value().row(0);
    const ad::Var gamma = block.bn_gamma;
    return ad::make_op({x, block.bn_gamma, block.bn_beta}, std::move(out),
                       [xhat = std::move(xhat), inv_std, gamma, training](const Matrix& g,
                                                                          const std::vector<Matrix*>& t) {
                           if (t[1]) *t[1] += g.cwiseProduct(xhat).colwise().sum();
                           if (t[2]) *t[2] += g.colwise().sum();
                           if (!t[0]) return;
                           Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
                           if (!training) {
                               t[0]->array() += dxhat.array().rowwise() * inv_std.array();
                               return;
                           }
                           const auto rows = static_cast<double>(g.rows());
                           const Eigen::RowVectorXd s1 = dxhat.colwise().sum();
                           const Eigen::RowVectorXd s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                           for (Index i = 0; i < g.rows(); ++i) {
                               t[0]->row(i).array() += inv_std.array() / rows *
                                                       (rows * dxhat.row(i).array() - s1.array() -
                                                        xhat.row(i).array() * s2.array());
                           }
                       });
}

ad::Var upsample_bn_forward(const ad::Var& x, const FeatureShape& shape, UpsampleBnBlock& block, bool training,
                            const HeadConfig& cfg, ad::Var* pre_activation) {
    if (x.cols() != block.in_channels) throw ShapeError("UpsampleBN: input channel mismatch");
    const ad::Var up = ad::upsample_nearest2x(x, shape);
    const FeatureShape big{shape.batch, 2 * shape.height, 2 * shape.width};
    const ad::Var conv = ad::conv2d(up, big, block.conv_w, block.conv_b, 3);
    const ad::Var normed = batch_norm(conv, block, training, cfg.bn_momentum, cfg.bn_eps);
    const ad::Var residual = block.proj_w ? ad::conv2d(up, big, *block.proj_w, ad::Var{}, 1) : up;
    const ad::Var sum = ad::add(normed, residual);
    if (pre_activation) *pre_activation = sum;
    return ad::leaky_relu(sum, cfg.leaky_slope);
}

AdaptationHead::AdaptationHead(const HeadConfig& cfg, ParamStore& store, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    auto gauss = [&](int r, int c, int fan_in) {
        return init_gaussian(r, c, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    };
    linear_w_ = store.add("head.linear.w", gauss(cfg.channels[0], cfg.input_width, cfg.input_width), true);
    linear_b_ = store.add("head.linear.b", Matrix::Zero(1, cfg.channels[0]), true);
    for (int i = 0; i < 3; ++i) {
        UpsampleBnBlock b;
        b.in_channels = cfg.channels[static_cast<std::size_t>(i)];
        b.out_channels = cfg.channels[static_cast<std::size_t>(i + 1)];
        const std::string base = "head.block" + std::to_string(i);
        b.conv_w = store.add(base + ".conv.w", gauss(b.out_channels, 9 * b.in_channels, 9 * b.in_channels), true);
        b.conv_b = store.add(base + ".conv.b", Matrix::Zero(1, b.out_channels), true);
        b.bn_gamma = store.add(base + ".bn.gamma", Matrix::Ones(1, b.out_channels), true);
        b.bn_beta = store.add(base + ".bn.beta", Matrix::Zero(1, b.out_channels), true);
        b.running_mean = store.add(base + ".bn.running_mean", Matrix::Zero(1, b.out_channels), false, TensorKind::buffer);
        b.running_var = store.add(base + ".bn.running_var", Matrix::Ones(1, b.out_channels), false, TensorKind::buffer);
        if (b.in_channels != b.out_channels) {
            b.proj_w = store.add(base + ".proj.w", gauss(b.out_channels, b.in_channels, b.in_channels), true);
        }
        blocks_.push_back(std::move(b));
    }
    out_w_ = store.add("head.out.w", gauss(1, cfg.channels[3], cfg.channels[3]), true);
    out_b_ = store.add("head.out.b", Matrix::Zero(1, 1), true);
}

ad::Var AdaptationHead::forward(const std::vector<ad::Var>& hidden, bool training, Index vision_len) {
    if (hidden.empty()) throw ShapeError("head_forward: empty batch");
    const Index n = static_cast<Index>(cfg_.grid) * cfg_.grid;
    if (vision_len >= 0) {
        const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(vision_len))));
        if (side * side != vision_len) {
            throw ShapeError("head_forward: " + std::to_string(vision_len) + " vision tokens do not form a square grid");
        }
        if (vision_len != n) throw ShapeError("head_forward: vision token count does not match the head grid");
    }
    std::vector<ad::Var> tokens;
    tokens.reserve(hidden.size());
    for (const auto& h : hidden) {
        if (h.rows() < n) throw ShapeError("head_forward: fewer hidden states than vision tokens");
        tokens.push_back(ad::slice_rows(h, h.rows() - n, n));
    }
    const ad::Var stacked = tokens.size() == 1 ? tokens.front() : ad::concat_rows(tokens);
    ad::Var x = ad::linear(stacked, linear_w_, linear_b_);
    FeatureShape shape{static_cast<Index>(hidden.size()), cfg_.grid, cfg_.grid};
    for (auto& block : blocks_) {
        x = upsample_bn_forward(x, shape, block, training, cfg_);
        shape = {shape.batch, 2 * shape.height, 2 * shape.width};
    }
    x = ad::conv2d(x, shape, out_w_, out_b_, 1);
    x = ad::bilinear_resize(x, shape, cfg_.target, cfg_.target);
    return ad::sigmoid(x);
}

Matrix unit_map(const Matrix& stacked, Index b, int target) {
    const Index px = static_cast<Index>(target) * target;
    if (stacked.cols() != 1 || (b + 1) * px > stacked.rows()) throw ShapeError("unit_map: index out of range");
    Matrix out(target, target);
    for (Index i = 0; i < px; ++i) out.data()[i] = stacked(b * px + i, 0);
    return out;
}

DepthMap to_metric_depth(const Matrix& unit, double d_min, double d_max) {
    if (!(d_min > 0.0) || !(d_min < d_max)) throw ConfigError("to_metric_depth: need 0 < d_min < d_max");
    DepthMap out(unit.rows(), unit.cols());
    for (Index i = 0; i < unit.size(); ++i) {
        out.depth[static_cast<std::size_t>(i)] = d_min + unit.data()[i] * (d_max - d_min);
    }
    return out;
}

}  // namespace lmde
