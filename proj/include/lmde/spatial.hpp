#pragma once

// Differentiable ops over batched feature maps.
//
// A feature map with shape (batch, height, width) and C channels is stored as
// a (batch*height*width) x C matrix; row (b*H + y)*W + x holds pixel (y, x) of
// image b.

#include "lmde/autodiff.hpp"

#include <vector>

namespace lmde {

struct FeatureShape {
    Index batch = 1;
    Index height = 0;
    Index width = 0;

    Index pixels() const { return batch * height * width; }
    bool operator==(const FeatureShape&) const = default;
};

/// One output sample of a 1-D linear interpolation with half-pixel centres.
struct BilinearTap {
    Index lo = 0;
    Index hi = 0;
    double w_hi = 0.0;  // weight of `hi`; `lo` gets 1 - w_hi
};

/// Sampling taps mapping `in` samples onto `out` samples (align_corners=false,
/// edge-clamped).
std::vector<BilinearTap> bilinear_taps(Index in, Index out);

namespace ad {

Var upsample_nearest2x(const Var& x, const FeatureShape& shape);

/// Same-padded odd-sized convolution. `weight` is C_out x (k*k*C_in) with
/// column index (ky*k + kx)*C_in + c; `bias` is 1 x C_out or undefined.
Var conv2d(const Var& x, const FeatureShape& shape, const Var& weight, const Var& bias, Index ksize);

Var bilinear_resize(const Var& x, const FeatureShape& shape, Index out_h, Index out_w);

}  // namespace ad
}  // namespace lmde
