#include "lmde/spatial.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lmde {

std::vector<BilinearTap> bilinear_taps(Index in, Index out) {
    if (in <= 0 || out <= 0) throw ShapeError("bilinear_taps: sizes must be positive");
    std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<Index>(std::floor(src));
        const Index hi = std::min(lo + 1, in - 1);
        taps[static_cast<std::size_t>(o)] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

namespace ad {

namespace {

void check_layout(const Var& x, const FeatureShape& s, const char* op) {
    if (x.rows() != s.pixels()) throw ShapeError(std::string(op) + ": row count does not match feature shape");
}

// Gathers the k x k neighbourhood of every pixel of image `b` into rows.
Matrix im2col(const Matrix& x, const FeatureShape& s, Index b, Index k) {
    const Index c = x.cols();
    const Index pad = k / 2;
    Matrix cols = Matrix::Zero(s.height * s.width, k * k * c);
    const Index base = b * s.height * s.width;
    for (Index y = 0; y < s.height; ++y) {
        for (Index xx = 0; xx < s.width; ++xx) {
            const Index row = y * s.width + xx;
            for (Index ky = 0; ky < k; ++ky) {
                const Index sy = y + ky - pad;
                if (sy < 0 || sy >= s.height) continue;
                for (Index kx = 0; kx < k; ++kx) {
                    const Index sx = xx + kx - pad;
                    if (sx < 0 || sx >= s.width) continue;
                    cols.block(row, (ky * k + kx) * c, 1, c) = x.row(base + sy * s.width + sx);
                }
            }
        }
    }
    return cols;
}

void col2im_add(const Matrix& cols, const FeatureShape& s, Index b, Index k, Matrix& dx) {
    const Index c = dx.cols();
    const Index pad = k / 2;
    const Index base = b * s.height * s.width;
    for (Index y = 0; y < s.height; ++y) {
        for (Index xx = 0; xx < s.width; ++xx) {
            const Index row = y * s.width + xx;
            for (Index ky = 0; ky < k; ++ky) {
                const Index sy = y + ky - pad;
                if (sy < 0 || sy >= s.height) continue;
                for (Index kx = 0; kx < k; ++kx) {
                    const Index sx = xx + kx - pad;
                    if (sx < 0 || sx >= s.width) continue;
                    dx.row(base + sy * s.width + sx) += cols.block(row, (ky * k + kx) * c, 1, c);
                }
            }
        }
    }
}

}  // namespace

Var upsample_nearest2x(const Var& x, const FeatureShape& s) {
    check_layout(x, s, "upsample_nearest2x");
    const Index oh = 2 * s.height, ow = 2 * s.width;
    Matrix out(s.batch * oh * ow, x.cols());
    for (Index b = 0; b < s.batch; ++b) {
        for (Index y = 0; y < oh; ++y) {
            for (Index xx = 0; xx < ow; ++xx) {
                out.row((b * oh + y) * ow + xx) = x.value().row((b * s.height + y / 2) * s.width + xx / 2);
            }
        }
    }
    return make_op({x}, std::move(out), [s, oh, ow](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        for (Index b = 0; b < s.batch; ++b) {
            for (Index y = 0; y < oh; ++y) {
                for (Index xx = 0; xx < ow; ++xx) {
                    t[0]->row((b * s.height + y / 2) * s.width + xx / 2) += g.row((b * oh + y) * ow + xx);
                }
            }
        }
    });
}

Var conv2d(const Var& x, const FeatureShape& s, const Var& weight, const Var& bias, Index k) {
    check_layout(x, s, "conv2d");
    if (k % 2 != 1) throw ShapeError("conv2d: kernel size must be odd");
    const Index cin = x.cols();
    const Index cout = weight.rows();
    if (weight.cols() != k * k * cin) throw ShapeError("conv2d: weight columns must equal k*k*C_in");
    if (bias.defined() && (bias.rows() != 1 || bias.cols() != cout)) throw ShapeError("conv2d: bias must be 1 x C_out");

    const Index hw = s.height * s.width;
    Matrix out(s.pixels(), cout);
    for (Index b = 0; b < s.batch; ++b) {
        if (k == 1) {
            out.middleRows(b * hw, hw).noalias() = x.value().middleRows(b * hw, hw) * weight.value().transpose();
        } else {
            out.middleRows(b * hw, hw).noalias() = im2col(x.value(), s, b, k) * weight.value().transpose();
        }
    }
    if (bias.defined()) out.rowwise() += bias.value().row(0);

    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op(std::move(inputs), std::move(out),
                   [x, weight, s, k, hw](const Matrix& g, const std::vector<Matrix*>& t) {
                       if (t.size() > 2 && t[2]) *t[2] += g.colwise().sum();
                       for (Index b = 0; b < s.batch; ++b) {
                           const auto gb = g.middleRows(b * hw, hw);
                           if (k == 1) {
                               if (t[1]) t[1]->noalias() += gb.transpose() * x.value().middleRows(b * hw, hw);
                               if (t[0]) t[0]->middleRows(b * hw, hw).noalias() += gb * weight.value();
                               continue;
                           }
                           if (t[1]) t[1]->noalias() += gb.transpose() * im2col(x.value(), s, b, k);
                           if (t[0]) {
                               Matrix dcols = gb * weight.value();
                               col2im_add(dcols, s, b, k, *t[0]);
                           }
                       }
                   });
}

Var bilinear_resize(const Var& x, const FeatureShape& s, Index out_h, Index out_w) {
    check_layout(x, s, "bilinear_resize");
    const auto ty = bilinear_taps(s.height, out_h);
    const auto tx = bilinear_taps(s.width, out_w);
    Matrix out(s.batch * out_h * out_w, x.cols());
    const Matrix& v = x.value();
    auto src = [&](Index b, Index y, Index xx) { return (b * s.height + y) * s.width + xx; };
    for (Index b = 0; b < s.batch; ++b) {
        for (Index y = 0; y < out_h; ++y) {
            const auto& a = ty[static_cast<std::size_t>(y)];
            for (Index xx = 0; xx < out_w; ++xx) {
                const auto& c = tx[static_cast<std::size_t>(xx)];
                out.row((b * out_h + y) * out_w + xx) =
                    (1 - a.w_hi) * ((1 - c.w_hi) * v.row(src(b, a.lo, c.lo)) + c.w_hi * v.row(src(b, a.lo, c.hi))) +
                    a.w_hi * ((1 - c.w_hi) * v.row(src(b, a.hi, c.lo)) + c.w_hi * v.row(src(b, a.hi, c.hi)));
            }
        }
    }
    return make_op({x}, std::move(out), [s, out_h, out_w, ty, tx](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        auto src = [&](Index b, Index y, Index xx) { return (b * s.height + y) * s.width + xx; };
        for (Index b = 0; b < s.batch; ++b) {
            for (Index y = 0; y < out_h; ++y) {
                const auto& a = ty[static_cast<std::size_t>(y)];
                for (Index xx = 0; xx < out_w; ++xx) {
                    const auto& c = tx[static_cast<std::size_t>(xx)];
                    const auto gr = g.row((b * out_h + y) * out_w + xx);
                    t[0]->row(src(b, a.lo, c.lo)) += (1 - a.w_hi) * (1 - c.w_hi) * gr;
                    t[0]->row(src(b, a.lo, c.hi)) += (1 - a.w_hi) * c.w_hi * gr;
                    t[0]->row(src(b, a.hi, c.lo)) += a.w_hi * (1 - c.w_hi) * gr;
                    t[0]->row(src(b, a.hi, c.hi)) += a.w_hi * c.w_hi * gr;
                }
            }
        }
    });
}

}  // namespace ad
}  // namespace lmde
