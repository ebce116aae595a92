#pragma once

// Shared helpers for the unit and acceptance tests: random tensors and a
// central finite-difference oracle.

#include "lmde/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace lmde::testing {

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline Matrix random_uniform(Index r, Index c, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// d f / d value[i] by central differences, restoring the entry afterwards.
inline double numeric_partial(const std::function<double()>& f, Matrix& value, Index i, double h = 1e-6) {
    const double keep = value.data()[i];
    value.data()[i] = keep + h;
    const double up = f();
    value.data()[i] = keep - h;
    const double down = f();
    value.data()[i] = keep;
    return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor); the floor keeps vanishing partials from
/// dominating.
inline double rel_error(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Worst relative error over every entry of `param` for a scalar graph built
/// by `build`. The analytic gradient comes from one backward pass.
inline double grad_check(const std::function<ad::Var()> &build, ad::Var param, double h = 1e-6, double floor = 1e-8) {
    param.zero_grad();
    const ad::Var out = build();
    ad::backward(out);
    const Matrix analytic = param.has_grad() ? param.grad() : Matrix::Zero(param.rows(), param.cols());
    Matrix& v = param.mutable_value();
    double worst = 0.0;
    for (Index i = 0; i < v.size(); ++i) {
        const double num = numeric_partial([&] { return build().scalar(); }, v, i, h);
        worst = std::max(worst, rel_error(analytic.data()[i], num, floor));
    }
    return worst;
}

/// Sum of out ⊙ W for a fixed random W: turns any tensor into a scalar with
/// a nontrivial upstream gradient.
inline ad::Var probe(const ad::Var& out, const Matrix& w) { return ad::sum(ad::hadamard(out, ad::constant(w))); }

}  // namespace lmde::testing
