#include "lmde/autodiff.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>

namespace lmde::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var make_op(std::vector<Var> inputs, Matrix value, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.shared());
        node->backward = std::move(fn);
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward: root must be 1x1");
    Node* start = root.node();
    if (!start->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{start, 0}};
    visited.insert(start);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    if (start->grad.size() == 0) start->grad = Matrix::Zero(1, 1);
    start->grad(0, 0) += 1.0;

    std::vector<Matrix*> targets;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward || node->grad.size() == 0) continue;
        targets.assign(node->inputs.size(), nullptr);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            Node* in = node->inputs[i].get();
            if (!in->requires_grad) continue;
            if (in->grad.size() == 0) in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
            targets[i] = &in->grad;
        }
        node->backward(node->grad, targets);
    }
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    return make_op({a, b}, std::move(out), [a, b](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) t[0]->noalias() += g * b.value().transpose();
        if (t[1]) t[1]->noalias() += a.value().transpose() * g;
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Matrix out = a.value() * b.value().transpose();
    return make_op({a, b}, std::move(out), [a, b](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) t[0]->noalias() += g * b.value();
        if (t[1]) t[1]->noalias() += g.transpose() * a.value();
    });
}

Var transpose(const Var& a) {
    Matrix out = a.value().transpose();
    return make_op({a}, std::move(out), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g.transpose();
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return make_op({a, b}, a.value() + b.value(), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g;
        if (t[1]) *t[1] += g;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return make_op({a, b}, a.value() - b.value(), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g;
        if (t[1]) *t[1] -= g;
    });
}

Var hadamard(const Var& a, const Var& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a.value().cwiseProduct(b.value());
    return make_op({a, b}, std::move(out), [a, b](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g.cwiseProduct(b.value());
        if (t[1]) *t[1] += g.cwiseProduct(a.value());
    });
}

Var scale(const Var& a, double s) {
    return make_op({a}, a.value() * s, [s](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Matrix out = a.value().array() + s;
    return make_op({a}, std::move(out), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g;
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols");
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return make_op({a, row}, std::move(out), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g;
        if (t[1]) *t[1] += g.colwise().sum();
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    Var y = matmul_nt(x, weight);
    return bias.defined() ? add_row(y, bias) : y;
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_op({a}, std::move(out), [](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) t[0]->array() += g(0, 0);
    });
}

Var mean(const Var& a) {
    const auto n = static_cast<double>(a.value().size());
    if (n == 0) throw ShapeError("mean: empty input");
    return scale(sum(a), 1.0 / n);
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Index rows = 0;
    const Index cols = parts.front().cols();
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<Index> offsets;
    Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        if (p.rows() > 0) out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    std::vector<Index> sizes;
    for (const auto& p : parts) sizes.push_back(p.rows());
    return make_op(parts, std::move(out),
                   [offsets, sizes](const Matrix& g, const std::vector<Matrix*>& t) {
                       for (std::size_t i = 0; i < t.size(); ++i) {
                           if (t[i] && sizes[i] > 0) *t[i] += g.middleRows(offsets[i], sizes[i]);
                       }
                   });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Index cols = 0;
    const Index rows = parts.front().rows();
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<Index> offsets, sizes;
    Index at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        sizes.push_back(p.cols());
        if (p.cols() > 0) out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_op(parts, std::move(out),
                   [offsets, sizes](const Matrix& g, const std::vector<Matrix*>& t) {
                       for (std::size_t i = 0; i < t.size(); ++i) {
                           if (t[i] && sizes[i] > 0) *t[i] += g.middleCols(offsets[i], sizes[i]);
                       }
                   });
}

Var slice_rows(const Var& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    Matrix out = a.value().middleRows(start, count);
    return make_op({a}, std::move(out), [start, count](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0] && count > 0) t[0]->middleRows(start, count) += g;
    });
}

Var slice_cols(const Var& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    Matrix out = a.value().middleCols(start, count);
    return make_op({a}, std::move(out), [start, count](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0] && count > 0) t[0]->middleCols(start, count) += g;
    });
}

Var softmax_rows(const Var& a) {
    const Matrix& x = a.value();
    if (!x.allFinite()) throw NumericError("softmax_rows: non-finite logits");
    Matrix y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
    }
    Matrix saved = y;
    return make_op({a}, std::move(y), [saved = std::move(saved)](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        for (Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).dot(saved.row(i));
            t[0]->row(i).array() += saved.row(i).array() * (g.row(i).array() - dot);
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Index n = x.rows(), d = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw ShapeError("layer_norm_rows: gamma/beta must be 1 x cols");
    }
    Matrix xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Index i = 0; i < n; ++i) {
        const double mu = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
    }
    Matrix out = xhat;
    out.array().rowwise() *= gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    return make_op({x, gamma, beta}, std::move(out),
                   [xhat = std::move(xhat), inv_std, gamma](const Matrix& g, const std::vector<Matrix*>& t) {
                       if (t[1]) *t[1] += g.cwiseProduct(xhat).colwise().sum();
                       if (t[2]) *t[2] += g.colwise().sum();
                       if (!t[0]) return;
                       Matrix dxhat = g;
                       dxhat.array().rowwise() *= gamma.value().row(0).array();
                       for (Index i = 0; i < dxhat.rows(); ++i) {
                           const double m1 = dxhat.row(i).mean();
                           const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(dxhat.cols());
                           t[0]->row(i).array() +=
                               inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                       }
                   });
}

Var gelu(const Var& a) {
    const Matrix& x = a.value();
    Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
    return make_op({a}, std::move(out), [a](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix d = a.value().unaryExpr([inv_sqrt_2pi](double v) {
            return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
        *t[0] += g.cwiseProduct(d);
    });
}

Var leaky_relu(const Var& a, double slope) {
    Matrix out = a.value().unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
    return make_op({a}, std::move(out), [a, slope](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        *t[0] += g.cwiseProduct(a.value().unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; }));
    });
}

Var sigmoid(const Var& a) {
    // Clamped so saturated inputs still land strictly inside (0, 1).
    Matrix y = a.value().unaryExpr([](double v) {
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return std::clamp(s, 1e-15, 1.0 - 1e-15);
    });
    Matrix saved = y;
    return make_op({a}, std::move(y), [saved = std::move(saved)](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g.cwiseProduct(saved.cwiseProduct((1.0 - saved.array()).matrix()));
    });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw ConfigError("dropout: probability must be < 1");
    Matrix mask(a.rows(), a.cols());
    const double keep = 1.0 / (1.0 - p);
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < p ? 0.0 : keep;
    Matrix out = a.value().cwiseProduct(mask);
    return make_op({a}, std::move(out), [mask = std::move(mask)](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g.cwiseProduct(mask);
    });
}

}  // namespace lmde::ad
