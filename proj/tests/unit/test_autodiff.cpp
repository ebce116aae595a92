#include "lmde/autodiff.hpp"
#include "lmde/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace lmde;
using lmde::testing::grad_check;
using lmde::testing::probe;
using lmde::testing::random_matrix;

namespace {

Matrix brute_matmul(const Matrix& a, const Matrix& b) {
    Matrix out = Matrix::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j)
            for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
}

class OpGrad : public ::testing::Test {
protected:
    std::mt19937_64 rng{11};
};

}  // namespace

TEST(Autodiff, MatmulMatchesTripleLoop) {
    std::mt19937_64 rng(1);
    const Matrix a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
    const Matrix got = ad::matmul(ad::constant(a), ad::constant(b)).value();
    EXPECT_LT((got - brute_matmul(a, b)).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix nt = ad::matmul_nt(ad::constant(a), ad::constant(b.transpose())).value();
    EXPECT_LT((nt - brute_matmul(a, b)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autodiff, ConstantGraphHasNoClosures) {
    const ad::Var a = ad::constant(Matrix::Ones(2, 2));
    const ad::Var b = ad::matmul(a, a);
    EXPECT_FALSE(b.requires_grad());
    EXPECT_FALSE(static_cast<bool>(b.node()->backward));
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
    const ad::Var p = ad::parameter(Matrix::Ones(2, 2));
    EXPECT_THROW(ad::backward(p), ShapeError);
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
    ad::Var x = ad::parameter(Matrix::Constant(1, 1, 3.0));
    ad::backward(ad::sum(ad::hadamard(x, x)));  // d(x^2)/dx = 6
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
    ad::backward(ad::sum(x));
    EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
    x.zero_grad();
    EXPECT_FALSE(x.has_grad());
}

TEST_F(OpGrad, Matmul) {
    const ad::Var a = ad::parameter(random_matrix(3, 4, rng)), b = ad::parameter(random_matrix(4, 2, rng));
    const Matrix w = random_matrix(3, 2, rng);
    auto f = [&] { return probe(ad::matmul(a, b), w); };
    EXPECT_LT(grad_check(f, a), 1e-6);
    EXPECT_LT(grad_check(f, b), 1e-6);
}

TEST_F(OpGrad, MatmulNtAndTranspose) {
    const ad::Var a = ad::parameter(random_matrix(3, 4, rng)), b = ad::parameter(random_matrix(5, 4, rng));
    const Matrix w = random_matrix(5, 3, rng);
    auto f = [&] { return probe(ad::transpose(ad::matmul_nt(a, b)), w); };
    EXPECT_LT(grad_check(f, a), 1e-6);
    EXPECT_LT(grad_check(f, b), 1e-6);
}

TEST_F(OpGrad, ElementwiseArithmetic) {
    const ad::Var a = ad::parameter(random_matrix(3, 3, rng)), b = ad::parameter(random_matrix(3, 3, rng));
    const Matrix w = random_matrix(3, 3, rng);
    auto f = [&] {
        return probe(ad::add_scalar(ad::scale(ad::sub(ad::hadamard(a, b), ad::add(a, b)), 1.7), 0.3), w);
    };
    EXPECT_LT(grad_check(f, a), 1e-6);
    EXPECT_LT(grad_check(f, b), 1e-6);
}

TEST_F(OpGrad, LinearAndAddRow) {
    const ad::Var x = ad::parameter(random_matrix(4, 5, rng));
    const ad::Var wt = ad::parameter(random_matrix(3, 5, rng));
    const ad::Var b = ad::parameter(random_matrix(1, 3, rng));
    const ad::Var r = ad::parameter(random_matrix(1, 3, rng));
    const Matrix w = random_matrix(4, 3, rng);
    auto f = [&] { return probe(ad::add_row(ad::linear(x, wt, b), r), w); };
    for (const auto& p : {x, wt, b, r}) EXPECT_LT(grad_check(f, p), 1e-6);
    const Matrix ref = x.value() * wt.value().transpose() + b.value().replicate(4, 1);
    EXPECT_LT((ad::linear(x, wt, b).value() - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ad::linear(x, wt, ad::Var{}).value() - x.value() * wt.value().transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(OpGrad, SumAndMean) {
    const ad::Var a = ad::parameter(random_matrix(3, 4, rng));
    EXPECT_NEAR(ad::mean(a).scalar(), a.value().mean(), 1e-12);
    auto f = [&] { return ad::add(ad::mean(ad::hadamard(a, a)), ad::sum(a)); };
    EXPECT_LT(grad_check(f, a), 1e-6);
}

TEST_F(OpGrad, ConcatAndSlice) {
    const ad::Var a = ad::parameter(random_matrix(2, 3, rng)), b = ad::parameter(random_matrix(4, 3, rng));
    const ad::Var c = ad::parameter(random_matrix(6, 2, rng));
    const Matrix w = random_matrix(3, 4, rng);
    auto f = [&] {
        const ad::Var rows = ad::concat_rows({a, b});                 // 6 x 3
        const ad::Var cols = ad::concat_cols({rows, c});              // 6 x 5
        return probe(ad::slice_cols(ad::slice_rows(cols, 2, 3), 1, 4), w);
    };
    for (const auto& p : {a, b, c}) EXPECT_LT(grad_check(f, p), 1e-6);
    const Matrix cr = ad::concat_rows({a, b}).value();
    EXPECT_EQ(cr.topRows(2), a.value());
    EXPECT_EQ(cr.bottomRows(4), b.value());
    EXPECT_THROW(ad::slice_rows(a, 1, 2), ShapeError);
}

TEST_F(OpGrad, SoftmaxRows) {
    const ad::Var a = ad::parameter(random_matrix(3, 5, rng, 2.0));
    const Matrix s = ad::softmax_rows(a).value();
    for (Index i = 0; i < 3; ++i) {
        EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-12);
        double z = 0;
        for (Index j = 0; j < 5; ++j) z += std::exp(a.value()(i, j));
        for (Index j = 0; j < 5; ++j) EXPECT_NEAR(s(i, j), std::exp(a.value()(i, j)) / z, 1e-12);
    }
    const Matrix w = random_matrix(3, 5, rng);
    EXPECT_LT(grad_check([&] { return probe(ad::softmax_rows(a), w); }, a), 1e-6);
}

TEST(Autodiff, SoftmaxRejectsNonFinite) {
    Matrix m = Matrix::Zero(1, 3);
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(ad::softmax_rows(ad::constant(m)), NumericError);
}

TEST_F(OpGrad, LayerNorm) {
    const ad::Var x = ad::parameter(random_matrix(4, 6, rng));
    const ad::Var g = ad::parameter(random_matrix(1, 6, rng));
    const ad::Var b = ad::parameter(random_matrix(1, 6, rng));
    const Matrix y = ad::layer_norm_rows(x, ad::constant(Matrix::Ones(1, 6)), ad::constant(Matrix::Zero(1, 6))).value();
    for (Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
        EXPECT_NEAR(y.row(i).squaredNorm() / 6.0, 1.0, 1e-4);
    }
    const Matrix w = random_matrix(4, 6, rng);
    auto f = [&] { return probe(ad::layer_norm_rows(x, g, b), w); };
    for (const auto& p : {x, g, b}) EXPECT_LT(grad_check(f, p), 1e-5);
}

TEST_F(OpGrad, Activations) {
    const ad::Var a = ad::parameter(random_matrix(3, 4, rng, 1.5));
    const Matrix w = random_matrix(3, 4, rng);
    EXPECT_LT(grad_check([&] { return probe(ad::gelu(a), w); }, a), 1e-6);
    EXPECT_LT(grad_check([&] { return probe(ad::sigmoid(a), w); }, a), 1e-6);
    EXPECT_LT(grad_check([&] { return probe(ad::leaky_relu(a, 0.01), w); }, a), 1e-6);
    EXPECT_NEAR(ad::gelu(ad::constant(Matrix::Constant(1, 1, 1.0))).scalar(), 0.8413447460685429, 1e-12);
    EXPECT_DOUBLE_EQ(ad::leaky_relu(ad::constant(Matrix::Constant(1, 1, -2.0)), 0.01).scalar(), -0.02);
}

TEST(Autodiff, SigmoidStaysInsideOpenInterval) {
    Matrix m(1, 2);
    m << -1000.0, 1000.0;
    const Matrix s = ad::sigmoid(ad::constant(m)).value();
    EXPECT_GT(s(0, 0), 0.0);
    EXPECT_LT(s(0, 1), 1.0);
}

TEST(Autodiff, DropoutIdentityAtZeroAndSeeded) {
    std::mt19937_64 rng(3);
    const Matrix x = random_matrix(8, 8, rng);
    std::mt19937_64 r1(5), r2(5);
    EXPECT_EQ(ad::dropout(ad::constant(x), 0.0, r1).value(), x);
    const Matrix d1 = ad::dropout(ad::constant(x), 0.5, r1).value();
    ad::dropout(ad::constant(x), 0.0, r2);
    const Matrix d2 = ad::dropout(ad::constant(x), 0.5, r2).value();
    EXPECT_EQ(d1, d2);
    for (Index i = 0; i < x.size(); ++i) {
        const double v = d1.data()[i];
        EXPECT_TRUE(v == 0.0 || std::abs(v - 2.0 * x.data()[i]) < 1e-12);
    }
}
