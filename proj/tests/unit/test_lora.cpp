#include "lmde/errors.hpp"
#include "lmde/lora.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace lmde;
using lmde::testing::grad_check;
using lmde::testing::probe;
using lmde::testing::random_matrix;

TEST(Lora, FreshAdapterLeavesWeightExactly) {
    std::mt19937_64 rng(1);
    const Matrix w = random_matrix(8, 6, rng);
    const LoraAdapter a = init_adapter(8, 6, 2, 4.0, 3);
    EXPECT_EQ(a.b, Matrix::Zero(2, 6));
    EXPECT_EQ(effective_weight(w, a), w);
}

TEST(Lora, EffectiveWeightFormula) {
    std::mt19937_64 rng(2);
    const Matrix w = random_matrix(6, 4, rng);
    LoraAdapter a = init_adapter(6, 4, 2, 3.0, 5);
    a.b = random_matrix(2, 4, rng);
    const Matrix expect = w + 1.5 * a.a * a.b;
    EXPECT_LT((effective_weight(w, a) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lora, MergeMatchesAdapterForward) {
    std::mt19937_64 rng(3);
    Matrix w = random_matrix(10, 8, rng);
    LoraAdapter a = init_adapter(10, 8, 4, 8.0, 7);
    a.b = random_matrix(4, 8, rng);
    const Matrix live = effective_weight(w, a);
    merge_adapter(w, a);
    EXPECT_TRUE(a.merged);
    for (int t = 0; t < 50; ++t) {
        const Matrix x = random_matrix(1, 8, rng);
        EXPECT_LT((x * live.transpose() - x * w.transpose()).cwiseAbs().maxCoeff(), 1e-6);
    }
    EXPECT_THROW(merge_adapter(w, a), StateError);
}

TEST(Lora, RankBounds) {
    EXPECT_NO_THROW(check_lora_rank(8, 8, 4));
    EXPECT_THROW(check_lora_rank(8, 8, 5), ConfigError);
    EXPECT_THROW(check_lora_rank(8, 8, 0), ConfigError);
    EXPECT_THROW(init_adapter(6, 4, 3, 1.0, 0), ConfigError);
    LoraAdapter a = init_adapter(6, 4, 2, 1.0, 0);
    EXPECT_EQ(adapter_param_count(a), 2u * (6 + 4));
    EXPECT_THROW(effective_weight(Matrix::Zero(4, 6), a), ShapeError);
}

TEST(Lora, AttachedAdapterGradientsAndMerge) {
    ParamStore store;
    std::mt19937_64 rng(4);
    ad::Var w = store.add("w", random_matrix(6, 6, rng), false);
    AttachedLora l = attach_adapter(store, "blk.q", 6, 6, 2, 6.0, rng);
    EXPECT_TRUE(store.contains("lora.blk.q.A"));
    EXPECT_EQ(store.entry("lora.blk.q.meta").kind, TensorKind::buffer);
    EXPECT_DOUBLE_EQ(l.scaling(), 3.0);
    EXPECT_EQ(adapted_weight(w, &l).value(), w.value());

    store.set_trainable("lora.blk.q.A", true);
    store.set_trainable("lora.blk.q.B", true);
    l.b.mutable_value() = random_matrix(2, 6, rng);
    const Matrix x = random_matrix(3, 6, rng), probe_w = random_matrix(3, 6, rng);
    auto f = [&] { return probe(ad::linear(ad::constant(x), adapted_weight(w, &l), ad::Var{}), probe_w); };
    EXPECT_LT(grad_check(f, l.a), 1e-6);
    EXPECT_LT(grad_check(f, l.b), 1e-6);

    const Matrix before = ad::linear(ad::constant(x), adapted_weight(w, &l), ad::Var{}).value();
    const Matrix frozen = w.value();
    merge_attached(w, l);
    EXPECT_TRUE(l.merged);
    EXPECT_NE(w.value(), frozen);
    const Matrix after = ad::linear(ad::constant(x), adapted_weight(w, &l), ad::Var{}).value();
    EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(merge_attached(w, l), StateError);
}
