#pragma once

// Low-rank adaptation: W' = W + (alpha / r) * A * B with W stored d_out x d_in,
// A d_out x r and B r x d_in.

#include "lmde/autodiff.hpp"
#include "lmde/params.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace lmde {

struct LoraAdapter {
    Matrix a;  // d_out x r
    Matrix b;  // r x d_in
    double alpha = 1.0;
    int rank = 1;
    std::string target;
    bool merged = false;

    double scaling() const { return alpha / static_cast<double>(rank); }
    Index d_out() const { return a.rows(); }
    Index d_in() const { return b.cols(); }
};

/// Throws ConfigError unless 1 <= rank <= min(d_out, d_in) / 2.
void check_lora_rank(Index d_out, Index d_in, int rank);

/// A is scaled Gaussian, B is zero, so the effective weight starts at W.
LoraAdapter init_adapter(Index d_out, Index d_in, int rank, double alpha, std::uint64_t seed,
                         std::string target = {});

Matrix effective_weight(const Matrix& w, const LoraAdapter& adapter);

/// Folds the adapter into `w` and retires it. A second merge raises StateError.
void merge_adapter(Matrix& w, LoraAdapter& adapter);

/// r * (d_out + d_in)
std::size_t adapter_param_count(const LoraAdapter& adapter);

/// An adapter whose tensors live in a ParamStore under lora.<target>.{A,B} plus a
/// buffer lora.<target>.meta = [alpha, rank].
struct AttachedLora {
    std::string target;
    ad::Var a;
    ad::Var b;
    ad::Var meta;
    bool merged = false;

    double scaling() const { return meta.value()(0, 0) / meta.value()(0, 1); }
};

AttachedLora attach_adapter(ParamStore& store, const std::string& target, Index d_out, Index d_in, int rank,
                            double alpha, std::mt19937_64& rng);

/// W + (alpha/r) A B, differentiable in all three; returns `w` unchanged when
/// there is no live adapter.
ad::Var adapted_weight(const ad::Var& w, const AttachedLora* lora);

/// Adds the adapter delta into the frozen weight held by `w` and retires it.
void merge_attached(ad::Var& w, AttachedLora& lora);

}  // namespace lmde
