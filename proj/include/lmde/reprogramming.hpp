#pragma once

// Cross-modal reprogramming: vision patch embeddings attend over a small set of
// text prototypes (linear mixtures of the frozen word embeddings), and the
// result is projected into the text width behind the prompt tokens.

#include "lmde/autodiff.hpp"
#include "lmde/backbone.hpp"
#include "lmde/params.hpp"

#include <random>
#include <vector>

namespace lmde {

/// Per-head W^Q_k (d_m x d), W^K_k and W^V_k (D x d) with d = d_m / K, plus
/// the d_m x d_m output projection.
struct ReprogrammingWeights {
    std::vector<ad::Var> query;
    std::vector<ad::Var> key;
    std::vector<ad::Var> value;
    ad::Var output;

    int heads() const { return static_cast<int>(query.size()); }
};

/// E' = P E. P is V' x V.
ad::Var derive_prototypes(const ad::Var& embeddings, const ad::Var& prototype_map);

/// Per head softmax((Xp W^Q_k)(E' W^K_k)^T / sqrt(d)) (E' W^V_k); heads are
/// concatenated and passed through the output projection. When given,
/// `attention` receives the N x V' weights of each head and `pre_projection`
/// the concatenated heads.
ad::Var reprogram(const ad::Var& patch_embeddings, const ad::Var& prototypes, const ReprogrammingWeights& w,
                  std::vector<Matrix>* attention = nullptr, ad::Var* pre_projection = nullptr);

struct FusedSequence {
    ad::Var tokens;  // (prompt_len + vision_len) x D
    Index prompt_len = 0;
    Index vision_len = 0;
};

/// Projects F (N x d_m) to the text width with `proj_w` (D x d_m) and `proj_b`
/// (1 x D) and appends it after the prompt embeddings (T x D, T may be 0).
FusedSequence fuse(const ad::Var& reprogrammed, const ad::Var& prompt_embeddings, const ad::Var& proj_w,
                   const ad::Var& proj_b);

/// Owns the trainable tensors "proto.P", "reprog.head{k}.{q,k,v}", "reprog.out",
/// "fuse.proj" and "fuse.bias".
class Reprogrammer {
public:
    Reprogrammer() = default;
    /// Throws ConfigError unless 1 <= prototypes <= V/4 and d_m divides into heads.
    Reprogrammer(const BackboneConfig& cfg, int prototypes, int heads, ParamStore& store, std::mt19937_64& rng);

    ad::Var prototypes(const WordEmbedding& words) const;
    ad::Var reprogram(const ad::Var& patch_embeddings, const ad::Var& prototypes) const;
    FusedSequence fuse(const ad::Var& reprogrammed, const ad::Var& prompt_embeddings) const;

    const ReprogrammingWeights& weights() const { return weights_; }
    const ad::Var& prototype_map() const { return prototype_map_; }

private:
    ad::Var prototype_map_;
    ReprogrammingWeights weights_;
    ad::Var fuse_w_, fuse_b_;
};

}  // namespace lmde
