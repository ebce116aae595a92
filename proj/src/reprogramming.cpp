#include "lmde/reprogramming.hpp"

#include "lmde/errors.hpp"

#include <cmath>
#include <string>

namespace lmde {

ad::Var derive_prototypes(const ad::Var& embeddings, const ad::Var& prototype_map) {
    if (prototype_map.cols() != embeddings.rows()) {
        throw ShapeError("derive_prototypes: P has " + std::to_string(prototype_map.cols()) +
                         " columns but the vocabulary has " + std::to_string(embeddings.rows()) + " rows");
    }
    return ad::matmul(prototype_map, embeddings);
}

ad::Var reprogram(const ad::Var& patch_embeddings, const ad::Var& prototypes, const ReprogrammingWeights& w,
                  std::vector<Matrix>* attention, ad::Var* pre_projection) {
    const int heads = w.heads();
    if (heads < 1 || w.key.size() != w.query.size() || w.value.size() != w.query.size()) {
        throw ShapeError("reprogram: inconsistent head count");
    }
    const Index dm = patch_embeddings.cols();
    const Index d = dm / heads;
    if (d * heads != dm) throw ShapeError("reprogram: d_m is not divisible by the head count");
    if (w.output.rows() != dm || w.output.cols() != dm) throw ShapeError("reprogram: output projection must be d_m x d_m");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    if (attention) attention->clear();

    std::vector<ad::Var> per_head;
    for (int k = 0; k < heads; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (w.query[ks].rows() != dm || w.query[ks].cols() != d) throw ShapeError("reprogram: W^Q must be d_m x d");
        if (w.key[ks].rows() != prototypes.cols() || w.key[ks].cols() != d ||
            w.value[ks].rows() != prototypes.cols() || w.value[ks].cols() != d) {
            throw ShapeError("reprogram: W^K and W^V must be D x d");
        }
        const ad::Var q = ad::matmul(patch_embeddings, w.query[ks]);
        const ad::Var key = ad::matmul(prototypes, w.key[ks]);
        const ad::Var val = ad::matmul(prototypes, w.value[ks]);
        const ad::Var logits = ad::scale(ad::matmul_nt(q, key), inv_sqrt);
        if (!logits.value().allFinite()) throw NumericError("reprogram: non-finite attention logits");
        const ad::Var a = ad::softmax_rows(logits);
        if (attention) attention->push_back(a.value());
        per_head.push_back(ad::matmul(a, val));
    }
    const ad::Var concat = ad::concat_cols(per_head);
    if (pre_projection) *pre_projection = concat;
    return ad::matmul(concat, w.output);
}

FusedSequence fuse(const ad::Var& reprogrammed, const ad::Var& prompt_embeddings, const ad::Var& proj_w,
                   const ad::Var& proj_b) {
    if (!reprogrammed.value().allFinite()) throw NumericError("fuse: non-finite reprogrammed features");
    const ad::Var projected = ad::linear(reprogrammed, proj_w, proj_b);
    FusedSequence out;
    out.vision_len = projected.rows();
    out.prompt_len = prompt_embeddings.defined() ? prompt_embeddings.rows() : 0;
    if (out.prompt_len == 0) {
        out.tokens = projected;
        return out;
    }
    if (prompt_embeddings.cols() != projected.cols()) throw ShapeError("fuse: prompt width differs from text width");
    out.tokens = ad::concat_rows({prompt_embeddings, projected});
    return out;
}

Reprogrammer::Reprogrammer(const BackboneConfig& cfg, int prototypes, int heads, ParamStore& store,
                           std::mt19937_64& rng) {
    if (prototypes < 1 || prototypes > cfg.vocab_size / 4) {
        throw ConfigError("prototype count must lie in [1, V/4]; got " + std::to_string(prototypes));
    }
    if (heads < 1 || cfg.vision_width % heads != 0) throw ConfigError("reprogramming heads must divide d_m");
    const int dm = cfg.vision_width, dt = cfg.text_width, d = dm / heads;
    auto gauss = [&](int r, int c, int fan_in) {
        return init_gaussian(r, c, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    };
    prototype_map_ = store.add("proto.P", gauss(prototypes, cfg.vocab_size, cfg.vocab_size), true);
    for (int k = 0; k < heads; ++k) {
        const std::string base = "reprog.head" + std::to_string(k);
        weights_.query.push_back(store.add(base + ".q", gauss(dm, d, dm), true));
        weights_.key.push_back(store.add(base + ".k", gauss(dt, d, dt), true));
        weights_.value.push_back(store.add(base + ".v", gauss(dt, d, dt), true));
    }
    weights_.output = store.add("reprog.out", gauss(dm, dm, dm), true);
    fuse_w_ = store.add("fuse.proj", gauss(dt, dm, dm), true);
    fuse_b_ = store.add("fuse.bias", Matrix::Zero(1, dt), true);
}

ad::Var Reprogrammer::prototypes(const WordEmbedding& words) const {
    return derive_prototypes(words.table(), prototype_map_);
}

ad::Var Reprogrammer::reprogram(const ad::Var& patch_embeddings, const ad::Var& prototypes) const {
    return lmde::reprogram(patch_embeddings, prototypes, weights_);
}

FusedSequence Reprogrammer::fuse(const ad::Var& reprogrammed, const ad::Var& prompt_embeddings) const {
    return lmde::fuse(reprogrammed, prompt_embeddings, fuse_w_, fuse_b_);
}

}  // namespace lmde
