#include "lmde/lora.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lmde {

void check_lora_rank(Index d_out, Index d_in, int rank) {
    if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
    if (static_cast<Index>(rank) > std::min(d_out, d_in) / 2) {
        throw ConfigError("LoRA rank " + std::to_string(rank) + " exceeds min(d_out, d_in)/2 for a " +
                          std::to_string(d_out) + "x" + std::to_string(d_in) + " weight");
    }
}

LoraAdapter init_adapter(Index d_out, Index d_in, int rank, double alpha, std::uint64_t seed, std::string target) {
    check_lora_rank(d_out, d_in, rank);
    std::mt19937_64 rng(seed);
    LoraAdapter ad;
    ad.a = init_gaussian(d_out, rank, 1.0 / std::sqrt(static_cast<double>(d_out)), rng);
    ad.b = Matrix::Zero(rank, d_in);
    ad.alpha = alpha;
    ad.rank = rank;
    ad.target = std::move(target);
    return ad;
}

Matrix effective_weight(const Matrix& w, const LoraAdapter& adapter) {
    if (adapter.a.cols() != adapter.rank || adapter.b.rows() != adapter.rank) {
        throw ShapeError("LoRA factors do not match the declared rank");
    }
    if (w.rows() != adapter.d_out() || w.cols() != adapter.d_in()) {
        throw ShapeError("LoRA adapter shape does not match weight " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()));
    }
    Matrix out = w;
    out.noalias() += adapter.scaling() * (adapter.a * adapter.b);
    return out;
}

void merge_adapter(Matrix& w, LoraAdapter& adapter) {
    if (adapter.merged) throw StateError("LoRA adapter '" + adapter.target + "' is already merged");
    w = effective_weight(w, adapter);
    adapter.merged = true;
}

std::size_t adapter_param_count(const LoraAdapter& adapter) {
    return static_cast<std::size_t>(adapter.rank) * static_cast<std::size_t>(adapter.d_out() + adapter.d_in());
}

AttachedLora attach_adapter(ParamStore& store, const std::string& target, Index d_out, Index d_in, int rank,
                            double alpha, std::mt19937_64& rng) {
    check_lora_rank(d_out, d_in, rank);
    const std::string prefix = "lora." + target;
    AttachedLora out;
    out.target = target;
    out.a = store.add(prefix + ".A", init_gaussian(d_out, rank, 1.0 / std::sqrt(static_cast<double>(d_out)), rng),
                      false);
    out.b = store.add(prefix + ".B", Matrix::Zero(rank, d_in), false);
    Matrix meta(1, 2);
    meta << alpha, static_cast<double>(rank);
    out.meta = store.add(prefix + ".meta", round_to_float(meta), false, TensorKind::buffer);
    return out;
}

ad::Var adapted_weight(const ad::Var& w, const AttachedLora* lora) {
    if (!lora || lora->merged) return w;
    return ad::add(w, ad::scale(ad::matmul(lora->a, lora->b), lora->scaling()));
}

void merge_attached(ad::Var& w, AttachedLora& lora) {
    if (lora.merged) throw StateError("LoRA adapter '" + lora.target + "' is already merged");
    w.mutable_value().noalias() += lora.scaling() * (lora.a.value() * lora.b.value());
    lora.merged = true;
}

}  // namespace lmde
