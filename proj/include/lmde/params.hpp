#pragma once

#include "lmde/autodiff.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace lmde {

enum class TensorKind {
    weight,  // learnable tensor, counted in parameter totals
    buffer,  // running statistics and metadata, never optimized
};

struct ParamEntry {
    ad::Var var;
    TensorKind kind = TensorKind::weight;
    bool trainable = false;
};

/// Named tensors of one model. Names are stable and double as the keys of the
/// weight file. Iteration order is lexicographic.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    /// Registers a tensor; throws ConfigError on a duplicate name.
    ad::Var add(const std::string& name, Matrix init, bool trainable, TensorKind kind = TensorKind::weight);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    ad::Var get(const std::string& name) const;
    const ParamEntry& entry(const std::string& name) const;

    void set_trainable(const std::string& name, bool on);
    /// Applies to every weight whose name starts with `prefix`; returns how many matched.
    std::size_t set_trainable_prefix(const std::string& prefix, bool on);

    std::vector<std::string> trainable_names() const;
    std::size_t trainable_count() const;
    /// Scalar count over weights (buffers excluded).
    std::size_t total_count() const;

    void zero_grad();

    const std::map<std::string, ParamEntry>& entries() const { return entries_; }

private:
    std::map<std::string, ParamEntry> entries_;
};

/// Gaussian init with values rounded to float32 so a save/load round trip
/// through the weight file is exact.
Matrix init_gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng);

/// Rounds every entry to the nearest float32.
Matrix round_to_float(Matrix m);

}  // namespace lmde
