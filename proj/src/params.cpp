#include "lmde/params.hpp"

#include "lmde/errors.hpp"

namespace lmde {

ad::Var ParamStore::add(const std::string& name, Matrix init, bool trainable, TensorKind kind) {
    if (contains(name)) throw ConfigError("duplicate tensor name: " + name);
    if (kind == TensorKind::buffer) trainable = false;
    ad::Var v = trainable ? ad::parameter(std::move(init)) : ad::constant(std::move(init));
    entries_.emplace(name, ParamEntry{v, kind, trainable});
    return v;
}

ad::Var ParamStore::get(const std::string& name) const { return entry(name).var; }

const ParamEntry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown tensor: " + name);
    return it->second;
}

void ParamStore::set_trainable(const std::string& name, bool on) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown tensor: " + name);
    if (it->second.kind == TensorKind::buffer) throw ConfigError("buffers are never trainable: " + name);
    it->second.trainable = on;
    it->second.var.set_requires_grad(on);
}

std::size_t ParamStore::set_trainable_prefix(const std::string& prefix, bool on) {
    std::size_t n = 0;
    for (auto& [name, e] : entries_) {
        if (e.kind != TensorKind::weight || name.rfind(prefix, 0) != 0) continue;
        e.trainable = on;
        e.var.set_requires_grad(on);
        ++n;
    }
    return n;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) {
        if (e.trainable) out.push_back(name);
    }
    return out;
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) {
        if (e.trainable) n += static_cast<std::size_t>(e.var.value().size());
    }
    return n;
}

std::size_t ParamStore::total_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) {
        if (e.kind == TensorKind::weight) n += static_cast<std::size_t>(e.var.value().size());
    }
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, e] : entries_) e.var.zero_grad();
}

Matrix round_to_float(Matrix m) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
    return m;
}

Matrix init_gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return round_to_float(std::move(m));
}

}  // namespace lmde
