#include "lmde/training.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

namespace lmde {

namespace {

// Returns the loss; when `grad` is given it receives dL/dpred per pixel.
double ssi_core(const double* pred, const DepthMap& gt, double* grad) {
    const std::size_t n_px = gt.size();
    std::vector<std::size_t> idx;
    std::vector<double> r;
    idx.reserve(n_px);
    r.reserve(n_px);
    for (std::size_t i = 0; i < n_px; ++i) {
        if (!gt.valid[i] || !(gt.depth[i] > 0.0) || !(pred[i] > 0.0)) continue;
        idx.push_back(i);
        r.push_back(std::log(gt.depth[i]) - std::log(pred[i]));
    }
    if (idx.empty()) throw LossError("ssi_loss: no valid pixels");
    const auto n = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double loss = 0.0;
    for (double v : r) loss += (v - mean) * (v - mean);
    loss /= n;
    if (grad) {
        std::fill(grad, grad + n_px, 0.0);
        for (std::size_t k = 0; k < idx.size(); ++k) grad[idx[k]] = -2.0 / n * (r[k] - mean) / pred[idx[k]];
    }
    return loss;
}

void check_pair(const DepthMap& pred, const DepthMap& gt) {
    if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
        throw ShapeError("ssi_loss: prediction and ground truth differ in shape");
    }
}

}  // namespace

double ssi_loss(const DepthMap& pred, const DepthMap& gt) {
    check_pair(pred, gt);
    return ssi_core(pred.depth.data(), gt, nullptr);
}

std::vector<double> ssi_loss_grad(const DepthMap& pred, const DepthMap& gt) {
    check_pair(pred, gt);
    std::vector<double> g(gt.size());
    ssi_core(pred.depth.data(), gt, g.data());
    return g;
}

ad::Var ssi_loss(const ad::Var& pred, const DepthMap& gt) {
    if (pred.cols() != 1 || static_cast<std::size_t>(pred.rows()) != gt.size()) {
        throw ShapeError("ssi_loss: prediction column does not match the ground truth size");
    }
    Matrix grad(pred.rows(), 1);
    Matrix out(1, 1);
    out(0, 0) = ssi_core(pred.value().data(), gt, grad.data());
    return ad::make_op({pred}, std::move(out), [grad = std::move(grad)](const Matrix& g, const std::vector<Matrix*>& t) {
        if (t[0]) *t[0] += g(0, 0) * grad;
    });
}

double cosine_lr(long step, long total_steps, double lr0, double lr_min) {
    if (step >= total_steps) return lr_min;
    if (step <= 0) return lr0;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("early stopping patience must be at least 1");
}

StopDecision EarlyStopper::update(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        bad_ = 0;
        return StopDecision::keep_going;
    }
    ++bad_;
    return bad_ >= patience_ ? StopDecision::stop : StopDecision::keep_going;
}

AdamW::AdamW(ParamStore& store, const AdamWConfig& cfg) : cfg_(cfg) {
    for (const auto& [name, e] : store.entries()) {
        if (!e.trainable || e.kind != TensorKind::weight) continue;
        const Index r = e.var.rows(), c = e.var.cols();
        slots_.push_back({e.var, Matrix::Zero(r, c), Matrix::Zero(r, c)});
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
        Matrix& w = s.var.mutable_value();
        if (cfg_.weight_decay != 0.0) w *= 1.0 - lr * cfg_.weight_decay;
        if (!s.var.has_grad()) continue;
        const Matrix& g = s.var.grad();
        s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
        s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        w.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + cfg_.eps);
    }
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(lr0 >= 0.0) || !(lr_min_ratio >= 0.0 && lr_min_ratio <= 1.0)) throw ConfigError("learning rate out of range");
    if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
}

namespace {

ad::Var batch_loss(DepthModel& model, const std::vector<SceneSample>& pool, const std::vector<std::size_t>& batch,
                   bool training, std::mt19937_64* rng) {
    std::vector<const RgbImage*> images;
    images.reserve(batch.size());
    for (std::size_t i : batch) images.push_back(&pool[i].image);
    const ad::Var depth = model.forward(images, training, rng);
    const Index px = depth.rows() / static_cast<Index>(batch.size());
    ad::Var total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const DepthMap& gt = pool[batch[b]].depth;
        if (static_cast<Index>(gt.size()) != px) {
            throw ShapeError("fit: ground truth resolution differs from the model resolution");
        }
        const ad::Var l = ssi_loss(ad::slice_rows(depth, static_cast<Index>(b) * px, px), gt);
        total = total.defined() ? ad::add(total, l) : l;
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, int batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

using Snapshot = std::map<std::string, Matrix>;

Snapshot snapshot(const ParamStore& store) {
    Snapshot s;
    for (const auto& [name, e] : store.entries()) {
        if (e.trainable || e.kind == TensorKind::buffer) s.emplace(name, e.var.value());
    }
    return s;
}

void restore(ParamStore& store, const Snapshot& s) {
    for (const auto& [name, m] : s) store.get(name).mutable_value() = m;
}

}  // namespace

double evaluate_loss(DepthModel& model, const std::vector<SceneSample>& pool, const std::vector<std::size_t>& indices,
                     int batch_size) {
    if (indices.empty()) throw LossError("evaluate_loss: no samples");
    double sum = 0.0;
    for (std::size_t i = 0; i < indices.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(indices.size(), i + static_cast<std::size_t>(batch_size));
        const std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(i),
                                             indices.begin() + static_cast<std::ptrdiff_t>(end));
        sum += batch_loss(model, pool, batch, false, nullptr).scalar() * static_cast<double>(batch.size());
    }
    return sum / static_cast<double>(indices.size());
}

FitResult fit(DepthModel& model, const std::vector<SceneSample>& pool, const Split& split, const TrainConfig& cfg,
              std::uint64_t seed) {
    cfg.validate();
    if (split.train.empty()) throw SplitError("fit: empty training split");
    for (std::size_t i : split.train) {
        if (i >= pool.size()) throw SplitError("fit: split index outside the pool");
    }

    ParamStore& store = model.params();
    AdamW opt(store, cfg.adam);
    std::mt19937_64 order_rng(seed);
    std::mt19937_64 dropout_rng(seed ^ 0x9e3779b97f4a7c15ULL);

    const auto steps_per_epoch = static_cast<long>(chunk(split.train, cfg.batch_size).size());
    long total = steps_per_epoch * cfg.epochs;
    if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
    const double lr_min = cfg.lr0 * cfg.lr_min_ratio;

    FitResult result;
    TrainState state{0, 0, EarlyStopper(cfg.patience)};
    Snapshot best = snapshot(store);
    std::vector<std::size_t> order = split.train;

    while (state.epoch < cfg.epochs && state.step < total) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_sum = 0.0;
        long epoch_steps = 0;
        double lr = cfg.lr0;
        for (const auto& batch : chunk(order, cfg.batch_size)) {
            if (state.step >= total) break;
            lr = cosine_lr(state.step, total, cfg.lr0, lr_min);
            store.zero_grad();
            ad::Var loss;
            try {
                loss = batch_loss(model, pool, batch, true, &dropout_rng);
            } catch (const NumericError& e) {
                throw TrainError(std::string("fit: diverged: ") + e.what(), state.step);
            } catch (const LossError& e) {
                throw TrainError(std::string("fit: diverged: ") + e.what(), state.step);
            }
            const double value = loss.scalar();
            if (!std::isfinite(value)) throw TrainError("fit: non-finite loss", state.step);
            ad::backward(loss);
            opt.step(lr);
            result.step_losses.push_back(value);
            epoch_sum += value;
            ++epoch_steps;
            ++state.step;
        }
        ++state.epoch;
        EpochRecord rec;
        rec.epoch = state.epoch;
        rec.train_loss = epoch_sum / static_cast<double>(std::max(1L, epoch_steps));
        rec.val_loss = split.val.empty() ? rec.train_loss : evaluate_loss(model, pool, split.val, cfg.batch_size);
        rec.lr = lr;
        if (!std::isfinite(rec.val_loss)) throw TrainError("fit: non-finite validation loss", state.step);
        const double prev_best = state.stopper.best();
        rec.stopped = state.stopper.update(rec.val_loss) == StopDecision::stop;
        if (rec.val_loss < prev_best) best = snapshot(store);
        result.history.push_back(rec);
        if (rec.stopped) {
            result.early_stopped = true;
            break;
        }
    }
    store.zero_grad();
    restore(store, best);
    result.steps = state.step;
    return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,train_loss,val_loss,lr,stopped\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%d\n", r.epoch, r.train_loss, r.val_loss, r.lr,
                      r.stopped ? 1 : 0);
        out += buf;
    }
    return out;
}

}  // namespace lmde
