#include "lmde/metrics.hpp"

#include "lmde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lmde {

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const MetricsOptions& options) {
    if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
        throw ShapeError("compute_metrics: prediction and ground truth differ in shape");
    }
    double se = 0, ar = 0, sr = 0, le = 0;
    std::size_t d1 = 0, d2 = 0, d3 = 0, n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = gt.depth[i];
        double p = pred.depth[i];
        if (!gt.valid[i] || !(d > 0.0) || !(p > 0.0)) continue;
        if (options.depth_cap) {
            if (d > *options.depth_cap) continue;
            p = std::min(p, *options.depth_cap);
        }
        const double diff = d - p;
        se += diff * diff;
        ar += std::abs(diff) / d;
        sr += diff * diff / d;
        const double l = std::log(d) - std::log(p);
        le += l * l;
        const double ratio = std::max(d / p, p / d);
        d1 += ratio < 1.25;
        d2 += ratio < 1.25 * 1.25;
        d3 += ratio < 1.25 * 1.25 * 1.25;
        ++n;
    }
    if (n == 0) throw MetricsError("compute_metrics: no valid pixels");
    const auto nn = static_cast<double>(n);
    return {std::sqrt(se / nn), ar / nn,          sr / nn,           std::sqrt(le / nn),
            static_cast<double>(d1) / nn, static_cast<double>(d2) / nn, static_cast<double>(d3) / nn, n};
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw MetricsError("average_reports: no reports");
    MetricsReport out;
    for (const auto& r : reports) {
        out.rmse += r.rmse;
        out.abs_rel += r.abs_rel;
        out.sq_rel += r.sq_rel;
        out.log_rmse += r.log_rmse;
        out.delta1 += r.delta1;
        out.delta2 += r.delta2;
        out.delta3 += r.delta3;
        out.n_valid += r.n_valid;
    }
    const auto k = static_cast<double>(reports.size());
    for (double* v : {&out.rmse, &out.abs_rel, &out.sq_rel, &out.log_rmse, &out.delta1, &out.delta2, &out.delta3}) {
        *v /= k;
    }
    return out;
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["rmse"] = r.rmse;
    j["abs_rel"] = r.abs_rel;
    j["sq_rel"] = r.sq_rel;
    j["log_rmse"] = r.log_rmse;
    j["delta1"] = r.delta1;
    j["delta2"] = r.delta2;
    j["delta3"] = r.delta3;
    j["n_valid"] = r.n_valid;
    return j;
}

MetricsReport metrics_from_json(const nlohmann::ordered_json& j) {
    MetricsReport r;
    r.rmse = j.at("rmse").get<double>();
    r.abs_rel = j.at("abs_rel").get<double>();
    r.sq_rel = j.at("sq_rel").get<double>();
    r.log_rmse = j.at("log_rmse").get<double>();
    r.delta1 = j.at("delta1").get<double>();
    r.delta2 = j.at("delta2").get<double>();
    r.delta3 = j.at("delta3").get<double>();
    r.n_valid = j.at("n_valid").get<std::size_t>();
    return r;
}

std::string metrics_csv_header() { return "rmse,abs_rel,sq_rel,log_rmse,delta1,delta2,delta3,n_valid"; }

std::string metrics_csv_row(const MetricsReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu", r.rmse, r.abs_rel, r.sq_rel, r.log_rmse,
                  r.delta1, r.delta2, r.delta3, r.n_valid);
    return buf;
}

}  // namespace lmde
