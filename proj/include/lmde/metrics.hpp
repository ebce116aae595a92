#pragma once

#include "lmde/image.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace lmde {

struct MetricsReport {
    double rmse = 0.0;
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double log_rmse = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    std::size_t n_valid = 0;
};

struct MetricsOptions {
    /// Ground truth beyond the cap is excluded and predictions are clipped to it.
    std::optional<double> depth_cap = 10.0;
};

/// Standard depth metrics over pixels where gt is valid and both depths are
/// positive. Relative errors use the ground truth as denominator; delta_k is
/// the fraction with max(d/d^, d^/d) < 1.25^k. No valid pixel raises
/// MetricsError.
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const MetricsOptions& options = {});

/// Per-image mean of each metric; n_valid is summed.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

nlohmann::ordered_json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::ordered_json& j);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace lmde
