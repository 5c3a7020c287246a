#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "pdn/data.hpp"
#include "pdn/errors.hpp"

namespace pdn {

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
};

// MAE, RMSE and the coefficient of determination over paired vectors.
// R^2 = 1 - SS_res / SS_tot; a zero-variance target is a hard error rather
// than a NaN sentinel.
inline Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.size() != y_hat.size())
        throw ShapeError("metrics: length mismatch, " + std::to_string(y.size()) + " vs " +
                         std::to_string(y_hat.size()));
    const size_t n = y.size();
    if (n < 2) throw ValidationError("metrics: need n >= 2 for R^2, got " + std::to_string(n));

    double abs_sum = 0.0, sq_sum = 0.0, mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = y[i] - y_hat[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
        mean += y[i];
    }
    mean /= static_cast<double>(n);
    double var_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = y[i] - mean;
        var_sum += d * d;
    }
    if (var_sum == 0.0)
        throw ZeroVarianceError("metrics: target vector has zero variance; R^2 is undefined");

    Metrics m;
    m.mae = abs_sum / static_cast<double>(n);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(n));
    m.r2 = 1.0 - sq_sum / var_sum;
    return m;
}

// One row per (field, load label, evaluation mode), metrics in physical units.
struct MetricsRow {
    std::string field;
    LoadLabel label = LoadLabel::Vertical;
    std::string mode;  // "sampled" or "full"
    int64_t n = 0;
    Metrics metrics;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os << "field,label,mode,n,mae,rmse,r2\n";
        os.precision(12);
        for (const auto& r : rows)
            os << r.field << "," << label_name(r.label) << "," << r.mode << "," << r.n << ","
               << r.metrics.mae << "," << r.metrics.rmse << "," << r.metrics.r2 << "\n";
        return os.str();
    }

    // Mean R^2 over rows of the given mode (the benchmark summary statistic).
    double mean_r2(const std::string& mode) const {
        double acc = 0.0;
        int64_t count = 0;
        for (const auto& r : rows)
            if (r.mode == mode) {
                acc += r.metrics.r2;
                ++count;
            }
        if (count == 0) throw ValidationError("metrics report: no rows for mode '" + mode + "'");
        return acc / static_cast<double>(count);
    }
};

}  // namespace pdn
