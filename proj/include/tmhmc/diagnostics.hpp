#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tmhmc/errors.hpp"

namespace tmhmc {

// Effective sample size via the initial-positive-sequence estimator:
// autocorrelations enter in consecutive pairs while each pair-sum stays
// positive, and the result is clamped to (0, N].
inline double ess_geyer(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 10) throw DomainError("effective sample size needs at least 10 draws");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);

    const auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t)
            s += (series[t] - mean) * (series[t + lag] - mean);
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (!(c0 > 0.0)) throw DegenerateSeries("constant series has no effective sample size");

    double pair_total = 0.0;
    for (std::size_t m = 0; 2 * m + 1 <= n / 2; ++m) {
        const double pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
        if (pair <= 0.0) break;
        pair_total += pair;
    }
    const double tau = 2.0 * pair_total - 1.0;
    if (tau <= 0.0) return static_cast<double>(n);
    return std::min(static_cast<double>(n) / tau, static_cast<double>(n));
}

// Monte-Carlo standard error of the mean by non-overlapping batch means with
// floor(sqrt(N)) batches; trailing draws that do not fill a batch are dropped.
inline double mcse_batch_means(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 4) throw DomainError("batch-means standard error needs at least 4 draws");
    const std::size_t batches = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    const std::size_t width = n / batches;
    std::vector<double> bm(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t t = 0; t < width; ++t) bm[b] += series[b * width + t];
        bm[b] /= static_cast<double>(width);
    }
    double grand = 0.0;
    for (double v : bm) grand += v;
    grand /= static_cast<double>(batches);
    double var = 0.0;
    for (double v : bm) var += (v - grand) * (v - grand);
    var /= static_cast<double>(batches - 1);
    return std::sqrt(var / static_cast<double>(batches));
}

// One summary line of a monitored quantity. A constant series has no defined
// ESS; it is flagged with NaN in both ESS fields.
struct SummaryRow {
    std::string quantity;
    double mean = 0.0;
    double std = 0.0;
    double ess = std::numeric_limits<double>::quiet_NaN();
    double ess_per_s = std::numeric_limits<double>::quiet_NaN();
};

struct ChainSummary {
    std::vector<SummaryRow> rows;
    double wall_time_s = 0.0;
};

inline SummaryRow summarize_series(std::string name, std::span<const double> series,
                                   double wall_time_s) {
    SummaryRow row;
    row.quantity = std::move(name);
    const std::size_t n = series.size();
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : series) ss += (v - mean) * (v - mean);
    row.mean = mean;
    row.std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    try {
        row.ess = ess_geyer(series);
        row.ess_per_s = wall_time_s > 0.0 ? row.ess / wall_time_s
                                          : std::numeric_limits<double>::quiet_NaN();
    } catch (const Error&) {
        // degenerate or too-short series: leave the ESS fields flagged
    }
    return row;
}

// Post-burn-in draws arranged per quantity, in the row order of the output.
inline ChainSummary summarize(std::span<const std::string> names,
                              std::span<const std::vector<double>> columns,
                              double wall_time_s) {
    ChainSummary out;
    out.wall_time_s = wall_time_s;
    out.rows.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        out.rows.push_back(summarize_series(names[i], columns[i], wall_time_s));
    return out;
}

namespace detail {

template <class Fold>
ChainSummary aggregate_replicas(std::span<const ChainSummary> replicas, Fold fold) {
    ChainSummary out;
    out.rows = replicas.front().rows;
    for (std::size_t i = 1; i < replicas.size(); ++i) {
        for (std::size_t r = 0; r < out.rows.size(); ++r) {
            const SummaryRow& next = replicas[i].rows[r];
            SummaryRow& acc = out.rows[r];
            acc.mean = fold(acc.mean, next.mean);
            acc.std = fold(acc.std, next.std);
            acc.ess = fold(acc.ess, next.ess);
            acc.ess_per_s = fold(acc.ess_per_s, next.ess_per_s);
        }
    }
    return out;
}

}  // namespace detail

// Column-wise minimum across replicas; any NaN entry poisons its cell.
inline ChainSummary aggregate_min(std::span<const ChainSummary> replicas) {
    if (replicas.empty()) throw DomainError("no replicas to aggregate");
    ChainSummary out = detail::aggregate_replicas(
        replicas, [](double a, double b) { return std::isnan(a) || std::isnan(b) ? std::numeric_limits<double>::quiet_NaN() : std::min(a, b); });
    double wt = replicas.front().wall_time_s;
    for (const ChainSummary& c : replicas) wt = std::min(wt, c.wall_time_s);
    out.wall_time_s = wt;
    return out;
}

// Column-wise mean across replicas.
inline ChainSummary aggregate_mean(std::span<const ChainSummary> replicas) {
    if (replicas.empty()) throw DomainError("no replicas to aggregate");
    const double k = static_cast<double>(replicas.size());
    ChainSummary out = detail::aggregate_replicas(replicas, [](double a, double b) { return a + b; });
    for (SummaryRow& row : out.rows) {
        row.mean /= k;
        row.std /= k;
        row.ess /= k;
        row.ess_per_s /= k;
    }
    double wt = 0.0;
    for (const ChainSummary& c : replicas) wt += c.wall_time_s;
    out.wall_time_s = wt / k;
    return out;
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov-Smirnov distance between the empirical distribution of the
// sample and a reference CDF.
template <class Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
    if (sample.empty()) throw DomainError("empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::max((static_cast<double>(i) + 1.0) / n - f,
                                 f - static_cast<double>(i) / n));
    }
    return d;
}

// Asymptotic critical value: reject at level alpha when the statistic
// exceeds sqrt(-log(alpha/2) / 2) / sqrt(n).
inline double ks_critical(double alpha, std::size_t n) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0) / static_cast<double>(n));
}

}  // namespace tmhmc
