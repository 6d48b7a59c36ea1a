#pragma once

// Statistics used by the audit reports. Everything here is a pure function
// of its inputs; randomized procedures take an explicit seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hallu/error.hpp"
#include "hallu/random.hpp"

namespace hallu::metrics {

using Warnings = std::vector<std::string>;

// --- calibration ------------------------------------------------------------

struct EceBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
};

struct EceReport {
    double ece = 0.0;
    std::vector<EceBin> bins;
    std::size_t n_total = 0;
};

/// Expected calibration error over equal-width bins on [0,1]; the last bin
/// is closed at 1.0. correct[i] is true when sample i was right.
EceReport ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
              std::size_t n_bins = 10);

// --- correlation ------------------------------------------------------------

/// phi from a 2x2 table; zero marginals give 0 and a warning.
double phi_from_counts(double n11, double n10, double n01, double n00, Warnings* warnings = nullptr);
double phi(const std::vector<bool>& a, const std::vector<bool>& b, Warnings* warnings = nullptr);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> mid_ranks(const std::vector<double>& values);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SpearmanTest {
    double rho = 0.0;
    double p_value = 1.0;
    /// true when p_value comes from full permutation enumeration.
    bool exact = false;
};

/// Two-sided p-value from the t approximation; exact enumeration when n <= kExactSpearmanMax.
inline constexpr std::size_t kExactSpearmanMax = 9;
SpearmanTest spearman_test(const std::vector<double>& x, const std::vector<double>& y);

double point_biserial(const std::vector<bool>& flags, const std::vector<double>& values);

// --- ROC --------------------------------------------------------------------

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    /// Predict positive when score >= threshold. The first point uses +inf.
    double threshold = 0.0;
};

struct RocReport {
    std::vector<RocPoint> points;
    double auc = 0.0;
    double youden_threshold = 0.0;
    double youden_j = 0.0;
    double sensitivity_at_youden = 0.0;
    double specificity_at_youden = 0.0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
};

constexpr double youden_j(double sensitivity, double specificity) noexcept {
    return sensitivity + specificity - 1.0;
}

/// Mann-Whitney AUC; ties between a positive and a negative count 0.5.
double auc_mann_whitney(const std::vector<double>& scores, const std::vector<bool>& labels);
/// Trapezoidal area under a curve given as points with nondecreasing fpr.
double auc_trapezoid(const std::vector<RocPoint>& points);

/// Throws DomainError when labels hold a single class.
RocReport roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct ConditionalAuc {
    std::map<std::string, RocReport> groups;
    Warnings warnings;
};

/// roc_auc per group label; single-class groups are skipped with a warning.
ConditionalAuc conditional_auc(const std::vector<double>& scores, const std::vector<bool>& labels,
                               const std::vector<std::string>& groups);

// --- tables -----------------------------------------------------------------

struct QuintileRow {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
    std::optional<double> rate;
};

/// Bins split at the nearest-rank 20/40/60/80th percentiles; a value equal
/// to a cut point falls in the lower bin. Ties can leave a bin empty.
std::array<QuintileRow, 5> quintile_rates(const std::vector<double>& values,
                                          const std::vector<bool>& flags);

/// Mean of sensitivity and specificity. Throws DomainError if a class is empty.
double balanced_accuracy(double tp, double fp, double fn, double tn);

// --- bootstrap --------------------------------------------------------------

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

struct BootstrapOptions {
    std::size_t n_resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

/// Linear-interpolated quantile of sorted data, q in [0,1].
double quantile_sorted(const std::vector<double>& sorted, double q);

/// Percentile interval of statistic(resample) over seeded resamples drawn
/// with replacement. Resample i uses its own stream derived from (seed, i).
template <typename T, typename Statistic>
Interval bootstrap_ci(const std::vector<T>& data, Statistic&& statistic,
                      const BootstrapOptions& options = {}) {
    if (data.empty()) throw DomainError("bootstrap_ci: empty data");
    if (options.n_resamples == 0) throw DomainError("bootstrap_ci: n_resamples must be positive");
    std::vector<double> stats;
    stats.reserve(options.n_resamples);
    std::vector<T> sample(data.size());
    for (std::size_t i = 0; i < options.n_resamples; ++i) {
        Rng rng(derive_seed(options.seed, i));
        for (auto& x : sample) x = data[rng.below(data.size())];
        stats.push_back(statistic(sample));
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - options.level;
    return {quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Proportion with a bootstrap interval.
struct RateEstimate {
    double rate = 0.0;
    Interval ci;
    std::size_t n = 0;
};

RateEstimate rate_with_ci(const std::vector<bool>& flags, const BootstrapOptions& options);

}  // namespace hallu::metrics
