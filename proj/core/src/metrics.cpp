#include "hallu/metrics.hpp"

#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace hallu::metrics {

namespace {

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
    if (a.size() != b.size()) {
        throw DomainError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
    }
}

std::vector<double> as_doubles(const std::vector<bool>& flags) {
    std::vector<double> out(flags.size());
    for (std::size_t i = 0; i < flags.size(); ++i) out[i] = flags[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace

// --- calibration ------------------------------------------------------------

EceReport ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
              std::size_t n_bins) {
    require_same_size(confidences, correct, "ece");
    if (confidences.empty()) throw DomainError("ece: empty input");
    if (n_bins == 0) throw DomainError("ece: n_bins must be positive");

    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<std::size_t> hits(n_bins, 0), counts(n_bins, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) throw DomainError("ece: confidence outside [0,1]");
        // Snap values sitting on a bin edge (0.3 * 10 == 2.9999...) into the upper bin.
        auto b = static_cast<std::size_t>(std::floor(c * static_cast<double>(n_bins) + 1e-9));
        b = std::min(b, n_bins - 1);
        conf_sum[b] += c;
        counts[b] += 1;
        hits[b] += correct[i] ? 1 : 0;
    }

    EceReport report;
    report.n_total = confidences.size();
    const double n = static_cast<double>(report.n_total);
    for (std::size_t b = 0; b < n_bins; ++b) {
        EceBin bin;
        bin.lo = static_cast<double>(b) / static_cast<double>(n_bins);
        bin.hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        bin.count = counts[b];
        if (counts[b] > 0) {
            bin.mean_confidence = conf_sum[b] / static_cast<double>(counts[b]);
            bin.accuracy = static_cast<double>(hits[b]) / static_cast<double>(counts[b]);
            report.ece += (static_cast<double>(counts[b]) / n) *
                          std::abs(bin.mean_confidence - bin.accuracy);
        }
        report.bins.push_back(bin);
    }
    return report;
}

// --- correlation ------------------------------------------------------------

double phi_from_counts(double n11, double n10, double n01, double n00, Warnings* warnings) {
    const double r1 = n11 + n10, r0 = n01 + n00, c1 = n11 + n01, c0 = n10 + n00;
    const double denom = r1 * r0 * c1 * c0;
    if (denom <= 0.0) {
        if (warnings) warnings->push_back("phi: degenerate marginals, reporting 0");
        return 0.0;
    }
    return (n11 * n00 - n10 * n01) / std::sqrt(denom);
}

double phi(const std::vector<bool>& a, const std::vector<bool>& b, Warnings* warnings) {
    require_same_size(a, b, "phi");
    if (a.size() < 2) throw DomainError("phi: need at least 2 pairs");
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && b[i]) ++n11;
        else if (a[i]) ++n10;
        else if (b[i]) ++n01;
        else ++n00;
    }
    return phi_from_counts(n11, n10, n01, n00, warnings);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    require_same_size(x, y, "pearson");
    if (x.size() < 2) throw DomainError("pearson: need at least 2 points");
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DomainError("correlation undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> mid_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require_same_size(x, y, "spearman");
    if (x.size() < 3) throw DomainError("spearman: need at least 3 points");
    return pearson(mid_ranks(x), mid_ranks(y));
}

SpearmanTest spearman_test(const std::vector<double>& x, const std::vector<double>& y) {
    SpearmanTest out;
    out.rho = spearman(x, y);
    const std::size_t n = x.size();
    if (n <= kExactSpearmanMax) {
        const auto rx = mid_ranks(x);
        auto ry = mid_ranks(y);
        std::sort(ry.begin(), ry.end());
        std::size_t extreme = 0, total = 0;
        do {
            ++total;
            if (std::abs(pearson(rx, ry)) >= std::abs(out.rho) - 1e-12) ++extreme;
        } while (std::next_permutation(ry.begin(), ry.end()));
        out.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        out.exact = true;
        return out;
    }
    const double r2 = out.rho * out.rho;
    if (r2 >= 1.0) {
        out.p_value = 0.0;
        return out;
    }
    const double df = static_cast<double>(n - 2);
    const double t = std::abs(out.rho) * std::sqrt(df / (1.0 - r2));
    boost::math::students_t_distribution<double> dist(df);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    return out;
}

double point_biserial(const std::vector<bool>& flags, const std::vector<double>& values) {
    require_same_size(flags, values, "point_biserial");
    if (flags.size() < 3) throw DomainError("point_biserial: need at least 3 points");
    const auto ones = std::count(flags.begin(), flags.end(), true);
    if (ones == 0 || static_cast<std::size_t>(ones) == flags.size()) {
        throw DomainError("point_biserial: flag has a single class");
    }
    return pearson(as_doubles(flags), values);
}

// --- ROC --------------------------------------------------------------------

double auc_mann_whitney(const std::vector<double>& scores, const std::vector<bool>& labels) {
    require_same_size(scores, labels, "auc");
    const auto ranks = mid_ranks(scores);
    double n_pos = 0, rank_sum = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            n_pos += 1;
            rank_sum += ranks[i];
        }
    }
    const double n_neg = static_cast<double>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DomainError("auc: labels hold a single class");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double auc_trapezoid(const std::vector<RocPoint>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    }
    return area;
}

RocReport roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    require_same_size(scores, labels, "roc_auc");
    RocReport report;
    report.n_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    report.n_negative = labels.size() - report.n_positive;
    if (report.n_positive == 0 || report.n_negative == 0) {
        throw DomainError("roc_auc: labels hold a single class");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw DomainError("roc_auc: non-finite score");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const double P = static_cast<double>(report.n_positive);
    const double N = static_cast<double>(report.n_negative);
    report.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        report.points.push_back({fp / N, tp / P, threshold});
    }

    report.auc = auc_mann_whitney(scores, labels);

    // Points run in increasing fpr, so the first maximum has the highest specificity.
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : report.points) {
        const double sens = p.tpr, spec = 1.0 - p.fpr;
        const double j = youden_j(sens, spec);
        if (j > best) {
            best = j;
            report.youden_threshold = p.threshold;
            report.sensitivity_at_youden = sens;
            report.specificity_at_youden = spec;
        }
    }
    report.youden_j = youden_j(report.sensitivity_at_youden, report.specificity_at_youden);
    return report;
}

ConditionalAuc conditional_auc(const std::vector<double>& scores, const std::vector<bool>& labels,
                               const std::vector<std::string>& groups) {
    require_same_size(scores, labels, "conditional_auc");
    require_same_size(scores, groups, "conditional_auc");
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);

    ConditionalAuc out;
    for (const auto& [group, idx] : members) {
        std::vector<double> s;
        std::vector<bool> l;
        for (auto i : idx) {
            s.push_back(scores[i]);
            l.push_back(labels[i]);
        }
        const auto pos = std::count(l.begin(), l.end(), true);
        if (pos == 0 || static_cast<std::size_t>(pos) == l.size()) {
            out.warnings.push_back("conditional_auc: group \"" + group +
                                   "\" has a single class; skipped");
            continue;
        }
        out.groups.emplace(group, roc_auc(s, l));
    }
    return out;
}

// --- tables -----------------------------------------------------------------

std::array<QuintileRow, 5> quintile_rates(const std::vector<double>& values,
                                          const std::vector<bool>& flags) {
    require_same_size(values, flags, "quintile_rates");
    const std::size_t n = values.size();
    if (n < 5) throw DomainError("quintile_rates: need at least 5 values");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::array<double, 4> cuts{};
    for (std::size_t k = 1; k <= 4; ++k) {
        const std::size_t rank = (k * n + 4) / 5;  // ceil(k n / 5)
        cuts[k - 1] = sorted[rank - 1];
    }

    std::array<QuintileRow, 5> rows{};
    std::array<std::size_t, 5> positives{};
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t b = 0;
        while (b < 4 && values[i] > cuts[b]) ++b;
        auto& row = rows[b];
        if (row.n == 0) {
            row.lo = row.hi = values[i];
        } else {
            row.lo = std::min(row.lo, values[i]);
            row.hi = std::max(row.hi, values[i]);
        }
        row.n += 1;
        positives[b] += flags[i] ? 1 : 0;
    }
    for (std::size_t b = 0; b < 5; ++b) {
        if (rows[b].n > 0) {
            rows[b].rate = static_cast<double>(positives[b]) / static_cast<double>(rows[b].n);
        }
    }
    return rows;
}

double balanced_accuracy(double tp, double fp, double fn, double tn) {
    if (tp + fn <= 0.0) throw DomainError("balanced_accuracy: no positive cases");
    if (tn + fp <= 0.0) throw DomainError("balanced_accuracy: no negative cases");
    return (tp / (tp + fn) + tn / (tn + fp)) / 2.0;
}

// --- bootstrap --------------------------------------------------------------

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DomainError("quantile of empty data");
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

RateEstimate rate_with_ci(const std::vector<bool>& flags, const BootstrapOptions& options) {
    RateEstimate out;
    out.n = flags.size();
    const auto data = as_doubles(flags);
    out.rate = mean(data);
    out.ci = bootstrap_ci(data, [](const std::vector<double>& s) { return mean(s); }, options);
    return out;
}

}  // namespace hallu::metrics
