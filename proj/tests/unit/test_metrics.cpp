#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hallu/metrics.hpp"

using namespace hallu;
using namespace hallu::metrics;

namespace {

/// Ranks by brute force: average of 1-based positions holding an equal value.
std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double x : v) {
            less += x < v[i];
            equal += x == v[i];
        }
        out[i] = less + (equal + 1) / 2.0;
    }
    return out;
}

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Ece, SingleBinAlgebra) {
    std::vector<double> conf(100, 1.0);
    std::vector<bool> correct(100);
    for (int i = 0; i < 100; ++i) correct[i] = i % 2 == 0;
    auto r = ece(conf, correct);
    EXPECT_NEAR(r.ece, 0.5, 1e-12);
    EXPECT_EQ(r.bins.size(), 10u);
    EXPECT_EQ(r.bins.back().count, 100u);
    EXPECT_EQ(r.n_total, 100u);
}

TEST(Ece, ExactlyCalibrated) {
    // 10 of 40 correct at confidence 0.25.
    std::vector<double> conf(40, 0.25);
    std::vector<bool> correct(40, false);
    for (int i = 0; i < 10; ++i) correct[i * 4] = true;
    EXPECT_NEAR(ece(conf, correct).ece, 0.0, 1e-12);
}

TEST(Ece, SimulatedCalibration) {
    Rng rng(2024);
    std::vector<double> conf(10000);
    std::vector<bool> correct(10000);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        conf[i] = rng.uniform();
        correct[i] = rng.bernoulli(conf[i]);
    }
    EXPECT_LT(ece(conf, correct).ece, 0.02);
}

TEST(Ece, BinEdges) {
    auto r = ece({0.0, 0.1, 0.999, 1.0}, {false, true, true, true}, 10);
    EXPECT_EQ(r.bins[0].count, 1u);
    EXPECT_EQ(r.bins[1].count, 1u);
    EXPECT_EQ(r.bins[9].count, 2u);
    EXPECT_THROW(ece({1.2}, {true}), std::exception);
}

TEST(Phi, Counts) {
    EXPECT_NEAR(phi_from_counts(3, 1, 1, 3), 0.5, 1e-12);
    std::vector<bool> a{1, 0, 1, 0, 1};
    EXPECT_NEAR(phi(a, a), 1.0, 1e-12);
    Warnings w;
    EXPECT_EQ(phi({1, 1, 1}, {1, 0, 1}, &w), 0.0);
    EXPECT_EQ(w.size(), 1u);
}

TEST(Phi, IndependentCoins) {
    Rng rng(5);
    std::vector<bool> a(10000), b(10000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.bernoulli(0.5);
        b[i] = rng.bernoulli(0.5);
    }
    EXPECT_LT(std::abs(phi(a, b)), 0.05);
}

TEST(Spearman, Monotone) {
    std::vector<double> x{1, 2, 3, 4, 5, 6};
    std::vector<double> y{2, 4, 8, 16, 32, 64};
    EXPECT_NEAR(spearman(x, y), 1.0, 1e-12);
    std::vector<double> r(y.rbegin(), y.rend());
    EXPECT_NEAR(spearman(x, r), -1.0, 1e-12);
}

TEST(Spearman, TieHeavyMatchesBruteForce) {
    std::vector<double> x{1, 2, 2, 3, 3, 3, 4, 5, 5, 6};
    std::vector<double> y{2, 1, 1, 3, 2, 2, 5, 4, 4, 4};
    EXPECT_EQ(mid_ranks(x), brute_ranks(x));
    EXPECT_NEAR(spearman(x, y), brute_pearson(brute_ranks(x), brute_ranks(y)), 1e-12);
}

TEST(Spearman, ExactPValueByEnumeration) {
    std::vector<double> x{1, 2, 3, 4, 5, 6};
    std::vector<double> y{2, 1, 4, 3, 6, 5};
    const double rho = spearman(x, y);
    std::vector<double> perm = y;
    std::sort(perm.begin(), perm.end());
    std::size_t extreme = 0, total = 0;
    do {
        ++total;
        if (std::abs(brute_pearson(x, perm)) >= std::abs(rho) - 1e-12) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
    auto t = spearman_test(x, y);
    EXPECT_TRUE(t.exact);
    EXPECT_NEAR(t.p_value, static_cast<double>(extreme) / static_cast<double>(total), 1e-12);

    std::vector<double> big(30), other(30);
    std::iota(big.begin(), big.end(), 0.0);
    for (int i = 0; i < 30; ++i) other[i] = (i * 7) % 30;
    auto approx = spearman_test(big, other);
    EXPECT_FALSE(approx.exact);
    EXPECT_GT(approx.p_value, 0.0);
    EXPECT_LE(approx.p_value, 1.0);
}

TEST(PointBiserial, ClosedForm) {
    std::vector<bool> f;
    std::vector<double> v;
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const bool flag = i % 3 == 0;
        f.push_back(flag);
        v.push_back((flag ? 5.0 : 2.0) + rng.normal());
    }
    double m1 = 0, m0 = 0, n1 = 0, n0 = 0, mean_all = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        mean_all += v[i] / v.size();
        if (f[i]) {
            m1 += v[i];
            ++n1;
        } else {
            m0 += v[i];
            ++n0;
        }
    }
    m1 /= n1;
    m0 /= n0;
    double var = 0;
    for (double x : v) var += (x - mean_all) * (x - mean_all) / v.size();
    const double p = n1 / v.size(), q = n0 / v.size();
    EXPECT_NEAR(point_biserial(f, v), std::sqrt(p * q) * (m1 - m0) / std::sqrt(var), 1e-12);
    EXPECT_THROW(point_biserial({true, false, true}, {1.0, 1.0, 1.0}), DomainError);
}

TEST(PointBiserial, IndependentIsNearZero) {
    Rng rng(9);
    std::vector<bool> f(10000);
    std::vector<double> v(10000);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = rng.bernoulli(0.3);
        v[i] = rng.normal();
    }
    EXPECT_LT(std::abs(point_biserial(f, v)), 0.05);
}

TEST(Roc, Separable) {
    auto r = roc_auc({0.1, 0.2, 0.3, 0.8, 0.9}, {false, false, false, true, true});
    EXPECT_DOUBLE_EQ(r.auc, 1.0);
    EXPECT_DOUBLE_EQ(r.youden_j, 1.0);
    EXPECT_DOUBLE_EQ(r.youden_threshold, 0.8);
    EXPECT_EQ(r.n_positive, 2u);
    EXPECT_TRUE(std::isinf(r.points.front().threshold));
    EXPECT_THROW(roc_auc({0.1, 0.2}, {true, true}), DomainError);
}

TEST(Roc, TiesCountHalf) {
    std::vector<double> s{1, 1, 1, 1};
    std::vector<bool> l{true, false, true, false};
    EXPECT_DOUBLE_EQ(auc_mann_whitney(s, l), 0.5);
    auto r = roc_auc(s, l);
    EXPECT_DOUBLE_EQ(r.auc, 0.5);
    EXPECT_EQ(r.points.size(), 2u);
}

TEST(Roc, TrapezoidAgreesWithMannWhitney) {
    Rng rng(3);
    std::vector<double> s(500);
    std::vector<bool> l(500);
    for (std::size_t i = 0; i < s.size(); ++i) {
        l[i] = rng.bernoulli(0.4);
        s[i] = std::round((rng.normal() + (l[i] ? 0.8 : 0.0)) * 4) / 4;  // coarse, tie-heavy
    }
    auto r = roc_auc(s, l);
    EXPECT_NEAR(auc_trapezoid(r.points), auc_mann_whitney(s, l), 1e-12);
    EXPECT_NEAR(r.auc, auc_mann_whitney(s, l), 1e-12);
}

TEST(Roc, PermutedLabelsNearHalf) {
    Rng rng(77);
    std::vector<double> s(10000);
    std::vector<bool> l(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = rng.normal();
        l[i] = rng.bernoulli(0.3);
    }
    const double auc = roc_auc(s, l).auc;
    EXPECT_GE(auc, 0.48);
    EXPECT_LE(auc, 0.52);
}

TEST(Roc, YoudenIdentity) {
    EXPECT_NEAR(youden_j(0.687, 0.893), 0.580, 1e-12);
    EXPECT_LE(std::abs(youden_j(0.687, 0.893) - 0.579), 0.001 + 1e-12);
}

TEST(ConditionalAuc, Groups) {
    std::vector<double> s{0.1, 0.9, 0.2, 0.8, 0.1, 0.9, 0.2, 0.8, 0.5, 0.6};
    std::vector<bool> l{false, true, false, true, true, false, true, false, true, true};
    std::vector<std::string> g{"a", "a", "a", "a", "b", "b", "b", "b", "c", "c"};
    auto c = conditional_auc(s, l, g);
    EXPECT_DOUBLE_EQ(c.groups.at("a").auc, 1.0);
    EXPECT_DOUBLE_EQ(c.groups.at("b").auc, 0.0);
    EXPECT_EQ(c.groups.count("c"), 0u);
    EXPECT_EQ(c.warnings.size(), 1u);

    std::vector<std::string> one(s.size(), "all");
    std::vector<bool> l2(l.begin(), l.end());
    EXPECT_DOUBLE_EQ(conditional_auc(s, l2, one).groups.at("all").auc, roc_auc(s, l2).auc);
}

TEST(Quintiles, Boundaries) {
    auto q = quintile_rates({5, 1, 3, 2, 4}, {true, false, true, false, true});
    for (const auto& row : q) EXPECT_EQ(row.n, 1u);
    EXPECT_DOUBLE_EQ(*q[0].rate, 0.0);
    EXPECT_DOUBLE_EQ(*q[4].rate, 1.0);

    std::vector<double> same(50, 7.0);
    auto all = quintile_rates(same, std::vector<bool>(50, true));
    EXPECT_EQ(all[0].n, 50u);
    for (const auto& row : all) {
        if (row.n) EXPECT_DOUBLE_EQ(*row.rate, 1.0);
        else EXPECT_FALSE(row.rate);
    }
}

TEST(Quintiles, MonotoneRiskInLength) {
    Rng rng(12);
    std::vector<double> len(5000);
    std::vector<bool> flag(5000);
    for (std::size_t i = 0; i < len.size(); ++i) {
        len[i] = 50 + 500 * rng.uniform();
        flag[i] = rng.bernoulli((len[i] - 50) / 500);
    }
    auto q = quintile_rates(len, flag);
    for (std::size_t b = 2; b < 5; ++b) EXPECT_GE(*q[b].rate, *q[b - 1].rate);
}

TEST(BalancedAccuracy, Values) {
    EXPECT_DOUBLE_EQ(balanced_accuracy(10, 0, 0, 10), 1.0);
    EXPECT_DOUBLE_EQ(balanced_accuracy(80, 20, 0, 0), 0.5);
    EXPECT_NEAR(balanced_accuracy(20.8, 11.2, 79.2, 88.8), 0.548, 1e-12);
    EXPECT_THROW(balanced_accuracy(0, 1, 0, 1), DomainError);
}

TEST(Bootstrap, ConstantAndDeterminism) {
    std::vector<double> c(20, 3.5);
    auto ci = bootstrap_ci(c, mean, {200, 0.95, 1});
    EXPECT_DOUBLE_EQ(ci.lo, 3.5);
    EXPECT_DOUBLE_EQ(ci.hi, 3.5);

    Rng rng(1);
    std::vector<double> x(1000);
    for (auto& v : x) v = rng.normal();
    auto a = bootstrap_ci(x, mean, {1000, 0.95, 42});
    auto b = bootstrap_ci(x, mean, {1000, 0.95, 42});
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
    const double expected = 2 * 1.96 / std::sqrt(1000.0);
    EXPECT_NEAR(a.hi - a.lo, expected, 0.3 * expected);
    EXPECT_THROW(bootstrap_ci(std::vector<double>{}, mean), DomainError);
}

TEST(Bootstrap, QuantileInterpolation) {
    std::vector<double> s{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile_sorted(s, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.5), 2.5);
}

TEST(Bootstrap, RateWithCi) {
    std::vector<bool> f(100, false);
    for (int i = 0; i < 30; ++i) f[i] = true;
    auto r = rate_with_ci(f, {500, 0.95, 3});
    EXPECT_DOUBLE_EQ(r.rate, 0.3);
    EXPECT_EQ(r.n, 100u);
    EXPECT_TRUE(r.ci.contains(0.3));
}
