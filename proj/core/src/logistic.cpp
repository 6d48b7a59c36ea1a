#include "hallu/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "hallu/error.hpp"
#include "hallu/metrics.hpp"
#include "hallu/random.hpp"

namespace hallu::metrics {

namespace {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Eigen::MatrixXd design(const FeatureMatrix& x) {
    Eigen::MatrixXd d(x.rows(), x.cols() + 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        d(static_cast<Eigen::Index>(r), 0) = 1.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) = x.at(r, c);
        }
    }
    return d;
}

Eigen::VectorXd as_vector(const std::vector<bool>& y) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) v(static_cast<Eigen::Index>(i)) = y[i] ? 1.0 : 0.0;
    return v;
}

double objective(const Eigen::MatrixXd& d, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                 double l2) {
    const Eigen::VectorXd z = d * beta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += y(i) > 0.5 ? softplus(-z(i)) : softplus(z(i));
    loss /= static_cast<double>(z.size());
    return loss + 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

Eigen::VectorXd gradient_of(const Eigen::MatrixXd& d, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& beta, double l2) {
    const Eigen::VectorXd z = d * beta;
    Eigen::VectorXd resid(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) resid(i) = sigmoid(z(i)) - y(i);
    Eigen::VectorXd g = d.transpose() * resid / static_cast<double>(z.size());
    g.tail(g.size() - 1) += l2 * beta.tail(beta.size() - 1);
    return g;
}

void check_inputs(const FeatureMatrix& x, const std::vector<bool>& y) {
    if (x.rows() != y.size()) throw DomainError("logistic: feature rows and labels differ in length");
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            if (!std::isfinite(x.at(r, c))) {
                throw DomainError("logistic: non-finite feature \"" + x.names()[c] + "\" at row " +
                                  std::to_string(r));
            }
        }
    }
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), true));
    if (pos < 2 || y.size() - pos < 2) throw DomainError("logistic: need at least 2 samples per class");
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::vector<std::string> names)
    : rows_(rows), names_(std::move(names)), data_(rows * names_.size(), 0.0) {}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& rows) const {
    FeatureMatrix out(rows.size(), names_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < cols(); ++c) out.at(i, c) = at(rows[i], c);
    }
    return out;
}

double LogisticModel::predict_logit(const FeatureMatrix& x, std::size_t row) const {
    double z = intercept;
    for (std::size_t c = 0; c < coefficients.size(); ++c) {
        z += coefficients[c] * (x.at(row, c) - column_means[c]) / column_scales[c];
    }
    return z;
}

double LogisticModel::predict_proba(const FeatureMatrix& x, std::size_t row) const {
    return sigmoid(predict_logit(x, row));
}

LogisticObjective::LogisticObjective(const FeatureMatrix& standardized, const std::vector<bool>& labels,
                                     double l2)
    : x_(standardized), y_(labels), l2_(l2) {}

double LogisticObjective::value(const std::vector<double>& beta) const {
    const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
    return objective(design(x_), as_vector(y_), b, l2_);
}

std::vector<double> LogisticObjective::gradient(const std::vector<double>& beta) const {
    const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
    const Eigen::VectorXd g = gradient_of(design(x_), as_vector(y_), b, l2_);
    return {g.data(), g.data() + g.size()};
}

Standardized standardize(const FeatureMatrix& x) {
    Standardized out{x, std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 1.0)};
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) m += x.at(r, c);
        m /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) var += (x.at(r, c) - m) * (x.at(r, c) - m);
        const double sd = std::sqrt(var / n);
        out.means[c] = m;
        out.scales[c] = sd > 0.0 ? sd : 1.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            out.matrix.at(r, c) = (x.at(r, c) - m) / out.scales[c];
        }
    }
    return out;
}

LogisticModel logistic_fit(const FeatureMatrix& features, const std::vector<bool>& labels,
                           const LogisticOptions& options) {
    check_inputs(features, labels);
    auto [z, means, scales] = standardize(features);

    LogisticModel model;
    model.feature_names = features.names();
    model.column_means = means;
    model.column_scales = scales;
    for (std::size_t c = 0; c < features.cols(); ++c) {
        double var = 0.0;
        for (std::size_t r = 0; r < z.rows(); ++r) var += z.at(r, c) * z.at(r, c);
        if (var == 0.0) model.warnings.push_back("feature \"" + features.names()[c] + "\" is constant");
    }

    const Eigen::MatrixXd d = design(z);
    const Eigen::VectorXd y = as_vector(labels);
    const auto p = d.cols();
    const double n = static_cast<double>(d.rows());

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    const double prior = y.mean();
    beta(0) = std::log(prior / (1.0 - prior));

    Eigen::MatrixXd ridge = Eigen::MatrixXd::Identity(p, p) * options.l2;
    ridge(0, 0) = 1e-12;

    double f = objective(d, y, beta, options.l2);
    Eigen::VectorXd g = gradient_of(d, y, beta, options.l2);
    std::size_t it = 0;
    for (; it < options.max_iterations && g.norm() >= options.gradient_tolerance; ++it) {
        const Eigen::VectorXd zlin = d * beta;
        Eigen::VectorXd w(zlin.size());
        for (Eigen::Index i = 0; i < zlin.size(); ++i) {
            const double s = sigmoid(zlin(i));
            w(i) = s * (1.0 - s);
        }
        const Eigen::MatrixXd h = d.transpose() * w.asDiagonal() * d / n + ridge;
        Eigen::VectorXd step = h.ldlt().solve(-g);
        if (!step.allFinite() || step.dot(g) >= 0.0) step = -g;

        double t = 1.0;
        Eigen::VectorXd next = beta + step;
        double f_next = objective(d, y, next, options.l2);
        while (f_next > f + 1e-4 * t * g.dot(step) && t > 1e-10) {
            t *= 0.5;
            next = beta + t * step;
            f_next = objective(d, y, next, options.l2);
        }
        if (!(f_next <= f)) break;  // no descent possible; stop at current point
        beta = next;
        f = f_next;
        g = gradient_of(d, y, beta, options.l2);
    }

    model.iterations = it;
    model.gradient_norm = g.norm();
    model.converged = model.gradient_norm < options.gradient_tolerance;
    model.intercept = beta(0);
    model.coefficients.assign(beta.data() + 1, beta.data() + beta.size());

    std::vector<double> scores(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) scores[r] = model.predict_logit(features, r);
    model.training_auc = auc_mann_whitney(scores, labels);
    return model;
}

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                                      const std::vector<std::string>* group_ids) {
    if (k < 2) throw DomainError("cross-validation needs k >= 2");
    std::vector<std::size_t> fold(n);
    Rng rng(seed);
    if (group_ids) {
        if (group_ids->size() != n) throw DomainError("group_ids length differs from sample count");
        std::map<std::string, std::size_t> unit_of;
        for (const auto& g : *group_ids) unit_of.emplace(g, 0);
        if (unit_of.size() < k) {
            throw DomainError("cross-validation: " + std::to_string(unit_of.size()) +
                              " groups is fewer than k=" + std::to_string(k));
        }
        std::vector<std::string> units;
        for (const auto& [g, _] : unit_of) units.push_back(g);
        rng.shuffle(units);
        for (std::size_t i = 0; i < units.size(); ++i) unit_of[units[i]] = i % k;
        for (std::size_t i = 0; i < n; ++i) fold[i] = unit_of[(*group_ids)[i]];
        return fold;
    }
    if (n < k) throw DomainError("cross-validation: fewer samples than folds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % k;
    return fold;
}

double logistic_cv_auc(const FeatureMatrix& features, const std::vector<bool>& labels, std::size_t k,
                       const std::vector<std::string>* group_ids, std::uint64_t seed,
                       const LogisticOptions& options) {
    check_inputs(features, labels);
    const auto fold = assign_folds(features.rows(), k, seed, group_ids);
    std::vector<double> oof(features.rows(), 0.0);
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(i);
        if (test.empty()) continue;
        std::vector<bool> y_train;
        for (auto i : train) y_train.push_back(labels[i]);
        const auto model = logistic_fit(features.select_rows(train), y_train, options);
        for (auto i : test) oof[i] = model.predict_logit(features, i);
    }
    return auc_mann_whitney(oof, labels);
}

}  // namespace hallu::metrics
