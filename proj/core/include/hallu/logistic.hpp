#pragma once

// L2-regularized logistic regression fitted by Newton/IRLS with a
// backtracking line search, plus seeded k-fold cross-validated AUC.
//
// Columns are z-scored before fitting; coefficients are reported on that
// standardized scale. The minimized objective is the mean negative
// log-likelihood plus (l2/2)·|w|² (the intercept is not penalized).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hallu::metrics {

/// Row-major dense feature matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::vector<std::string> names);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    FeatureMatrix select_rows(const std::vector<std::size_t>& rows) const;

private:
    std::size_t rows_ = 0;
    std::vector<std::string> names_;
    std::vector<double> data_;
};

struct LogisticOptions {
    double l2 = 1e-4;
    std::size_t max_iterations = 500;
    double gradient_tolerance = 1e-6;
};

struct LogisticModel {
    std::vector<std::string> feature_names;
    std::vector<double> coefficients;  // standardized scale
    double intercept = 0.0;
    std::vector<double> column_means;
    std::vector<double> column_scales;
    double training_auc = 0.0;
    std::optional<double> cv_auc;
    bool converged = false;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    std::vector<std::string> warnings;

    double predict_logit(const FeatureMatrix& x, std::size_t row) const;
    double predict_proba(const FeatureMatrix& x, std::size_t row) const;
};

/// Objective on an already-standardized design. beta = [intercept, w...].
class LogisticObjective {
public:
    LogisticObjective(const FeatureMatrix& standardized, const std::vector<bool>& labels, double l2);

    double value(const std::vector<double>& beta) const;
    std::vector<double> gradient(const std::vector<double>& beta) const;

private:
    const FeatureMatrix& x_;
    const std::vector<bool>& y_;
    double l2_;
};

struct Standardized {
    FeatureMatrix matrix;
    std::vector<double> means;
    std::vector<double> scales;
};

/// Z-scores every column; zero-variance columns keep scale 1.
Standardized standardize(const FeatureMatrix& x);

/// Throws DomainError for non-finite features or fewer than 2 samples per class.
LogisticModel logistic_fit(const FeatureMatrix& features, const std::vector<bool>& labels,
                           const LogisticOptions& options = {});

/// Fold index per sample: units (samples, or groups when given) are shuffled
/// with the seed and dealt round-robin into k folds.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                                      const std::vector<std::string>* group_ids = nullptr);

/// AUC of pooled out-of-fold predictions.
double logistic_cv_auc(const FeatureMatrix& features, const std::vector<bool>& labels,
                       std::size_t k = 5, const std::vector<std::string>* group_ids = nullptr,
                       std::uint64_t seed = 0, const LogisticOptions& options = {});

}  // namespace hallu::metrics
