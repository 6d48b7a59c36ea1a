#pragma once

// Finding-level ensembles over per-model affirmative votes.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hallu/corpus.hpp"
#include "hallu/detect.hpp"

namespace hallu::ensemble {

struct VoteKey {
    std::string image_id;
    QueryKind query{};
    PathologyLabel label{};
    std::string patient_id;
    LabelState truth{};

    friend bool operator==(const VoteKey&, const VoteKey&) = default;
};

class VoteMatrix {
public:
    VoteMatrix() = default;
    VoteMatrix(std::vector<std::string> models, std::vector<VoteKey> keys, std::vector<std::uint8_t> votes);

    const std::vector<std::string>& models() const noexcept { return models_; }
    const std::vector<VoteKey>& keys() const noexcept { return keys_; }
    std::size_t n_models() const noexcept { return models_.size(); }
    std::size_t n_keys() const noexcept { return keys_.size(); }
    bool vote(std::size_t key, std::size_t model) const { return votes_[key * models_.size() + model] != 0; }
    std::size_t affirmations(std::size_t key) const;

    /// Same keys, only the named models (in the given order).
    VoteMatrix restrict_models(const std::vector<std::string>& subset) const;
    VoteMatrix select_keys(const std::vector<std::size_t>& indices) const;

    friend bool operator==(const VoteMatrix&, const VoteMatrix&) = default;

private:
    std::vector<std::string> models_;
    std::vector<VoteKey> keys_;
    std::vector<std::uint8_t> votes_;  // key-major
};

/// Query types pooled into the matrix. VQA records vote only on their queried label.
using QuerySet = std::set<QueryKind>;
QuerySet default_queries();
QuerySet parse_queries(const std::string& csv);

/// Keys ordered by (ground-truth order of image, query type, label). Throws
/// ValidationError listing (up to 10) keys a model has no vote for.
VoteMatrix build_vote_matrix(const std::vector<DetectionResult>& results, const Corpus& corpus,
                             const std::vector<std::string>& models, const QuerySet& queries = default_queries());

using Predictions = std::vector<bool>;

Predictions simple_vote(const VoteMatrix& matrix, std::size_t k);

enum class WeightMode { PerModel, PerModelPerLabel };

struct WeightTable {
    WeightMode mode = WeightMode::PerModel;
    std::vector<std::string> models;
    /// weights[m][label]; per-model tables repeat the model weight on every label.
    std::vector<LabelMap<double>> weights;
    double threshold = 0.5;
    std::string formula;
    std::vector<std::string> warnings;

    double weight(std::size_t model, PathologyLabel label) const { return weights[model][label]; }
};

/// Inverse-ECE weights normalized to one. Matrix models missing from `ece`
/// get weight 0 and a warning; nonpositive ECE throws DomainError.
WeightTable ece_weights(const std::vector<std::string>& models, const std::map<std::string, double>& ece,
                        double threshold = 0.5);

/// (precision + specificity)/2 per (model, label) with add-one smoothing,
/// normalized within each label. Labels lacking Positive or Negative keys fall
/// back to uniform weights with a warning.
WeightTable label_aware_weights(const VoteMatrix& train);

/// Positive iff the affirming models' weights sum to at least the threshold.
Predictions weighted_vote(const VoteMatrix& matrix, const WeightTable& table);
Predictions ece_weighted_vote(const VoteMatrix& matrix, const std::map<std::string, double>& ece,
                              double threshold = 0.5, std::vector<std::string>* warnings = nullptr);

struct EnsembleMetrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> fabrication_rate;  // FP / (FP + TN)
    std::optional<double> omission_rate;     // 1 - recall
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

/// Uncertain-truth keys are left out of every count.
EnsembleMetrics evaluate(const Predictions& predictions, const VoteMatrix& matrix);

Predictions oracle_predictions(const VoteMatrix& matrix);
EnsembleMetrics oracle_upper_bound(const VoteMatrix& matrix);

struct Strategy {
    enum class Kind { SimpleK, EceWeighted, LabelAware } kind = Kind::SimpleK;
    std::size_t k = 1;
    std::map<std::string, double> ece;
    double threshold = 0.5;
};

Predictions apply_strategy(const VoteMatrix& matrix, const Strategy& strategy, std::vector<std::string>* warnings = nullptr);
/// Label-aware weights are estimated on the restricted matrix itself.
EnsembleMetrics subset_ensemble(const VoteMatrix& matrix, const std::vector<std::string>& subset,
                                const Strategy& strategy);

struct Fold {
    std::vector<std::size_t> train;  // key indices, ascending
    std::vector<std::size_t> test;
    std::vector<std::string> test_patients;
};

std::vector<Fold> patient_disjoint_folds(const VoteMatrix& matrix, std::size_t k = 5, std::uint64_t seed = 0);

struct CvResult {
    std::vector<EnsembleMetrics> train;
    std::vector<EnsembleMetrics> test;
    /// Out-of-fold predictions pooled over all folds.
    EnsembleMetrics pooled_test;
    std::vector<WeightTable> weights;
};

CvResult label_aware_cv(const VoteMatrix& matrix, std::size_t k = 5, std::uint64_t seed = 0, std::size_t jobs = 1);

struct TableRow {
    std::string strategy;
    EnsembleMetrics metrics;
};

struct EnsembleTable {
    std::vector<TableRow> rows;
    std::optional<WeightTable> ece_table;
    std::vector<WeightTable> label_aware_fold_weights;
    std::vector<std::string> warnings;

    /// strategy,fab,omis,prec,rec,f1
    std::string to_csv() const;
};

struct TableOptions {
    /// Leave empty to skip the ECE-weighted row.
    std::map<std::string, double> ece;
    std::size_t cv_folds = 5;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

/// Simple k for every k, ECE-weighted, label-aware (patient-disjoint CV) and the oracle.
EnsembleTable standard_table(const VoteMatrix& matrix, const TableOptions& options);

}  // namespace hallu::ensemble
