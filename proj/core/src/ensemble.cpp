#include "hallu/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "hallu/error.hpp"
#include "hallu/format.hpp"
#include "hallu/parallel.hpp"
#include "hallu/random.hpp"

namespace hallu::ensemble {

VoteMatrix::VoteMatrix(std::vector<std::string> models, std::vector<VoteKey> keys, std::vector<std::uint8_t> votes)
    : models_(std::move(models)), keys_(std::move(keys)), votes_(std::move(votes)) {
    if (votes_.size() != keys_.size() * models_.size()) throw ValidationError("vote matrix: vote count mismatch");
}

std::size_t VoteMatrix::affirmations(std::size_t key) const {
    std::size_t n = 0;
    for (std::size_t m = 0; m < models_.size(); ++m) n += vote(key, m) ? 1 : 0;
    return n;
}

VoteMatrix VoteMatrix::restrict_models(const std::vector<std::string>& subset) const {
    if (subset.empty()) throw ValidationError("model subset is empty");
    std::vector<std::size_t> cols;
    for (const auto& name : subset) {
        auto it = std::find(models_.begin(), models_.end(), name);
        if (it == models_.end()) throw ValidationError("unknown model \"" + name + "\" in subset");
        cols.push_back(static_cast<std::size_t>(it - models_.begin()));
    }
    std::vector<std::uint8_t> votes;
    votes.reserve(keys_.size() * cols.size());
    for (std::size_t k = 0; k < keys_.size(); ++k) {
        for (auto c : cols) votes.push_back(votes_[k * models_.size() + c]);
    }
    return VoteMatrix(subset, keys_, std::move(votes));
}

VoteMatrix VoteMatrix::select_keys(const std::vector<std::size_t>& indices) const {
    std::vector<VoteKey> keys;
    std::vector<std::uint8_t> votes;
    keys.reserve(indices.size());
    votes.reserve(indices.size() * models_.size());
    for (auto i : indices) {
        keys.push_back(keys_.at(i));
        votes.insert(votes.end(), votes_.begin() + static_cast<std::ptrdiff_t>(i * models_.size()),
                     votes_.begin() + static_cast<std::ptrdiff_t>((i + 1) * models_.size()));
    }
    return VoteMatrix(models_, std::move(keys), std::move(votes));
}

QuerySet default_queries() { return {QueryKind::OpenEnded, QueryKind::TargetedVqa, QueryKind::ClinicalReasoning}; }

QuerySet parse_queries(const std::string& csv) {
    QuerySet out;
    std::stringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto kind = parse_query_kind(item);
        if (!kind) throw ValidationError("unknown query type \"" + item + "\"");
        out.insert(*kind);
    }
    if (out.empty()) throw ValidationError("query set is empty");
    return out;
}

VoteMatrix build_vote_matrix(const std::vector<DetectionResult>& results, const Corpus& corpus,
                             const std::vector<std::string>& models, const QuerySet& queries) {
    const auto& records = corpus.records();
    if (results.size() != records.size()) throw ValidationError("vote matrix: results do not align with records");
    if (models.empty()) throw ValidationError("vote matrix: no models");

    std::unordered_map<std::string, std::size_t> model_col, image_pos;
    for (std::size_t m = 0; m < models.size(); ++m) {
        if (!model_col.emplace(models[m], m).second) throw ValidationError("duplicate model \"" + models[m] + "\"");
    }
    for (std::size_t i = 0; i < corpus.ground_truths().size(); ++i) image_pos.emplace(corpus.ground_truths()[i].image_id, i);

    using Tuple = std::tuple<std::size_t, int, int>;  // image position, query, label
    std::map<Tuple, std::vector<std::int8_t>> cells;   // -1 = no vote yet
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        auto col = model_col.find(rec.model_id);
        if (col == model_col.end() || !queries.count(rec.query.kind)) continue;
        std::vector<PathologyLabel> labels;
        if (rec.query.kind == QueryKind::TargetedVqa) {
            if (rec.query.queried_label) labels.push_back(*rec.query.queried_label);
        } else {
            labels.assign(kAllLabels.begin(), kAllLabels.end());
        }
        for (auto l : labels) {
            Tuple t{image_pos.at(rec.image_id), static_cast<int>(rec.query.kind), static_cast<int>(index_of(l))};
            auto& cell = cells.try_emplace(t, std::vector<std::int8_t>(models.size(), -1)).first->second;
            if (cell[col->second] != -1) {
                throw ValidationError("vote matrix: model \"" + rec.model_id + "\" has more than one record for image \"" +
                                      rec.image_id + "\", query " + std::string(to_string(rec.query.kind)));
            }
            cell[col->second] = results[i].vote_flags[l] ? 1 : 0;
        }
    }

    std::vector<VoteKey> keys;
    std::vector<std::uint8_t> votes;
    std::vector<std::string> gaps;
    std::size_t n_gaps = 0;
    for (const auto& [t, cell] : cells) {
        const auto& gt = corpus.ground_truths()[std::get<0>(t)];
        const auto label = kAllLabels[static_cast<std::size_t>(std::get<2>(t))];
        const auto kind = static_cast<QueryKind>(std::get<1>(t));
        for (std::size_t m = 0; m < models.size(); ++m) {
            if (cell[m] != -1) continue;
            if (++n_gaps <= 10) {
                gaps.push_back(models[m] + " @ (" + gt.image_id + ", " + std::string(to_string(kind)) + ", " +
                               std::string(to_string(label)) + ")");
            }
        }
        keys.push_back({gt.image_id, kind, label, gt.patient_id, gt.labels[label]});
        for (auto v : cell) votes.push_back(v == 1 ? 1 : 0);
    }
    if (n_gaps > 0) {
        std::string msg = "vote matrix: " + std::to_string(n_gaps) + " missing votes:";
        for (const auto& g : gaps) msg += "\n  " + g;
        if (n_gaps > gaps.size()) msg += "\n  ...";
        throw ValidationError(msg);
    }
    if (keys.empty()) throw ValidationError("vote matrix: no records for the selected models and queries");
    return VoteMatrix(models, std::move(keys), std::move(votes));
}

Predictions simple_vote(const VoteMatrix& matrix, std::size_t k) {
    if (k < 1 || k > matrix.n_models()) {
        throw ValidationError("simple vote: k=" + std::to_string(k) + " outside [1, " + std::to_string(matrix.n_models()) + "]");
    }
    Predictions out(matrix.n_keys());
    for (std::size_t i = 0; i < matrix.n_keys(); ++i) out[i] = matrix.affirmations(i) >= k;
    return out;
}

namespace {

constexpr double kWeightTolerance = 1e-9;

}  // namespace

WeightTable ece_weights(const std::vector<std::string>& models, const std::map<std::string, double>& ece,
                        double threshold) {
    WeightTable table;
    table.mode = WeightMode::PerModel;
    table.models = models;
    table.threshold = threshold;
    table.formula = "w_m = (1/ece_m) / sum(1/ece)";
    std::vector<double> raw(models.size(), 0.0);
    double total = 0;
    for (std::size_t m = 0; m < models.size(); ++m) {
        auto it = ece.find(models[m]);
        if (it == ece.end()) {
            table.warnings.push_back("model \"" + models[m] + "\" has no ECE; excluded from weighting");
            continue;
        }
        if (!(it->second > 0)) throw DomainError("ECE for \"" + models[m] + "\" must be positive");
        raw[m] = 1.0 / it->second;
        total += raw[m];
    }
    if (total == 0) throw ValidationError("no model has an ECE value");
    for (std::size_t m = 0; m < models.size(); ++m) table.weights.emplace_back(raw[m] / total);
    return table;
}

WeightTable label_aware_weights(const VoteMatrix& train) {
    if (train.n_keys() == 0) throw ValidationError("label-aware weights: empty training matrix");
    const auto M = train.n_models();
    struct Counts { double tp = 0, fp = 0, tn = 0, pos = 0, neg = 0; };
    std::vector<LabelMap<Counts>> counts(M);
    for (std::size_t k = 0; k < train.n_keys(); ++k) {
        const auto& key = train.keys()[k];
        if (key.truth == LabelState::Uncertain) continue;
        const bool positive = key.truth == LabelState::Positive;
        for (std::size_t m = 0; m < M; ++m) {
            auto& c = counts[m][key.label];
            const bool v = train.vote(k, m);
            c.pos += positive ? 1 : 0;
            c.neg += positive ? 0 : 1;
            if (v && positive) c.tp += 1;
            if (v && !positive) c.fp += 1;
            if (!v && !positive) c.tn += 1;
        }
    }
    WeightTable table;
    table.mode = WeightMode::PerModelPerLabel;
    table.models = train.models();
    table.threshold = 0.5;
    table.formula = "w_{m,L} = ((TP+1)/(TP+FP+2) + (TN+1)/(TN+FP+2)) / 2, normalized per label";
    table.weights.assign(M, LabelMap<double>(0.0));
    for (auto label : kAllLabels) {
        const auto& c0 = counts[0][label];
        if (c0.pos == 0 || c0.neg == 0) {
            table.warnings.push_back("label " + std::string(to_string(label)) +
                                     " lacks positive or negative training keys; uniform weights");
            for (std::size_t m = 0; m < M; ++m) table.weights[m][label] = 1.0 / static_cast<double>(M);
            continue;
        }
        double total = 0;
        for (std::size_t m = 0; m < M; ++m) {
            const auto& c = counts[m][label];
            const double precision = (c.tp + 1) / (c.tp + c.fp + 2);
            const double specificity = (c.tn + 1) / (c.tn + c.fp + 2);
            table.weights[m][label] = (precision + specificity) / 2;
            total += table.weights[m][label];
        }
        for (std::size_t m = 0; m < M; ++m) table.weights[m][label] /= total;
    }
    return table;
}

Predictions weighted_vote(const VoteMatrix& matrix, const WeightTable& table) {
    if (table.models != matrix.models()) throw ValidationError("weight table models do not match the vote matrix");
    Predictions out(matrix.n_keys());
    for (std::size_t k = 0; k < matrix.n_keys(); ++k) {
        const auto label = matrix.keys()[k].label;
        double sum = 0;
        for (std::size_t m = 0; m < matrix.n_models(); ++m) {
            if (matrix.vote(k, m)) sum += table.weight(m, label);
        }
        out[k] = sum >= table.threshold - kWeightTolerance;
    }
    return out;
}

Predictions ece_weighted_vote(const VoteMatrix& matrix, const std::map<std::string, double>& ece, double threshold,
                              std::vector<std::string>* warnings) {
    auto table = ece_weights(matrix.models(), ece, threshold);
    if (warnings) warnings->insert(warnings->end(), table.warnings.begin(), table.warnings.end());
    return weighted_vote(matrix, table);
}

EnsembleMetrics evaluate(const Predictions& predictions, const VoteMatrix& matrix) {
    if (predictions.size() != matrix.n_keys()) throw ValidationError("predictions do not cover the vote matrix");
    EnsembleMetrics e;
    for (std::size_t k = 0; k < matrix.n_keys(); ++k) {
        const auto truth = matrix.keys()[k].truth;
        if (truth == LabelState::Uncertain) continue;
        const bool positive = truth == LabelState::Positive;
        if (predictions[k] && positive) ++e.tp;
        else if (predictions[k]) ++e.fp;
        else if (positive) ++e.fn;
        else ++e.tn;
    }
    const double tp = static_cast<double>(e.tp), fp = static_cast<double>(e.fp);
    const double fn = static_cast<double>(e.fn), tn = static_cast<double>(e.tn);
    if (fp + tn > 0) e.fabrication_rate = fp / (fp + tn);
    if (tp + fn > 0) {
        e.recall = tp / (tp + fn);
        e.omission_rate = 1.0 - *e.recall;
    }
    if (tp + fp > 0) e.precision = tp / (tp + fp);
    if (e.precision && e.recall && *e.precision + *e.recall > 0) {
        e.f1 = 2 * *e.precision * *e.recall / (*e.precision + *e.recall);
    }
    return e;
}

Predictions oracle_predictions(const VoteMatrix& matrix) {
    Predictions out(matrix.n_keys());
    for (std::size_t k = 0; k < matrix.n_keys(); ++k) {
        const bool truth = matrix.keys()[k].truth == LabelState::Positive;
        bool any_correct = false;
        for (std::size_t m = 0; m < matrix.n_models() && !any_correct; ++m) any_correct = matrix.vote(k, m) == truth;
        out[k] = any_correct ? truth : matrix.affirmations(k) * 2 > matrix.n_models();
    }
    return out;
}

EnsembleMetrics oracle_upper_bound(const VoteMatrix& matrix) { return evaluate(oracle_predictions(matrix), matrix); }

Predictions apply_strategy(const VoteMatrix& matrix, const Strategy& strategy, std::vector<std::string>* warnings) {
    switch (strategy.kind) {
        case Strategy::Kind::SimpleK: return simple_vote(matrix, strategy.k);
        case Strategy::Kind::EceWeighted: return ece_weighted_vote(matrix, strategy.ece, strategy.threshold, warnings);
        case Strategy::Kind::LabelAware: {
            auto table = label_aware_weights(matrix);
            if (warnings) warnings->insert(warnings->end(), table.warnings.begin(), table.warnings.end());
            return weighted_vote(matrix, table);
        }
    }
    return {};
}

EnsembleMetrics subset_ensemble(const VoteMatrix& matrix, const std::vector<std::string>& subset,
                                const Strategy& strategy) {
    const auto restricted = matrix.restrict_models(subset);
    return evaluate(apply_strategy(restricted, strategy), restricted);
}

std::vector<Fold> patient_disjoint_folds(const VoteMatrix& matrix, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("patient folds: k must be at least 2");
    std::vector<std::string> patients;
    for (const auto& key : matrix.keys()) patients.push_back(key.patient_id);
    std::sort(patients.begin(), patients.end());
    patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
    if (patients.size() < k) {
        throw ValidationError("patient folds: " + std::to_string(patients.size()) + " patients for " + std::to_string(k) + " folds");
    }
    Rng rng(seed);
    rng.shuffle(patients);
    std::unordered_map<std::string, std::size_t> fold_of;
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < patients.size(); ++i) {
        fold_of[patients[i]] = i % k;
        folds[i % k].test_patients.push_back(patients[i]);
    }
    for (auto& f : folds) std::sort(f.test_patients.begin(), f.test_patients.end());
    for (std::size_t i = 0; i < matrix.n_keys(); ++i) {
        const auto f = fold_of.at(matrix.keys()[i].patient_id);
        for (std::size_t j = 0; j < k; ++j) (j == f ? folds[j].test : folds[j].train).push_back(i);
    }
    return folds;
}

CvResult label_aware_cv(const VoteMatrix& matrix, std::size_t k, std::uint64_t seed, std::size_t jobs) {
    const auto folds = patient_disjoint_folds(matrix, k, seed);
    CvResult cv;
    cv.train.resize(k);
    cv.test.resize(k);
    cv.weights.resize(k);
    Predictions pooled(matrix.n_keys());
    std::vector<Predictions> fold_predictions(k);
    parallel_for(k, jobs, [&](std::size_t f) {
        const auto train = matrix.select_keys(folds[f].train);
        const auto test = matrix.select_keys(folds[f].test);
        cv.weights[f] = label_aware_weights(train);
        cv.train[f] = evaluate(weighted_vote(train, cv.weights[f]), train);
        fold_predictions[f] = weighted_vote(test, cv.weights[f]);
        cv.test[f] = evaluate(fold_predictions[f], test);
    });
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t i = 0; i < folds[f].test.size(); ++i) pooled[folds[f].test[i]] = fold_predictions[f][i];
    }
    cv.pooled_test = evaluate(pooled, matrix);
    return cv;
}

std::string EnsembleTable::to_csv() const {
    std::ostringstream out;
    out << "strategy,fab,omis,prec,rec,f1\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        out << csv_field(r.strategy) << ',' << fmt_optional(m.fabrication_rate, 4) << ','
            << fmt_optional(m.omission_rate, 4) << ',' << fmt_optional(m.precision, 4) << ','
            << fmt_optional(m.recall, 4) << ',' << fmt_optional(m.f1, 4) << '\n';
    }
    return out.str();
}

EnsembleTable standard_table(const VoteMatrix& matrix, const TableOptions& options) {
    EnsembleTable table;
    for (std::size_t k = 1; k <= matrix.n_models(); ++k) {
        table.rows.push_back({"simple_k>=" + std::to_string(k), evaluate(simple_vote(matrix, k), matrix)});
    }
    if (!options.ece.empty()) {
        auto weights = ece_weights(matrix.models(), options.ece);
        table.rows.push_back({"ece_weighted", evaluate(weighted_vote(matrix, weights), matrix)});
        table.warnings.insert(table.warnings.end(), weights.warnings.begin(), weights.warnings.end());
        table.ece_table = std::move(weights);
    }
    auto cv = label_aware_cv(matrix, options.cv_folds, options.seed, options.jobs);
    table.rows.push_back({"label_aware_cv", cv.pooled_test});
    for (auto& w : cv.weights) {
        table.warnings.insert(table.warnings.end(), w.warnings.begin(), w.warnings.end());
        table.label_aware_fold_weights.push_back(std::move(w));
    }
    table.rows.push_back({"oracle", oracle_upper_bound(matrix)});
    return table;
}

}  // namespace hallu::ensemble
