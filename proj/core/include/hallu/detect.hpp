#pragma once

// Layer-1 auto-detection: per-record fabrications and omissions against
// ground truth, plus the aggregate tables built from them.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hallu/corpus.hpp"
#include "hallu/extract.hpp"
#include "hallu/metrics.hpp"
#include "hallu/taxonomy.hpp"

namespace hallu {

struct DetectionResult {
    std::string record_id;
    std::vector<PathologyLabel> fabrications;  // label order
    std::vector<PathologyLabel> omissions;     // label order
    /// TargetedVqa only: parsed answer differs from the expected one (Unparsed counts).
    std::optional<bool> vqa_mismatch;
    std::optional<VqaAnswer> vqa_answer;
    bool hallucinated = false;
    /// True where the record affirms the label.
    LabelMap<bool> vote_flags{false};

    bool textual_hallucination() const noexcept { return !fabrications.empty() || !omissions.empty(); }

    friend bool operator==(const DetectionResult&, const DetectionResult&) = default;
};

/// Uncertain ground truth is neither fabricated nor omitted. Throws
/// ValidationError when record.image_id differs from gt.image_id.
DetectionResult detect_record(const EvalRecord& record, const GroundTruth& gt, const Extractor& extractor);
DetectionResult detect_record(const EvalRecord& record, const GroundTruth& gt, const Lexicon& lexicon,
                              const CueSet& cues);

/// One result per corpus record, in record order.
std::vector<DetectionResult> detect_all(const Corpus& corpus, const Extractor& extractor,
                                        std::size_t jobs = 1);

std::string to_jsonl(const DetectionResult& result);
DetectionResult detection_from_json(const nlohmann::json& obj);
/// Reads detections and checks they line up one-to-one with corpus records.
std::vector<DetectionResult> load_detections(const std::filesystem::path& path, const Corpus& corpus);

// --- rate tables --------------------------------------------------------------

enum class GroupField { Model, Stratum, QueryType };

struct RateRow {
    std::string group;
    double rate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;
};

struct RateTable {
    std::vector<GroupField> fields;
    std::vector<RateRow> rows;
    std::vector<std::string> warnings;

    /// CSV with header group,rate,ci_low,ci_high,n.
    std::string to_csv() const;
};

/// Fraction of flagged records per group (cartesian product of observed
/// values of each field). Groups with no records are omitted with a warning.
/// An empty field list yields a single "all" row.
RateTable rate_table(const std::vector<bool>& flags, const Corpus& corpus,
                     const std::vector<GroupField>& fields, const metrics::BootstrapOptions& bootstrap);

/// hallucinated flags of each result.
std::vector<bool> hallucinated_flags(const std::vector<DetectionResult>& results);

// --- per-label counts ---------------------------------------------------------

struct LabelCounts {
    PathologyLabel label{};
    std::size_t fabrications = 0;
    std::size_t omissions = 0;
    /// (record, label) pairs whose ground truth is Positive.
    std::size_t gt_positive = 0;
    std::optional<double> omission_rate;
};

struct PerLabelTable {
    std::array<LabelCounts, kNumLabels> rows{};
    std::size_t total_fabrications = 0;
    std::size_t total_omissions = 0;

    std::string to_csv() const;
};

PerLabelTable per_label_counts(const std::vector<DetectionResult>& results, const Corpus& corpus);

// --- type x model counts ------------------------------------------------------

struct TypeCountTable {
    std::vector<std::string> models;
    /// counts[type][model]
    std::array<std::vector<std::size_t>, kNumTypes> counts;
    std::array<std::size_t, kNumTypes> row_totals{};
    std::vector<std::size_t> column_totals;
    std::size_t total = 0;

    std::size_t at(HallucinationType type, const std::string& model) const;
    std::string to_csv() const;
};

/// Models appear in first-appearance order unless `model_order` is given.
TypeCountTable type_count_table(const std::vector<std::pair<std::string, Verdict>>& verdicts,
                                const std::vector<std::string>& model_order = {});

// --- query-type cross tab -----------------------------------------------------

struct QueryTypeRow {
    std::string model;
    QueryKind kind{};
    std::size_t n = 0;
    double rate = 0.0;
    /// Rate from fabrication/omission alone.
    double textual_rate = 0.0;
    /// VQA rows only.
    std::optional<double> vqa_mismatch_rate;
    double mean_length = 0.0;
};

struct VqaAccuracyRow {
    std::string model;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0, unparsed = 0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> balanced_accuracy;
};

struct QueryTypeTable {
    std::vector<QueryTypeRow> rows;
    std::vector<VqaAccuracyRow> vqa;

    std::string to_csv() const;
    std::string vqa_to_csv() const;
};

/// Unparsed answers count against the expected answer (FN when YES expected, FP when NO).
QueryTypeTable query_type_table(const std::vector<DetectionResult>& results, const Corpus& corpus);

// --- cross-model correlation --------------------------------------------------

struct PhiEntry {
    std::string model_a;
    std::string model_b;
    double phi = 0.0;
    std::size_t n_pairs = 0;
};

/// phi between hallucinated flags of every model pair, pairing records that
/// share (image, query type, queried label).
std::vector<PhiEntry> model_phi(const std::vector<DetectionResult>& results, const Corpus& corpus,
                                std::vector<std::string>* warnings = nullptr);

}  // namespace hallu
