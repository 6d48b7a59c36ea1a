#pragma once

// Data model and JSONL ingestion for ground truth and model responses.
//
// A corpus file holds two kinds of lines, discriminated by "kind":
//   {"kind":"ground_truth","image_id":..,"patient_id":..,"labels":{..},"report_text":..}
//   {"kind":"eval_record","record_id":..,"image_id":..,"model_id":..,"query_type":..,
//    "queried_label":..,"response_text":..,"stated_confidence":..}

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hallu/types.hpp"

namespace hallu {

struct GroundTruth {
    std::string image_id;
    std::string patient_id;
    LabelMap<LabelState> labels{LabelState::Negative};
    std::string report_text;

    std::size_t positive_count() const noexcept;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Query {
    QueryKind kind = QueryKind::OpenEnded;
    /// Set for TargetedVqa only.
    std::optional<PathologyLabel> queried_label;
    /// Set for TargetedVqa only: true iff queried_label is Positive in ground truth.
    std::optional<bool> expected_yes;

    friend bool operator==(const Query&, const Query&) = default;
};

struct EvalRecord {
    std::string record_id;
    std::string image_id;
    std::string model_id;
    Query query;
    std::string response_text;
    std::optional<double> stated_confidence;
    /// Unicode scalar count of response_text; always recomputed, never read from input.
    std::size_t response_length = 0;

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

Stratum assign_stratum(const GroundTruth& gt) noexcept;

enum class UncertainPolicy { KeepSeparate, UncertainAsNegative };

std::optional<UncertainPolicy> parse_uncertain_policy(std::string_view text) noexcept;
std::string_view to_string(UncertainPolicy policy) noexcept;

GroundTruth apply_uncertain_policy(const GroundTruth& gt, UncertainPolicy policy);

class Corpus {
public:
    Corpus() = default;
    /// Validates cross-references and fills derived fields (response_length,
    /// expected_yes). Throws CorpusError on duplicates or dangling image ids.
    Corpus(std::vector<GroundTruth> ground_truths, std::vector<EvalRecord> records);

    const std::vector<GroundTruth>& ground_truths() const noexcept { return ground_truths_; }
    const std::vector<EvalRecord>& records() const noexcept { return records_; }
    bool empty() const noexcept { return ground_truths_.empty() && records_.empty(); }

    /// Throws std::out_of_range for unknown ids.
    const GroundTruth& ground_truth(const std::string& image_id) const;
    const GroundTruth& ground_truth_for(const EvalRecord& record) const {
        return ground_truth(record.image_id);
    }
    bool has_image(const std::string& image_id) const {
        return image_index_.count(image_id) != 0;
    }

    /// Returns a copy with the policy applied to every ground truth (VQA
    /// expected answers are recomputed against the new labels).
    Corpus with_policy(UncertainPolicy policy) const;

    /// Keeps only records whose model_id is listed; ground truths are kept whole.
    Corpus filter_models(const std::vector<std::string>& models) const;

    /// Distinct model ids in first-appearance order.
    std::vector<std::string> model_ids() const;

    friend bool operator==(const Corpus& a, const Corpus& b) {
        return a.ground_truths_ == b.ground_truths_ && a.records_ == b.records_;
    }

private:
    std::vector<GroundTruth> ground_truths_;
    std::vector<EvalRecord> records_;
    std::unordered_map<std::string, std::size_t> image_index_;
};

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

/// One JSONL line per ground truth (first) and per record, in stored order.
void write_corpus(std::ostream& out, const Corpus& corpus);
std::string to_jsonl(const GroundTruth& gt);
std::string to_jsonl(const EvalRecord& record);

}  // namespace hallu
