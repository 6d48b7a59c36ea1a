#pragma once

// Seeded synthetic corpora with planted ground truth. Response text is built
// from lexicon terms and default cue phrases only, so the detector must
// recover the plan exactly (unless `adversarial` paraphrases are enabled).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hallu/corpus.hpp"
#include "hallu/detect.hpp"
#include "hallu/extract.hpp"

namespace hallu::synth {

struct CalibrationProfile {
    enum class Kind { None, Perfect, Overconfident } kind = Kind::Perfect;
    /// Stated confidence for Overconfident.
    double confidence = 1.0;

    friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;
};

/// "none", "perfect" or "overconfident(c)".
CalibrationProfile parse_profile(const std::string& text);
std::string to_string(const CalibrationProfile& profile);

struct SynthSpec {
    std::size_t n_images = 100;
    std::vector<std::string> models{"model-1", "model-2", "model-3"};
    LabelMap<double> label_prevalence{0.0};
    LabelMap<double> uncertain_prevalence{0.0};
    /// Probability that an open/clinical record fabricates one Negative label,
    /// or that a VQA record answers YES when NO is expected.
    std::map<std::string, double> per_model_fab_rate;
    /// Probability that each Positive label is left unaffirmed (VQA: answered NO).
    std::map<std::string, double> per_model_omit_rate;
    /// Probability that a Negative label is explicitly negated.
    double negation_mention_rate = 0.3;
    /// Extra characters per planted hallucination.
    double verbosity_coupling = 0.0;
    std::map<std::string, CalibrationProfile> calibration_profile;
    std::uint64_t seed = 0;
    bool adversarial = false;
    std::set<QueryKind> queries{QueryKind::OpenEnded, QueryKind::TargetedVqa, QueryKind::ClinicalReasoning};
    /// Share of VQA queries asking about a Positive label.
    double vqa_positive_rate = 0.79;
    /// Images per patient, on average.
    std::size_t images_per_patient = 4;

    /// Positive and uncertain prevalence of the 856-image reference distribution.
    static SynthSpec defaults();
    double fab_rate(const std::string& model) const;
    double omit_rate(const std::string& model) const;
    CalibrationProfile profile(const std::string& model) const;
    void validate() const;
};

/// Missing keys keep their defaults. "n_models" generates model-1..model-N
/// unless "models" is given; "fab_rate"/"omit_rate" set every model at once.
SynthSpec spec_from_json(const nlohmann::json& doc);
SynthSpec load_spec(const std::filesystem::path& path);

struct PlantedRecord {
    std::string record_id;
    std::vector<PathologyLabel> fabrications;
    std::vector<PathologyLabel> omissions;
    LabelMap<bool> vote_flags{false};
    std::optional<bool> vqa_mismatch;
    bool hallucinated = false;
    /// Probability the record was generated hallucination-free.
    double clean_probability = 1.0;

    friend bool operator==(const PlantedRecord&, const PlantedRecord&) = default;
};

struct PlantedTruth {
    std::vector<PlantedRecord> records;  // corpus record order
    friend bool operator==(const PlantedTruth&, const PlantedTruth&) = default;
};

struct Generated {
    Corpus corpus;
    PlantedTruth planted;
};

/// Deterministic in spec (including seed); images are generated in parallel.
Generated generate(const SynthSpec& spec, const Lexicon& lexicon = Lexicon::defaults(), std::size_t jobs = 1);

std::string to_jsonl(const PlantedRecord& record);
void write_planted(const std::filesystem::path& path, const PlantedTruth& planted);
PlantedTruth load_planted(const std::filesystem::path& path);

struct Mismatch {
    std::string record_id;
    std::string component;  // fabrications | omissions | vote_flags | vqa_mismatch
};

struct VerifyReport {
    std::size_t n_records = 0;
    std::size_t exact_records = 0;
    std::vector<Mismatch> mismatches;
    /// Hallucinated flags of detections scored against planted flags.
    double f1 = 1.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    bool exact() const noexcept { return mismatches.empty(); }
};

VerifyReport verify(const std::vector<DetectionResult>& detections, const PlantedTruth& planted);

}  // namespace hallu::synth
