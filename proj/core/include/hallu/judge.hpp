#pragma once

// Layer-2 judging: prompt construction, verdict parsing, batch orchestration
// over an abstract client, and agreement statistics against a reference.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hallu/corpus.hpp"
#include "hallu/detect.hpp"
#include "hallu/taxonomy.hpp"

namespace hallu {

struct JudgeReport {
    std::string record_id;
    std::string judge_id;
    std::vector<Verdict> verdicts;  // empty when parse_success is false
    bool parse_success = false;
    std::string raw_response;
    /// Every attempt ended in a transport error.
    bool transport_failed = false;

    bool hallucinated() const noexcept { return parse_success && !verdicts.empty(); }

    friend bool operator==(const JudgeReport&, const JudgeReport&) = default;
};

std::string build_judge_prompt(const EvalRecord& record, const GroundTruth& gt);

struct ParsedVerdicts {
    bool success = false;
    std::vector<Verdict> verdicts;
    std::vector<std::string> warnings;
};

/// Takes the first well-formed JSON array in `raw`; prose and code fences
/// around it are ignored. Out-of-range entries are dropped with a warning.
ParsedVerdicts parse_verdicts(const std::string& raw);

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    /// Raw model output; throws TransportError on a failed exchange.
    virtual std::string send(const std::string& prompt) = 0;
    virtual std::string id() const = 0;
};

struct JudgeOptions {
    std::size_t concurrency_limit = 4;
    std::size_t max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    /// Replaces the real sleep between retries (tests pass a no-op).
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct JudgeRun {
    std::vector<JudgeReport> reports;  // sorted by record_id
    double success_rate = 0.0;
    std::size_t transport_failures = 0;
    std::vector<std::string> warnings;
};

JudgeRun run_judge(JudgeClient& client, const Corpus& corpus, const JudgeOptions& options = {});
JudgeRun run_judge(JudgeClient& client, const std::vector<EvalRecord>& records, const Corpus& corpus,
                   const JudgeOptions& options = {});

/// Deterministic stand-in: A1 per detected fabrication (severity 3 on S1
/// images, else 2) and A2 severity 3 per omission. Not a clinical model.
JudgeReport mock_judge(const EvalRecord& record, const GroundTruth& gt, const Extractor& extractor);
JudgeReport mock_judge(const EvalRecord& record, const GroundTruth& gt, const Lexicon& lexicon,
                       const CueSet& cues);

std::string verdicts_to_json(const std::vector<Verdict>& verdicts);

/// Answers each prompt with the mock verdicts of the record it was built from.
/// Unknown prompts raise TransportError. `fail_record_ids` always fail.
class MockJudgeClient final : public JudgeClient {
public:
    MockJudgeClient(const Corpus& corpus, const Extractor& extractor, std::vector<std::string> fail_record_ids = {});
    std::string send(const std::string& prompt) override;
    std::string id() const override { return "mock"; }

private:
    std::map<std::string, std::string> responses_;
    std::map<std::string, std::string> failing_;
};

std::string to_jsonl(const JudgeReport& report);
JudgeReport judge_report_from_json(const nlohmann::json& obj);
std::vector<JudgeReport> load_judge_reports(const std::filesystem::path& path);

// --- agreement ------------------------------------------------------------------

struct HumanAnnotation {
    std::string record_id;
    bool hallucinated = false;
    std::optional<std::vector<Verdict>> verdicts;
};

std::vector<HumanAnnotation> parse_annotations(std::istream& in);
std::vector<HumanAnnotation> load_annotations(const std::filesystem::path& path);

/// One side of an agreement comparison.
struct Assessment {
    std::string record_id;
    bool hallucinated = false;
    std::optional<std::vector<Verdict>> verdicts;
};

std::vector<Assessment> assessments_from(const std::vector<DetectionResult>& detections);
/// Reports that failed to parse are left out.
std::vector<Assessment> assessments_from(const std::vector<JudgeReport>& reports);
std::vector<Assessment> assessments_from(const std::vector<HumanAnnotation>& annotations);

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const noexcept { return tp + fp + fn + tn; }
};

struct AgreementStats {
    Confusion confusion;
    double cohen_kappa = 0.0;
    double percent_agreement = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> severity3_concordance;
    std::optional<double> severity_within_1;
    std::optional<double> type_overlap;
    std::size_t n_paired = 0;
    std::size_t n_verdict_pairs = 0;
    std::vector<std::string> warnings;
};

/// Cohen's kappa over arbitrary category codes. Degenerate marginals
/// (p_e = 1) give 0 and a warning.
double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b, std::vector<std::string>* warnings = nullptr);
double cohen_kappa(const std::vector<bool>& a, const std::vector<bool>& b, std::vector<std::string>* warnings = nullptr);

/// Precision/recall/F1/kappa of `predicted` against `reference` from a confusion table.
AgreementStats agreement_from_confusion(const Confusion& c);

/// `reference` plays the annotator role. Every reference id must appear in
/// `predicted`; predicted records without a reference are ignored.
AgreementStats validate_against_human(const std::vector<Assessment>& predicted,
                                      const std::vector<Assessment>& reference);

nlohmann::ordered_json to_json(const AgreementStats& stats);

}  // namespace hallu
