#include "hallu/judge.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu/parallel.hpp"

namespace hallu {

using nlohmann::json;
using nlohmann::ordered_json;

std::string build_judge_prompt(const EvalRecord& record, const GroundTruth& gt) {
    std::string positive, uncertain;
    for (auto label : kAllLabels) {
        if (gt.labels[label] == LabelState::Negative) continue;
        auto& list = gt.labels[label] == LabelState::Positive ? positive : uncertain;
        if (!list.empty()) list += ", ";
        list += to_string(label);
    }

    std::ostringstream p;
    p << "You are auditing a chest X-ray description written by a vision-language model.\n"
         "Compare the MODEL RESPONSE with the ground-truth labels and the radiologist report.\n\n";
    p << "=== GROUND TRUTH LABELS ===\n"
      << "Positive: " << (positive.empty() ? "none" : positive) << '\n'
      << "Uncertain: " << (uncertain.empty() ? "none" : uncertain) << '\n'
      << "=== END GROUND TRUTH LABELS ===\n\n";
    p << "=== RADIOLOGIST REPORT ===\n" << gt.report_text << "\n=== END RADIOLOGIST REPORT ===\n\n";
    p << "=== MODEL RESPONSE ===\n" << record.response_text << "\n=== END MODEL RESPONSE ===\n\n";
    p << "Identify every hallucination in the model response. Hallucination types:\n";
    for (const auto& t : kTaxonomy) {
        p << "- " << t.code << " " << t.name << " (severity " << t.min_severity << "-" << t.max_severity << ")\n";
    }
    p << "\nSeverity: 1=no clinical impact, 2=unnecessary follow-up, 3=wrong treatment or missed finding.\n\n"
         "Answer with a JSON array only. Each element is an object "
         "{\"type\": \"A1\"..\"C3\", \"severity\": 1..3, \"description\": \"...\"}. "
         "Answer [] if the response contains no hallucination.\n";
    return p.str();
}

namespace {

/// End offset (one past) of the bracket group starting at `open`, or npos.
std::size_t match_bracket(const std::string& s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[' || c == '{') ++depth;
        else if (c == ']' || c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

std::optional<Verdict> verdict_from(const json& v, std::string& problem) {
    if (!v.is_object()) {
        problem = "entry is not an object";
        return std::nullopt;
    }
    auto t = v.find("type");
    if (t == v.end() || !t->is_string()) {
        problem = "missing type";
        return std::nullopt;
    }
    auto type = parse_hallucination_type(t->get<std::string>());
    if (!type) {
        problem = "unknown type \"" + t->get<std::string>() + "\"";
        return std::nullopt;
    }
    auto s = v.find("severity");
    if (s == v.end() || !s->is_number_integer()) {
        problem = "missing integer severity";
        return std::nullopt;
    }
    const int severity = s->get<int>();
    if (!severity_allowed(*type, severity)) {
        problem = "severity " + std::to_string(severity) + " outside range for " + std::string(code(*type));
        return std::nullopt;
    }
    std::string description;
    if (auto d = v.find("description"); d != v.end() && d->is_string()) description = d->get<std::string>();
    return Verdict{*type, severity, std::move(description)};
}

}  // namespace

ParsedVerdicts parse_verdicts(const std::string& raw) {
    ParsedVerdicts out;
    for (auto open = raw.find('['); open != std::string::npos; open = raw.find('[', open + 1)) {
        const auto end = match_bracket(raw, open);
        if (end == std::string::npos) continue;
        json arr = json::parse(raw.begin() + static_cast<std::ptrdiff_t>(open),
                               raw.begin() + static_cast<std::ptrdiff_t>(end), nullptr, false);
        if (arr.is_discarded() || !arr.is_array()) continue;
        out.success = true;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            std::string problem;
            if (auto v = verdict_from(arr[i], problem)) {
                out.verdicts.push_back(std::move(*v));
            } else {
                out.warnings.push_back("verdict " + std::to_string(i) + " dropped: " + problem);
            }
        }
        return out;
    }
    return out;
}

std::string verdicts_to_json(const std::vector<Verdict>& verdicts) {
    ordered_json arr = ordered_json::array();
    for (const auto& v : verdicts) {
        arr.push_back({{"type", std::string(code(v.type))}, {"severity", v.severity}, {"description", v.description}});
    }
    return arr.dump();
}

JudgeReport mock_judge(const EvalRecord& record, const GroundTruth& gt, const Extractor& extractor) {
    const auto detection = detect_record(record, gt, extractor);
    const bool s1 = assign_stratum(gt) == Stratum::S1Normal;
    JudgeReport r;
    r.record_id = record.record_id;
    r.judge_id = "mock";
    for (auto l : detection.fabrications) {
        r.verdicts.push_back({HallucinationType::A1Fabrication, s1 ? 3 : 2, "fabricated " + std::string(to_string(l))});
    }
    for (auto l : detection.omissions) {
        r.verdicts.push_back({HallucinationType::A2Omission, 3, "omitted " + std::string(to_string(l))});
    }
    r.parse_success = true;
    r.raw_response = verdicts_to_json(r.verdicts);
    return r;
}

JudgeReport mock_judge(const EvalRecord& record, const GroundTruth& gt, const Lexicon& lexicon, const CueSet& cues) {
    return mock_judge(record, gt, Extractor(lexicon, cues));
}

MockJudgeClient::MockJudgeClient(const Corpus& corpus, const Extractor& extractor,
                                 std::vector<std::string> fail_record_ids) {
    std::sort(fail_record_ids.begin(), fail_record_ids.end());
    for (const auto& rec : corpus.records()) {
        const auto& gt = corpus.ground_truth_for(rec);
        auto prompt = build_judge_prompt(rec, gt);
        if (std::binary_search(fail_record_ids.begin(), fail_record_ids.end(), rec.record_id)) {
            failing_.emplace(std::move(prompt), rec.record_id);
        } else {
            responses_.emplace(std::move(prompt), mock_judge(rec, gt, extractor).raw_response);
        }
    }
}

std::string MockJudgeClient::send(const std::string& prompt) {
    if (auto it = failing_.find(prompt); it != failing_.end()) {
        throw TransportError("injected failure for " + it->second);
    }
    auto it = responses_.find(prompt);
    if (it == responses_.end()) throw TransportError("mock judge has no answer for this prompt");
    return it->second;
}

JudgeRun run_judge(JudgeClient& client, const std::vector<EvalRecord>& records, const Corpus& corpus,
                   const JudgeOptions& options) {
    auto sleep = options.sleep ? options.sleep
                               : std::function<void(std::chrono::milliseconds)>(
                                     [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); });
    const auto judge_id = client.id();
    std::vector<JudgeReport> reports(records.size());
    std::vector<std::vector<std::string>> warnings(records.size());

    parallel_for(records.size(), std::max<std::size_t>(1, options.concurrency_limit), [&](std::size_t i) {
        const auto& rec = records[i];
        auto& report = reports[i];
        report.record_id = rec.record_id;
        report.judge_id = judge_id;
        const auto prompt = build_judge_prompt(rec, corpus.ground_truth_for(rec));
        std::optional<std::string> raw;
        std::string last_error;
        for (std::size_t attempt = 0; attempt <= options.max_retries; ++attempt) {
            try {
                raw = client.send(prompt);
                break;
            } catch (const TransportError& e) {
                last_error = e.what();
                if (attempt < options.max_retries) sleep(options.backoff_base * (1LL << attempt));
            }
        }
        if (!raw) {
            report.transport_failed = true;
            warnings[i].push_back(rec.record_id + ": transport failed after " +
                                  std::to_string(options.max_retries + 1) + " attempts: " + last_error);
            return;
        }
        report.raw_response = *raw;
        auto parsed = parse_verdicts(*raw);
        report.parse_success = parsed.success;
        if (parsed.success) report.verdicts = std::move(parsed.verdicts);
        else warnings[i].push_back(rec.record_id + ": no JSON array in judge response");
        for (auto& w : parsed.warnings) warnings[i].push_back(rec.record_id + ": " + w);
    });

    JudgeRun run;
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return reports[a].record_id < reports[b].record_id; });
    std::size_t parsed = 0;
    for (auto i : order) {
        parsed += reports[i].parse_success ? 1 : 0;
        run.transport_failures += reports[i].transport_failed ? 1 : 0;
        for (auto& w : warnings[i]) run.warnings.push_back(std::move(w));
        run.reports.push_back(std::move(reports[i]));
    }
    run.success_rate = records.empty() ? 0.0 : static_cast<double>(parsed) / static_cast<double>(records.size());
    return run;
}

JudgeRun run_judge(JudgeClient& client, const Corpus& corpus, const JudgeOptions& options) {
    return run_judge(client, corpus.records(), corpus, options);
}

// --- serialization --------------------------------------------------------------

namespace {

std::vector<Verdict> verdicts_from_json(const json& arr, const std::string& context) {
    std::vector<Verdict> out;
    if (!arr.is_array()) throw ValidationError(context + ": verdicts must be an array");
    for (const auto& v : arr) {
        std::string problem;
        auto verdict = verdict_from(v, problem);
        if (!verdict) throw ValidationError(context + ": " + problem);
        out.push_back(std::move(*verdict));
    }
    return out;
}

template <typename F>
void for_each_json_line(std::istream& in, F&& fn) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) throw CorpusError(n, "malformed JSON object");
        try {
            fn(obj, n);
        } catch (const ValidationError& e) {
            throw CorpusError(n, e.what());
        } catch (const json::exception& e) {
            throw CorpusError(n, e.what());
        }
    }
}

}  // namespace

std::string to_jsonl(const JudgeReport& r) {
    ordered_json obj;
    obj["record_id"] = r.record_id;
    obj["judge_id"] = r.judge_id;
    obj["parse_success"] = r.parse_success;
    obj["transport_failed"] = r.transport_failed;
    obj["verdicts"] = ordered_json::parse(verdicts_to_json(r.verdicts));
    obj["raw_response"] = r.raw_response;
    return obj.dump();
}

JudgeReport judge_report_from_json(const json& obj) {
    JudgeReport r;
    r.record_id = obj.at("record_id").get<std::string>();
    r.judge_id = obj.value("judge_id", std::string{});
    r.parse_success = obj.at("parse_success").get<bool>();
    r.transport_failed = obj.value("transport_failed", false);
    r.raw_response = obj.value("raw_response", std::string{});
    r.verdicts = verdicts_from_json(obj.at("verdicts"), r.record_id);
    if (!r.parse_success && !r.verdicts.empty()) {
        throw ValidationError(r.record_id + ": failed parse cannot carry verdicts");
    }
    return r;
}

std::vector<JudgeReport> load_judge_reports(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open judge reports " + path.string());
    std::vector<JudgeReport> out;
    for_each_json_line(in, [&](const json& obj, std::size_t) { out.push_back(judge_report_from_json(obj)); });
    return out;
}

std::vector<HumanAnnotation> parse_annotations(std::istream& in) {
    std::vector<HumanAnnotation> out;
    for_each_json_line(in, [&](const json& obj, std::size_t) {
        HumanAnnotation a;
        a.record_id = obj.at("record_id").get<std::string>();
        a.hallucinated = obj.at("hallucinated").get<bool>();
        if (auto it = obj.find("verdicts"); it != obj.end() && !it->is_null()) {
            a.verdicts = verdicts_from_json(*it, a.record_id);
        }
        out.push_back(std::move(a));
    });
    return out;
}

std::vector<HumanAnnotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open annotations " + path.string());
    return parse_annotations(in);
}

}  // namespace hallu
