#include "hallu/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"

namespace hallu {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t GroundTruth::positive_count() const noexcept {
    return static_cast<std::size_t>(
        std::count(labels.begin(), labels.end(), LabelState::Positive));
}

Stratum assign_stratum(const GroundTruth& gt) noexcept {
    const auto n = gt.positive_count();
    if (n == 0) return Stratum::S1Normal;
    if (n == 1) return Stratum::S2Single;
    if (n <= 3) return Stratum::S3Multi;
    return Stratum::S4Complex;
}

std::optional<UncertainPolicy> parse_uncertain_policy(std::string_view text) noexcept {
    if (text == "keep-separate") return UncertainPolicy::KeepSeparate;
    if (text == "uncertain-as-negative") return UncertainPolicy::UncertainAsNegative;
    return std::nullopt;
}

std::string_view to_string(UncertainPolicy policy) noexcept {
    return policy == UncertainPolicy::KeepSeparate ? "keep-separate" : "uncertain-as-negative";
}

GroundTruth apply_uncertain_policy(const GroundTruth& gt, UncertainPolicy policy) {
    GroundTruth out = gt;
    if (policy == UncertainPolicy::UncertainAsNegative) {
        for (auto& state : out.labels) {
            if (state == LabelState::Uncertain) state = LabelState::Negative;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(std::vector<GroundTruth> ground_truths, std::vector<EvalRecord> records)
    : ground_truths_(std::move(ground_truths)), records_(std::move(records)) {
    for (std::size_t i = 0; i < ground_truths_.size(); ++i) {
        if (!image_index_.emplace(ground_truths_[i].image_id, i).second) {
            throw CorpusError(0, "duplicate ground truth for image_id \"" +
                                     ground_truths_[i].image_id + "\"");
        }
    }
    std::unordered_set<std::string> seen;
    for (auto& record : records_) {
        if (!seen.insert(record.record_id).second) {
            throw CorpusError(0, "duplicate record_id \"" + record.record_id + "\"");
        }
        auto it = image_index_.find(record.image_id);
        if (it == image_index_.end()) {
            throw CorpusError(0, "record \"" + record.record_id +
                                     "\" references unknown image_id \"" + record.image_id + "\"");
        }
        record.response_length = utf8_length(record.response_text);
        if (record.query.kind == QueryKind::TargetedVqa) {
            if (!record.query.queried_label) {
                throw CorpusError(0, "vqa record \"" + record.record_id + "\" has no queried_label");
            }
            const auto& gt = ground_truths_[it->second];
            record.query.expected_yes = gt.labels[*record.query.queried_label] == LabelState::Positive;
        } else {
            record.query.queried_label.reset();
            record.query.expected_yes.reset();
        }
    }
}

const GroundTruth& Corpus::ground_truth(const std::string& image_id) const {
    auto it = image_index_.find(image_id);
    if (it == image_index_.end()) throw std::out_of_range("unknown image_id " + image_id);
    return ground_truths_[it->second];
}

Corpus Corpus::with_policy(UncertainPolicy policy) const {
    std::vector<GroundTruth> gts;
    gts.reserve(ground_truths_.size());
    for (const auto& gt : ground_truths_) gts.push_back(apply_uncertain_policy(gt, policy));
    return Corpus(std::move(gts), records_);
}

Corpus Corpus::filter_models(const std::vector<std::string>& models) const {
    std::unordered_set<std::string> keep(models.begin(), models.end());
    std::vector<EvalRecord> kept;
    for (const auto& r : records_) {
        if (keep.count(r.model_id)) kept.push_back(r);
    }
    return Corpus(ground_truths_, std::move(kept));
}

std::vector<std::string> Corpus::model_ids() const {
    std::vector<std::string> ids;
    std::unordered_set<std::string> seen;
    for (const auto& r : records_) {
        if (seen.insert(r.model_id).second) ids.push_back(r.model_id);
    }
    return ids;
}

// ---------------------------------------------------------------------------
// JSONL parsing

namespace {

const json& require_field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw CorpusError(line, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
    const auto& v = require_field(obj, key, line);
    if (!v.is_string()) throw CorpusError(line, std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
}

GroundTruth parse_ground_truth(const json& obj, std::size_t line) {
    GroundTruth gt;
    gt.image_id = require_string(obj, "image_id", line);
    gt.patient_id = require_string(obj, "patient_id", line);
    if (auto it = obj.find("report_text"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw CorpusError(line, "field \"report_text\" must be a string");
        gt.report_text = it->get<std::string>();
    }
    const auto& labels = require_field(obj, "labels", line);
    if (!labels.is_object()) throw CorpusError(line, "field \"labels\" must be an object");
    for (const auto& [name, value] : labels.items()) {
        auto label = parse_label(name);
        if (!label) throw CorpusError(line, "unknown pathology label \"" + name + "\"");
        if (!value.is_string()) throw CorpusError(line, "label state for \"" + name + "\" must be a string");
        auto state = parse_label_state(value.get<std::string>());
        if (!state) {
            throw CorpusError(line, "unknown label state \"" + value.get<std::string>() +
                                        "\" for \"" + name + "\"");
        }
        gt.labels[*label] = *state;
    }
    return gt;
}

EvalRecord parse_eval_record(const json& obj, std::size_t line) {
    EvalRecord r;
    r.record_id = require_string(obj, "record_id", line);
    r.image_id = require_string(obj, "image_id", line);
    r.model_id = require_string(obj, "model_id", line);
    r.response_text = require_string(obj, "response_text", line);
    const auto query_type = require_string(obj, "query_type", line);
    auto kind = parse_query_kind(query_type);
    if (!kind) throw CorpusError(line, "unknown query_type \"" + query_type + "\"");
    r.query.kind = *kind;
    if (auto it = obj.find("queried_label"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw CorpusError(line, "field \"queried_label\" must be a string");
        auto label = parse_label(it->get<std::string>());
        if (!label) throw CorpusError(line, "unknown pathology label \"" + it->get<std::string>() + "\"");
        if (*kind != QueryKind::TargetedVqa) {
            throw CorpusError(line, "queried_label is only valid for query_type \"vqa\"");
        }
        r.query.queried_label = *label;
    } else if (*kind == QueryKind::TargetedVqa) {
        throw CorpusError(line, "vqa record requires \"queried_label\"");
    }
    if (auto it = obj.find("stated_confidence"); it != obj.end() && !it->is_null()) {
        if (!it->is_number()) throw CorpusError(line, "field \"stated_confidence\" must be a number");
        const double c = it->get<double>();
        if (!(c >= 0.0 && c <= 1.0)) {
            throw CorpusError(line, "stated_confidence " + std::to_string(c) + " outside [0,1]");
        }
        r.stated_confidence = c;
    }
    r.response_length = utf8_length(r.response_text);
    return r;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
    std::vector<GroundTruth> gts;
    std::vector<EvalRecord> records;
    std::vector<std::size_t> record_lines;
    std::unordered_map<std::string, std::size_t> gt_lines;
    std::unordered_map<std::string, std::size_t> record_id_lines;

    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw CorpusError(line, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw CorpusError(line, "expected a JSON object");
        const auto kind = require_string(obj, "kind", line);
        if (kind == "ground_truth") {
            auto gt = parse_ground_truth(obj, line);
            if (auto [it, ok] = gt_lines.emplace(gt.image_id, line); !ok) {
                throw CorpusError(line, "duplicate ground truth for image_id \"" + gt.image_id +
                                            "\" (first at line " + std::to_string(it->second) + ")");
            }
            gts.push_back(std::move(gt));
        } else if (kind == "eval_record") {
            auto r = parse_eval_record(obj, line);
            if (auto [it, ok] = record_id_lines.emplace(r.record_id, line); !ok) {
                throw CorpusError(line, "duplicate record_id \"" + r.record_id +
                                            "\" (first at line " + std::to_string(it->second) + ")");
            }
            records.push_back(std::move(r));
            record_lines.push_back(line);
        } else {
            throw CorpusError(line, "unknown kind \"" + kind + "\"");
        }
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!gt_lines.count(records[i].image_id)) {
            throw CorpusError(record_lines[i], "record \"" + records[i].record_id +
                                                   "\" references unknown image_id \"" +
                                                   records[i].image_id + "\"");
        }
    }
    return Corpus(std::move(gts), std::move(records));
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError(0, "cannot open corpus file " + path.string());
    return parse_corpus(in);
}

std::string to_jsonl(const GroundTruth& gt) {
    ordered_json labels = ordered_json::object();
    for (auto label : kAllLabels) {
        labels[std::string(to_string(label))] = std::string(to_string(gt.labels[label]));
    }
    ordered_json obj;
    obj["kind"] = "ground_truth";
    obj["image_id"] = gt.image_id;
    obj["patient_id"] = gt.patient_id;
    obj["labels"] = std::move(labels);
    obj["report_text"] = gt.report_text;
    return obj.dump();
}

std::string to_jsonl(const EvalRecord& r) {
    ordered_json obj;
    obj["kind"] = "eval_record";
    obj["record_id"] = r.record_id;
    obj["image_id"] = r.image_id;
    obj["model_id"] = r.model_id;
    obj["query_type"] = std::string(to_string(r.query.kind));
    if (r.query.queried_label) obj["queried_label"] = std::string(to_string(*r.query.queried_label));
    obj["response_text"] = r.response_text;
    if (r.stated_confidence) {
        obj["stated_confidence"] = *r.stated_confidence;
    } else {
        obj["stated_confidence"] = nullptr;
    }
    return obj.dump();
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& gt : corpus.ground_truths()) out << to_jsonl(gt) << '\n';
    for (const auto& r : corpus.records()) out << to_jsonl(r) << '\n';
}

}  // namespace hallu
