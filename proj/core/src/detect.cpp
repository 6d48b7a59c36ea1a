#include "hallu/detect.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu/format.hpp"
#include "hallu/parallel.hpp"

namespace hallu {

using nlohmann::json;
using nlohmann::ordered_json;

DetectionResult detect_record(const EvalRecord& record, const GroundTruth& gt, const Extractor& extractor) {
    if (record.image_id != gt.image_id) {
        throw ValidationError("record \"" + record.record_id + "\" is for image \"" + record.image_id +
                              "\" but ground truth is for \"" + gt.image_id + "\"");
    }
    DetectionResult out;
    out.record_id = record.record_id;

    const auto polarity = aggregate_polarity(extractor.extract(record.response_text));
    for (auto label : kAllLabels) {
        auto it = polarity.find(label);
        const bool affirmed = it != polarity.end() && it->second == Polarity::Affirmed;
        out.vote_flags[label] = affirmed;
        const auto state = gt.labels[label];
        if (affirmed && state == LabelState::Negative) out.fabrications.push_back(label);
        if (!affirmed && state == LabelState::Positive) out.omissions.push_back(label);
    }

    if (record.query.kind == QueryKind::TargetedVqa) {
        bool expected_yes = false;
        if (record.query.expected_yes) {
            expected_yes = *record.query.expected_yes;
        } else if (record.query.queried_label) {
            expected_yes = gt.labels[*record.query.queried_label] == LabelState::Positive;
        }
        const auto answer = parse_vqa_answer(record.response_text);
        out.vqa_answer = answer;
        out.vqa_mismatch = answer == VqaAnswer::Unparsed || (answer == VqaAnswer::Yes) != expected_yes;
    }
    out.hallucinated = out.textual_hallucination() || out.vqa_mismatch.value_or(false);
    return out;
}

DetectionResult detect_record(const EvalRecord& record, const GroundTruth& gt, const Lexicon& lexicon,
                              const CueSet& cues) {
    return detect_record(record, gt, Extractor(lexicon, cues));
}

std::vector<DetectionResult> detect_all(const Corpus& corpus, const Extractor& extractor, std::size_t jobs) {
    const auto& records = corpus.records();
    std::vector<DetectionResult> out(records.size());
    parallel_for(records.size(), jobs, [&](std::size_t i) {
        out[i] = detect_record(records[i], corpus.ground_truth_for(records[i]), extractor);
    });
    return out;
}

// --- serialization ------------------------------------------------------------

namespace {

ordered_json label_list(const std::vector<PathologyLabel>& labels) {
    ordered_json arr = ordered_json::array();
    for (auto l : labels) arr.push_back(std::string(to_string(l)));
    return arr;
}

std::vector<PathologyLabel> parse_label_list(const json& arr) {
    std::vector<PathologyLabel> out;
    for (const auto& v : arr) out.push_back(require_label(v.get<std::string>()));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::string to_jsonl(const DetectionResult& r) {
    ordered_json obj;
    obj["record_id"] = r.record_id;
    obj["fabrications"] = label_list(r.fabrications);
    obj["omissions"] = label_list(r.omissions);
    obj["vqa_mismatch"] = r.vqa_mismatch ? ordered_json(*r.vqa_mismatch) : ordered_json(nullptr);
    obj["hallucinated"] = r.hallucinated;
    ordered_json votes = ordered_json::object();
    for (auto l : kAllLabels) votes[std::string(to_string(l))] = r.vote_flags[l];
    obj["vote_flags"] = std::move(votes);
    if (r.vqa_answer) obj["vqa_answer"] = std::string(to_string(*r.vqa_answer));
    return obj.dump();
}

DetectionResult detection_from_json(const json& obj) {
    DetectionResult r;
    try {
        r.record_id = obj.at("record_id").get<std::string>();
        r.fabrications = parse_label_list(obj.at("fabrications"));
        r.omissions = parse_label_list(obj.at("omissions"));
        if (auto it = obj.find("vqa_mismatch"); it != obj.end() && !it->is_null()) r.vqa_mismatch = it->get<bool>();
        if (auto it = obj.find("vqa_answer"); it != obj.end() && !it->is_null()) {
            const auto s = it->get<std::string>();
            r.vqa_answer = s == "yes" ? VqaAnswer::Yes : s == "no" ? VqaAnswer::No : VqaAnswer::Unparsed;
        }
        for (const auto& [name, flag] : obj.at("vote_flags").items()) {
            r.vote_flags[require_label(name)] = flag.get<bool>();
        }
        r.hallucinated = obj.at("hallucinated").get<bool>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed detection: ") + e.what());
    }
    const bool expected = r.textual_hallucination() || r.vqa_mismatch.value_or(false);
    if (r.hallucinated != expected) {
        throw ValidationError("detection \"" + r.record_id + "\": hallucinated flag inconsistent with findings");
    }
    return r;
}

std::vector<DetectionResult> load_detections(const std::filesystem::path& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open detections file " + path.string());
    std::unordered_map<std::string, DetectionResult> by_id;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(n, std::string("malformed JSON: ") + e.what());
        }
        auto r = detection_from_json(obj);
        auto id = r.record_id;
        if (!by_id.emplace(id, std::move(r)).second) throw CorpusError(n, "duplicate detection for \"" + id + "\"");
    }
    std::vector<DetectionResult> out;
    out.reserve(corpus.records().size());
    for (const auto& rec : corpus.records()) {
        auto it = by_id.find(rec.record_id);
        if (it == by_id.end()) throw ValidationError("no detection for record \"" + rec.record_id + "\"");
        out.push_back(std::move(it->second));
        by_id.erase(it);
    }
    if (!by_id.empty()) {
        throw ValidationError("detection for unknown record \"" + by_id.begin()->first + "\"");
    }
    return out;
}

// --- rate tables --------------------------------------------------------------

std::vector<bool> hallucinated_flags(const std::vector<DetectionResult>& results) {
    std::vector<bool> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.hallucinated);
    return out;
}

namespace {

std::string field_name(GroupField f) {
    switch (f) {
        case GroupField::Model: return "model";
        case GroupField::Stratum: return "stratum";
        case GroupField::QueryType: return "query_type";
    }
    return "model";
}

std::string field_value(GroupField f, const EvalRecord& r, const Corpus& corpus) {
    switch (f) {
        case GroupField::Model: return r.model_id;
        case GroupField::Stratum: return std::string(to_string(assign_stratum(corpus.ground_truth_for(r))));
        case GroupField::QueryType: return std::string(to_string(r.query.kind));
    }
    return {};
}

/// Observed values of a field in canonical order.
std::vector<std::string> field_domain(GroupField f, const Corpus& corpus) {
    std::vector<std::string> out;
    auto present = [&](const std::string& v) {
        return std::any_of(corpus.records().begin(), corpus.records().end(),
                           [&](const EvalRecord& r) { return field_value(f, r, corpus) == v; });
    };
    switch (f) {
        case GroupField::Model: return corpus.model_ids();
        case GroupField::Stratum:
            for (auto s : kAllStrata) {
                if (present(std::string(to_string(s)))) out.emplace_back(to_string(s));
            }
            return out;
        case GroupField::QueryType:
            for (auto k : kAllQueryKinds) {
                if (present(std::string(to_string(k)))) out.emplace_back(to_string(k));
            }
            return out;
    }
    return out;
}

}  // namespace

std::string RateTable::to_csv() const {
    std::ostringstream out;
    out << "group,rate,ci_low,ci_high,n\n";
    for (const auto& r : rows) {
        out << csv_field(r.group) << ',' << fmt_double(r.rate) << ',' << fmt_double(r.ci_low) << ','
            << fmt_double(r.ci_high) << ',' << r.n << '\n';
    }
    return out.str();
}

RateTable rate_table(const std::vector<bool>& flags, const Corpus& corpus,
                     const std::vector<GroupField>& fields, const metrics::BootstrapOptions& bootstrap) {
    const auto& records = corpus.records();
    if (flags.size() != records.size()) throw ValidationError("rate_table: flags do not align with records");

    RateTable table;
    table.fields = fields;

    std::vector<std::string> keys(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::string key;
        for (auto f : fields) {
            if (!key.empty()) key += '|';
            key += field_name(f) + "=" + field_value(f, records[i], corpus);
        }
        keys[i] = key.empty() ? "all" : key;
    }

    std::vector<std::string> groups{""};
    for (auto f : fields) {
        std::vector<std::string> next;
        for (const auto& prefix : groups) {
            for (const auto& v : field_domain(f, corpus)) {
                next.push_back(prefix.empty() ? field_name(f) + "=" + v : prefix + "|" + field_name(f) + "=" + v);
            }
        }
        groups = std::move(next);
    }
    if (fields.empty()) groups = {"all"};

    std::map<std::string, std::vector<bool>> members;
    for (std::size_t i = 0; i < records.size(); ++i) members[keys[i]].push_back(flags[i]);

    for (const auto& g : groups) {
        auto it = members.find(g);
        if (it == members.end() || it->second.empty()) {
            table.warnings.push_back("rate_table: group \"" + g + "\" is empty; row omitted");
            continue;
        }
        auto opts = bootstrap;
        opts.seed = derive_seed(bootstrap.seed, fnv1a64(g));
        const auto est = metrics::rate_with_ci(it->second, opts);
        table.rows.push_back({g, est.rate, est.ci.lo, est.ci.hi, est.n});
    }
    return table;
}

// --- per-label counts ---------------------------------------------------------

std::string PerLabelTable::to_csv() const {
    std::ostringstream out;
    out << "label,fabrications,omissions,gt_positive,omission_rate,fabrication_share\n";
    for (const auto& r : rows) {
        std::optional<double> share;
        if (total_fabrications > 0) {
            share = static_cast<double>(r.fabrications) / static_cast<double>(total_fabrications);
        }
        out << csv_field(to_string(r.label)) << ',' << r.fabrications << ',' << r.omissions << ','
            << r.gt_positive << ',' << fmt_optional(r.omission_rate) << ',' << fmt_optional(share) << '\n';
    }
    return out.str();
}

PerLabelTable per_label_counts(const std::vector<DetectionResult>& results, const Corpus& corpus) {
    const auto& records = corpus.records();
    if (results.size() != records.size()) throw ValidationError("per_label_counts: results do not align with records");
    PerLabelTable table;
    for (auto l : kAllLabels) table.rows[index_of(l)].label = l;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& gt = corpus.ground_truth_for(records[i]);
        for (auto l : kAllLabels) {
            if (gt.labels[l] == LabelState::Positive) table.rows[index_of(l)].gt_positive += 1;
        }
        for (auto l : results[i].fabrications) table.rows[index_of(l)].fabrications += 1;
        for (auto l : results[i].omissions) table.rows[index_of(l)].omissions += 1;
        table.total_fabrications += results[i].fabrications.size();
        table.total_omissions += results[i].omissions.size();
    }
    for (auto& row : table.rows) {
        if (row.gt_positive > 0) {
            row.omission_rate = static_cast<double>(row.omissions) / static_cast<double>(row.gt_positive);
        }
    }
    return table;
}

// --- type x model -------------------------------------------------------------

std::size_t TypeCountTable::at(HallucinationType type, const std::string& model) const {
    for (std::size_t m = 0; m < models.size(); ++m) {
        if (models[m] == model) return counts[static_cast<std::size_t>(type)][m];
    }
    return 0;
}

std::string TypeCountTable::to_csv() const {
    std::ostringstream out;
    out << "type";
    for (const auto& m : models) out << ',' << csv_field(m);
    out << ",total\n";
    for (std::size_t t = 0; t < kNumTypes; ++t) {
        out << kTaxonomy[t].code;
        for (auto c : counts[t]) out << ',' << c;
        out << ',' << row_totals[t] << '\n';
    }
    out << "total";
    for (auto c : column_totals) out << ',' << c;
    out << ',' << total << '\n';
    return out.str();
}

TypeCountTable type_count_table(const std::vector<std::pair<std::string, Verdict>>& verdicts,
                                const std::vector<std::string>& model_order) {
    TypeCountTable table;
    table.models = model_order;
    for (const auto& [model, _] : verdicts) {
        if (std::find(table.models.begin(), table.models.end(), model) == table.models.end()) {
            table.models.push_back(model);
        }
    }
    const auto m = table.models.size();
    for (auto& row : table.counts) row.assign(m, 0);
    table.column_totals.assign(m, 0);
    for (const auto& [model, v] : verdicts) {
        const auto col = static_cast<std::size_t>(
            std::find(table.models.begin(), table.models.end(), model) - table.models.begin());
        const auto t = static_cast<std::size_t>(v.type);
        table.counts[t][col] += 1;
        table.row_totals[t] += 1;
        table.column_totals[col] += 1;
        table.total += 1;
    }
    return table;
}

// --- query type ---------------------------------------------------------------

std::string QueryTypeTable::to_csv() const {
    std::ostringstream out;
    out << "model,query_type,n,rate,textual_rate,vqa_mismatch_rate,mean_length\n";
    for (const auto& r : rows) {
        out << csv_field(r.model) << ',' << to_string(r.kind) << ',' << r.n << ',' << fmt_double(r.rate) << ','
            << fmt_double(r.textual_rate) << ',' << fmt_optional(r.vqa_mismatch_rate) << ','
            << fmt_double(r.mean_length, 2) << '\n';
    }
    return out.str();
}

std::string QueryTypeTable::vqa_to_csv() const {
    std::ostringstream out;
    out << "model,tp,fp,fn,tn,unparsed,sensitivity,specificity,balanced_accuracy\n";
    for (const auto& r : vqa) {
        out << csv_field(r.model) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ','
            << r.unparsed << ',' << fmt_optional(r.sensitivity) << ',' << fmt_optional(r.specificity) << ','
            << fmt_optional(r.balanced_accuracy) << '\n';
    }
    return out.str();
}

QueryTypeTable query_type_table(const std::vector<DetectionResult>& results, const Corpus& corpus) {
    const auto& records = corpus.records();
    if (results.size() != records.size()) throw ValidationError("query_type_table: results do not align with records");
    QueryTypeTable table;
    for (const auto& model : corpus.model_ids()) {
        VqaAccuracyRow acc{model};
        bool any_vqa = false;
        for (auto kind : kAllQueryKinds) {
            QueryTypeRow row{model, kind};
            std::size_t hall = 0, textual = 0, mismatch = 0;
            double length = 0;
            for (std::size_t i = 0; i < records.size(); ++i) {
                const auto& rec = records[i];
                if (rec.model_id != model || rec.query.kind != kind) continue;
                const auto& res = results[i];
                row.n += 1;
                hall += res.hallucinated ? 1 : 0;
                textual += res.textual_hallucination() ? 1 : 0;
                mismatch += res.vqa_mismatch.value_or(false) ? 1 : 0;
                length += static_cast<double>(rec.response_length);
                if (kind == QueryKind::TargetedVqa && rec.query.expected_yes) {
                    any_vqa = true;
                    const bool expected = *rec.query.expected_yes;
                    const auto answer = res.vqa_answer.value_or(VqaAnswer::Unparsed);
                    if (answer == VqaAnswer::Unparsed) acc.unparsed += 1;
                    const bool said_yes = answer == VqaAnswer::Yes;
                    const bool said_no = answer == VqaAnswer::No;
                    if (expected) (said_yes ? acc.tp : acc.fn) += 1;
                    else (said_no ? acc.tn : acc.fp) += 1;
                }
            }
            if (row.n == 0) continue;
            const double n = static_cast<double>(row.n);
            row.rate = static_cast<double>(hall) / n;
            row.textual_rate = static_cast<double>(textual) / n;
            if (kind == QueryKind::TargetedVqa) row.vqa_mismatch_rate = static_cast<double>(mismatch) / n;
            row.mean_length = length / n;
            table.rows.push_back(row);
        }
        if (any_vqa) {
            const double tp = static_cast<double>(acc.tp), fp = static_cast<double>(acc.fp);
            const double fn = static_cast<double>(acc.fn), tn = static_cast<double>(acc.tn);
            if (tp + fn > 0) acc.sensitivity = tp / (tp + fn);
            if (tn + fp > 0) acc.specificity = tn / (tn + fp);
            if (acc.sensitivity && acc.specificity) acc.balanced_accuracy = metrics::balanced_accuracy(tp, fp, fn, tn);
            table.vqa.push_back(acc);
        }
    }
    return table;
}

// --- phi ----------------------------------------------------------------------

std::vector<PhiEntry> model_phi(const std::vector<DetectionResult>& results, const Corpus& corpus,
                                std::vector<std::string>* warnings) {
    const auto& records = corpus.records();
    if (results.size() != records.size()) throw ValidationError("model_phi: results do not align with records");
    const auto models = corpus.model_ids();
    std::map<std::string, std::map<std::string, bool>> flags;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::string key = r.image_id + '\x1f' + std::string(to_string(r.query.kind));
        if (r.query.queried_label) key += '\x1f' + std::string(to_string(*r.query.queried_label));
        flags[r.model_id][key] = results[i].hallucinated;
    }
    std::vector<PhiEntry> out;
    for (std::size_t a = 0; a < models.size(); ++a) {
        for (std::size_t b = a + 1; b < models.size(); ++b) {
            std::vector<bool> fa, fb;
            const auto& mb = flags[models[b]];
            for (const auto& [key, flag] : flags[models[a]]) {
                auto it = mb.find(key);
                if (it == mb.end()) continue;
                fa.push_back(flag);
                fb.push_back(it->second);
            }
            if (fa.size() < 2) {
                if (warnings) warnings->push_back("model_phi: " + models[a] + "/" + models[b] + " share fewer than 2 records");
                continue;
            }
            out.push_back({models[a], models[b], metrics::phi(fa, fb, warnings), fa.size()});
        }
    }
    return out;
}

}  // namespace hallu
