#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu/judge.hpp"

namespace hallu {

double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b, std::vector<std::string>* warnings) {
    if (a.size() != b.size()) throw ValidationError("cohen_kappa: length mismatch");
    if (a.empty()) throw ValidationError("cohen_kappa: empty input");
    const double n = static_cast<double>(a.size());
    std::map<int, double> ma, mb;
    double agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1;
        mb[b[i]] += 1;
        agree += a[i] == b[i] ? 1 : 0;
    }
    double pe = 0;
    for (const auto& [cat, count] : ma) {
        if (auto it = mb.find(cat); it != mb.end()) pe += (count / n) * (it->second / n);
    }
    const double po = agree / n;
    if (1.0 - pe <= 1e-12) {
        if (warnings) warnings->push_back("cohen_kappa: degenerate marginals (p_e = 1); kappa set to 0");
        return 0.0;
    }
    return (po - pe) / (1.0 - pe);
}

double cohen_kappa(const std::vector<bool>& a, const std::vector<bool>& b, std::vector<std::string>* warnings) {
    std::vector<int> ia(a.begin(), a.end()), ib(b.begin(), b.end());
    return cohen_kappa(ia, ib, warnings);
}

AgreementStats agreement_from_confusion(const Confusion& c) {
    AgreementStats s;
    s.confusion = c;
    s.n_paired = c.total();
    if (s.n_paired == 0) throw ValidationError("agreement: no paired records");
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    s.percent_agreement = (tp + tn) / static_cast<double>(s.n_paired);
    if (tp + fp > 0) s.precision = tp / (tp + fp);
    if (tp + fn > 0) s.recall = tp / (tp + fn);
    if (s.precision && s.recall && *s.precision + *s.recall > 0) {
        s.f1 = 2 * *s.precision * *s.recall / (*s.precision + *s.recall);
    }
    // Paired binary vectors reproduce kappa exactly from the table.
    std::vector<bool> predicted, reference;
    auto push = [&](std::size_t count, bool p, bool r) {
        predicted.insert(predicted.end(), count, p);
        reference.insert(reference.end(), count, r);
    };
    push(c.tp, true, true);
    push(c.fp, true, false);
    push(c.fn, false, true);
    push(c.tn, false, false);
    s.cohen_kappa = cohen_kappa(predicted, reference, &s.warnings);
    return s;
}

std::vector<Assessment> assessments_from(const std::vector<DetectionResult>& detections) {
    std::vector<Assessment> out;
    out.reserve(detections.size());
    for (const auto& d : detections) out.push_back({d.record_id, d.hallucinated, std::nullopt});
    return out;
}

std::vector<Assessment> assessments_from(const std::vector<JudgeReport>& reports) {
    std::vector<Assessment> out;
    for (const auto& r : reports) {
        if (r.parse_success) out.push_back({r.record_id, r.hallucinated(), r.verdicts});
    }
    return out;
}

std::vector<Assessment> assessments_from(const std::vector<HumanAnnotation>& annotations) {
    std::vector<Assessment> out;
    out.reserve(annotations.size());
    for (const auto& a : annotations) out.push_back({a.record_id, a.hallucinated, a.verdicts});
    return out;
}

namespace {

int max_severity(const std::vector<Verdict>& v) {
    int m = 0;
    for (const auto& x : v) m = std::max(m, x.severity);
    return m;
}

std::set<HallucinationType> type_set(const std::vector<Verdict>& v) {
    std::set<HallucinationType> s;
    for (const auto& x : v) s.insert(x.type);
    return s;
}

}  // namespace

AgreementStats validate_against_human(const std::vector<Assessment>& predicted,
                                      const std::vector<Assessment>& reference) {
    std::unordered_map<std::string, const Assessment*> by_id;
    for (const auto& p : predicted) by_id.emplace(p.record_id, &p);

    Confusion c;
    std::size_t sev3_pairs = 0, sev3_agree = 0, graded_pairs = 0, within_1 = 0, overlap = 0;
    std::set<std::string> seen;
    for (const auto& r : reference) {
        if (!seen.insert(r.record_id).second) throw ValidationError("duplicate annotation for \"" + r.record_id + "\"");
        auto it = by_id.find(r.record_id);
        if (it == by_id.end()) throw ValidationError("annotation references unknown record \"" + r.record_id + "\"");
        const auto& p = *it->second;
        if (p.hallucinated && r.hallucinated) ++c.tp;
        else if (p.hallucinated) ++c.fp;
        else if (r.hallucinated) ++c.fn;
        else ++c.tn;

        if (!p.verdicts || !r.verdicts) continue;
        ++sev3_pairs;
        sev3_agree += (max_severity(*p.verdicts) == 3) == (max_severity(*r.verdicts) == 3) ? 1 : 0;
        if (p.verdicts->empty() || r.verdicts->empty()) continue;
        ++graded_pairs;
        within_1 += std::abs(max_severity(*p.verdicts) - max_severity(*r.verdicts)) <= 1 ? 1 : 0;
        const auto ta = type_set(*p.verdicts), tb = type_set(*r.verdicts);
        overlap += std::any_of(ta.begin(), ta.end(), [&](HallucinationType t) { return tb.count(t) > 0; }) ? 1 : 0;
    }

    auto s = agreement_from_confusion(c);
    s.n_verdict_pairs = graded_pairs;
    if (sev3_pairs > 0) s.severity3_concordance = static_cast<double>(sev3_agree) / static_cast<double>(sev3_pairs);
    if (graded_pairs > 0) {
        s.severity_within_1 = static_cast<double>(within_1) / static_cast<double>(graded_pairs);
        s.type_overlap = static_cast<double>(overlap) / static_cast<double>(graded_pairs);
    }
    return s;
}

nlohmann::ordered_json to_json(const AgreementStats& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json obj;
    obj["n_paired"] = s.n_paired;
    obj["confusion"] = {{"tp", s.confusion.tp}, {"fp", s.confusion.fp}, {"fn", s.confusion.fn}, {"tn", s.confusion.tn}};
    obj["precision"] = opt(s.precision);
    obj["recall"] = opt(s.recall);
    obj["f1"] = opt(s.f1);
    obj["cohen_kappa"] = s.cohen_kappa;
    obj["percent_agreement"] = s.percent_agreement;
    obj["severity3_concordance"] = opt(s.severity3_concordance);
    obj["severity_within_1"] = opt(s.severity_within_1);
    obj["type_overlap"] = opt(s.type_overlap);
    obj["n_verdict_pairs"] = s.n_verdict_pairs;
    obj["warnings"] = s.warnings;
    return obj;
}

}  // namespace hallu
