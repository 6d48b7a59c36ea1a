#include "hallu/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu/parallel.hpp"
#include "hallu/random.hpp"

namespace hallu::synth {

using nlohmann::json;
using nlohmann::ordered_json;

CalibrationProfile parse_profile(const std::string& text) {
    if (text == "none") return {CalibrationProfile::Kind::None, 0.0};
    if (text == "perfect") return {CalibrationProfile::Kind::Perfect, 0.0};
    static const std::regex over(R"(overconfident\(\s*([0-9]*\.?[0-9]+)\s*\))");
    std::smatch m;
    if (std::regex_match(text, m, over)) {
        const double c = std::stod(m[1].str());
        if (c < 0 || c > 1) throw ValidationError("overconfident level must lie in [0, 1]: " + text);
        return {CalibrationProfile::Kind::Overconfident, c};
    }
    throw ValidationError("unknown calibration profile \"" + text + "\"");
}

std::string to_string(const CalibrationProfile& p) {
    switch (p.kind) {
        case CalibrationProfile::Kind::None: return "none";
        case CalibrationProfile::Kind::Perfect: return "perfect";
        case CalibrationProfile::Kind::Overconfident: {
            char buf[48];
            std::snprintf(buf, sizeof buf, "overconfident(%g)", p.confidence);
            return buf;
        }
    }
    return "perfect";
}

SynthSpec SynthSpec::defaults() {
    SynthSpec s;
    constexpr double n = 856.0;
    constexpr std::array<std::pair<int, int>, kNumLabels> counts{{
        {275, 24}, {261, 15}, {232, 28}, {187, 33}, {181, 63}, {78, 68},
        {47, 22}, {33, 2}, {30, 40}, {21, 9}, {19, 2}, {18, 2},
    }};
    for (auto l : kAllLabels) {
        s.label_prevalence[l] = counts[index_of(l)].first / n;
        s.uncertain_prevalence[l] = counts[index_of(l)].second / n;
    }
    return s;
}

double SynthSpec::fab_rate(const std::string& model) const {
    auto it = per_model_fab_rate.find(model);
    return it == per_model_fab_rate.end() ? 0.0 : it->second;
}

double SynthSpec::omit_rate(const std::string& model) const {
    auto it = per_model_omit_rate.find(model);
    return it == per_model_omit_rate.end() ? 0.0 : it->second;
}

CalibrationProfile SynthSpec::profile(const std::string& model) const {
    auto it = calibration_profile.find(model);
    return it == calibration_profile.end() ? CalibrationProfile{} : it->second;
}

void SynthSpec::validate() const {
    auto rate = [](double v, const std::string& what) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(what + " must lie in [0, 1]");
    };
    if (n_images < 1) throw ValidationError("n_images must be at least 1");
    if (models.empty()) throw ValidationError("at least one model is required");
    if (images_per_patient < 1) throw ValidationError("images_per_patient must be at least 1");
    if (queries.empty()) throw ValidationError("at least one query type is required");
    for (auto l : kAllLabels) {
        const std::string name(hallu::to_string(l));
        rate(label_prevalence[l], "prevalence of " + name);
        rate(uncertain_prevalence[l], "uncertain prevalence of " + name);
        rate(label_prevalence[l] + uncertain_prevalence[l], "total prevalence of " + name);
    }
    for (const auto& [m, r] : per_model_fab_rate) rate(r, "fabrication rate of " + m);
    for (const auto& [m, r] : per_model_omit_rate) rate(r, "omission rate of " + m);
    rate(negation_mention_rate, "negation_mention_rate");
    rate(vqa_positive_rate, "vqa_positive_rate");
    if (!(verbosity_coupling >= 0.0) || !std::isfinite(verbosity_coupling)) {
        throw ValidationError("verbosity_coupling must be a finite nonnegative number");
    }
    std::set<std::string> seen;
    for (const auto& m : models) {
        if (m.empty() || !seen.insert(m).second) throw ValidationError("model ids must be unique and nonempty");
    }
}

SynthSpec spec_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("synth spec must be a JSON object");
    auto s = SynthSpec::defaults();
    try {
        s.n_images = doc.value("n_images", s.n_images);
        if (auto it = doc.find("models"); it != doc.end()) {
            s.models = it->get<std::vector<std::string>>();
        } else if (auto n = doc.find("n_models"); n != doc.end()) {
            s.models.clear();
            for (std::size_t i = 1; i <= n->get<std::size_t>(); ++i) s.models.push_back("model-" + std::to_string(i));
        }
        auto label_map = [&](const char* key, LabelMap<double>& target) {
            if (auto it = doc.find(key); it != doc.end()) {
                for (const auto& [name, v] : it->items()) target[require_label(name)] = v.get<double>();
            }
        };
        label_map("label_prevalence", s.label_prevalence);
        label_map("uncertain_prevalence", s.uncertain_prevalence);
        if (auto it = doc.find("fab_rate"); it != doc.end()) {
            for (const auto& m : s.models) s.per_model_fab_rate[m] = it->get<double>();
        }
        if (auto it = doc.find("omit_rate"); it != doc.end()) {
            for (const auto& m : s.models) s.per_model_omit_rate[m] = it->get<double>();
        }
        const json fab = doc.value("per_model_fab_rate", json::object());
        const json omit = doc.value("per_model_omit_rate", json::object());
        for (const auto& [m, v] : fab.items()) s.per_model_fab_rate[m] = v.get<double>();
        for (const auto& [m, v] : omit.items()) s.per_model_omit_rate[m] = v.get<double>();
        if (auto it = doc.find("calibration_profile"); it != doc.end()) {
            if (it->is_string()) {
                const auto p = parse_profile(it->get<std::string>());
                for (const auto& m : s.models) s.calibration_profile[m] = p;
            } else {
                for (const auto& [m, v] : it->items()) s.calibration_profile[m] = parse_profile(v.get<std::string>());
            }
        }
        s.negation_mention_rate = doc.value("negation_mention_rate", s.negation_mention_rate);
        s.verbosity_coupling = doc.value("verbosity_coupling", s.verbosity_coupling);
        s.seed = doc.value("seed", s.seed);
        s.adversarial = doc.value("adversarial", s.adversarial);
        s.vqa_positive_rate = doc.value("vqa_positive_rate", s.vqa_positive_rate);
        s.images_per_patient = doc.value("images_per_patient", s.images_per_patient);
        if (auto it = doc.find("queries"); it != doc.end()) {
            s.queries.clear();
            for (const auto& q : *it) {
                auto kind = parse_query_kind(q.get<std::string>());
                if (!kind) throw ValidationError("unknown query type \"" + q.get<std::string>() + "\"");
                s.queries.insert(*kind);
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("synth spec: ") + e.what());
    }
    for (const auto& [m, _] : s.per_model_fab_rate) {
        if (std::find(s.models.begin(), s.models.end(), m) == s.models.end()) {
            throw ValidationError("per_model_fab_rate names unknown model \"" + m + "\"");
        }
    }
    for (const auto& [m, _] : s.per_model_omit_rate) {
        if (std::find(s.models.begin(), s.models.end(), m) == s.models.end()) {
            throw ValidationError("per_model_omit_rate names unknown model \"" + m + "\"");
        }
    }
    s.validate();
    return s;
}

SynthSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open synth spec " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("synth spec " + path.string() + " is not valid JSON");
    return spec_from_json(doc);
}

// --- generation -----------------------------------------------------------------

namespace {

// Sentence templates. None of the fixed wording contains a lexicon term or a
// cue other than the intended one.
constexpr std::array<std::string_view, 5> kAffirm{
    "There is {}.", "{} is present.", "Findings are consistent with {}.", "{} is noted.", "The image shows {}.",
};
constexpr std::array<std::string_view, 5> kNegate{
    "No {} is seen.", "There is no evidence of {}.", "{} is ruled out.", "Negative for {}.", "No signs of {}.",
};
constexpr std::array<std::string_view, 4> kHedge{
    "Possible {}.", "Findings may represent {}.", "Cannot exclude {}.", "Questionable {}.",
};
constexpr std::array<std::string_view, 6> kFiller{
    "The image quality is adequate for interpretation.",
    "Patient positioning is acceptable.",
    "Comparison with prior imaging would be helpful.",
    "The osseous structures were reviewed.",
    "Soft tissues appear unremarkable.",
    "Clinical correlation is recommended.",
};
// Paraphrases outside the default lexicon, used only in adversarial mode.
constexpr std::array<std::string_view, kNumLabels> kParaphrase{
    "blunting of the costophrenic angle", "a hazy density", "a large heart", "partial collapse",
    "fluid overload", "a lobar infection", "dense airspace filling", "a rounded density",
    "a broad mediastinal contour", "a collapsed lung with free air", "an irregular pleural margin", "a broken rib",
};

std::string fill(std::string_view tmpl, const std::string& term) {
    std::string out(tmpl);
    auto pos = out.find("{}");
    out.replace(pos, 2, term);
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

struct ImageOut {
    GroundTruth gt;
    std::vector<EvalRecord> records;
    std::vector<PlantedRecord> planted;
};

class RecordWriter {
public:
    RecordWriter(Rng& rng, const Lexicon& lexicon, bool adversarial)
        : rng_(rng), lexicon_(lexicon), adversarial_(adversarial) {}

    std::string affirm(PathologyLabel l) {
        if (adversarial_ && rng_.bernoulli(0.25)) {
            return fill(kAffirm[rng_.below(kAffirm.size())], std::string(kParaphrase[index_of(l)]));
        }
        return fill(kAffirm[rng_.below(kAffirm.size())], term(l));
    }
    std::string negate(PathologyLabel l) { return fill(kNegate[rng_.below(kNegate.size())], term(l)); }
    std::string hedge(PathologyLabel l) { return fill(kHedge[rng_.below(kHedge.size())], term(l)); }

private:
    std::string term(PathologyLabel l) { return rng_.pick(lexicon_.terms[l]); }

    Rng& rng_;
    const Lexicon& lexicon_;
    bool adversarial_;
};

void finish_planted(PlantedRecord& p, const GroundTruth& gt) {
    for (auto l : kAllLabels) {
        if (p.vote_flags[l] && gt.labels[l] == LabelState::Negative) p.fabrications.push_back(l);
        if (!p.vote_flags[l] && gt.labels[l] == LabelState::Positive) p.omissions.push_back(l);
    }
    p.hallucinated = !p.fabrications.empty() || !p.omissions.empty() || p.vqa_mismatch.value_or(false);
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& s : parts) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

ImageOut generate_image(const SynthSpec& spec, const Lexicon& lexicon, std::size_t index, std::size_t n_patients) {
    ImageOut out;
    Rng rng(derive_seed(spec.seed, 2 * index));
    char id[32];
    std::snprintf(id, sizeof id, "img-%05zu", index + 1);
    out.gt.image_id = id;
    std::snprintf(id, sizeof id, "pat-%05llu", static_cast<unsigned long long>(rng.below(n_patients) + 1));
    out.gt.patient_id = id;

    std::vector<PathologyLabel> positives, negatives;
    std::vector<std::string> report;
    for (auto l : kAllLabels) {
        const double u = rng.uniform();
        const auto state = u < spec.label_prevalence[l] ? LabelState::Positive
                           : u < spec.label_prevalence[l] + spec.uncertain_prevalence[l] ? LabelState::Uncertain
                                                                                          : LabelState::Negative;
        out.gt.labels[l] = state;
        if (state == LabelState::Positive) {
            positives.push_back(l);
            report.push_back(fill(kAffirm[0], lexicon.terms[l].front()));
        } else if (state == LabelState::Negative) {
            negatives.push_back(l);
        } else {
            report.push_back(fill(kHedge[0], lexicon.terms[l].front()));
        }
    }
    if (positives.empty()) report.insert(report.begin(), "No acute cardiopulmonary process.");
    out.gt.report_text = join(report);

    // One VQA target per image, shared by all models.
    PathologyLabel queried = kAllLabels[0];
    if (!positives.empty() && (negatives.empty() || rng.bernoulli(spec.vqa_positive_rate))) {
        queried = rng.pick(positives);
    } else if (!negatives.empty()) {
        queried = rng.pick(negatives);
    }
    const bool expected_yes = out.gt.labels[queried] == LabelState::Positive;

    const auto record_base = derive_seed(spec.seed, 2 * index + 1);
    std::size_t stream = 0;
    for (auto kind : kAllQueryKinds) {
        if (!spec.queries.count(kind)) continue;
        for (const auto& model : spec.models) {
            Rng r(derive_seed(record_base, stream++));
            RecordWriter writer(r, lexicon, spec.adversarial);
            const double fab = spec.fab_rate(model);
            const double omit = spec.omit_rate(model);

            EvalRecord rec;
            rec.record_id = out.gt.image_id + "-" + std::string(hallu::to_string(kind)) + "-" + model;
            rec.image_id = out.gt.image_id;
            rec.model_id = model;
            rec.query.kind = kind;

            PlantedRecord p;
            p.record_id = rec.record_id;
            std::vector<std::string> body;
            std::string lead;

            if (kind == QueryKind::TargetedVqa) {
                rec.query.queried_label = queried;
                const double p_wrong = expected_yes ? omit : fab;
                const bool wrong = r.bernoulli(p_wrong);
                const bool says_yes = expected_yes != wrong;
                lead = says_yes ? "YES." : "NO.";
                body.push_back(says_yes ? writer.affirm(queried) : writer.negate(queried));
                p.vote_flags[queried] = says_yes;
                p.vqa_mismatch = wrong;
                const bool others = std::any_of(positives.begin(), positives.end(),
                                                [&](PathologyLabel l) { return !(expected_yes && l == queried); });
                p.clean_probability = others ? 0.0 : 1.0 - p_wrong;
            } else {
                lead = kind == QueryKind::ClinicalReasoning ? "Clinical reasoning: the radiograph was reviewed step by step."
                                                           : "Frontal chest radiograph reviewed.";
                double clean = 1.0;
                for (auto l : positives) {
                    clean *= 1.0 - omit;
                    if (!r.bernoulli(omit)) {
                        body.push_back(writer.affirm(l));
                        p.vote_flags[l] = true;
                    }
                }
                std::optional<PathologyLabel> fabricated;
                if (!negatives.empty()) {
                    clean *= 1.0 - fab;
                    if (r.bernoulli(fab)) {
                        fabricated = r.pick(negatives);
                        body.push_back(writer.affirm(*fabricated));
                        p.vote_flags[*fabricated] = true;
                    }
                }
                for (auto l : kAllLabels) {
                    if (out.gt.labels[l] != LabelState::Uncertain) continue;
                    switch (r.below(3)) {
                        case 0: body.push_back(writer.hedge(l)); break;
                        case 1:
                            body.push_back(writer.affirm(l));
                            p.vote_flags[l] = true;
                            break;
                        default: break;
                    }
                }
                for (auto l : negatives) {
                    if (fabricated && *fabricated == l) continue;
                    if (r.bernoulli(spec.negation_mention_rate)) body.push_back(writer.negate(l));
                }
                r.shuffle(body);
                p.clean_probability = clean;
            }
            finish_planted(p, out.gt);

            // Baseline verbosity plus coupling to planted hallucinations.
            const std::size_t n_hall =
                p.fabrications.size() + p.omissions.size() + (p.vqa_mismatch.value_or(false) ? 1 : 0);
            std::size_t extra = 0;
            for (auto n = r.below(3); n > 0; --n) body.push_back(std::string(kFiller[r.below(kFiller.size())]));
            const double target = spec.verbosity_coupling * static_cast<double>(n_hall);
            while (static_cast<double>(extra) < target) {
                const auto& s = kFiller[r.below(kFiller.size())];
                body.emplace_back(s);
                extra += s.size() + 1;
            }

            const auto profile = spec.profile(model);
            if (profile.kind != CalibrationProfile::Kind::None) {
                const double c = profile.kind == CalibrationProfile::Kind::Perfect ? p.clean_probability : profile.confidence;
                const long pct = std::lround(c * 100.0);
                rec.stated_confidence = static_cast<double>(pct) / 100.0;
                body.push_back("Confidence: " + std::to_string(pct) + "%.");
            }
            body.insert(body.begin(), lead);
            rec.response_text = join(body);
            out.records.push_back(std::move(rec));
            out.planted.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace

Generated generate(const SynthSpec& spec, const Lexicon& lexicon, std::size_t jobs) {
    spec.validate();
    lexicon.validate();
    const std::size_t n_patients = (spec.n_images + spec.images_per_patient - 1) / spec.images_per_patient;
    std::vector<ImageOut> images(spec.n_images);
    parallel_for(spec.n_images, jobs, [&](std::size_t i) { images[i] = generate_image(spec, lexicon, i, n_patients); });

    std::vector<GroundTruth> gts;
    std::vector<EvalRecord> records;
    PlantedTruth planted;
    gts.reserve(images.size());
    for (auto& img : images) {
        gts.push_back(std::move(img.gt));
        for (auto& r : img.records) records.push_back(std::move(r));
        for (auto& p : img.planted) planted.records.push_back(std::move(p));
    }
    return {Corpus(std::move(gts), std::move(records)), std::move(planted)};
}

// --- planted truth I/O ----------------------------------------------------------

std::string to_jsonl(const PlantedRecord& p) {
    auto labels = [](const std::vector<PathologyLabel>& v) {
        ordered_json arr = ordered_json::array();
        for (auto l : v) arr.push_back(std::string(hallu::to_string(l)));
        return arr;
    };
    ordered_json obj;
    obj["record_id"] = p.record_id;
    obj["fabrications"] = labels(p.fabrications);
    obj["omissions"] = labels(p.omissions);
    ordered_json votes = ordered_json::object();
    for (auto l : kAllLabels) votes[std::string(hallu::to_string(l))] = p.vote_flags[l];
    obj["vote_flags"] = std::move(votes);
    obj["vqa_mismatch"] = p.vqa_mismatch ? ordered_json(*p.vqa_mismatch) : ordered_json(nullptr);
    obj["hallucinated"] = p.hallucinated;
    obj["clean_probability"] = p.clean_probability;
    return obj.dump();
}

void write_planted(const std::filesystem::path& path, const PlantedTruth& planted) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& p : planted.records) out << to_jsonl(p) << '\n';
}

PlantedTruth load_planted(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open planted truth " + path.string());
    PlantedTruth out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = json::parse(line);
            PlantedRecord p;
            p.record_id = obj.at("record_id").get<std::string>();
            for (const auto& v : obj.at("fabrications")) p.fabrications.push_back(require_label(v.get<std::string>()));
            for (const auto& v : obj.at("omissions")) p.omissions.push_back(require_label(v.get<std::string>()));
            for (const auto& [k, v] : obj.at("vote_flags").items()) p.vote_flags[require_label(k)] = v.get<bool>();
            if (!obj.at("vqa_mismatch").is_null()) p.vqa_mismatch = obj.at("vqa_mismatch").get<bool>();
            p.hallucinated = obj.at("hallucinated").get<bool>();
            p.clean_probability = obj.value("clean_probability", 1.0);
            out.records.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw CorpusError(n, e.what());
        }
    }
    return out;
}

VerifyReport verify(const std::vector<DetectionResult>& detections, const PlantedTruth& planted) {
    if (detections.size() != planted.records.size()) {
        throw ValidationError("verify: " + std::to_string(detections.size()) + " detections for " +
                              std::to_string(planted.records.size()) + " planted records");
    }
    VerifyReport report;
    report.n_records = detections.size();
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const auto& d = detections[i];
        const auto& p = planted.records[i];
        if (d.record_id != p.record_id) {
            throw ValidationError("verify: record order differs at " + d.record_id + " / " + p.record_id);
        }
        const auto before = report.mismatches.size();
        if (d.fabrications != p.fabrications) report.mismatches.push_back({d.record_id, "fabrications"});
        if (d.omissions != p.omissions) report.mismatches.push_back({d.record_id, "omissions"});
        if (!(d.vote_flags == p.vote_flags)) report.mismatches.push_back({d.record_id, "vote_flags"});
        if (d.vqa_mismatch != p.vqa_mismatch) report.mismatches.push_back({d.record_id, "vqa_mismatch"});
        if (report.mismatches.size() == before) ++report.exact_records;
        if (d.hallucinated && p.hallucinated) ++report.tp;
        else if (d.hallucinated) ++report.fp;
        else if (p.hallucinated) ++report.fn;
        else ++report.tn;
    }
    const double denom = static_cast<double>(2 * report.tp + report.fp + report.fn);
    report.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(report.tp) / denom;
    return report;
}

}  // namespace hallu::synth
