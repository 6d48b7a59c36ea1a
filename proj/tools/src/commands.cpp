#include "hallu_cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hallu/detect.hpp"
#include "hallu/ensemble.hpp"
#include "hallu/error.hpp"
#include "hallu/format.hpp"
#include "hallu/judge.hpp"
#include "hallu/logistic.hpp"
#include "hallu/metrics.hpp"
#include "hallu/parallel.hpp"
#include "hallu/synth.hpp"
#include "hallu_cli/config.hpp"
#include "hallu_cli/http_judge.hpp"
#include "hallu_cli/output.hpp"
#include "hallu_cli/svg.hpp"

namespace hallu::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

/// Live judging exhausted its retries on at least one record.
struct TransportExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

struct Context {
    RunConfig config;
    std::size_t jobs = 1;
    std::ostream& log;
    std::vector<ManifestInput> inputs;

    Extractor extractor() {
        auto lexicon = Lexicon::defaults();
        auto cues = CueSet::defaults();
        if (config.lexicon) {
            lexicon = load_lexicon(require_input(config.lexicon, "lexicon"));
            inputs.push_back({"lexicon", *config.lexicon});
        }
        if (config.cues) {
            cues = load_cues(require_input(config.cues, "cues"));
            inputs.push_back({"cues", *config.cues});
        }
        return Extractor(std::move(lexicon), std::move(cues));
    }

    Corpus corpus() {
        const auto& path = require_input(config.corpus, "corpus");
        inputs.push_back({"corpus", path});
        auto c = load_corpus(path).with_policy(config.uncertain_policy);
        if (config.models) {
            if (config.models->empty()) throw ValidationError("model filter is empty");
            const auto present = c.model_ids();
            for (const auto& m : *config.models) {
                if (std::find(present.begin(), present.end(), m) == present.end()) {
                    throw ValidationError("model \"" + m + "\" has no records in the corpus");
                }
            }
            c = c.filter_models(*config.models);
        }
        return c;
    }

    /// Detections from the configured file, or computed from the corpus.
    std::vector<DetectionResult> detections(const Corpus& corpus, const Extractor& extractor) {
        if (config.detections) {
            const auto& path = require_input(config.detections, "detections");
            inputs.push_back({"detections", path});
            return load_detections(path, corpus);
        }
        return detect_all(corpus, extractor, jobs);
    }

    metrics::BootstrapOptions bootstrap() const {
        return {config.bootstrap_resamples, config.bootstrap_level, config.seed};
    }
};

std::string jsonl(const auto& items) {
    std::string out;
    for (const auto& x : items) {
        out += to_jsonl(x);
        out += '\n';
    }
    return out;
}

ordered_json warnings_json(const std::vector<std::string>& w) { return ordered_json(w); }

// --- calibration helpers ----------------------------------------------------------

struct ModelCalibration {
    std::string model;
    std::size_t n_records = 0;
    std::size_t n_with_confidence = 0;
    bool sufficient = false;
    metrics::EceReport report;
};

std::vector<ModelCalibration> calibrate(const Corpus& corpus, const std::vector<DetectionResult>& detections,
                                        std::size_t bins, std::size_t min_count) {
    std::vector<ModelCalibration> out;
    const auto& records = corpus.records();
    for (const auto& model : corpus.model_ids()) {
        ModelCalibration mc;
        mc.model = model;
        std::vector<double> conf;
        std::vector<bool> correct;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].model_id != model) continue;
            ++mc.n_records;
            auto c = records[i].stated_confidence;
            if (!c) c = parse_confidence(records[i].response_text);
            if (!c) continue;
            conf.push_back(*c);
            correct.push_back(!detections[i].hallucinated);
        }
        mc.n_with_confidence = conf.size();
        mc.sufficient = !conf.empty() && conf.size() >= min_count;
        if (mc.sufficient) mc.report = metrics::ece(conf, correct, bins);
        out.push_back(std::move(mc));
    }
    return out;
}

std::map<std::string, double> ece_map(const std::vector<ModelCalibration>& cal) {
    std::map<std::string, double> out;
    for (const auto& c : cal) {
        if (c.sufficient) out[c.model] = c.report.ece;
    }
    return out;
}

std::map<std::string, double> load_ece_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open ECE table " + path.string());
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ValidationError("ECE table must be a JSON object");
    if (auto it = doc.find("ece_table"); it != doc.end()) doc = *it;
    std::map<std::string, double> out;
    for (const auto& [model, v] : doc.items()) {
        if (!v.is_number()) throw ValidationError("ECE for \"" + model + "\" is not a number");
        out[model] = v.get<double>();
    }
    return out;
}

// --- commands ---------------------------------------------------------------------

void cmd_validate(Context& ctx, OutputDir& out) {
    const auto corpus = ctx.corpus();
    if (corpus.empty()) throw ValidationError("corpus is empty");
    std::array<std::size_t, 4> strata{};
    for (const auto& gt : corpus.ground_truths()) strata[static_cast<std::size_t>(assign_stratum(gt))] += 1;
    ordered_json kinds = ordered_json::object();
    for (auto k : kAllQueryKinds) {
        kinds[std::string(to_string(k))] = std::count_if(corpus.records().begin(), corpus.records().end(),
                                                         [&](const EvalRecord& r) { return r.query.kind == k; });
    }
    ordered_json report;
    report["valid"] = true;
    report["n_ground_truths"] = corpus.ground_truths().size();
    report["n_records"] = corpus.records().size();
    report["models"] = corpus.model_ids();
    report["uncertain_policy"] = std::string(to_string(ctx.config.uncertain_policy));
    ordered_json st = ordered_json::object();
    for (auto s : kAllStrata) st[std::string(to_string(s))] = strata[static_cast<std::size_t>(s)];
    report["images_per_stratum"] = std::move(st);
    report["records_per_query_type"] = std::move(kinds);
    out.write_json("validation.json", report);
    ctx.log << "valid: " << corpus.ground_truths().size() << " images, " << corpus.records().size() << " records\n";
}

void cmd_synth(Context& ctx, OutputDir& out) {
    auto doc = ctx.config.synth;
    if (ctx.config.synth_spec) {
        const auto& path = require_input(ctx.config.synth_spec, "synth_spec");
        ctx.inputs.push_back({"synth_spec", path});
        std::ifstream in(path);
        doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ValidationError("synth spec is not valid JSON");
    }
    doc["seed"] = ctx.config.seed;
    const auto spec = synth::spec_from_json(doc);
    Lexicon lexicon = Lexicon::defaults();
    if (ctx.config.lexicon) {
        lexicon = load_lexicon(require_input(ctx.config.lexicon, "lexicon"));
        ctx.inputs.push_back({"lexicon", *ctx.config.lexicon});
    }
    const auto generated = synth::generate(spec, lexicon, ctx.jobs);
    std::ostringstream corpus;
    write_corpus(corpus, generated.corpus);
    out.write("corpus.jsonl", corpus.str());
    out.write("planted_truth.jsonl", jsonl(generated.planted.records));

    ordered_json s;
    s["n_images"] = spec.n_images;
    s["models"] = spec.models;
    ordered_json prev = ordered_json::object(), unc = ordered_json::object();
    for (auto l : kAllLabels) {
        prev[std::string(to_string(l))] = spec.label_prevalence[l];
        unc[std::string(to_string(l))] = spec.uncertain_prevalence[l];
    }
    s["label_prevalence"] = std::move(prev);
    s["uncertain_prevalence"] = std::move(unc);
    ordered_json fab = ordered_json::object(), omit = ordered_json::object(), cal = ordered_json::object();
    for (const auto& m : spec.models) {
        fab[m] = spec.fab_rate(m);
        omit[m] = spec.omit_rate(m);
        cal[m] = synth::to_string(spec.profile(m));
    }
    s["per_model_fab_rate"] = std::move(fab);
    s["per_model_omit_rate"] = std::move(omit);
    s["calibration_profile"] = std::move(cal);
    s["negation_mention_rate"] = spec.negation_mention_rate;
    s["verbosity_coupling"] = spec.verbosity_coupling;
    s["seed"] = spec.seed;
    s["adversarial"] = spec.adversarial;
    ordered_json q = ordered_json::array();
    for (auto k : spec.queries) q.push_back(std::string(to_string(k)));
    s["queries"] = std::move(q);
    s["vqa_positive_rate"] = spec.vqa_positive_rate;
    s["images_per_patient"] = spec.images_per_patient;
    out.write_json("synth_spec.json", s);
    ctx.log << "synth: " << generated.corpus.ground_truths().size() << " images, "
            << generated.corpus.records().size() << " records\n";
}

void cmd_detect(Context& ctx, OutputDir& out) {
    const auto extractor = ctx.extractor();
    const auto corpus = ctx.corpus();
    const auto detections = detect_all(corpus, extractor, ctx.jobs);
    out.write("detections.jsonl", jsonl(detections));

    const auto flags = hallucinated_flags(detections);
    const auto boot = ctx.bootstrap();
    std::vector<std::string> warnings;
    auto rates = [&](const std::string& name, std::vector<GroupField> fields) {
        auto table = rate_table(flags, corpus, fields, boot);
        out.write(name, table.to_csv());
        warnings.insert(warnings.end(), table.warnings.begin(), table.warnings.end());
    };
    rates("rates_overall.csv", {});
    rates("rates_by_model.csv", {GroupField::Model});
    rates("rates_by_stratum.csv", {GroupField::Stratum});
    rates("rates_by_model_stratum.csv", {GroupField::Model, GroupField::Stratum});
    rates("rates_by_model_query.csv", {GroupField::Model, GroupField::QueryType});

    out.write("per_label.csv", per_label_counts(detections, corpus).to_csv());
    const auto qt = query_type_table(detections, corpus);
    out.write("query_type.csv", qt.to_csv());
    out.write("vqa_accuracy.csv", qt.vqa_to_csv());

    const auto phis = model_phi(detections, corpus, &warnings);
    std::ostringstream phi_csv;
    phi_csv << "model_a,model_b,phi,n_pairs\n";
    for (const auto& p : phis) {
        phi_csv << csv_field(p.model_a) << ',' << csv_field(p.model_b) << ',' << fmt_double(p.phi) << ','
                << p.n_pairs << '\n';
    }
    out.write("phi.csv", phi_csv.str());

    ordered_json summary;
    summary["n_records"] = detections.size();
    summary["n_hallucinated"] = std::count(flags.begin(), flags.end(), true);
    summary["uncertain_policy"] = std::string(to_string(ctx.config.uncertain_policy));
    if (ctx.config.planted) {
        const auto& path = require_input(ctx.config.planted, "planted");
        ctx.inputs.push_back({"planted", path});
        const auto report = synth::verify(detections, synth::load_planted(path));
        ordered_json v;
        v["n_records"] = report.n_records;
        v["exact_records"] = report.exact_records;
        v["exact"] = report.exact();
        v["f1"] = report.f1;
        ordered_json mm = ordered_json::array();
        for (const auto& m : report.mismatches) mm.push_back({{"record_id", m.record_id}, {"component", m.component}});
        v["mismatches"] = std::move(mm);
        summary["planted_verification"] = std::move(v);
        ctx.log << "planted truth: " << report.exact_records << "/" << report.n_records << " records exact, F1 "
                << fmt_double(report.f1, 4) << "\n";
    }
    summary["warnings"] = warnings_json(warnings);
    out.write_json("detect_summary.json", summary);
    ctx.log << "detect: " << detections.size() << " records\n";
}

void cmd_judge(Context& ctx, OutputDir& out, const std::optional<std::string>& mode_override) {
    const auto mode = mode_override.value_or(ctx.config.judge.mode);
    const auto extractor = ctx.extractor();
    const auto corpus = ctx.corpus();

    JudgeOptions options;
    options.concurrency_limit = std::min(ctx.config.judge.concurrency, std::max<std::size_t>(1, ctx.jobs));
    options.max_retries = ctx.config.judge.max_retries;
    options.backoff_base = std::chrono::milliseconds(ctx.config.judge.backoff_ms);

    JudgeRun run;
    if (mode == "live") {
        const char* token = std::getenv("HALLU_JUDGE_TOKEN");
        if (!token || !*token) throw ValidationError("live judging needs HALLU_JUDGE_TOKEN in the environment");
        if (ctx.config.judge.endpoint.empty()) throw ValidationError("config.judge.endpoint is required for live judging");
        options.concurrency_limit = ctx.config.judge.concurrency;
        HttpJudgeClient client(ctx.config.judge.endpoint, ctx.config.judge.model, token,
                               ctx.config.judge.timeout_seconds);
        run = run_judge(client, corpus, options);
    } else if (mode == "mock") {
        options.sleep = [](std::chrono::milliseconds) {};
        MockJudgeClient client(corpus, extractor, ctx.config.judge.fail_records);
        run = run_judge(client, corpus, options);
    } else {
        throw ValidationError("judge mode must be mock or live");
    }
    out.write("judge_reports.jsonl", jsonl(run.reports));

    std::unordered_map<std::string, std::string> model_of;
    for (const auto& r : corpus.records()) model_of.emplace(r.record_id, r.model_id);
    std::vector<std::pair<std::string, Verdict>> verdicts;
    for (const auto& rep : run.reports) {
        for (const auto& v : rep.verdicts) verdicts.emplace_back(model_of.at(rep.record_id), v);
    }
    out.write("type_by_model.csv", type_count_table(verdicts, corpus.model_ids()).to_csv());

    ordered_json summary;
    summary["mode"] = mode;
    summary["n_records"] = run.reports.size();
    summary["success_rate"] = run.success_rate;
    summary["transport_failures"] = run.transport_failures;
    summary["parse_failures"] = std::count_if(run.reports.begin(), run.reports.end(), [](const JudgeReport& r) {
        return !r.parse_success && !r.transport_failed;
    });
    summary["n_verdicts"] = verdicts.size();

    if (ctx.config.judge.annotations || ctx.config.judge.second_judge) {
        std::ostringstream csv;
        csv << "comparison,n,tp,fp,fn,tn,precision,recall,f1,cohen_kappa,percent_agreement,"
               "severity3_concordance,severity_within_1,type_overlap\n";
        ordered_json agreement = ordered_json::object();
        auto row = [&](const std::string& name, const AgreementStats& s) {
            const auto& c = s.confusion;
            csv << name << ',' << s.n_paired << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ','
                << fmt_optional(s.precision) << ',' << fmt_optional(s.recall) << ',' << fmt_optional(s.f1) << ','
                << fmt_double(s.cohen_kappa) << ',' << fmt_double(s.percent_agreement) << ','
                << fmt_optional(s.severity3_concordance) << ',' << fmt_optional(s.severity_within_1) << ','
                << fmt_optional(s.type_overlap) << '\n';
            agreement[name] = to_json(s);
        };
        const auto judged = assessments_from(run.reports);
        if (ctx.config.judge.annotations) {
            const auto& path = require_input(ctx.config.judge.annotations, "annotations");
            ctx.inputs.push_back({"annotations", path});
            const auto human = assessments_from(load_annotations(path));
            // Records the judge failed on are compared against detection only.
            std::set<std::string> judged_ids;
            for (const auto& a : judged) judged_ids.insert(a.record_id);
            std::vector<Assessment> human_judged;
            for (const auto& h : human) {
                if (judged_ids.count(h.record_id)) human_judged.push_back(h);
            }
            std::set<std::string> known;
            for (const auto& r : corpus.records()) known.insert(r.record_id);
            for (const auto& h : human) {
                if (!known.count(h.record_id)) throw ValidationError("annotation references unknown record \"" + h.record_id + "\"");
            }
            if (!human_judged.empty()) row("judge_vs_human", validate_against_human(judged, human_judged));
            const auto detections = ctx.detections(corpus, extractor);
            row("detection_vs_human", validate_against_human(assessments_from(detections), human));
        }
        if (ctx.config.judge.second_judge) {
            const auto& path = require_input(ctx.config.judge.second_judge, "second_judge");
            ctx.inputs.push_back({"second_judge", path});
            auto second = assessments_from(load_judge_reports(path));
            std::set<std::string> judged_ids;
            for (const auto& a : judged) judged_ids.insert(a.record_id);
            std::erase_if(second, [&](const Assessment& a) { return !judged_ids.count(a.record_id); });
            if (!second.empty()) row("inter_judge", validate_against_human(judged, second));
        }
        out.write("agreement.csv", csv.str());
        out.write_json("agreement.json", agreement);
    }
    summary["warnings"] = warnings_json(run.warnings);
    out.write_json("judge_summary.json", summary);
    ctx.log << "judge (" << mode << "): " << run.reports.size() << " records, success rate "
            << fmt_double(run.success_rate, 4) << "\n";
    if (mode == "live" && run.transport_failures > 0) {
        throw TransportExhausted(std::to_string(run.transport_failures) + " records exhausted their retries");
    }
}

void cmd_calibration(Context& ctx, OutputDir& out) {
    const auto extractor = ctx.extractor();
    const auto corpus = ctx.corpus();
    const auto detections = ctx.detections(corpus, extractor);
    const auto cal = calibrate(corpus, detections, ctx.config.calibration_bins, ctx.config.min_confidence_count);

    ordered_json doc;
    doc["n_bins"] = ctx.config.calibration_bins;
    doc["min_count"] = ctx.config.min_confidence_count;
    ordered_json models = ordered_json::array();
    std::ostringstream csv;
    csv << "model,bin_lo,bin_hi,count,mean_confidence,accuracy\n";
    std::map<std::string, metrics::EceReport> plotted;
    for (const auto& c : cal) {
        ordered_json m;
        m["model"] = c.model;
        m["n_records"] = c.n_records;
        m["n_with_confidence"] = c.n_with_confidence;
        m["n_excluded"] = c.n_records - c.n_with_confidence;
        if (!c.sufficient) {
            m["status"] = "insufficient data";
            m["ece"] = nullptr;
        } else {
            m["status"] = "ok";
            m["ece"] = c.report.ece;
            ordered_json bins = ordered_json::array();
            for (const auto& b : c.report.bins) {
                bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean_confidence", b.mean_confidence},
                                {"accuracy", b.accuracy}});
                csv << csv_field(c.model) << ',' << fmt_double(b.lo, 2) << ',' << fmt_double(b.hi, 2) << ','
                    << b.count << ',' << fmt_double(b.mean_confidence) << ',' << fmt_double(b.accuracy) << '\n';
            }
            m["bins"] = std::move(bins);
            plotted[c.model] = c.report;
        }
        models.push_back(std::move(m));
    }
    doc["models"] = std::move(models);
    ordered_json table = ordered_json::object();
    for (const auto& [m, e] : ece_map(cal)) table[m] = e;
    doc["ece_table"] = table;
    out.write_json("calibration.json", doc);
    out.write_json("ece_table.json", table);
    out.write("calibration_bins.csv", csv.str());
    out.write("calibration.svg", calibration_svg(plotted));
    ctx.log << "calibration: " << plotted.size() << " of " << cal.size() << " models with enough confidences\n";
}

ordered_json roc_json(const metrics::RocReport& r) {
    return {{"auc", r.auc},
            {"n_positive", r.n_positive},
            {"n_negative", r.n_negative},
            {"youden_threshold", r.youden_threshold},
            {"youden_j", r.youden_j},
            {"sensitivity", r.sensitivity_at_youden},
            {"specificity", r.specificity_at_youden}};
}

ordered_json model_json(const metrics::LogisticModel& m) {
    ordered_json j;
    j["feature_names"] = m.feature_names;
    j["coefficients"] = m.coefficients;
    j["coefficient_scale"] = "standardized";
    j["intercept"] = m.intercept;
    j["column_means"] = m.column_means;
    j["column_scales"] = m.column_scales;
    j["training_auc"] = m.training_auc;
    j["cv_auc"] = opt_json(m.cv_auc);
    j["converged"] = m.converged;
    j["iterations"] = m.iterations;
    j["gradient_norm"] = m.gradient_norm;
    j["warnings"] = m.warnings;
    return j;
}

/// Runs fn; a failure becomes {"error": message} in the report instead of aborting.
template <typename F>
ordered_json guarded(F&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return ordered_json{{"error", e.what()}};
    }
}

void cmd_risk(Context& ctx, OutputDir& out) {
    const auto extractor = ctx.extractor();
    const auto corpus = ctx.corpus();
    const auto detections = ctx.detections(corpus, extractor);
    const auto& records = corpus.records();
    if (records.empty()) throw ValidationError("risk analysis needs at least one record");

    std::vector<double> lengths;
    std::vector<bool> flags;
    std::vector<std::string> by_model, by_query, by_stratum, patients;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& gt = corpus.ground_truth_for(records[i]);
        lengths.push_back(static_cast<double>(records[i].response_length));
        flags.push_back(detections[i].hallucinated);
        by_model.push_back(records[i].model_id);
        by_query.emplace_back(to_string(records[i].query.kind));
        by_stratum.emplace_back(to_string(assign_stratum(gt)));
        patients.push_back(gt.patient_id);
    }

    ordered_json corr;
    corr["n"] = records.size();
    corr["spearman"] = guarded([&] {
        std::vector<double> y(flags.begin(), flags.end());
        const auto t = metrics::spearman_test(lengths, y);
        return ordered_json{{"rho", t.rho}, {"p_value", t.p_value}, {"exact", t.exact}};
    });
    corr["point_biserial"] = guarded([&] { return ordered_json{{"r", metrics::point_biserial(flags, lengths)}}; });
    {
        double sum_h = 0, sum_c = 0;
        std::size_t n_h = 0, n_c = 0;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            (flags[i] ? sum_h : sum_c) += lengths[i];
            (flags[i] ? n_h : n_c) += 1;
        }
        corr["mean_length_hallucinated"] = n_h ? ordered_json(sum_h / static_cast<double>(n_h)) : ordered_json(nullptr);
        corr["mean_length_clean"] = n_c ? ordered_json(sum_c / static_cast<double>(n_c)) : ordered_json(nullptr);
    }

    std::optional<metrics::RocReport> roc;
    corr["roc"] = guarded([&] {
        roc = metrics::roc_auc(lengths, flags);
        return roc_json(*roc);
    });
    if (roc) {
        std::ostringstream csv;
        csv << "fpr,tpr,threshold\n";
        for (const auto& p : roc->points) {
            csv << fmt_double(p.fpr) << ',' << fmt_double(p.tpr) << ',' << fmt_double(p.threshold, 1) << '\n';
        }
        out.write("roc.csv", csv.str());
        out.write("roc.svg", roc_svg(*roc, "Response length as hallucination risk"));
        std::ostringstream y;
        y << "threshold,youden_j,sensitivity,specificity\n"
          << fmt_double(roc->youden_threshold, 1) << ',' << fmt_double(roc->youden_j) << ','
          << fmt_double(roc->sensitivity_at_youden) << ',' << fmt_double(roc->specificity_at_youden) << '\n';
        out.write("youden.csv", y.str());
    }

    std::ostringstream auc_csv;
    auc_csv << "grouping,group,auc,n_positive,n_negative,note\n";
    ordered_json conditional = ordered_json::object();
    auto grouped = [&](const std::string& name, const std::vector<std::string>& groups) {
        const auto res = metrics::conditional_auc(lengths, flags, groups);
        ordered_json g = ordered_json::object();
        std::set<std::string> names(groups.begin(), groups.end());
        for (const auto& group : names) {
            auto it = res.groups.find(group);
            if (it == res.groups.end()) {
                g[group] = {{"error", "single-class group"}};
                auc_csv << name << ',' << csv_field(group) << ",,,,single-class group\n";
                continue;
            }
            g[group] = roc_json(it->second);
            auc_csv << name << ',' << csv_field(group) << ',' << fmt_double(it->second.auc) << ','
                    << it->second.n_positive << ',' << it->second.n_negative << ",\n";
        }
        conditional[name] = std::move(g);
    };
    grouped("model", by_model);
    grouped("query_type", by_query);
    grouped("stratum", by_stratum);
    corr["conditional_auc"] = std::move(conditional);
    out.write("auc_by_group.csv", auc_csv.str());

    corr["quintiles"] = guarded([&] {
        const auto q = metrics::quintile_rates(lengths, flags);
        std::ostringstream csv;
        csv << "quintile,lo,hi,n,rate\n";
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < q.size(); ++i) {
            csv << 'Q' << i + 1 << ',' << fmt_double(q[i].lo, 1) << ',' << fmt_double(q[i].hi, 1) << ',' << q[i].n
                << ',' << fmt_optional(q[i].rate) << '\n';
            rows.push_back({{"lo", q[i].lo}, {"hi", q[i].hi}, {"n", q[i].n}, {"rate", opt_json(q[i].rate)}});
        }
        out.write("quintiles.csv", csv.str());
        return rows;
    });
    out.write_json("correlation.json", corr);

    // Logistic models: length only, then length + confidence + query type + stratum.
    metrics::LogisticOptions lopt;
    lopt.l2 = ctx.config.l2;
    const auto k = ctx.config.risk_folds;
    const auto seed = derive_seed(ctx.config.seed, 1);
    ordered_json logistic;
    logistic["cv_folds"] = k;
    logistic["cv_groups"] = "patient";
    logistic["length_only"] = guarded([&] {
        metrics::FeatureMatrix x(records.size(), {"length"});
        for (std::size_t i = 0; i < records.size(); ++i) x.at(i, 0) = lengths[i];
        auto model = metrics::logistic_fit(x, flags, lopt);
        model.cv_auc = metrics::logistic_cv_auc(x, flags, k, &patients, seed, lopt);
        return model_json(model);
    });
    logistic["multi_feature"] = guarded([&] {
        std::vector<std::optional<double>> conf(records.size());
        double sum = 0;
        std::size_t n_conf = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            conf[i] = records[i].stated_confidence ? records[i].stated_confidence
                                                   : parse_confidence(records[i].response_text);
            if (conf[i]) {
                sum += *conf[i];
                ++n_conf;
            }
        }
        const double fill = n_conf ? sum / static_cast<double>(n_conf) : 0.0;
        std::vector<std::string> names{"length", "confidence", "confidence_missing", "query_vqa", "query_clinical",
                                       "stratum_S2", "stratum_S3", "stratum_S4"};
        std::vector<std::vector<double>> cols(names.size(), std::vector<double>(records.size()));
        for (std::size_t i = 0; i < records.size(); ++i) {
            cols[0][i] = lengths[i];
            cols[1][i] = conf[i].value_or(fill);
            cols[2][i] = conf[i] ? 0.0 : 1.0;
            cols[3][i] = records[i].query.kind == QueryKind::TargetedVqa ? 1.0 : 0.0;
            cols[4][i] = records[i].query.kind == QueryKind::ClinicalReasoning ? 1.0 : 0.0;
            cols[5][i] = by_stratum[i] == "S2" ? 1.0 : 0.0;
            cols[6][i] = by_stratum[i] == "S3" ? 1.0 : 0.0;
            cols[7][i] = by_stratum[i] == "S4" ? 1.0 : 0.0;
        }
        std::vector<std::string> kept_names, dropped;
        std::vector<std::size_t> kept;
        for (std::size_t c = 0; c < names.size(); ++c) {
            const auto [lo, hi] = std::minmax_element(cols[c].begin(), cols[c].end());
            if (*lo == *hi) {
                dropped.push_back(names[c]);
            } else {
                kept.push_back(c);
                kept_names.push_back(names[c]);
            }
        }
        if (kept.empty()) throw DomainError("every candidate feature is constant");
        metrics::FeatureMatrix x(records.size(), kept_names);
        for (std::size_t i = 0; i < records.size(); ++i) {
            for (std::size_t c = 0; c < kept.size(); ++c) x.at(i, c) = cols[kept[c]][i];
        }
        auto model = metrics::logistic_fit(x, flags, lopt);
        model.cv_auc = metrics::logistic_cv_auc(x, flags, k, &patients, seed, lopt);
        auto j = model_json(model);
        j["dropped_constant_features"] = dropped;
        j["confidence_imputation"] = "mean of available confidences, with missing indicator";
        return j;
    });
    out.write_json("logistic.json", logistic);
    ctx.log << "risk: " << records.size() << " records";
    if (roc) ctx.log << ", AUC " << fmt_double(roc->auc, 3);
    ctx.log << "\n";
}

ordered_json metrics_json(const ensemble::EnsembleMetrics& m) {
    return {{"tp", m.tp},
            {"fp", m.fp},
            {"fn", m.fn},
            {"tn", m.tn},
            {"fabrication_rate", opt_json(m.fabrication_rate)},
            {"omission_rate", opt_json(m.omission_rate)},
            {"precision", opt_json(m.precision)},
            {"recall", opt_json(m.recall)},
            {"f1", opt_json(m.f1)}};
}

ordered_json weights_json(const ensemble::WeightTable& t) {
    ordered_json j;
    j["mode"] = t.mode == ensemble::WeightMode::PerModel ? "per-model" : "per-model-per-label";
    j["formula"] = t.formula;
    j["threshold"] = t.threshold;
    ordered_json w = ordered_json::object();
    for (std::size_t m = 0; m < t.models.size(); ++m) {
        if (t.mode == ensemble::WeightMode::PerModel) {
            w[t.models[m]] = t.weights[m][kAllLabels[0]];
        } else {
            ordered_json per = ordered_json::object();
            for (auto l : kAllLabels) per[std::string(to_string(l))] = t.weights[m][l];
            w[t.models[m]] = std::move(per);
        }
    }
    j["weights"] = std::move(w);
    j["warnings"] = t.warnings;
    return j;
}

void cmd_ensemble(Context& ctx, OutputDir& out, const std::optional<std::string>& queries_override) {
    const auto extractor = ctx.extractor();
    const auto corpus = ctx.corpus();
    const auto detections = ctx.detections(corpus, extractor);
    const auto& ec = ctx.config.ensemble;

    auto models = ec.models.empty() ? corpus.model_ids() : ec.models;
    const auto queries = ensemble::parse_queries(queries_override.value_or(ec.queries));
    const auto matrix = ensemble::build_vote_matrix(detections, corpus, models, queries);
    if (ec.k && (*ec.k < 1 || *ec.k > matrix.n_models())) {
        throw ValidationError("ensemble k=" + std::to_string(*ec.k) + " outside [1, " +
                              std::to_string(matrix.n_models()) + "]");
    }

    std::map<std::string, double> ece;
    std::string ece_source;
    if (ec.ece_table) {
        const auto& path = require_input(ec.ece_table, "ece_table");
        ctx.inputs.push_back({"ece_table", path});
        ece = load_ece_table(path);
        ece_source = "file";
    } else {
        ece = ece_map(calibrate(corpus, detections, ctx.config.calibration_bins, ctx.config.min_confidence_count));
        ece_source = "computed";
    }
    std::erase_if(ece, [&](const auto& kv) { return std::find(models.begin(), models.end(), kv.first) == models.end(); });

    ensemble::TableOptions topt;
    topt.ece = ece;
    topt.cv_folds = ec.cv_folds;
    topt.seed = derive_seed(ctx.config.seed, 2);
    topt.jobs = ctx.jobs;
    auto table = ensemble::standard_table(matrix, topt);
    if (ec.k) {
        const auto keep = "simple_k>=" + std::to_string(*ec.k);
        std::erase_if(table.rows, [&](const ensemble::TableRow& r) {
            return r.strategy.rfind("simple_k>=", 0) == 0 && r.strategy != keep;
        });
    }
    if (ece.empty()) table.warnings.push_back("no model has a usable ECE; ece_weighted row omitted");

    ordered_json subsets = ordered_json::array();
    for (const auto& subset : ec.subsets) {
        const auto restricted = matrix.restrict_models(subset);
        std::string name;
        for (const auto& m : subset) name += (name.empty() ? "" : "+") + m;
        const auto majority = (subset.size() + 1) / 2;
        ensemble::TableRow simple{"subset[" + name + "]:simple_k>=" + std::to_string(majority),
                                  ensemble::evaluate(ensemble::simple_vote(restricted, majority), restricted)};
        const auto cv = ensemble::label_aware_cv(restricted, ec.cv_folds, topt.seed, ctx.jobs);
        ensemble::TableRow aware{"subset[" + name + "]:label_aware_cv", cv.pooled_test};
        table.rows.push_back(simple);
        table.rows.push_back(aware);
        subsets.push_back({{"models", subset}, {"n_models", subset.size()}});
    }
    out.write("ensemble.csv", table.to_csv());

    ordered_json doc;
    doc["models"] = matrix.models();
    ordered_json q = ordered_json::array();
    for (auto k : queries) q.push_back(std::string(to_string(k)));
    doc["queries"] = std::move(q);
    doc["n_keys"] = matrix.n_keys();
    doc["n_uncertain_keys"] = std::count_if(matrix.keys().begin(), matrix.keys().end(),
                                            [](const ensemble::VoteKey& k) { return k.truth == LabelState::Uncertain; });
    ordered_json rows = ordered_json::array();
    for (const auto& r : table.rows) rows.push_back({{"strategy", r.strategy}, {"metrics", metrics_json(r.metrics)}});
    doc["rows"] = std::move(rows);
    doc["ece_source"] = ece_source;
    ordered_json ece_json = ordered_json::object();
    for (const auto& [m, e] : ece) ece_json[m] = e;
    doc["ece"] = std::move(ece_json);
    doc["ece_weights"] = table.ece_table ? weights_json(*table.ece_table) : ordered_json(nullptr);
    ordered_json folds = ordered_json::array();
    for (const auto& w : table.label_aware_fold_weights) folds.push_back(weights_json(w));
    doc["label_aware_fold_weights"] = std::move(folds);
    doc["cv_folds"] = ec.cv_folds;
    doc["subsets"] = std::move(subsets);
    doc["warnings"] = table.warnings;
    out.write_json("ensemble.json", doc);
    ctx.log << "ensemble: " << matrix.n_keys() << " keys, " << matrix.n_models() << " models\n";
}

}  // namespace

int run_command(const Invocation& inv, std::ostream& log) {
    static const std::set<std::string> commands{"validate", "synth", "detect", "judge", "calibration", "risk", "ensemble"};
    try {
        if (!commands.count(inv.command)) throw ValidationError("unknown command \"" + inv.command + "\"");
        auto config = load_config(inv.config);
        if (inv.seed) config.seed = *inv.seed;
        if (inv.out) config.out_dir = *inv.out;
        Context ctx{std::move(config), inv.jobs.value_or(default_jobs()), log, {}};
        if (ctx.jobs == 0) throw ValidationError("--jobs must be positive");

        // Nothing is written until a command produces output, so early validation failures leave no directory.
        OutputDir out(ctx.config.out_dir);
        if (inv.command == "validate") {
            cmd_validate(ctx, out);
        } else if (inv.command == "synth") {
            cmd_synth(ctx, out);
        } else if (inv.command == "detect") {
            cmd_detect(ctx, out);
        } else if (inv.command == "judge") {
            try {
                cmd_judge(ctx, out, inv.judge_mode);
            } catch (const TransportExhausted& e) {
                write_manifest(out, inv.command, ctx.config.raw_bytes, ctx.config.seed, ctx.inputs);
                log << "error: " << e.what() << "\n";
                return kExitTransport;
            }
        } else if (inv.command == "calibration") {
            cmd_calibration(ctx, out);
        } else if (inv.command == "risk") {
            cmd_risk(ctx, out);
        } else if (inv.command == "ensemble") {
            cmd_ensemble(ctx, out, inv.queries);
        }
        write_manifest(out, inv.command, ctx.config.raw_bytes, ctx.config.seed, ctx.inputs);
        return kExitOk;
    } catch (const ValidationError& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Audit vision-language model radiology outputs for hallucinations"};
    app.require_subcommand(1);
    Invocation inv;
    std::string config;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::string out;
    bool mock = false, live = false;
    std::string queries;

    const std::vector<std::pair<std::string, std::string>> subs{
        {"validate", "Check a corpus file against the schema"},
        {"synth", "Generate a synthetic corpus with planted ground truth"},
        {"detect", "Auto-detect fabrications and omissions; rate tables"},
        {"judge", "Classify hallucinations with an LLM judge (mock or live)"},
        {"calibration", "Per-model expected calibration error"},
        {"risk", "Response length as a hallucination risk score"},
        {"ensemble", "Voting ensembles over model findings"},
    };
    for (const auto& [name, desc] : subs) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config, "Run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "Seed for every random draw");
        sub->add_option("--jobs", jobs, "Worker threads (default: logical CPUs)");
        sub->add_option("--out", out, "Output directory");
        if (name == "judge") {
            auto* m = sub->add_flag("--mock", mock, "Use the deterministic mock judge");
            sub->add_flag("--live", live, "Call the configured endpoint (needs HALLU_JUDGE_TOKEN)")->excludes(m);
        }
        if (name == "ensemble") sub->add_option("--queries", queries, "Query types pooled into votes, e.g. open,clinical");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }
    auto* sub = app.get_subcommands().front();
    inv.command = sub->get_name();
    inv.config = config;
    if (sub->count("--seed")) inv.seed = seed;
    if (sub->count("--jobs")) inv.jobs = jobs;
    if (sub->count("--out")) inv.out = out;
    if (mock) inv.judge_mode = "mock";
    if (live) inv.judge_mode = "live";
    if (!queries.empty()) inv.queries = queries;
    return run_command(inv, std::cerr);
}

}  // namespace hallu::cli
