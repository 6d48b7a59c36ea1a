#include "hallu_cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hallu/error.hpp"

namespace hallu::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw ValidationError(where + ": unknown key \"" + key + "\"");
    }
}

std::optional<fs::path> path_at(const json& obj, const char* key, const fs::path& base) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    fs::path p(it->get<std::string>());
    return p.is_absolute() ? p : base / p;
}

}  // namespace

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();

    RunConfig c;
    c.config_path = path;
    c.base_dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    c.raw_bytes = buf.str();

    json doc = json::parse(c.raw_bytes, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ValidationError("config " + path.string() + " is not a JSON object");
    check_keys(doc,
               {"corpus", "lexicon", "cues", "detections", "planted", "synth", "synth_spec", "uncertain_policy",
                "models", "judge", "ensemble", "calibration", "bootstrap", "risk", "out", "seed"},
               "config");
    try {
        const auto& base = c.base_dir;
        c.corpus = path_at(doc, "corpus", base);
        c.lexicon = path_at(doc, "lexicon", base);
        c.cues = path_at(doc, "cues", base);
        c.detections = path_at(doc, "detections", base);
        c.planted = path_at(doc, "planted", base);
        c.synth_spec = path_at(doc, "synth_spec", base);
        if (auto it = doc.find("synth"); it != doc.end()) c.synth = *it;
        if (auto it = doc.find("uncertain_policy"); it != doc.end()) {
            auto p = parse_uncertain_policy(it->get<std::string>());
            if (!p) throw ValidationError("config: unknown uncertain_policy \"" + it->get<std::string>() + "\"");
            c.uncertain_policy = *p;
        }
        if (auto it = doc.find("models"); it != doc.end()) c.models = it->get<std::vector<std::string>>();
        if (auto o = path_at(doc, "out", base)) c.out_dir = *o;
        if (auto it = doc.find("seed"); it != doc.end()) c.seed = it->get<std::uint64_t>();

        if (auto it = doc.find("judge"); it != doc.end()) {
            const auto& j = *it;
            check_keys(j, {"mode", "endpoint", "model", "concurrency", "max_retries", "backoff_ms", "timeout_seconds",
                           "annotations", "second_judge", "fail_records"},
                       "config.judge");
            c.judge.mode = j.value("mode", c.judge.mode);
            if (c.judge.mode != "mock" && c.judge.mode != "live") {
                throw ValidationError("config.judge: mode must be \"mock\" or \"live\"");
            }
            c.judge.endpoint = j.value("endpoint", c.judge.endpoint);
            c.judge.model = j.value("model", c.judge.model);
            c.judge.concurrency = j.value("concurrency", c.judge.concurrency);
            c.judge.max_retries = j.value("max_retries", c.judge.max_retries);
            c.judge.backoff_ms = j.value("backoff_ms", c.judge.backoff_ms);
            c.judge.timeout_seconds = j.value("timeout_seconds", c.judge.timeout_seconds);
            c.judge.annotations = path_at(j, "annotations", base);
            c.judge.second_judge = path_at(j, "second_judge", base);
            c.judge.fail_records = j.value("fail_records", c.judge.fail_records);
            if (c.judge.concurrency == 0) throw ValidationError("config.judge: concurrency must be positive");
        }
        if (auto it = doc.find("ensemble"); it != doc.end()) {
            const auto& e = *it;
            check_keys(e, {"models", "queries", "k", "ece_table", "cv_folds", "subsets"}, "config.ensemble");
            c.ensemble.models = e.value("models", c.ensemble.models);
            if (auto q = e.find("queries"); q != e.end()) {
                if (q->is_array()) {
                    std::string joined;
                    for (const auto& s : *q) joined += (joined.empty() ? "" : ",") + s.get<std::string>();
                    c.ensemble.queries = joined;
                } else {
                    c.ensemble.queries = q->get<std::string>();
                }
            }
            if (auto k = e.find("k"); k != e.end() && !k->is_null()) c.ensemble.k = k->get<std::size_t>();
            c.ensemble.ece_table = path_at(e, "ece_table", base);
            c.ensemble.cv_folds = e.value("cv_folds", c.ensemble.cv_folds);
            c.ensemble.subsets = e.value("subsets", c.ensemble.subsets);
        }
        if (auto it = doc.find("calibration"); it != doc.end()) {
            check_keys(*it, {"bins", "min_count"}, "config.calibration");
            c.calibration_bins = it->value("bins", c.calibration_bins);
            c.min_confidence_count = it->value("min_count", c.min_confidence_count);
            if (c.calibration_bins == 0) throw ValidationError("config.calibration: bins must be positive");
        }
        if (auto it = doc.find("bootstrap"); it != doc.end()) {
            check_keys(*it, {"resamples", "level"}, "config.bootstrap");
            c.bootstrap_resamples = it->value("resamples", c.bootstrap_resamples);
            c.bootstrap_level = it->value("level", c.bootstrap_level);
            if (c.bootstrap_resamples == 0 || !(c.bootstrap_level > 0 && c.bootstrap_level < 1)) {
                throw ValidationError("config.bootstrap: need resamples > 0 and 0 < level < 1");
            }
        }
        if (auto it = doc.find("risk"); it != doc.end()) {
            check_keys(*it, {"cv_folds", "l2"}, "config.risk");
            c.risk_folds = it->value("cv_folds", c.risk_folds);
            c.l2 = it->value("l2", c.l2);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

const fs::path& require_input(const std::optional<fs::path>& path, const std::string& role) {
    if (!path) throw ValidationError("config does not name a " + role + " file");
    if (!fs::exists(*path)) throw ValidationError(role + " file not found: " + path->string());
    return *path;
}

}  // namespace hallu::cli
