#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu_cli/commands.hpp"
#include "hallu_cli/config.hpp"
#include "hallu_cli/output.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hallu::cli;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("hallu_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_file(const std::string& name, const std::string& text) {
        const auto p = dir_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }
    fs::path write_config(const std::string& name, const json& doc) { return write_file(name, doc.dump(2)); }

    int run(const std::string& command, const fs::path& config, const fs::path& out,
            std::optional<std::string> judge_mode = std::nullopt) {
        Invocation inv;
        inv.command = command;
        inv.config = config;
        inv.out = out;
        inv.jobs = 2;
        inv.judge_mode = std::move(judge_mode);
        std::ostringstream log;
        const int rc = run_command(inv, log);
        last_log_ = log.str();
        return rc;
    }

    static int shell(const std::string& cmd) {
        const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    /// synth into dir_/synth and return the corpus path.
    fs::path make_corpus(std::size_t images = 40) {
        auto cfg = write_config("synth.json", {{"synth", {{"n_images", images}, {"fab_rate", 0.3}, {"omit_rate", 0.2}, {"verbosity_coupling", 80}}}});
        EXPECT_EQ(run("synth", cfg, dir_ / "synth"), kExitOk) << last_log_;
        return dir_ / "synth" / "corpus.jsonl";
    }

    fs::path dir_;
    std::string last_log_;
};

std::map<std::string, std::string> read_dir(const fs::path& d) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(d)) {
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[e.path().filename().string()] = s.str();
    }
    return out;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

}  // namespace

TEST_F(CliTest, FullPipelineWritesArtifacts) {
    const auto corpus = make_corpus();
    const auto planted = dir_ / "synth" / "planted_truth.jsonl";
    auto cfg = write_config("run.json", {{"corpus", corpus.string()},
                                         {"planted", planted.string()},
                                         {"bootstrap", {{"resamples", 200}}},
                                         {"calibration", {{"min_count", 10}}}});
    for (const auto* cmd : {"validate", "detect", "judge", "calibration", "risk", "ensemble"}) {
        EXPECT_EQ(run(cmd, cfg, dir_ / cmd, std::string("mock")), kExitOk) << cmd << ": " << last_log_;
        EXPECT_TRUE(fs::exists(dir_ / cmd / "manifest.json")) << cmd;
    }
    for (const auto* f : {"detections.jsonl", "rates_overall.csv", "rates_by_model.csv", "rates_by_stratum.csv",
                          "rates_by_model_stratum.csv", "rates_by_model_query.csv", "per_label.csv", "query_type.csv",
                          "vqa_accuracy.csv", "phi.csv", "detect_summary.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "detect" / f)) << f;
    }
    for (const auto* f : {"judge_reports.jsonl", "type_by_model.csv", "judge_summary.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "judge" / f)) << f;
    }
    for (const auto* f : {"calibration.json", "ece_table.json", "calibration_bins.csv", "calibration.svg"}) {
        EXPECT_TRUE(fs::exists(dir_ / "calibration" / f)) << f;
    }
    for (const auto* f : {"correlation.json", "roc.csv", "roc.svg", "youden.csv", "auc_by_group.csv", "quintiles.csv", "logistic.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "risk" / f)) << f;
    }
    for (const auto* f : {"ensemble.csv", "ensemble.json"}) EXPECT_TRUE(fs::exists(dir_ / "ensemble" / f)) << f;

    const auto summary = read_json(dir_ / "detect" / "detect_summary.json");
    EXPECT_EQ(summary["planted_verification"]["exact_records"], summary["n_records"]);

    const auto manifest = read_json(dir_ / "detect" / "manifest.json");
    EXPECT_EQ(manifest["command"], "detect");
    EXPECT_EQ(manifest["seed"], kDefaultSeed);
    EXPECT_EQ(manifest["config_sha256"], sha256_file(cfg));
    EXPECT_EQ(manifest["inputs"]["corpus"]["sha256"], sha256_file(corpus));
    EXPECT_EQ(manifest["outputs"]["per_label.csv"], sha256_file(dir_ / "detect" / "per_label.csv"));
}

TEST_F(CliTest, RerunsAreByteIdentical) {
    const auto corpus = make_corpus(30);
    auto cfg = write_config("run.json", {{"corpus", corpus.string()}, {"bootstrap", {{"resamples", 100}}}, {"calibration", {{"min_count", 5}}}});
    for (const auto* cmd : {"detect", "judge", "calibration", "risk", "ensemble"}) {
        ASSERT_EQ(run(cmd, cfg, dir_ / "a" / cmd), kExitOk) << last_log_;
        Invocation inv{cmd, cfg, std::nullopt, 7, dir_ / "b" / cmd, std::nullopt, std::nullopt};
        std::ostringstream log;
        ASSERT_EQ(run_command(inv, log), kExitOk) << log.str();
        EXPECT_EQ(read_dir(dir_ / "a" / cmd), read_dir(dir_ / "b" / cmd)) << cmd;
    }
    auto synth_cfg = dir_ / "synth.json";
    ASSERT_EQ(run("synth", synth_cfg, dir_ / "again"), kExitOk);
    EXPECT_EQ(read_dir(dir_ / "synth"), read_dir(dir_ / "again"));
}

TEST_F(CliTest, SeedChangesSynth) {
    make_corpus(10);
    Invocation inv{"synth", dir_ / "synth.json", 99, 1, dir_ / "other", std::nullopt, std::nullopt};
    std::ostringstream log;
    ASSERT_EQ(run_command(inv, log), kExitOk);
    EXPECT_NE(read_dir(dir_ / "synth").at("corpus.jsonl"), read_dir(dir_ / "other").at("corpus.jsonl"));
    EXPECT_EQ(read_json(dir_ / "other" / "manifest.json")["seed"], 99);
}

TEST_F(CliTest, ValidationFailures) {
    EXPECT_EQ(run("detect", dir_ / "missing.json", dir_ / "o"), kExitValidation);
    EXPECT_EQ(run("detect", write_file("bad.json", "{\"corpus\": 3"), dir_ / "o"), kExitValidation);
    EXPECT_EQ(run("detect", write_config("k.json", {{"corpsu", "x"}}), dir_ / "o"), kExitValidation);
    EXPECT_NE(last_log_.find("corpsu"), std::string::npos);
    EXPECT_EQ(run("detect", write_config("nocorpus.json", json::object()), dir_ / "o"), kExitValidation);
    const auto bad_corpus = write_file("c.jsonl", "{\"kind\":\"ground_truth\",\"image_id\":\"i\",\"patient_id\":\"p\",\"labels\":{\"Pneumo\":\"positive\"}}\n");
    EXPECT_EQ(run("validate", write_config("v.json", {{"corpus", bad_corpus.string()}}), dir_ / "o"), kExitValidation);
    EXPECT_NE(last_log_.find("line 1"), std::string::npos);
    EXPECT_EQ(run("validate", write_config("e.json", {{"corpus", write_file("empty.jsonl", "").string()}}), dir_ / "o"),
              kExitValidation);
    EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(CliTest, LiveJudgeNeedsToken) {
    const auto corpus = make_corpus(2);
    auto cfg = write_config("live.json", {{"corpus", corpus.string()},
                                          {"judge", {{"mode", "live"}, {"endpoint", "http://127.0.0.1:9/v1/chat/completions"}, {"max_retries", 0}}}});
    ::unsetenv("HALLU_JUDGE_TOKEN");
    EXPECT_EQ(run("judge", cfg, dir_ / "j"), kExitValidation);
    EXPECT_NE(last_log_.find("HALLU_JUDGE_TOKEN"), std::string::npos);
}

TEST_F(CliTest, LiveJudgeTransportExhaustion) {
    const auto corpus = make_corpus(1);
    auto cfg = write_config("live.json", {{"corpus", corpus.string()},
                                          {"judge", {{"mode", "live"}, {"endpoint", "http://127.0.0.1:9/v1/chat/completions"},
                                                     {"model", "judge-model"}, {"max_retries", 1}, {"backoff_ms", 1}, {"timeout_seconds", 2}}}});
    ::setenv("HALLU_JUDGE_TOKEN", "test-token", 1);
    EXPECT_EQ(run("judge", cfg, dir_ / "j"), kExitTransport) << last_log_;
    ::unsetenv("HALLU_JUDGE_TOKEN");
    EXPECT_TRUE(fs::exists(dir_ / "j" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir_ / "j" / "judge_reports.jsonl"));
    EXPECT_EQ(last_log_.find("test-token"), std::string::npos);
}

TEST_F(CliTest, MockFailuresAreReportedNotFatal) {
    const auto corpus = make_corpus(5);
    auto cfg = write_config("m.json", {{"corpus", corpus.string()}, {"judge", {{"fail_records", {"img-00001-open-model-1"}}}}});
    ASSERT_EQ(run("judge", cfg, dir_ / "j"), kExitOk) << last_log_;
    const auto summary = read_json(dir_ / "j" / "judge_summary.json");
    EXPECT_EQ(summary["transport_failures"], 1);
}

TEST_F(CliTest, RuntimeFailure) {
    const auto corpus = make_corpus(2);
    write_file("blocker", "not a directory");
    EXPECT_EQ(run("detect", write_config("r.json", {{"corpus", corpus.string()}}), dir_ / "blocker" / "out"), kExitRuntime);
}

TEST_F(CliTest, ExecutableExitCodes) {
    const std::string exe = HALLU_AUDIT_EXE;
    EXPECT_EQ(shell(exe + " --help"), 0);
    EXPECT_NE(shell(exe), 0);
    EXPECT_EQ(shell(exe + " detect"), kExitValidation);
    EXPECT_EQ(shell(exe + " detect --config " + (dir_ / "nope.json").string()), kExitValidation);
    EXPECT_EQ(shell(exe + " judge --mock --live --config x.json"), kExitValidation);
    const auto cfg = write_config("s.json", {{"synth", {{"n_images", 3}}}});
    EXPECT_EQ(shell(exe + " synth --config " + cfg.string() + " --seed 5 --jobs 2 --out " + (dir_ / "o").string()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "o" / "corpus.jsonl"));
}

TEST(Config, PathsResolveAgainstConfigDir) {
    const auto d = fs::temp_directory_path() / "hallu_cfg_paths";
    fs::create_directories(d / "sub");
    std::ofstream(d / "sub" / "c.json") << R"({"corpus": "data/x.jsonl", "out": "results", "seed": 3,
        "ensemble": {"queries": ["open", "clinical"], "k": 2}})";
    auto c = load_config(d / "sub" / "c.json");
    EXPECT_EQ(*c.corpus, d / "sub" / "data" / "x.jsonl");
    EXPECT_EQ(c.out_dir, d / "sub" / "results");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.ensemble.queries, "open,clinical");
    EXPECT_EQ(c.ensemble.k, 2u);
    std::ofstream(d / "sub" / "bad.json") << R"({"judge": {"mode": "remote"}})";
    EXPECT_THROW(load_config(d / "sub" / "bad.json"), hallu::ValidationError);
    fs::remove_all(d);
}

TEST(Output, Sha256) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
