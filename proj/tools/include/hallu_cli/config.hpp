#pragma once

// Run configuration shared by every hallu-audit command. Relative paths are
// resolved against the directory holding the config file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hallu/corpus.hpp"

namespace hallu::cli {

inline constexpr std::uint64_t kDefaultSeed = 20240611;

struct JudgeConfig {
    std::string mode = "mock";  // mock | live
    std::string endpoint;
    std::string model;
    std::size_t concurrency = 4;
    std::size_t max_retries = 3;
    long backoff_ms = 1000;
    double timeout_seconds = 60.0;
    std::optional<std::filesystem::path> annotations;
    /// Reports of a second judge, compared with the first as if they were annotations.
    std::optional<std::filesystem::path> second_judge;
    /// Mock only: records whose every attempt fails.
    std::vector<std::string> fail_records;
};

struct EnsembleConfig {
    std::vector<std::string> models;
    std::string queries = "open,vqa,clinical";
    std::optional<std::size_t> k;
    std::optional<std::filesystem::path> ece_table;
    std::size_t cv_folds = 5;
    std::vector<std::vector<std::string>> subsets;
};

struct RunConfig {
    std::filesystem::path config_path;
    std::filesystem::path base_dir;
    std::string raw_bytes;

    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> lexicon;
    std::optional<std::filesystem::path> cues;
    std::optional<std::filesystem::path> detections;
    std::optional<std::filesystem::path> planted;
    std::optional<std::filesystem::path> synth_spec;
    nlohmann::json synth = nlohmann::json::object();

    UncertainPolicy uncertain_policy = UncertainPolicy::KeepSeparate;
    std::optional<std::vector<std::string>> models;

    JudgeConfig judge;
    EnsembleConfig ensemble;

    std::size_t calibration_bins = 10;
    std::size_t min_confidence_count = 30;
    std::size_t bootstrap_resamples = 1000;
    double bootstrap_level = 0.95;
    std::size_t risk_folds = 5;
    double l2 = 1e-4;

    std::filesystem::path out_dir = "out";
    std::uint64_t seed = kDefaultSeed;
};

/// Throws ValidationError on unreadable files, unknown keys or bad values.
RunConfig load_config(const std::filesystem::path& path);

/// Throws ValidationError naming `role` when the path is unset or missing.
const std::filesystem::path& require_input(const std::optional<std::filesystem::path>& path, const std::string& role);

}  // namespace hallu::cli
