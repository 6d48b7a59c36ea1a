#pragma once

// Output directory bookkeeping and the per-run manifest.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hallu::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

class OutputDir {
public:
    /// The directory is created on the first write.
    explicit OutputDir(std::filesystem::path dir);

    const std::filesystem::path& path() const noexcept { return dir_; }
    /// Writes bytes verbatim and records their digest.
    void write(const std::string& name, std::string_view content);
    void write_json(const std::string& name, const nlohmann::ordered_json& doc);

    const std::map<std::string, std::string>& digests() const noexcept { return digests_; }

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> digests_;
};

struct ManifestInput {
    std::string role;
    std::filesystem::path path;
};

/// manifest.json: command, tool version, config digest, seed, input and output digests.
void write_manifest(OutputDir& out, const std::string& command, std::string_view config_bytes, std::uint64_t seed,
                    const std::vector<ManifestInput>& inputs);

}  // namespace hallu::cli
