#include "hallu_cli/output.hpp"

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <openssl/evp.h>

namespace hallu::cli {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {}

void OutputDir::write(const std::string& name, std::string_view content) {
    fs::create_directories(dir_);
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + (dir_ / name).string());
    digests_[name] = sha256_hex(content);
}

void OutputDir::write_json(const std::string& name, const nlohmann::ordered_json& doc) {
    write(name, doc.dump(2) + "\n");
}

void write_manifest(OutputDir& out, const std::string& command, std::string_view config_bytes, std::uint64_t seed,
                    const std::vector<ManifestInput>& inputs) {
    nlohmann::ordered_json m;
    m["tool"] = "hallu-audit";
    m["tool_version"] = std::string(kToolVersion);
    m["command"] = command;
    m["config_sha256"] = sha256_hex(config_bytes);
    m["seed"] = seed;
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& i : inputs) {
        in[i.role] = {{"file", i.path.filename().string()}, {"sha256", sha256_file(i.path)}};
    }
    m["inputs"] = std::move(in);
    nlohmann::ordered_json outs = nlohmann::ordered_json::object();
    for (const auto& [name, digest] : out.digests()) outs[name] = digest;
    m["outputs"] = std::move(outs);
    out.write_json("manifest.json", m);
}

}  // namespace hallu::cli
