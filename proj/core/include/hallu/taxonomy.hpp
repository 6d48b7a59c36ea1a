#pragma once

// Eight-type hallucination taxonomy with allowed severity ranges.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hallu {

enum class HallucinationType : std::uint8_t {
    A1Fabrication,
    A2Omission,
    A3Spatial,
    A4SeverityDistortion,
    B1Reasoning,
    C1Template,
    C2Contradiction,
    C3DetailFabrication,
};

inline constexpr std::size_t kNumTypes = 8;

struct TypeInfo {
    HallucinationType type;
    std::string_view code;
    std::string_view name;
    int min_severity;
    int max_severity;
};

inline constexpr std::array<TypeInfo, kNumTypes> kTaxonomy = {{
    {HallucinationType::A1Fabrication, "A1", "Fabrication", 1, 3},
    {HallucinationType::A2Omission, "A2", "Omission", 1, 3},
    {HallucinationType::A3Spatial, "A3", "Spatial error", 2, 3},
    {HallucinationType::A4SeverityDistortion, "A4", "Severity distortion", 1, 2},
    {HallucinationType::B1Reasoning, "B1", "Reasoning error", 2, 3},
    {HallucinationType::C1Template, "C1", "Template overfitting", 1, 2},
    {HallucinationType::C2Contradiction, "C2", "Self-contradiction", 1, 2},
    {HallucinationType::C3DetailFabrication, "C3", "Detail fabrication", 1, 3},
}};

constexpr const TypeInfo& info(HallucinationType type) noexcept {
    return kTaxonomy[static_cast<std::size_t>(type)];
}

constexpr std::string_view code(HallucinationType type) noexcept { return info(type).code; }

constexpr bool severity_allowed(HallucinationType type, int severity) noexcept {
    return severity >= info(type).min_severity && severity <= info(type).max_severity;
}

std::optional<HallucinationType> parse_hallucination_type(std::string_view code) noexcept;

/// One judged hallucination instance.
struct Verdict {
    HallucinationType type = HallucinationType::A1Fabrication;
    int severity = 1;
    std::string description;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

}  // namespace hallu
