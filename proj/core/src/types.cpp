#include "hallu/types.hpp"

#include "hallu/error.hpp"

namespace hallu {

namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "Pleural Effusion", "Lung Opacity",  "Cardiomegaly",
    "Atelectasis",      "Edema",         "Pneumonia",
    "Consolidation",    "Lung Lesion",   "Enlarged Cardiomediastinum",
    "Pneumothorax",     "Pleural Other", "Fracture",
};

}  // namespace

std::string_view to_string(PathologyLabel label) noexcept {
    return kLabelNames[index_of(label)];
}

std::optional<PathologyLabel> parse_label(std::string_view name) noexcept {
    for (auto label : kAllLabels) {
        if (kLabelNames[index_of(label)] == name) return label;
    }
    return std::nullopt;
}

PathologyLabel require_label(std::string_view name) {
    if (auto label = parse_label(name)) return *label;
    throw ValidationError("unknown pathology label \"" + std::string(name) + "\"");
}

std::string_view to_string(LabelState state) noexcept {
    switch (state) {
        case LabelState::Positive: return "positive";
        case LabelState::Uncertain: return "uncertain";
        case LabelState::Negative: return "negative";
    }
    return "negative";
}

std::optional<LabelState> parse_label_state(std::string_view text) noexcept {
    if (text == "positive") return LabelState::Positive;
    if (text == "uncertain") return LabelState::Uncertain;
    if (text == "negative") return LabelState::Negative;
    return std::nullopt;
}

std::string_view to_string(Stratum stratum) noexcept {
    switch (stratum) {
        case Stratum::S1Normal: return "S1";
        case Stratum::S2Single: return "S2";
        case Stratum::S3Multi: return "S3";
        case Stratum::S4Complex: return "S4";
    }
    return "S1";
}

std::string_view to_string(QueryKind kind) noexcept {
    switch (kind) {
        case QueryKind::OpenEnded: return "open";
        case QueryKind::TargetedVqa: return "vqa";
        case QueryKind::ClinicalReasoning: return "clinical";
    }
    return "open";
}

std::optional<QueryKind> parse_query_kind(std::string_view text) noexcept {
    if (text == "open") return QueryKind::OpenEnded;
    if (text == "vqa") return QueryKind::TargetedVqa;
    if (text == "clinical") return QueryKind::ClinicalReasoning;
    return std::nullopt;
}

std::string_view to_string(VqaAnswer answer) noexcept {
    switch (answer) {
        case VqaAnswer::Yes: return "yes";
        case VqaAnswer::No: return "no";
        case VqaAnswer::Unparsed: return "unparsed";
    }
    return "unparsed";
}

std::size_t utf8_length(std::string_view text) noexcept {
    std::size_t n = 0;
    for (unsigned char c : text) {
        if ((c & 0xC0u) != 0x80u) ++n;
    }
    return n;
}

}  // namespace hallu

#include "hallu/taxonomy.hpp"

namespace hallu {

std::optional<HallucinationType> parse_hallucination_type(std::string_view code) noexcept {
    for (const auto& t : kTaxonomy) {
        if (t.code == code) return t.type;
    }
    return std::nullopt;
}

}  // namespace hallu
