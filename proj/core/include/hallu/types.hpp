#pragma once

// Vocabulary shared by every module: the 12 pathology labels, the
// three-valued label state, strata and query kinds.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hallu {

enum class PathologyLabel : std::uint8_t {
    PleuralEffusion,
    LungOpacity,
    Cardiomegaly,
    Atelectasis,
    Edema,
    Pneumonia,
    Consolidation,
    LungLesion,
    EnlargedCardiomediastinum,
    Pneumothorax,
    PleuralOther,
    Fracture,
};

inline constexpr std::size_t kNumLabels = 12;

inline constexpr std::array<PathologyLabel, kNumLabels> kAllLabels = {
    PathologyLabel::PleuralEffusion, PathologyLabel::LungOpacity,
    PathologyLabel::Cardiomegaly,    PathologyLabel::Atelectasis,
    PathologyLabel::Edema,           PathologyLabel::Pneumonia,
    PathologyLabel::Consolidation,   PathologyLabel::LungLesion,
    PathologyLabel::EnlargedCardiomediastinum,
    PathologyLabel::Pneumothorax,    PathologyLabel::PleuralOther,
    PathologyLabel::Fracture,
};

constexpr std::size_t index_of(PathologyLabel label) noexcept {
    return static_cast<std::size_t>(label);
}

/// Canonical serialized name, e.g. "Pleural Effusion".
std::string_view to_string(PathologyLabel label) noexcept;

/// Exact (case-sensitive) match against the canonical names.
std::optional<PathologyLabel> parse_label(std::string_view name) noexcept;

/// Like parse_label but throws ValidationError naming the offending string.
PathologyLabel require_label(std::string_view name);

enum class LabelState : std::uint8_t { Negative, Uncertain, Positive };

std::string_view to_string(LabelState state) noexcept;
std::optional<LabelState> parse_label_state(std::string_view text) noexcept;

/// Fixed-size map indexed by PathologyLabel.
template <typename T>
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(const T& fill) { values_.fill(fill); }

    T& operator[](PathologyLabel label) noexcept { return values_[index_of(label)]; }
    const T& operator[](PathologyLabel label) const noexcept { return values_[index_of(label)]; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::array<T, kNumLabels> values_{};
};

enum class Stratum : std::uint8_t { S1Normal, S2Single, S3Multi, S4Complex };

inline constexpr std::array<Stratum, 4> kAllStrata = {
    Stratum::S1Normal, Stratum::S2Single, Stratum::S3Multi, Stratum::S4Complex};

/// "S1".."S4"
std::string_view to_string(Stratum stratum) noexcept;

enum class QueryKind : std::uint8_t { OpenEnded, TargetedVqa, ClinicalReasoning };

inline constexpr std::array<QueryKind, 3> kAllQueryKinds = {
    QueryKind::OpenEnded, QueryKind::TargetedVqa, QueryKind::ClinicalReasoning};

/// Wire form: "open" | "vqa" | "clinical".
std::string_view to_string(QueryKind kind) noexcept;
std::optional<QueryKind> parse_query_kind(std::string_view text) noexcept;

enum class VqaAnswer : std::uint8_t { Yes, No, Unparsed };

std::string_view to_string(VqaAnswer answer) noexcept;

/// Number of Unicode scalar values in a UTF-8 string. Continuation bytes are
/// not counted; malformed sequences count one per lead byte.
std::size_t utf8_length(std::string_view text) noexcept;

}  // namespace hallu
