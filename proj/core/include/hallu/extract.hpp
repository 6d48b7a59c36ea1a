#pragma once

// Rule-based extraction of pathology mentions from free text.
//
// Scope of a cue is the sentence it occurs in. A negation cue negates terms
// that follow it, except position-free cues ("ruled out", "is absent", ...)
// which apply to the whole sentence. Uncertainty cues apply to the whole
// sentence. Overlapping cues resolve longest-first, so "cannot be ruled out"
// is an uncertainty cue and never also fires "ruled out".

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hallu/types.hpp"

namespace hallu {

struct Lexicon {
    LabelMap<std::vector<std::string>> terms;

    /// Built-in surface forms, identical to resources/lexicon.json.
    static Lexicon defaults();

    /// Throws ValidationError if a label has no terms or a term is empty.
    void validate() const;
};

struct CueSet {
    std::vector<std::string> negation_cues;
    std::vector<std::string> uncertainty_cues;
    /// Cues that apply regardless of their position relative to the term.
    std::vector<std::string> position_free_cues;

    static CueSet defaults();

    /// Throws ValidationError unless negation cues include "no evidence of" and "ruled out".
    void validate() const;
};

/// Reads "terms" (required). Terms are lowercased on load.
Lexicon lexicon_from_json(const nlohmann::json& doc);
/// Reads "negation_cues", "uncertainty_cues" and optional "position_free_cues";
/// a missing list falls back to the default.
CueSet cues_from_json(const nlohmann::json& doc);
Lexicon load_lexicon(const std::filesystem::path& path);
CueSet load_cues(const std::filesystem::path& path);
nlohmann::json to_json(const Lexicon& lexicon, const CueSet& cues);

enum class Polarity { Affirmed, Negated, UncertainMention };

std::string_view to_string(Polarity polarity) noexcept;

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const Span&, const Span&) = default;
};

struct Mention {
    PathologyLabel label{};
    Polarity polarity = Polarity::Affirmed;
    std::size_t sentence_index = 0;
    /// Byte offsets into the UTF-8 response text.
    Span span;
    friend bool operator==(const Mention&, const Mention&) = default;
};

struct Sentence {
    std::string text;
    /// Byte offset of text within the original string.
    std::size_t start = 0;
    friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Splits on '.', ';', '!', '?' and newline. A '.' between two digits is not
/// a terminator. Sentences are whitespace-trimmed; blank or punctuation-only
/// pieces are dropped. text.substr(s.start, s.text.size()) == s.text.
std::vector<Sentence> split_sentences(std::string_view text);

/// Compiled form of a lexicon and cue set; build once, reuse across records.
class Extractor {
public:
    Extractor(Lexicon lexicon, CueSet cues);
    Extractor() : Extractor(Lexicon::defaults(), CueSet::defaults()) {}

    std::vector<Mention> extract(std::string_view text) const;

    const Lexicon& lexicon() const noexcept { return lexicon_; }
    const CueSet& cues() const noexcept { return cues_; }

private:
    enum class CueKind { Negation, Uncertainty };
    struct Cue {
        std::string phrase;
        CueKind kind;
        bool position_free;
    };
    struct Term {
        std::string phrase;
        PathologyLabel label;
    };

    void extract_sentence(std::string_view sentence, std::size_t sentence_start,
                          std::size_t sentence_index, std::vector<Mention>& out) const;

    Lexicon lexicon_;
    CueSet cues_;
    std::vector<Cue> cue_table_;    // longest first
    std::vector<Term> term_table_;  // longest first
};

std::vector<Mention> extract_mentions(std::string_view text, const Lexicon& lexicon,
                                      const CueSet& cues);

/// Per label: Affirmed dominates Negated dominates UncertainMention. Labels
/// without mentions are absent.
std::map<PathologyLabel, Polarity> aggregate_polarity(const std::vector<Mention>& mentions);

/// Looks for standalone "yes"/"no" tokens in the first sentence; both or neither is Unparsed.
VqaAnswer parse_vqa_answer(std::string_view text);

/// Last stated confidence percentage ("Confidence: 85%", "confidence (90%)",
/// "I am 75% confident") as a fraction. Values above 100 yield nullopt.
std::optional<double> parse_confidence(std::string_view text);

}  // namespace hallu
