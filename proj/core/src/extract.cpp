#include "hallu/extract.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"

namespace hallu {

using nlohmann::json;

namespace {

bool is_word_char(char c) noexcept {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || u >= 0x80;
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

bool is_terminator(char c) noexcept {
    return c == '.' || c == ';' || c == '!' || c == '?' || c == '\n';
}

int dominance(Polarity p) noexcept {
    switch (p) {
        case Polarity::Affirmed: return 2;
        case Polarity::Negated: return 1;
        case Polarity::UncertainMention: return 0;
    }
    return 0;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
    const auto& v = doc.at(key);
    if (!v.is_array()) throw ValidationError(std::string("\"") + key + "\" must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) throw ValidationError(std::string("\"") + key + "\" must be an array of strings");
        out.push_back(to_lower_ascii(item.get<std::string>()));
    }
    return out;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": malformed JSON: " + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Resources

Lexicon Lexicon::defaults() {
    Lexicon lex;
    using L = PathologyLabel;
    lex.terms[L::PleuralEffusion] = {"pleural effusion", "effusion", "pleural fluid"};
    lex.terms[L::LungOpacity] = {"lung opacity", "opacity", "opacities", "opacification"};
    lex.terms[L::Cardiomegaly] = {"cardiomegaly", "enlarged heart", "enlarged cardiac silhouette",
                                  "cardiac enlargement"};
    lex.terms[L::Atelectasis] = {"atelectasis", "atelectatic", "volume loss"};
    lex.terms[L::Edema] = {"edema", "pulmonary edema", "oedema", "interstitial edema"};
    lex.terms[L::Pneumonia] = {"pneumonia", "infectious process", "pneumonic"};
    lex.terms[L::Consolidation] = {"consolidation", "consolidative", "airspace consolidation"};
    lex.terms[L::LungLesion] = {"lung lesion", "nodule", "pulmonary nodule", "lung mass", "mass"};
    lex.terms[L::EnlargedCardiomediastinum] = {"enlarged cardiomediastinum", "widened mediastinum",
                                               "mediastinal widening",
                                               "enlarged cardiomediastinal silhouette"};
    lex.terms[L::Pneumothorax] = {"pneumothorax", "pneumothoraces"};
    lex.terms[L::PleuralOther] = {"pleural thickening", "pleural plaque", "fibrothorax",
                                  "pleural scarring"};
    lex.terms[L::Fracture] = {"fracture", "fractured", "rib fracture"};
    return lex;
}

void Lexicon::validate() const {
    for (auto label : kAllLabels) {
        const auto& list = terms[label];
        if (list.empty()) {
            throw ValidationError("lexicon has no terms for \"" + std::string(to_string(label)) + "\"");
        }
        for (const auto& t : list) {
            if (t.find_first_not_of(" \t") == std::string::npos) {
                throw ValidationError("lexicon has an empty term for \"" +
                                      std::string(to_string(label)) + "\"");
            }
            if (t != to_lower_ascii(t)) {
                throw ValidationError("lexicon term \"" + t + "\" is not lowercase");
            }
        }
    }
}

CueSet CueSet::defaults() {
    CueSet cues;
    cues.negation_cues = {"no evidence of", "no signs of", "ruled out", "no ", "without ",
                          "absence of", "negative for", "free of", "clear of",
                          "is absent", "are absent"};
    cues.uncertainty_cues = {"possible", "possibly", "probable", "questionable",
                             "cannot exclude", "cannot be excluded", "cannot be ruled out",
                             "may represent", "suspicious for", "concerning for"};
    cues.position_free_cues = {"ruled out", "cannot be excluded", "is absent", "are absent"};
    return cues;
}

void CueSet::validate() const {
    for (const char* required : {"no evidence of", "ruled out"}) {
        if (std::find(negation_cues.begin(), negation_cues.end(), required) == negation_cues.end()) {
            throw ValidationError(std::string("negation cues must include \"") + required + "\"");
        }
    }
    for (const auto* list : {&negation_cues, &uncertainty_cues, &position_free_cues}) {
        for (const auto& c : *list) {
            if (c.empty()) throw ValidationError("empty cue phrase");
        }
    }
}

Lexicon lexicon_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("terms") || !doc["terms"].is_object()) {
        throw ValidationError("lexicon JSON needs a \"terms\" object");
    }
    Lexicon lex;
    for (const auto& [name, list] : doc["terms"].items()) {
        const auto label = require_label(name);
        if (!list.is_array()) throw ValidationError("terms for \"" + name + "\" must be an array");
        for (const auto& t : list) {
            if (!t.is_string()) throw ValidationError("terms for \"" + name + "\" must be strings");
            lex.terms[label].push_back(to_lower_ascii(t.get<std::string>()));
        }
    }
    lex.validate();
    return lex;
}

CueSet cues_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("cue JSON must be an object");
    CueSet cues = CueSet::defaults();
    if (doc.contains("negation_cues")) cues.negation_cues = string_list(doc, "negation_cues");
    if (doc.contains("uncertainty_cues")) cues.uncertainty_cues = string_list(doc, "uncertainty_cues");
    if (doc.contains("position_free_cues")) cues.position_free_cues = string_list(doc, "position_free_cues");
    cues.validate();
    return cues;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    return lexicon_from_json(read_json_file(path));
}

CueSet load_cues(const std::filesystem::path& path) {
    return cues_from_json(read_json_file(path));
}

json to_json(const Lexicon& lexicon, const CueSet& cues) {
    json terms = json::object();
    for (auto label : kAllLabels) terms[std::string(to_string(label))] = lexicon.terms[label];
    return json{{"terms", terms},
                {"negation_cues", cues.negation_cues},
                {"uncertainty_cues", cues.uncertainty_cues},
                {"position_free_cues", cues.position_free_cues}};
}

std::string_view to_string(Polarity polarity) noexcept {
    switch (polarity) {
        case Polarity::Affirmed: return "affirmed";
        case Polarity::Negated: return "negated";
        case Polarity::UncertainMention: return "uncertain";
    }
    return "affirmed";
}

// ---------------------------------------------------------------------------
// Sentences

std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    auto emit = [&](std::size_t begin, std::size_t end) {
        while (begin < end && is_space(text[begin])) ++begin;
        while (end > begin && is_space(text[end - 1])) --end;
        const auto piece = text.substr(begin, end - begin);
        const bool has_content = std::any_of(piece.begin(), piece.end(), [](char c) {
            return !is_space(c) && !is_terminator(c);
        });
        if (has_content) out.push_back({std::string(piece), begin});
    };

    std::size_t begin = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!is_terminator(c)) continue;
        if (c == '.' && i > 0 && i + 1 < text.size() &&
            std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            continue;
        }
        emit(begin, c == '\n' ? i : i + 1);
        begin = i + 1;
    }
    emit(begin, text.size());
    return out;
}

// ---------------------------------------------------------------------------
// Extractor

Extractor::Extractor(Lexicon lexicon, CueSet cues)
    : lexicon_(std::move(lexicon)), cues_(std::move(cues)) {
    lexicon_.validate();
    cues_.validate();
    auto position_free = [&](const std::string& phrase) {
        return std::find(cues_.position_free_cues.begin(), cues_.position_free_cues.end(), phrase) !=
               cues_.position_free_cues.end();
    };
    for (const auto& c : cues_.negation_cues) cue_table_.push_back({c, CueKind::Negation, position_free(c)});
    for (const auto& c : cues_.uncertainty_cues) {
        cue_table_.push_back({c, CueKind::Uncertainty, position_free(c)});
    }
    std::stable_sort(cue_table_.begin(), cue_table_.end(),
                     [](const Cue& a, const Cue& b) { return a.phrase.size() > b.phrase.size(); });

    for (auto label : kAllLabels) {
        for (const auto& t : lexicon_.terms[label]) term_table_.push_back({t, label});
    }
    std::stable_sort(term_table_.begin(), term_table_.end(),
                     [](const Term& a, const Term& b) { return a.phrase.size() > b.phrase.size(); });
}

void Extractor::extract_sentence(std::string_view sentence, std::size_t sentence_start,
                                 std::size_t sentence_index, std::vector<Mention>& out) const {
    const std::string lower = to_lower_ascii(sentence);
    const std::size_t n = lower.size();

    auto left_ok = [&](std::size_t pos) { return pos == 0 || !is_word_char(lower[pos - 1]); };

    struct CueHit {
        std::size_t pos;
        CueKind kind;
        bool position_free;
    };
    std::vector<CueHit> cue_hits;
    for (std::size_t pos = 0; pos < n;) {
        bool matched = false;
        if (left_ok(pos)) {
            for (const auto& cue : cue_table_) {
                const auto len = cue.phrase.size();
                if (lower.compare(pos, len, cue.phrase) != 0) continue;
                const bool right_ok = !is_word_char(cue.phrase.back()) || pos + len == n ||
                                      !is_word_char(lower[pos + len]);
                if (!right_ok) continue;
                cue_hits.push_back({pos, cue.kind, cue.position_free});
                pos += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++pos;
    }

    // Longest terms claim their character ranges first.
    struct TermHit {
        std::size_t begin, end;
        PathologyLabel label;
    };
    std::vector<TermHit> claimed;
    for (const auto& term : term_table_) {
        for (std::size_t pos = lower.find(term.phrase); pos != std::string::npos;
             pos = lower.find(term.phrase, pos + 1)) {
            if (!left_ok(pos)) continue;
            std::size_t end = pos + term.phrase.size();
            // Allow a plural suffix before the trailing word boundary.
            if (end < n && is_word_char(lower[end])) {
                if (lower.compare(end, 2, "es") == 0 && (end + 2 == n || !is_word_char(lower[end + 2]))) {
                    end += 2;
                } else if (lower[end] == 's' && (end + 1 == n || !is_word_char(lower[end + 1]))) {
                    end += 1;
                } else {
                    continue;
                }
            }
            const bool overlaps = std::any_of(claimed.begin(), claimed.end(), [&](const TermHit& h) {
                return pos < h.end && h.begin < end;
            });
            if (!overlaps) claimed.push_back({pos, end, term.label});
        }
    }
    std::sort(claimed.begin(), claimed.end(),
              [](const TermHit& a, const TermHit& b) { return a.begin < b.begin; });

    const bool uncertain = std::any_of(cue_hits.begin(), cue_hits.end(), [](const CueHit& h) {
        return h.kind == CueKind::Uncertainty;
    });

    const std::size_t first_new = out.size();
    for (const auto& hit : claimed) {
        const bool negated = std::any_of(cue_hits.begin(), cue_hits.end(), [&](const CueHit& c) {
            return c.kind == CueKind::Negation && (c.position_free || c.pos < hit.begin);
        });
        const Polarity polarity = negated     ? Polarity::Negated
                                  : uncertain ? Polarity::UncertainMention
                                              : Polarity::Affirmed;
        Mention m{hit.label, polarity, sentence_index,
                  Span{sentence_start + hit.begin, sentence_start + hit.end}};
        auto existing = std::find_if(out.begin() + static_cast<std::ptrdiff_t>(first_new), out.end(),
                                     [&](const Mention& x) { return x.label == hit.label; });
        if (existing == out.end()) {
            out.push_back(m);
        } else if (dominance(polarity) > dominance(existing->polarity)) {
            *existing = m;
        }
    }
}

std::vector<Mention> Extractor::extract(std::string_view text) const {
    std::vector<Mention> out;
    const auto sentences = split_sentences(text);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        extract_sentence(sentences[i].text, sentences[i].start, i, out);
    }
    return out;
}

std::vector<Mention> extract_mentions(std::string_view text, const Lexicon& lexicon,
                                      const CueSet& cues) {
    return Extractor(lexicon, cues).extract(text);
}

std::map<PathologyLabel, Polarity> aggregate_polarity(const std::vector<Mention>& mentions) {
    std::map<PathologyLabel, Polarity> out;
    for (const auto& m : mentions) {
        auto [it, inserted] = out.emplace(m.label, m.polarity);
        if (!inserted && dominance(m.polarity) > dominance(it->second)) it->second = m.polarity;
    }
    return out;
}

// ---------------------------------------------------------------------------
// VQA answers and confidence

VqaAnswer parse_vqa_answer(std::string_view text) {
    const auto sentences = split_sentences(text);
    if (sentences.empty()) return VqaAnswer::Unparsed;
    const std::string first = to_lower_ascii(sentences.front().text);
    bool yes = false;
    bool no = false;
    for (std::size_t i = 0; i < first.size();) {
        if (!std::isalnum(static_cast<unsigned char>(first[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < first.size() && std::isalnum(static_cast<unsigned char>(first[j]))) ++j;
        const std::string_view token(first.data() + i, j - i);
        yes = yes || token == "yes";
        no = no || token == "no";
        i = j;
    }
    if (yes == no) return VqaAnswer::Unparsed;
    return yes ? VqaAnswer::Yes : VqaAnswer::No;
}

std::optional<double> parse_confidence(std::string_view text) {
    static const std::regex after_word(R"(confiden(?:ce|t)[^0-9%\n]{0,30}?(\d+(?:\.\d+)?)\s*%)",
                                       std::regex::icase | std::regex::ECMAScript);
    static const std::regex before_word(R"((\d+(?:\.\d+)?)\s*%\s*(?:confiden|certain|sure))",
                                        std::regex::icase | std::regex::ECMAScript);
    std::ptrdiff_t best_pos = -1;
    std::string best_value;
    const std::string s(text);
    for (const auto* re : {&after_word, &before_word}) {
        for (auto it = std::sregex_iterator(s.begin(), s.end(), *re); it != std::sregex_iterator(); ++it) {
            const auto pos = it->position(1);
            if (pos > best_pos) {
                best_pos = pos;
                best_value = it->str(1);
            }
        }
    }
    if (best_pos < 0) return std::nullopt;
    const double pct = std::stod(best_value);
    if (pct > 100.0) return std::nullopt;
    return pct / 100.0;
}

}  // namespace hallu
