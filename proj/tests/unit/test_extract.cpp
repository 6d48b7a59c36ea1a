#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hallu/error.hpp"
#include "hallu/extract.hpp"

using namespace hallu;
using nlohmann::json;

namespace {

std::vector<json> read_fixture(const std::string& name) {
    std::ifstream in(std::string(HALLU_FIXTURE_DIR) + "/" + name);
    EXPECT_TRUE(in) << name;
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

Polarity polarity_from(const std::string& s) {
    if (s == "affirmed") return Polarity::Affirmed;
    if (s == "negated") return Polarity::Negated;
    return Polarity::UncertainMention;
}

}  // namespace

TEST(Sentences, Basics) {
    EXPECT_EQ(split_sentences("No effusion. Cardiomegaly present.").size(), 2u);
    EXPECT_TRUE(split_sentences("").empty());
    EXPECT_EQ(split_sentences("1.5 cm nodule").size(), 1u);
}

TEST(Sentences, Fixture) {
    const auto cases = read_fixture("sentences_30.jsonl");
    ASSERT_EQ(cases.size(), 30u);
    for (const auto& c : cases) {
        const auto text = c["text"].get<std::string>();
        const auto got = split_sentences(text);
        std::vector<std::string> texts;
        for (const auto& s : got) {
            texts.push_back(s.text);
            EXPECT_EQ(text.substr(s.start, s.text.size()), s.text);
        }
        EXPECT_EQ(texts, c["sentences"].get<std::vector<std::string>>()) << text;
    }
}

TEST(Extract, SingleMentions) {
    Extractor ex;
    auto m = ex.extract("There is a small pleural effusion.");
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].label, PathologyLabel::PleuralEffusion);
    EXPECT_EQ(m[0].polarity, Polarity::Affirmed);
    EXPECT_EQ(m[0].span, (Span{17, 33}));

    m = ex.extract("No evidence of pneumothorax.");
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].label, PathologyLabel::Pneumothorax);
    EXPECT_EQ(m[0].polarity, Polarity::Negated);

    m = ex.extract("Pneumonia cannot be excluded.");
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].polarity, Polarity::UncertainMention);
}

TEST(Extract, LongestTermWinsAndSpansAreByteOffsets) {
    Extractor ex;
    const std::string text = "Caf\xc3\xa9 note. Pleural effusion.";
    auto m = ex.extract(text);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].sentence_index, 1u);
    EXPECT_EQ(text.substr(m[0].span.begin, m[0].span.end - m[0].span.begin), "Pleural effusion");
}

TEST(Extract, WordBoundaries) {
    Extractor ex;
    EXPECT_TRUE(ex.extract("Massive bleeding.").empty());
    EXPECT_EQ(ex.extract("Bilateral pneumothoraxes.").size(), 1u);
    EXPECT_TRUE(ex.extract("The edematous limb.").empty());
    EXPECT_EQ(ex.extract("Two nodules.").size(), 1u);
}

TEST(Extract, NegationIsSentenceScoped) {
    Extractor ex;
    auto agg = aggregate_polarity(ex.extract("No edema. Pneumothorax on the left."));
    EXPECT_EQ(agg.at(PathologyLabel::Edema), Polarity::Negated);
    EXPECT_EQ(agg.at(PathologyLabel::Pneumothorax), Polarity::Affirmed);
}

TEST(Extract, NegationFixture) {
    const auto cases = read_fixture("negation_50.jsonl");
    ASSERT_EQ(cases.size(), 50u);
    Extractor ex;
    std::size_t agree = 0;
    for (const auto& c : cases) {
        const auto text = c["text"].get<std::string>();
        const auto agg = aggregate_polarity(ex.extract(text));
        std::map<PathologyLabel, Polarity> expected;
        for (const auto& [name, pol] : c["expect"].items()) {
            expected[require_label(name)] = polarity_from(pol.get<std::string>());
        }
        EXPECT_EQ(agg, expected) << text;
        if (agg == expected) ++agree;
    }
    EXPECT_EQ(agree, 50u);
}

TEST(Extract, Dominance) {
    auto mk = [](PathologyLabel l, Polarity p) { return Mention{l, p, 0, {}}; };
    EXPECT_EQ(aggregate_polarity({mk(PathologyLabel::Edema, Polarity::Negated),
                                  mk(PathologyLabel::Edema, Polarity::Affirmed)})
                  .at(PathologyLabel::Edema),
              Polarity::Affirmed);
    EXPECT_TRUE(aggregate_polarity({}).empty());
    EXPECT_EQ(aggregate_polarity({mk(PathologyLabel::Pneumonia, Polarity::UncertainMention)})
                  .at(PathologyLabel::Pneumonia),
              Polarity::UncertainMention);
    EXPECT_EQ(aggregate_polarity({mk(PathologyLabel::Pneumonia, Polarity::UncertainMention),
                                  mk(PathologyLabel::Pneumonia, Polarity::Negated)})
                  .at(PathologyLabel::Pneumonia),
              Polarity::Negated);
}

TEST(Vqa, Answers) {
    EXPECT_EQ(parse_vqa_answer("YES, there is consolidation in the left base."), VqaAnswer::Yes);
    EXPECT_EQ(parse_vqa_answer("No. The lungs are clear."), VqaAnswer::No);
    EXPECT_EQ(parse_vqa_answer("It is difficult to say."), VqaAnswer::Unparsed);
    EXPECT_EQ(parse_vqa_answer("Yes or no, hard to tell."), VqaAnswer::Unparsed);
    EXPECT_EQ(parse_vqa_answer("Eyes look fine. Yes."), VqaAnswer::Unparsed);
    EXPECT_EQ(parse_vqa_answer(""), VqaAnswer::Unparsed);
}

TEST(Confidence, Fixture) {
    const auto cases = read_fixture("confidence_20.jsonl");
    ASSERT_EQ(cases.size(), 20u);
    for (const auto& c : cases) {
        const auto text = c["text"].get<std::string>();
        const auto got = parse_confidence(text);
        if (c["expect"].is_null()) {
            EXPECT_FALSE(got) << text;
        } else {
            ASSERT_TRUE(got) << text;
            EXPECT_NEAR(*got, c["expect"].get<double>(), 1e-12) << text;
        }
    }
    EXPECT_EQ(parse_confidence("confidence 60%... revised confidence 90%"), 0.90);
}

TEST(Lexicon, ResourceFileMatchesDefaults) {
    const auto path = std::string(HALLU_FIXTURE_DIR) + "/../../core/resources/lexicon.json";
    const auto lex = load_lexicon(path);
    const auto cues = load_cues(path);
    EXPECT_EQ(lex.terms, Lexicon::defaults().terms);
    const auto def = CueSet::defaults();
    EXPECT_EQ(cues.negation_cues, def.negation_cues);
    EXPECT_EQ(cues.uncertainty_cues, def.uncertainty_cues);
    EXPECT_EQ(cues.position_free_cues, def.position_free_cues);
}

TEST(Lexicon, Validation) {
    json bad = {{"terms", {{"Edema", json::array()}}}};
    EXPECT_THROW(lexicon_from_json(bad).validate(), ValidationError);
    json cues = {{"negation_cues", {"no "}}, {"uncertainty_cues", {"possible"}}};
    EXPECT_THROW(cues_from_json(cues).validate(), ValidationError);
}

TEST(Lexicon, CustomTermsAreLowercased) {
    json doc = {{"terms", json::object()}};
    for (auto l : kAllLabels) doc["terms"][std::string(to_string(l))] = {"zz" + std::to_string(index_of(l))};
    doc["terms"]["Edema"] = {"Fluid Overload"};
    Extractor ex(lexicon_from_json(doc), CueSet::defaults());
    auto m = ex.extract("Fluid overload is seen.");
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].label, PathologyLabel::Edema);
}
