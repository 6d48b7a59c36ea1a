#include <gtest/gtest.h>

#include <sstream>

#include "hallu/corpus.hpp"
#include "hallu/error.hpp"

using namespace hallu;

namespace {

const char* kGt =
    R"({"kind":"ground_truth","image_id":"i1","patient_id":"p1","labels":{"Edema":"uncertain","Cardiomegaly":"positive"},"report_text":"Mild cardiomegaly."})";
const char* kOpen =
    R"({"kind":"eval_record","record_id":"r1","image_id":"i1","model_id":"m","query_type":"open","response_text":"Cardiomegaly.","stated_confidence":0.8})";

Corpus parse(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in);
}

int error_line(const std::string& text) {
    try {
        parse(text);
    } catch (const CorpusError& e) {
        return static_cast<int>(e.line());
    }
    return -1;
}

}  // namespace

TEST(Corpus, MinimalFile) {
    auto c = parse(std::string(kGt) + "\n" + kOpen + "\n");
    ASSERT_EQ(c.ground_truths().size(), 1u);
    ASSERT_EQ(c.records().size(), 1u);
    const auto& gt = c.ground_truths()[0];
    EXPECT_EQ(gt.labels[PathologyLabel::Cardiomegaly], LabelState::Positive);
    EXPECT_EQ(gt.labels[PathologyLabel::Edema], LabelState::Uncertain);
    EXPECT_EQ(gt.labels[PathologyLabel::Fracture], LabelState::Negative);
    EXPECT_EQ(gt.positive_count(), 1u);
    const auto& r = c.records()[0];
    EXPECT_EQ(r.response_length, 13u);
    ASSERT_TRUE(r.stated_confidence);
    EXPECT_DOUBLE_EQ(*r.stated_confidence, 0.8);
}

TEST(Corpus, BlankLinesAreSkipped) {
    auto c = parse(std::string("\n") + kGt + "\n   \n" + kOpen);
    EXPECT_EQ(c.records().size(), 1u);
}

TEST(Corpus, RecordBeforeItsGroundTruthIsFine) {
    auto c = parse(std::string(kOpen) + "\n" + kGt + "\n");
    EXPECT_EQ(c.records().size(), 1u);
}

TEST(Corpus, Errors) {
    EXPECT_EQ(error_line(std::string(kGt) + "\n" + kOpen + "\n" + kOpen), 3);
    EXPECT_EQ(error_line(std::string(kGt) + "\n" + kGt), 2);
    EXPECT_EQ(error_line(R"({"kind":"ground_truth","image_id":"i","patient_id":"p","labels":{"Pneumo":"positive"}})"), 1);
    EXPECT_EQ(error_line(R"({"kind":"ground_truth","image_id":"i","patient_id":"p","labels":{"Edema":"maybe"}})"), 1);
    EXPECT_EQ(error_line(R"({"kind":"ground_truth","image_id":"i","patient_id":"p","labels":{"Edema":-1}})"), 1);
    EXPECT_EQ(error_line("{not json"), 1);
    EXPECT_EQ(error_line(R"({"kind":"other"})"), 1);
    EXPECT_EQ(error_line(std::string(kGt) + "\n" +
                         R"({"kind":"eval_record","record_id":"r","image_id":"i1","model_id":"m","query_type":"vqa","response_text":"Yes"})"),
              2);
    EXPECT_EQ(error_line(std::string(kGt) + "\n" +
                         R"({"kind":"eval_record","record_id":"r","image_id":"i1","model_id":"m","query_type":"open","queried_label":"Edema","response_text":"x"})"),
              2);
    EXPECT_EQ(error_line(std::string(kGt) + "\n" +
                         R"({"kind":"eval_record","record_id":"r","image_id":"i1","model_id":"m","query_type":"open","response_text":"x","stated_confidence":1.5})"),
              2);
    // Dangling image reference is reported at the record's line.
    EXPECT_EQ(error_line(std::string(kGt) + "\n" +
                         R"({"kind":"eval_record","record_id":"r","image_id":"nope","model_id":"m","query_type":"open","response_text":"x"})"),
              2);
}

TEST(Corpus, VqaExpectedAnswer) {
    auto c = parse(std::string(kGt) + "\n" +
                   R"({"kind":"eval_record","record_id":"a","image_id":"i1","model_id":"m","query_type":"vqa","queried_label":"Cardiomegaly","response_text":"Yes"})"
                   "\n"
                   R"({"kind":"eval_record","record_id":"b","image_id":"i1","model_id":"m","query_type":"vqa","queried_label":"Edema","response_text":"Yes"})");
    EXPECT_EQ(c.records()[0].query.expected_yes, true);
    EXPECT_EQ(c.records()[1].query.expected_yes, false);
}

TEST(Corpus, UncertainPolicy) {
    GroundTruth gt;
    gt.labels[PathologyLabel::Edema] = LabelState::Uncertain;
    EXPECT_EQ(apply_uncertain_policy(gt, UncertainPolicy::KeepSeparate), gt);
    auto neg = apply_uncertain_policy(gt, UncertainPolicy::UncertainAsNegative);
    EXPECT_EQ(neg.labels[PathologyLabel::Edema], LabelState::Negative);

    GroundTruth clean;
    EXPECT_EQ(apply_uncertain_policy(clean, UncertainPolicy::UncertainAsNegative), clean);
    EXPECT_EQ(parse_uncertain_policy("uncertain-as-negative"), UncertainPolicy::UncertainAsNegative);
    EXPECT_FALSE(parse_uncertain_policy("drop"));
}

TEST(Corpus, WriteParseRoundTrip) {
    auto c = parse(std::string(kGt) + "\n" + kOpen + "\n");
    std::ostringstream out;
    write_corpus(out, c);
    auto again = parse(out.str());
    EXPECT_EQ(c, again);
    std::ostringstream out2;
    write_corpus(out2, again);
    EXPECT_EQ(out.str(), out2.str());
}

TEST(Corpus, FilterModels) {
    auto c = parse(std::string(kGt) + "\n" + kOpen + "\n" +
                   R"({"kind":"eval_record","record_id":"r2","image_id":"i1","model_id":"other","query_type":"open","response_text":"x"})");
    EXPECT_EQ(c.model_ids(), (std::vector<std::string>{"m", "other"}));
    auto f = c.filter_models({"other"});
    ASSERT_EQ(f.records().size(), 1u);
    EXPECT_EQ(f.records()[0].record_id, "r2");
    EXPECT_EQ(f.ground_truths().size(), 1u);
}
