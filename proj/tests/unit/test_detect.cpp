#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hallu/detect.hpp"
#include "hallu/error.hpp"
#include "hallu/synth.hpp"
#include "test_support.hpp"

using namespace hallu;
using namespace hallu::test;

namespace {

DetectionResult run(const std::string& text, const GroundTruth& gt, QueryKind kind = QueryKind::OpenEnded,
                    std::optional<PathologyLabel> queried = std::nullopt) {
    auto rec = make_rec("r", gt.image_id, "m", text, kind, queried);
    return detect_record(rec, gt, Extractor());
}

Corpus small_synth(std::uint64_t seed, std::size_t images = 60) {
    auto spec = synth::SynthSpec::defaults();
    spec.n_images = images;
    spec.seed = seed;
    for (const auto& m : spec.models) {
        spec.per_model_fab_rate[m] = 0.3;
        spec.per_model_omit_rate[m] = 0.2;
    }
    return synth::generate(spec).corpus;
}

}  // namespace

TEST(Detect, Fabrication) {
    auto r = run("Small pneumothorax present.", make_gt("i", "p"));
    EXPECT_EQ(r.fabrications, std::vector{PathologyLabel::Pneumothorax});
    EXPECT_TRUE(r.omissions.empty());
    EXPECT_TRUE(r.hallucinated);
    EXPECT_TRUE(r.vote_flags[PathologyLabel::Pneumothorax]);
    EXPECT_FALSE(r.vqa_mismatch);
}

TEST(Detect, NegatedMentionIsOmission) {
    auto r = run("No evidence of edema.", make_gt("i", "p", {{PathologyLabel::Edema, P}}));
    EXPECT_EQ(r.omissions, std::vector{PathologyLabel::Edema});
    EXPECT_TRUE(r.fabrications.empty());
    EXPECT_FALSE(r.vote_flags[PathologyLabel::Edema]);
}

TEST(Detect, UncertainTruthIsNeverPenalized) {
    auto gt = make_gt("i", "p", {{PathologyLabel::Pneumonia, U}});
    auto r = run("Possible pneumonia.", gt);
    EXPECT_FALSE(r.hallucinated);
    r = run("Right lower lobe pneumonia.", gt);
    EXPECT_FALSE(r.hallucinated);
    r = run("Lungs are clear.", gt);
    EXPECT_FALSE(r.hallucinated);
}

TEST(Detect, SilentResponseOmitsEveryPositive) {
    auto gt = make_gt("i", "p", {{PathologyLabel::Edema, P}, {PathologyLabel::Fracture, P}, {PathologyLabel::Atelectasis, U}});
    auto r = run("The study is technically adequate.", gt);
    EXPECT_TRUE(r.fabrications.empty());
    EXPECT_EQ(r.omissions, (std::vector{PathologyLabel::Edema, PathologyLabel::Fracture}));
}

TEST(Detect, VqaUsesAnswerAndText) {
    auto gt = make_gt("i", "p", {{PathologyLabel::Cardiomegaly, P}});
    auto r = run("Yes, there is cardiomegaly.", gt, QueryKind::TargetedVqa, PathologyLabel::Cardiomegaly);
    EXPECT_EQ(r.vqa_mismatch, false);
    EXPECT_FALSE(r.hallucinated);

    r = run("No.", gt, QueryKind::TargetedVqa, PathologyLabel::Cardiomegaly);
    EXPECT_EQ(r.vqa_mismatch, true);
    EXPECT_EQ(r.omissions, std::vector{PathologyLabel::Cardiomegaly});

    r = run("Hard to say.", make_gt("i", "p"), QueryKind::TargetedVqa, PathologyLabel::Edema);
    EXPECT_EQ(r.vqa_answer, VqaAnswer::Unparsed);
    EXPECT_EQ(r.vqa_mismatch, true);
    EXPECT_TRUE(r.hallucinated);
    EXPECT_FALSE(r.textual_hallucination());
}

TEST(Detect, ImageMismatchThrows) {
    auto rec = make_rec("r", "other", "m", "x");
    EXPECT_THROW(detect_record(rec, make_gt("i", "p"), Extractor()), ValidationError);
}

TEST(Detect, Invariants) {
    auto corpus = small_synth(3);
    Extractor ex;
    auto results = detect_all(corpus, ex, 4);
    ASSERT_EQ(results.size(), corpus.records().size());
    auto strict = corpus.with_policy(UncertainPolicy::UncertainAsNegative);
    auto strict_results = detect_all(strict, ex, 2);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        for (auto l : r.fabrications) {
            EXPECT_EQ(std::count(r.omissions.begin(), r.omissions.end(), l), 0);
        }
        EXPECT_EQ(r.hallucinated, !r.fabrications.empty() || !r.omissions.empty() || r.vqa_mismatch.value_or(false));
        // Uncertain -> Negative only adds fabrications.
        const auto& s = strict_results[i];
        EXPECT_TRUE(std::includes(s.fabrications.begin(), s.fabrications.end(), r.fabrications.begin(),
                                  r.fabrications.end()));
        EXPECT_EQ(s.omissions, r.omissions);
    }
    EXPECT_EQ(detect_all(corpus, ex, 1), results);
}

TEST(Detect, JsonlRoundTrip) {
    auto corpus = small_synth(5, 10);
    auto results = detect_all(corpus, Extractor());
    for (const auto& r : results) {
        auto line = to_jsonl(r);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(detection_from_json(nlohmann::json::parse(line)), r);
    }
    auto bad = nlohmann::json::parse(to_jsonl(results[0]));
    bad["hallucinated"] = !bad["hallucinated"].get<bool>();
    EXPECT_THROW(detection_from_json(bad), ValidationError);
}

TEST(Detect, LoadDetectionsChecksAlignment) {
    auto corpus = small_synth(5, 4);
    auto results = detect_all(corpus, Extractor());
    const auto path = std::filesystem::temp_directory_path() / "hallu_detect_align.jsonl";
    {
        std::ofstream out(path);
        for (const auto& r : results) out << to_jsonl(r) << '\n';
    }
    EXPECT_EQ(load_detections(path, corpus), results);
    {
        std::ofstream out(path);
        for (std::size_t i = 1; i < results.size(); ++i) out << to_jsonl(results[i]) << '\n';
    }
    EXPECT_THROW(load_detections(path, corpus), ValidationError);
    std::filesystem::remove(path);
}

TEST(RateTable, Counting) {
    std::vector<GroundTruth> gts{make_gt("i", "p")};
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 10; ++i) recs.push_back(make_rec("r" + std::to_string(i), "i", "m", "x"));
    Corpus corpus(gts, recs);
    std::vector<bool> flags{1, 1, 1, 0, 1, 1, 0, 1, 1, 0};
    metrics::BootstrapOptions bo{200, 0.95, 1};
    auto t = rate_table(flags, corpus, {}, bo);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0].group, "all");
    EXPECT_DOUBLE_EQ(t.rows[0].rate, 0.7);
    EXPECT_LE(t.rows[0].ci_low, 0.7);
    EXPECT_GE(t.rows[0].ci_high, 0.7);

    Corpus one(gts, {recs[0]});
    auto t1 = rate_table({true}, one, {GroupField::Model}, bo);
    ASSERT_EQ(t1.rows.size(), 1u);
    EXPECT_EQ(t1.rows[0].group, "model=m");
    EXPECT_DOUBLE_EQ(t1.rows[0].rate, 1.0);
    EXPECT_DOUBLE_EQ(t1.rows[0].ci_low, 1.0);
    EXPECT_NE(t1.to_csv().find("group,rate,ci_low,ci_high,n\nmodel=m,1.000000,1.000000,1.000000,1\n"),
              std::string::npos);
}

TEST(RateTable, PlantedHalfRatePerCell) {
    auto corpus = small_synth(9, 400);
    Rng rng(99);
    std::vector<bool> flags(corpus.records().size());
    for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = rng.bernoulli(0.5);
    auto t = rate_table(flags, corpus, {GroupField::Model, GroupField::Stratum}, {300, 0.95, 4});
    EXPECT_EQ(t.rows.size(), 12u);
    for (const auto& row : t.rows) {
        const double se = std::sqrt(0.25 / static_cast<double>(row.n));
        EXPECT_NEAR(row.rate, 0.5, 4 * se) << row.group;
        EXPECT_LT(row.ci_low, row.rate + 1e-12);
        EXPECT_GT(row.ci_high, row.rate - 1e-12);
        EXPECT_NEAR(row.ci_high - row.ci_low, 2 * 1.96 * se, 1.5 * se) << row.group;
    }
    EXPECT_EQ(t.rows.front().group, "model=model-1|stratum=S1");
}

TEST(RateTable, EmptyCellWarns) {
    Corpus corpus({make_gt("a", "p"), make_gt("b", "p", {{PathologyLabel::Edema, P}})},
                  {make_rec("1", "a", "m1", "x"), make_rec("2", "b", "m2", "x")});
    auto t = rate_table({false, true}, corpus, {GroupField::Model, GroupField::Stratum}, {50, 0.95, 0});
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.warnings.size(), 2u);
}

TEST(PerLabel, Counts) {
    std::vector<GroundTruth> gts{make_gt("i", "p", {{PathologyLabel::Fracture, P}})};
    std::vector<EvalRecord> recs;
    recs.push_back(make_rec("r0", "i", "m", "Rib fracture. Lung opacity."));
    for (int i = 1; i < 5; ++i) recs.push_back(make_rec("r" + std::to_string(i), "i", "m", "Nothing."));
    Corpus corpus(gts, recs);
    auto t = per_label_counts(detect_all(corpus, Extractor()), corpus);
    const auto& frac = t.rows[index_of(PathologyLabel::Fracture)];
    EXPECT_EQ(frac.omissions, 4u);
    EXPECT_EQ(frac.gt_positive, 5u);
    EXPECT_DOUBLE_EQ(*frac.omission_rate, 0.8);
    EXPECT_EQ(t.rows[index_of(PathologyLabel::LungOpacity)].fabrications, 1u);
    EXPECT_FALSE(t.rows[index_of(PathologyLabel::Edema)].omission_rate);
    EXPECT_EQ(t.total_fabrications, 1u);
}

TEST(TypeCounts, Matrix) {
    auto t = type_count_table({{"X", Verdict{HallucinationType::A1Fabrication, 3, "x"}}});
    EXPECT_EQ(t.total, 1u);
    EXPECT_EQ(t.at(HallucinationType::A1Fabrication, "X"), 1u);
    EXPECT_EQ(t.at(HallucinationType::A2Omission, "X"), 0u);
    auto empty = type_count_table({}, {"a", "b"});
    EXPECT_EQ(empty.total, 0u);
    for (const auto& row : empty.counts) {
        for (auto c : row) EXPECT_EQ(c, 0u);
    }
}

TEST(QueryType, AlwaysYesIsChance) {
    std::vector<GroundTruth> gts;
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 20; ++i) {
        const auto id = "i" + std::to_string(i);
        gts.push_back(i < 15 ? make_gt(id, "p", {{PathologyLabel::Edema, P}}) : make_gt(id, "p"));
        recs.push_back(make_rec("r" + std::to_string(i), id, "m", "Yes.", QueryKind::TargetedVqa, PathologyLabel::Edema));
    }
    recs.push_back(make_rec("u", "i0", "m", "Unclear.", QueryKind::TargetedVqa, PathologyLabel::Edema));
    Corpus corpus(gts, recs);
    auto t = query_type_table(detect_all(corpus, Extractor()), corpus);
    ASSERT_EQ(t.vqa.size(), 1u);
    EXPECT_EQ(t.vqa[0].tp, 15u);
    EXPECT_EQ(t.vqa[0].fp, 5u);
    EXPECT_EQ(t.vqa[0].fn, 1u);
    EXPECT_EQ(t.vqa[0].unparsed, 1u);
    EXPECT_DOUBLE_EQ(*t.vqa[0].specificity, 0.0);
    EXPECT_NEAR(*t.vqa[0].balanced_accuracy, 0.5 * 15.0 / 16.0, 1e-12);
}

TEST(Phi, PairsByImageAndQuery) {
    std::vector<GroundTruth> gts;
    std::vector<EvalRecord> recs;
    // n11=3, n10=1, n01=1, n00=3 between models a and b.
    const int a[8] = {1, 1, 1, 1, 0, 0, 0, 0};
    const int b[8] = {1, 1, 1, 0, 1, 0, 0, 0};
    for (int i = 0; i < 8; ++i) {
        const auto id = "i" + std::to_string(i);
        gts.push_back(make_gt(id, "p"));
        recs.push_back(make_rec("a" + std::to_string(i), id, "a", a[i] ? "Edema." : "Clear."));
        recs.push_back(make_rec("b" + std::to_string(i), id, "b", b[i] ? "Edema." : "Clear."));
    }
    Corpus corpus(gts, recs);
    auto phi = model_phi(detect_all(corpus, Extractor()), corpus);
    ASSERT_EQ(phi.size(), 1u);
    EXPECT_EQ(phi[0].n_pairs, 8u);
    EXPECT_NEAR(phi[0].phi, 0.5, 1e-12);
}
