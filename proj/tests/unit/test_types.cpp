#include <gtest/gtest.h>

#include <set>

#include "hallu/corpus.hpp"
#include "hallu/error.hpp"
#include "hallu/random.hpp"
#include "hallu/taxonomy.hpp"
#include "hallu/types.hpp"

using namespace hallu;

TEST(Types, LabelNamesRoundTrip) {
    std::set<std::string_view> seen;
    for (auto label : kAllLabels) {
        const auto name = to_string(label);
        EXPECT_TRUE(seen.insert(name).second);
        ASSERT_TRUE(parse_label(name));
        EXPECT_EQ(*parse_label(name), label);
    }
    EXPECT_EQ(seen.size(), kNumLabels);
    EXPECT_FALSE(parse_label("Pneumo"));
    EXPECT_FALSE(parse_label("pleural effusion"));
    EXPECT_THROW(require_label("Pneumo"), ValidationError);
}

TEST(Types, QueryKindWireForm) {
    for (auto kind : kAllQueryKinds) EXPECT_EQ(parse_query_kind(to_string(kind)), kind);
    EXPECT_EQ(to_string(QueryKind::TargetedVqa), "vqa");
    EXPECT_FALSE(parse_query_kind("VQA"));
}

TEST(Types, Utf8Length) {
    EXPECT_EQ(utf8_length(""), 0u);
    EXPECT_EQ(utf8_length("abc"), 3u);
    EXPECT_EQ(utf8_length("caf\xc3\xa9"), 4u);
    EXPECT_EQ(utf8_length("\xe2\x80\x94"), 1u);
    EXPECT_EQ(utf8_length("\xf0\x9f\x98\x80x"), 2u);
}

TEST(Types, Strata) {
    GroundTruth gt;
    EXPECT_EQ(assign_stratum(gt), Stratum::S1Normal);
    gt.labels[PathologyLabel::Cardiomegaly] = LabelState::Positive;
    gt.labels[PathologyLabel::Edema] = LabelState::Uncertain;
    EXPECT_EQ(assign_stratum(gt), Stratum::S2Single);
    gt.labels[PathologyLabel::Fracture] = LabelState::Positive;
    EXPECT_EQ(assign_stratum(gt), Stratum::S3Multi);
    gt.labels[PathologyLabel::LungOpacity] = LabelState::Positive;
    EXPECT_EQ(assign_stratum(gt), Stratum::S3Multi);
    gt.labels[PathologyLabel::Pneumothorax] = LabelState::Positive;
    EXPECT_EQ(assign_stratum(gt), Stratum::S4Complex);
    EXPECT_EQ(to_string(Stratum::S4Complex), "S4");
}

TEST(Taxonomy, SeverityRanges) {
    EXPECT_FALSE(severity_allowed(HallucinationType::A3Spatial, 1));
    EXPECT_TRUE(severity_allowed(HallucinationType::A3Spatial, 2));
    EXPECT_FALSE(severity_allowed(HallucinationType::A4SeverityDistortion, 3));
    EXPECT_TRUE(severity_allowed(HallucinationType::A1Fabrication, 3));
    EXPECT_FALSE(severity_allowed(HallucinationType::C1Template, 0));
    for (const auto& t : kTaxonomy) EXPECT_EQ(parse_hallucination_type(t.code), t.type);
    EXPECT_FALSE(parse_hallucination_type("D1"));
}

TEST(Random, SeedsAreStable) {
    // Engine output must not depend on the standard library.
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Random, BelowIsInRangeAndCoversIt) {
    Rng rng(7);
    std::vector<int> hits(6, 0);
    for (int i = 0; i < 6000; ++i) {
        const auto x = rng.below(6);
        ASSERT_LT(x, 6u);
        ++hits[x];
    }
    for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Random, NormalMoments) {
    Rng rng(11);
    double s = 0, s2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
