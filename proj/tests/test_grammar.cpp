#include "procsplat/assembly.hpp"
#include "procsplat/error.hpp"
#include "procsplat/grammar.hpp"
#include "grammar_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace procsplat;
using namespace procsplat::test_support;

namespace {

using Rng = std::mt19937_64;

const char* kSample = R"(
building B {
  level L1 { C_E (P1 W1)* C_E }
}
)";

Token tok(const Item& it) { return it.token(); }

void expect_same_list(const InstantiationList& a, const InstantiationList& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].asset_id, b[k].asset_id) << "instance " << k;
        EXPECT_EQ(a[k].variance_index, b[k].variance_index);
        EXPECT_LT((a[k].transform.R - b[k].transform.R).cwiseAbs().maxCoeff(), tol);
        EXPECT_LT((a[k].transform.T - b[k].transform.T).cwiseAbs().maxCoeff(), tol) << "instance " << k;
        EXPECT_LT((a[k].transform.S - b[k].transform.S).cwiseAbs().maxCoeff(), tol) << "instance " << k;
    }
}

}  // namespace

TEST(Parse, SmokeCase) {
    const ProceduralCode c = parse(kSample);
    EXPECT_EQ(c.building_id, "B");
    ASSERT_EQ(c.levels.size(), 1u);
    ASSERT_EQ(c.levels[0].facades.size(), 1u);
    const auto& items = c.levels[0].facades[0].items;
    ASSERT_EQ(items.size(), 3u);
    EXPECT_EQ(tok(items[0]), (Token{"C_E", false}));
    ASSERT_FALSE(items[1].is_token());
    EXPECT_TRUE(items[1].group().repeatable);
    ASSERT_EQ(items[1].group().items.size(), 2u);
    EXPECT_EQ(tok(items[1].group().items[0]).asset_id, "P1");
    EXPECT_EQ(tok(items[1].group().items[1]).asset_id, "W1");
    EXPECT_EQ(tok(items[2]), (Token{"C_E", false}));
    EXPECT_EQ(items[1].span.line, 3);
    EXPECT_EQ(items[1].span.column, 18);
}

TEST(Parse, RepeatCountDimsAndScalable) {
    const ProceduralCode c = parse("building T { dims 10 6.5 9 level L2 x 3 { A B* | A } }");
    ASSERT_TRUE(c.dims.has_value());
    EXPECT_EQ(*c.dims, Vec3(10, 6.5, 9));
    EXPECT_EQ(c.levels[0].repeat_count, 3);
    EXPECT_EQ(c.levels[0].facades.size(), 2u);
    EXPECT_TRUE(tok(c.levels[0].facades[0].items[1]).scalable);
}

TEST(Parse, ErrorsCarryPositions) {
    try {
        parse("building B {\n  level L { C ( W1 }\n}");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 15);
    }
    EXPECT_THROW(parse(""), ParseError);
    EXPECT_THROW(parse("building B { }"), ParseError);
    EXPECT_THROW(parse("building B { level L { } }"), ParseError);
    EXPECT_THROW(parse("building B { level L x 0 { A } }"), ParseError);
    EXPECT_THROW(parse("building B { level L { A # } }"), ParseError);
    EXPECT_THROW(parse("building A { level L { A } } building B { level L { A } }"), ParseError);
    EXPECT_EQ(parse_all("building A { level L { A } } building B { level L { A } }").size(), 2u);
}

TEST(Serialize, CanonicalAndWhitespaceInsensitive) {
    const std::string canon = serialize(parse(kSample));
    EXPECT_EQ(parse(canon), parse(kSample));
    EXPECT_EQ(serialize(parse(canon)), canon);
    EXPECT_EQ(serialize(parse("building   B{level L1{C_E(P1   W1)*\n\n C_E}}")), canon);
}

TEST(Serialize, RoundTripGeneratedAsts) {
    AstGen gen{Rng(2024)};
    for (int i = 0; i < 1000; ++i) {
        const ProceduralCode c = gen.code();
        const std::string text = serialize(c);
        ProceduralCode back;
        ASSERT_NO_THROW(back = parse(text)) << text;
        ASSERT_EQ(back, c) << text;
        if (c.dims) EXPECT_EQ(*back.dims, *c.dims);
    }
}

TEST(Resolve, UnknownAndDuplicateIds) {
    const auto manifest = demo_manifest();
    const ProceduralCode ok = parse(kSample);
    EXPECT_EQ(&resolve(ok, manifest), &ok);
    try {
        resolve(parse("building B { level L { Q C_E Z Q } }"), manifest);
        FAIL();
    } catch (const ResolveError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("Q"), std::string::npos);
        EXPECT_NE(msg.find("Z"), std::string::npos);
    }
    auto dup = manifest;
    dup.push_back(manifest[0]);
    EXPECT_THROW(resolve(ok, dup), ManifestError);
    EXPECT_THROW(resolve(parse("building B { level L { A | A | A | A | A } }"), manifest), ResolveError);
}

TEST(Expand, GroupRepeatsAndResidual) {
    const auto manifest = demo_manifest();
    const ProceduralCode c = parse("building B { level L { C_E (W1)* C_E } }");
    // 8 m facade: 6 m free, three 2 m windows, no residual.
    auto list = expand(c, manifest, {8.0, 1.0, 3.0});
    ASSERT_EQ(list.size(), 5u);
    for (int k = 1; k <= 3; ++k) {
        EXPECT_EQ(list[k].asset_id, "W1");
        EXPECT_NEAR(list[k].transform.S.x(), 1.0, 1e-12);
    }
    // 8.6 m: still three windows, the group absorbs the 0.6 m residual.
    list = expand(c, manifest, {8.6, 1.0, 3.0});
    ASSERT_EQ(list.size(), 5u);
    for (int k = 1; k <= 3; ++k) EXPECT_NEAR(list[k].transform.S.x(), 6.6 / 6.0, 1e-12);
    EXPECT_NEAR(list[0].transform.S.x(), 1.0, 1e-15);
    EXPECT_NEAR(list[4].transform.S.x(), 1.0, 1e-15);
    EXPECT_NEAR(list[4].transform.T.x(), 8.6 - 0.5, 1e-12);
}

TEST(Expand, ScalableTokensTakeResidual) {
    const auto manifest = demo_manifest();
    const ProceduralCode c = parse("building B { level L { C_E P1* (W1)* P1* C_E } }");
    const auto list = expand(c, manifest, {9.0, 1.0, 3.0});
    // free = 9 - 2 - 1 = 6 -> three windows, scalable pillars keep their width.
    ASSERT_EQ(list.size(), 7u);
    EXPECT_NEAR(list[1].transform.S.x(), 1.0, 1e-12);
    const auto wide = expand(c, manifest, {9.4, 1.0, 3.0});
    EXPECT_NEAR(wide[1].transform.S.x(), 1.4, 1e-12);
    EXPECT_NEAR(wide[2].transform.S.x(), 1.0, 1e-15);
}

TEST(Expand, TightFitAndStacking) {
    const auto manifest = demo_manifest();
    const ProceduralCode c = parse("building B { level L x 3 { C_E W1 C_E } }");
    const auto list = expand(c, manifest, {4.0, 1.0, 9.0});
    ASSERT_EQ(list.size(), 9u);
    for (const auto& inst : list) EXPECT_EQ(inst.transform.S, Vec3::Ones());
    for (int rep = 0; rep < 3; ++rep)
        EXPECT_NEAR(world_bbox(manifest[0], list[3 * rep].transform).min.z(), 3.0 * rep, 1e-12);
}

TEST(Expand, ErrorPaths) {
    const auto manifest = demo_manifest();
    EXPECT_THROW(expand(parse("building B { level L { C_E W1 C_E } }"), manifest, {3.0, 1, 3}),
                 InfeasibleDimensions);
    EXPECT_THROW(expand(parse("building B { level L { C_E (W1)* (P1)* C_E } }"), manifest, {9.0, 1, 3}),
                 AmbiguityError);
    EXPECT_THROW(expand(parse("building B { level L { C_E W1 C_E } }"), manifest, {4.5, 1, 3}),
                 InfeasibleDimensions);
    EXPECT_THROW(expand(parse("building B { level L { Nope } }"), manifest, {4, 1, 3}), ResolveError);
    // Corner is 1 m deep, the building only 0.5 m.
    EXPECT_THROW(expand(parse("building B { level L { C_E W1 C_E } }"), manifest, {4.0, 0.5, 3}),
                 InfeasibleDimensions);
    try {
        expand(parse("building B { level L { C_E | C_E W1 C_E } }"), manifest, {1.0, 2.0, 3.0});
        FAIL();
    } catch (const InfeasibleDimensions& e) {
        EXPECT_NE(std::string(e.what()).find("right"), std::string::npos) << e.what();
    }
}

TEST(Expand, WidthConservationAndFootprint) {
    const auto manifest = demo_manifest();
    Rng rng(77);
    AstGen gen{Rng(5)};
    gen.ids = {"C_E", "W1", "P1", "D"};
    double worst = 0.0;
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const ProceduralCode c = well_posed(gen.code());
        const Vec3 dims = feasible_dims(c, manifest, rng);
        const auto list = expand(c, manifest, dims);
        ASSERT_EQ(list, expand(c, manifest, dims));
        const WidthAudit a = audit_widths(c, manifest, dims, list);
        EXPECT_EQ(a.outside, 0) << serialize(c);
        worst = std::max(worst, a.worst);
        checked += a.rows;
    }
    EXPECT_GT(checked, 300);
    EXPECT_LE(worst, 1e-6);
}

TEST(Regularize, RepeatPattern) {
    const std::vector<RawLevel> raw{{{"C_E", "P1", "W1", "P1", "W1", "P1", "W1", "C_E"}}};
    const ProceduralCode c = regularize(raw);
    EXPECT_EQ(c.levels[0].facades[0], parse(kSample).levels[0].facades[0]);
}

TEST(Regularize, MergesLevelsAndKeepsPlainRows) {
    const RawLevel lv{{"C_E", "W1", "C_E"}};
    const std::vector<RawLevel> raw{lv, lv, lv};
    const ProceduralCode c = regularize(raw);
    ASSERT_EQ(c.levels.size(), 1u);
    EXPECT_EQ(c.levels[0].repeat_count, 3);
    const auto& items = c.levels[0].facades[0].items;
    ASSERT_EQ(items.size(), 3u);
    for (const auto& it : items) EXPECT_TRUE(it.is_token());
}

TEST(Regularize, PrefersPrimitiveUnitsAndWiderCoverage) {
    const std::vector<RawLevel> raw{{{"A", "A", "A", "A"}}};
    const ProceduralCode c = regularize(raw);
    const auto& f = c.levels[0].facades[0];
    ASSERT_EQ(f.items.size(), 1u);
    EXPECT_EQ(f.items[0].group().items.size(), 1u);

    // "B B" covers 2, "A C A C A C" covers 6.
    const std::vector<RawLevel> raw2{{{"B", "B", "A", "C", "A", "C", "A", "C"}}};
    const ProceduralCode c2 = regularize(raw2);
    const auto& g = c2.levels[0].facades[0];
    ASSERT_EQ(g.items.size(), 3u);
    EXPECT_EQ(g.items[2].group().items.size(), 2u);
}

TEST(Regularize, ExpansionReproducesRawRows) {
    const auto manifest = demo_manifest();
    int with_groups = 0;
    for (const auto& raw : regularizer_fixtures(404, 200)) {
        const Vec3 dims = dims_of(raw, manifest);
        const ProceduralCode regular = regularize(raw);
        for (const auto& lv : regular.levels)
            for (const auto& f : lv.facades)
                for (const auto& it : f.items) with_groups += !it.is_token();
        const auto reference = expand(literal_code(raw), manifest, dims);
        expect_same_list(expand(regular, manifest, dims), reference, 1e-9);
        // And the regular form survives a text round trip.
        EXPECT_EQ(parse(serialize(regular)), regular);
    }
    EXPECT_GT(with_groups, 100);
}
