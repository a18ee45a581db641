#include "ciegad/synthesis.hpp"

#include <gtest/gtest.h>

#include <random>

#include "selection_oracle.hpp"
#include "test_util.hpp"

using namespace ciegad;
using testutil::vec;

TEST(InterpSets, IsolatedPointBecomesRepresentative) {
    std::mt19937_64 rng(3);
    // Dense blob near (1, 1) plus one isolated point in a different direction.
    auto pts = testutil::gaussian_cloud(rng, 20, 2, vec({1.0, 1.0}), 0.05);
    pts.push_back(vec({-2.0, 5.0}));
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster(pts, emb);
    const DirectionSets sets = select_interp_sets(c, emb, 8, 10);
    EXPECT_EQ(sets.representative_id.value(), testutil::padded_id("m-", 20, 6));
    // Representative sits in its own inner set at distance zero.
    EXPECT_NE(std::find(sets.inner_ids.begin(), sets.inner_ids.end(),
                        *sets.representative_id),
              sets.inner_ids.end());
}

TEST(InterpSets, ClusterSizeEqualToMDegenerates) {
    std::mt19937_64 rng(5);
    const auto pts = testutil::random_vectors(rng, 10, 3, 2.0);
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster(pts, emb);
    const DirectionSets sets = select_interp_sets(c, emb, 8, 10);
    std::vector<std::string> inner = sets.inner_ids;
    std::vector<std::string> outer = sets.outer_ids;
    std::sort(inner.begin(), inner.end());
    std::sort(outer.begin(), outer.end());
    EXPECT_EQ(inner, outer);
    EXPECT_EQ(inner.size(), 10u);
}

TEST(InterpSets, DuplicatePointsTieBreakById) {
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster({vec({1, 1}), vec({1, 1})}, emb);
    const DirectionSets sets = select_interp_sets(c, emb, 8, 10);
    EXPECT_EQ(sets.representative_id.value(), testutil::padded_id("m-", 0, 6));
}

TEST(InterpSets, TooSmallClusterThrows) {
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster({vec({1, 1})}, emb);
    EXPECT_THROW(select_interp_sets(c, emb, 8, 10), DegenerateClusterError);
}

TEST(ExtrapSets, DistinctRadiiMatchPercentiles) {
    EmbeddingMap emb;
    std::vector<Embedding> pts;
    // 100 points at distinct radii 1..100 along distinct directions.
    for (int i = 0; i < 100; ++i) {
        const double r = i + 1.0;
        const double a = 0.1 * i;
        pts.push_back(vec({r * std::cos(a), r * std::sin(a)}));
    }
    ClusterModel c = testutil::make_cluster(pts, emb);
    c.centroid = vec({0.0, 0.0});  // anchor distances exactly at the radii
    const DirectionSets sets = select_extrap_sets(c, emb, 10, 0.70, 0.85);

    // O_ex: the 10 largest radii.
    for (const std::string& id : sets.outer_ids) {
        EXPECT_GE(euclidean(emb.at(id), c.centroid), 91.0);
    }
    // I_ex: radii within the nearest-rank [70th, 85th] percentile band.
    const double lo = 70.0, hi = 85.0;  // sorted[ceil(0.7*100)-1] = 70, etc.
    ASSERT_EQ(sets.inner_ids.size(), 10u);
    for (const std::string& id : sets.inner_ids) {
        const double d = euclidean(emb.at(id), c.centroid);
        EXPECT_GE(d, lo);
        EXPECT_LE(d, hi);
    }
}

TEST(ExtrapSets, EquidistantPointsFallBackToIdTieBreak) {
    EmbeddingMap emb;
    // Integer 3-4-5 lattice points: all exactly at distance 5 from the origin.
    std::vector<Embedding> pts{vec({3, 4}),  vec({4, 3}),  vec({-3, 4}), vec({-4, 3}),
                               vec({3, -4}), vec({4, -3}), vec({-3, -4}), vec({-4, -3}),
                               vec({5, 0}),  vec({0, 5}),  vec({-5, 0}), vec({0, -5})};
    ClusterModel c = testutil::make_cluster(pts, emb);
    c.centroid = vec({0.0, 0.0});
    const DirectionSets sets = select_extrap_sets(c, emb, 10, 0.70, 0.85);
    ASSERT_EQ(sets.inner_ids.size(), 10u);
    // All distances tie; the first ten ids win.
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(sets.inner_ids[i], testutil::padded_id("m-", i, 6));
    }
}

TEST(ExtrapSets, TwelvePointClusterHasFullOuterAndNonEmptyInner) {
    std::mt19937_64 rng(9);
    const auto pts = testutil::random_vectors(rng, 12, 4, 3.0);
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster(pts, emb);
    const DirectionSets sets = select_extrap_sets(c, emb, 10, 0.70, 0.85);
    EXPECT_EQ(sets.outer_ids.size(), 10u);
    EXPECT_GE(sets.inner_ids.size(), 1u);
    const testutil::OracleSets oracle = testutil::oracle_extrap_sets(c, emb, 10, 0.70, 0.85);
    EXPECT_EQ(sets.inner_ids, oracle.inner_ids);
    EXPECT_EQ(sets.outer_ids, oracle.outer_ids);
}

TEST(SetSelection, OracleEquivalenceOnRandomClusters) {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> size(3, 60);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = size(rng);
        const auto pts = testutil::random_vectors(rng, n, 5, 4.0);
        EmbeddingMap emb;
        const ClusterModel c = testutil::make_cluster(pts, emb);

        const DirectionSets interp = select_interp_sets(c, emb, 8, 10);
        const testutil::OracleSets oi = testutil::oracle_interp_sets(c, emb, 8, 10);
        EXPECT_EQ(interp.representative_id.value(), oi.representative);
        EXPECT_EQ(interp.inner_ids, oi.inner_ids);
        EXPECT_EQ(interp.outer_ids, oi.outer_ids);

        const DirectionSets extrap = select_extrap_sets(c, emb, 10, 0.70, 0.85);
        const testutil::OracleSets oe = testutil::oracle_extrap_sets(c, emb, 10, 0.70, 0.85);
        EXPECT_EQ(extrap.inner_ids, oe.inner_ids);
        EXPECT_EQ(extrap.outer_ids, oe.outer_ids);
    }
}

TEST(SetSelection, OuterSetExtremality) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        const auto pts = testutil::random_vectors(rng, 40, 3, 4.0);
        EmbeddingMap emb;
        const ClusterModel c = testutil::make_cluster(pts, emb);
        const DirectionSets sets = select_extrap_sets(c, emb, 10, 0.70, 0.85);
        double min_outer = 1e100;
        for (const std::string& id : sets.outer_ids) {
            min_outer = std::min(min_outer, euclidean(emb.at(id), c.centroid));
        }
        for (const std::string& id : c.member_ids) {
            if (std::count(sets.outer_ids.begin(), sets.outer_ids.end(), id)) continue;
            EXPECT_LE(euclidean(emb.at(id), c.centroid), min_outer + 1e-12);
        }
    }
}

namespace {

DirectionSets interp_fixture(const Embedding& z_in, const Embedding& z_out) {
    DirectionSets s;
    s.mode = GenMode::interpolative;
    s.inner_ids = {"i"};
    s.outer_ids = {"o"};
    s.inner_centroid = z_in;
    s.outer_centroid = z_out;
    s.representative_id = "i";
    return s;
}

DirectionSets extrap_fixture(const Embedding& z_i, const Embedding& z_o) {
    DirectionSets s;
    s.mode = GenMode::extrapolative;
    s.inner_ids = {"i"};
    s.outer_ids = {"o"};
    s.inner_centroid = z_i;
    s.outer_centroid = z_o;
    return s;
}

}  // namespace

TEST(InterpAccept, BoundaryCases) {
    const DirectionSets s = interp_fixture(vec({0, 0}), vec({1, 0}));
    EXPECT_TRUE(interp_accept(vec({0, 0}), s));    // x == z_in: LHS 0
    EXPECT_FALSE(interp_accept(vec({1, 0}), s));   // x == z_out: LHS |d|^2 > 0
    EXPECT_TRUE(interp_accept(vec({-0.5, 3}), s)); // LHS -0.5
}

TEST(InterpAccept, HalfSpaceCharacterization) {
    std::mt19937_64 rng(41);
    for (int dim : {2, 8}) {
        for (int trial = 0; trial < 200; ++trial) {
            const auto v = testutil::random_vectors(rng, 3, dim, 3.0);
            const DirectionSets s = interp_fixture(v[0], v[1]);
            double lhs = 0.0;
            for (int i = 0; i < dim; ++i) {
                lhs += (v[2][i] - v[0][i]) * (v[1][i] - v[0][i]);
            }
            EXPECT_EQ(interp_accept(v[2], s), lhs <= 0.0);
        }
    }
}

TEST(InterpAccept, BetweenVariant) {
    const DirectionSets s = interp_fixture(vec({0, 0}), vec({1, 0}));
    EXPECT_TRUE(interp_accept_between(vec({0.5, 2}), s));
    EXPECT_FALSE(interp_accept_between(vec({-0.1, 0}), s));
    EXPECT_FALSE(interp_accept_between(vec({1.1, 0}), s));
}

TEST(ExtrapAccept, BoundaryCases) {
    const DirectionSets s = extrap_fixture(vec({0, 0}), vec({1, 0}));
    EXPECT_FALSE(extrap_accept(vec({1, 0}), s, 0.03));   // x == z_O: LHS 0 < gamma |d|
    EXPECT_TRUE(extrap_accept(vec({1.5, 0}), s, 0.03));  // LHS 0.5
    EXPECT_FALSE(extrap_accept(vec({1.02, 0}), s, 0.03));  // LHS 0.02
}

TEST(ExtrapAccept, DegenerateDirectionThrows) {
    const DirectionSets s = extrap_fixture(vec({2, 2}), vec({2, 2}));
    EXPECT_THROW(extrap_accept(vec({1, 1}), s, 0.03), DegenerateDirectionError);
}

TEST(Predicates, TranslationInvariance) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const auto v = testutil::random_vectors(rng, 4, 6, 2.0);
        const Embedding& t = v[3];
        auto shift = [&t](const Embedding& x) {
            Embedding out(x);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
            return out;
        };
        const DirectionSets si = interp_fixture(v[0], v[1]);
        const DirectionSets si_t = interp_fixture(shift(v[0]), shift(v[1]));
        EXPECT_EQ(interp_accept(v[2], si), interp_accept(shift(v[2]), si_t));

        const DirectionSets se = extrap_fixture(v[0], v[1]);
        const DirectionSets se_t = extrap_fixture(shift(v[0]), shift(v[1]));
        EXPECT_EQ(extrap_accept(v[2], se, 0.03), extrap_accept(shift(v[2]), se_t, 0.03));
    }
}

TEST(Predicates, ExtrapVerdictFlipsUnderScaling) {
    // 1-d fixture: z_I = 0, z_O = 1, candidate at z_O + u. LHS scales with
    // s^2 while the margin threshold scales with s, so the verdict at
    // u between gamma/s and gamma flips when everything is scaled by s.
    const double gamma = 0.03;
    const double u = 0.02;
    const double s = 2.0;
    const DirectionSets plain = extrap_fixture(vec({0}), vec({1}));
    EXPECT_FALSE(extrap_accept(vec({1.0 + u}), plain, gamma));
    const DirectionSets scaled = extrap_fixture(vec({0}), vec({s}));
    EXPECT_TRUE(extrap_accept(vec({s * (1.0 + u)}), scaled, gamma));
}

TEST(GenerationPrompt, InterpolativeLabels) {
    EmbeddingMap emb;
    const ClusterModel c =
        testutil::make_cluster({vec({0.5, 0.5}), vec({1, 0}), vec({0, 1}), vec({2, 2})}, emb);
    TextMap texts;
    for (const std::string& id : c.member_ids) texts[id] = "text of " + id;
    const DirectionSets sets = select_interp_sets(c, emb, 2, 2);
    const PromptDoc doc = build_generation_prompt(GenMode::interpolative, std::nullopt, sets,
                                                  texts, "joy", 10);
    const std::string text = doc.render();
    EXPECT_NE(text.find("stay close to"), std::string::npos);
    EXPECT_NE(text.find("do not exceed"), std::string::npos);
    EXPECT_NE(text.find("distinct contexts"), std::string::npos);
    EXPECT_NE(text.find("rationale"), std::string::npos);
    EXPECT_EQ(doc.expected_items, 10);
    ASSERT_TRUE(doc.geometry_hint.has_value());
    EXPECT_EQ(doc.geometry_hint->mode, "interpolative");
}

TEST(GenerationPrompt, ExtrapolativeLabels) {
    EmbeddingMap emb;
    const ClusterModel c =
        testutil::make_cluster({vec({0, 0}), vec({1, 0}), vec({0, 1}), vec({2, 2})}, emb);
    TextMap texts;
    for (const std::string& id : c.member_ids) texts[id] = "text of " + id;
    const DirectionSets sets = select_extrap_sets(c, emb, 2, 0.70, 0.85);
    const PromptDoc doc = build_generation_prompt(GenMode::extrapolative, std::nullopt, sets,
                                                  texts, "joy", 10);
    const std::string text = doc.render();
    EXPECT_NE(text.find("go beyond"), std::string::npos);
    EXPECT_NE(text.find("move away from"), std::string::npos);
}

TEST(GenerationPrompt, BatchOfOneRequestsSingleItem) {
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster({vec({0.2, 0.1}), vec({1, 1})}, emb);
    TextMap texts{{testutil::padded_id("m-", 0, 6), "a"}, {testutil::padded_id("m-", 1, 6), "b"}};
    const DirectionSets sets = select_interp_sets(c, emb, 1, 2);
    const PromptDoc doc =
        build_generation_prompt(GenMode::interpolative, std::nullopt, sets, texts, "y", 1);
    EXPECT_EQ(doc.expected_items, 1);
    EXPECT_NE(doc.render().find("exactly 1"), std::string::npos);
}

TEST(GenerationPrompt, CharBudgetTruncatesProfileFirst) {
    EmbeddingMap emb;
    const ClusterModel c = testutil::make_cluster({vec({0.2, 0.1}), vec({1, 1})}, emb);
    TextMap texts{{testutil::padded_id("m-", 0, 6), std::string(400, 'a')},
                  {testutil::padded_id("m-", 1, 6), std::string(400, 'b')}};
    DomainProfile prof;
    prof.class_label = "y";
    prof.summary = "summary";
    for (int i = 0; i < 20; ++i) prof.topics.push_back("topic-" + std::to_string(i));
    for (int i = 0; i < 20; ++i) {
        prof.frequent_expressions.push_back("expression-" + std::to_string(i));
    }
    const DirectionSets sets = select_interp_sets(c, emb, 1, 2);
    const PromptDoc doc = build_generation_prompt(GenMode::interpolative, prof, sets, texts,
                                                  "y", 10, {}, 2200);
    EXPECT_LE(doc.rendered_size(), 2200u);
}
