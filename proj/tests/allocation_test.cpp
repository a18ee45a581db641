#include "ciegad/allocation.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace ciegad;
using testutil::vec;

namespace {

struct Fixture {
    std::map<std::string, std::vector<ClusterModel>> clusters;
    EmbeddingMap embeddings;
};

/// Random classes of random clusters; every member gets its own id.
Fixture random_fixture(std::mt19937_64& rng, int max_classes = 10, int max_clusters = 18,
                       int dim = 4) {
    std::uniform_int_distribution<int> n_classes(1, max_classes);
    std::uniform_int_distribution<int> n_clusters(1, max_clusters);
    std::uniform_int_distribution<int> n_members(1, 30);
    Fixture f;
    const int classes = n_classes(rng);
    int uid = 0;
    for (int c = 0; c < classes; ++c) {
        const std::string label = "class" + std::to_string(c);
        const int K = n_clusters(rng);
        for (int k = 0; k < K; ++k) {
            ClusterModel m;
            m.class_label = label;
            m.cluster_id = k;
            const int n = n_members(rng);
            std::vector<Embedding> pts = testutil::random_vectors(rng, n, dim, 5.0);
            for (const Embedding& p : pts) {
                const std::string id = testutil::padded_id("u-", uid++, 6);
                f.embeddings[id] = p;
                m.member_ids.push_back(id);
            }
            m.centroid = centroid(pts);
            f.clusters[label].push_back(std::move(m));
        }
    }
    return f;
}

/// Straight-line re-evaluation of the allocation equations, independent of
/// the implementation: inverse-frequency class weights, the three-term
/// priority score, largest-remainder integerization at both levels.
struct OraclePlan {
    long long T = 0;
    std::map<std::string, long long> class_q;
    std::map<std::string, std::vector<long long>> cluster_q;
    std::map<std::string, std::vector<double>> priorities;
};

OraclePlan oracle_hfga(const Fixture& f, double rho, double eps, double a, double b,
                       double g) {
    OraclePlan plan;
    long long N = 0;
    std::map<std::string, long long> counts;
    for (const auto& [label, cs] : f.clusters) {
        for (const ClusterModel& c : cs) counts[label] += (long long)c.member_ids.size();
        N += counts[label];
    }
    plan.T = (long long)std::floor(rho * (double)N);
    std::vector<double> w;
    for (const auto& [label, n] : counts) w.push_back(1.0 / ((double)n + eps));
    const auto cq = testutil::oracle_largest_remainder(plan.T, w);
    std::size_t i = 0;
    for (const auto& [label, n] : counts) plan.class_q[label] = cq[i++];

    for (const auto& [label, cs] : f.clusters) {
        std::vector<double> v;
        for (const ClusterModel& c : cs) {
            const double size_term = 1.0 / ((double)c.member_ids.size() + 1e-6);
            double sep = 0.0;
            bool first = true;
            for (const ClusterModel& other : cs) {
                if (other.cluster_id == c.cluster_id) continue;
                const double d = testutil::oracle_euclidean(c.centroid, other.centroid);
                sep = first ? d : std::min(sep, d);
                first = false;
            }
            double spars = 0.0;
            for (const std::string& id : c.member_ids) {
                const double cosv = testutil::oracle_cosine(f.embeddings.at(id), c.centroid);
                spars += std::sqrt(std::max(0.0, 2.0 * (1.0 - cosv)));
            }
            spars /= (double)c.member_ids.size();
            v.push_back(a * size_term + b * sep + g * spars);
        }
        plan.priorities[label] = v;
        plan.cluster_q[label] = testutil::oracle_largest_remainder(plan.class_q[label], v);
    }
    return plan;
}

}  // namespace

TEST(Budget, HandCases) {
    EXPECT_EQ(budget(10000, 0.5), 5000);
    EXPECT_EQ(budget(7, 0.5), 3);
    EXPECT_EQ(budget(15000, 2.0), 30000);
}

TEST(LargestRemainder, SumsExactly) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<long long> t(0, 100000);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> w(1 + trial % 12);
        for (double& x : w) x = u(rng);
        const long long total = t(rng);
        const auto q = largest_remainder(total, w);
        long long sum = 0;
        for (long long x : q) sum += x;
        EXPECT_EQ(sum, total);
        EXPECT_EQ(q, testutil::oracle_largest_remainder(total, w));
    }
}

TEST(ClassQuotas, EqualClassesSplitEvenly) {
    const auto q = class_quotas({{"a", 200}, {"b", 200}}, 100, 1e-6);
    EXPECT_EQ(q.at("a"), 50);
    EXPECT_EQ(q.at("b"), 50);
}

TEST(ClassQuotas, WorkedInverseFrequencyFixture) {
    // Weights 1/100 : 1/300 = 3 : 1.
    const auto q = class_quotas({{"a", 100}, {"b", 300}}, 100, 1e-6);
    EXPECT_EQ(q.at("a"), 75);
    EXPECT_EQ(q.at("b"), 25);
}

TEST(ClassQuotas, ZeroBudgetGivesZeros) {
    const auto q = class_quotas({{"a", 10}, {"b", 20}, {"c", 30}}, 0, 1e-6);
    for (const auto& [label, v] : q) EXPECT_EQ(v, 0);
}

TEST(ClassQuotas, EmptyMapThrows) {
    EXPECT_THROW(class_quotas({}, 10, 1e-6), InvalidInputError);
}

TEST(ClusterPriority, HandComputedThreeClusterFixture) {
    // Cluster 0: singleton at (10, 0). Cluster 1: {(0,1),(0,3)}.
    // Cluster 2: {(1,0),(0,1)}.
    EmbeddingMap emb{{"a", vec({10, 0})},
                     {"b", vec({0, 1})},
                     {"c", vec({0, 3})},
                     {"d", vec({1, 0})},
                     {"e", vec({0, 1})}};
    std::vector<ClusterModel> cs(3);
    cs[0] = {"y", 0, {"a"}, vec({10, 0})};
    cs[1] = {"y", 1, {"b", "c"}, vec({0, 2})};
    cs[2] = {"y", 2, {"d", "e"}, vec({0.5, 0.5})};
    const PriorityWeights w{0.5, 0.25, 0.25};

    const ClusterPriority p0 = cluster_priority(cs[0], cs, w, emb);
    EXPECT_NEAR(p0.size_term, 1.0 / (1.0 + 1e-6), 1e-12);
    EXPECT_NEAR(p0.separation_term, std::sqrt(90.5), 1e-12);  // to (0.5, 0.5)
    EXPECT_DOUBLE_EQ(p0.sparsity_term, 0.0);  // member == centroid
    EXPECT_NEAR(p0.combined, 0.5 / (1.0 + 1e-6) + 0.25 * std::sqrt(90.5), 1e-12);

    const ClusterPriority p1 = cluster_priority(cs[1], cs, w, emb);
    EXPECT_NEAR(p1.separation_term, std::sqrt(2.5), 1e-12);
    EXPECT_DOUBLE_EQ(p1.sparsity_term, 0.0);  // members parallel to centroid
    EXPECT_NEAR(p1.combined, 0.5 / (2.0 + 1e-6) + 0.25 * std::sqrt(2.5), 1e-12);

    const ClusterPriority p2 = cluster_priority(cs[2], cs, w, emb);
    // cos((1,0),(0.5,0.5)) = 1/sqrt(2); both members symmetric.
    const double disp = std::sqrt(2.0 * (1.0 - 1.0 / std::sqrt(2.0)));
    EXPECT_NEAR(p2.sparsity_term, disp, 1e-12);
    EXPECT_NEAR(p2.combined, 0.5 / (2.0 + 1e-6) + 0.25 * std::sqrt(2.5) + 0.25 * disp, 1e-12);
}

TEST(ClusterPriority, IdenticalSymmetricClustersScoreEqually) {
    EmbeddingMap emb{{"p", vec({2, 1})}, {"q", vec({2, -1})},
                     {"r", vec({-2, 1})}, {"s", vec({-2, -1})}};
    std::vector<ClusterModel> cs(2);
    cs[0] = {"y", 0, {"p", "q"}, vec({2, 0})};
    cs[1] = {"y", 1, {"r", "s"}, vec({-2, 0})};
    const PriorityWeights w{0.5, 0.25, 0.25};
    const ClusterPriority p0 = cluster_priority(cs[0], cs, w, emb);
    const ClusterPriority p1 = cluster_priority(cs[1], cs, w, emb);
    EXPECT_NEAR(p0.combined, p1.combined, 1e-12);
}

TEST(ClusterPriority, AllMembersAtCentroidHaveZeroSparsity) {
    EmbeddingMap emb{{"x1", vec({3, 3})}, {"x2", vec({3, 3})}, {"far", vec({9, 9})}};
    std::vector<ClusterModel> cs(2);
    cs[0] = {"y", 0, {"x1", "x2"}, vec({3, 3})};
    cs[1] = {"y", 1, {"far"}, vec({9, 9})};
    const ClusterPriority p = cluster_priority(cs[0], cs, {0.5, 0.25, 0.25}, emb);
    EXPECT_DOUBLE_EQ(p.sparsity_term, 0.0);
}

TEST(ClusterPriority, SingleClusterClassHasZeroSeparation) {
    EmbeddingMap emb{{"x", vec({1, 2})}, {"z", vec({2, 1})}};
    std::vector<ClusterModel> cs(1);
    cs[0] = {"y", 0, {"x", "z"}, vec({1.5, 1.5})};
    const ClusterPriority p = cluster_priority(cs[0], cs, {0.5, 0.25, 0.25}, emb);
    EXPECT_DOUBLE_EQ(p.separation_term, 0.0);
}

TEST(ClusterQuotas, HandCases) {
    std::vector<ClusterPriority> equal(3);
    for (auto& p : equal) p.combined = 1.0;
    EXPECT_EQ(cluster_quotas(9, equal), (std::vector<long long>{3, 3, 3}));

    std::vector<ClusterPriority> ratio(3);
    ratio[0].combined = 2.0;
    ratio[1].combined = 1.0;
    ratio[2].combined = 1.0;
    EXPECT_EQ(cluster_quotas(100, ratio), (std::vector<long long>{50, 25, 25}));

    EXPECT_EQ(cluster_quotas(0, ratio), (std::vector<long long>{0, 0, 0}));
}

TEST(ClusterQuotas, AllZeroPrioritiesFallBackToUniform) {
    std::vector<ClusterPriority> zeros(4);
    EXPECT_EQ(cluster_quotas(8, zeros), (std::vector<long long>{2, 2, 2, 2}));
}

TEST(Hfga, DegenerateSingleClusterPlan) {
    std::mt19937_64 rng(4);
    Fixture f;
    ClusterModel m;
    m.class_label = "only";
    m.cluster_id = 0;
    auto pts = testutil::random_vectors(rng, 100, 3, 2.0);
    for (int i = 0; i < 100; ++i) {
        const std::string id = testutil::padded_id("o-", i);
        f.embeddings[id] = pts[i];
        m.member_ids.push_back(id);
    }
    m.centroid = centroid(pts);
    f.clusters["only"].push_back(m);

    const AllocationPlan plan = hfga(f.clusters, 0.2, f.embeddings);
    EXPECT_EQ(plan.target_total, 20);
    EXPECT_EQ(plan.class_quotas.at("only"), 20);
    EXPECT_EQ(plan.cluster_quotas.at("only"), (std::vector<long long>{20}));
}

TEST(Hfga, SymmetricTwoByTwoPlan) {
    Fixture f;
    auto add = [&f](const std::string& label, int k, const std::string& i1,
                    const Embedding& p1, const std::string& i2, const Embedding& p2) {
        ClusterModel m;
        m.class_label = label;
        m.cluster_id = k;
        m.member_ids = {i1, i2};
        f.embeddings[i1] = p1;
        f.embeddings[i2] = p2;
        m.centroid = centroid({p1, p2});
        f.clusters[label].push_back(std::move(m));
    };
    add("a", 0, "a1", vec({2, 1}), "a2", vec({2, -1}));
    add("a", 1, "a3", vec({-2, 1}), "a4", vec({-2, -1}));
    add("b", 0, "b1", vec({2, 11}), "b2", vec({2, 9}));
    add("b", 1, "b3", vec({-2, 11}), "b4", vec({-2, 9}));

    const AllocationPlan plan = hfga(f.clusters, 1.0, f.embeddings);
    EXPECT_EQ(plan.target_total, 8);
    EXPECT_EQ(plan.class_quotas.at("a"), 4);
    EXPECT_EQ(plan.class_quotas.at("b"), 4);
    EXPECT_EQ(plan.cluster_quotas.at("a"), (std::vector<long long>{2, 2}));
    EXPECT_EQ(plan.cluster_quotas.at("b"), (std::vector<long long>{2, 2}));
}

TEST(Hfga, MatchesBruteForceOracle) {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> rho_dist(0.1, 2.0);
    for (int trial = 0; trial < 60; ++trial) {
        const Fixture f = random_fixture(rng, 6, 8);
        const double rho = rho_dist(rng);
        const AllocationPlan plan = hfga(f.clusters, rho, f.embeddings);
        const OraclePlan expect = oracle_hfga(f, rho, 1e-6, 0.5, 0.25, 0.25);
        EXPECT_EQ(plan.target_total, expect.T);
        EXPECT_EQ(plan.class_quotas, expect.class_q);
        EXPECT_EQ(plan.cluster_quotas, expect.cluster_q);
        for (const auto& [label, cs] : f.clusters) {
            for (std::size_t k = 0; k < cs.size(); ++k) {
                const ClusterPriority p =
                    cluster_priority(cs[k], cs, {0.5, 0.25, 0.25}, f.embeddings);
                const double want = expect.priorities.at(label)[k];
                EXPECT_NEAR(p.combined, want, 1e-9 * std::max(1.0, std::abs(want)));
            }
        }
    }
}

TEST(Hfga, ConservationHoldsOverRandomConfigurations) {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> rho_dist(0.05, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Fixture f = random_fixture(rng, 10, 6, 3);
        const AllocationPlan plan = hfga(f.clusters, rho_dist(rng), f.embeddings);
        long long class_sum = 0;
        for (const auto& [label, q] : plan.class_quotas) {
            class_sum += q;
            long long cluster_sum = 0;
            for (long long c : plan.cluster_quotas.at(label)) {
                EXPECT_GE(c, 0);
                cluster_sum += c;
            }
            EXPECT_EQ(cluster_sum, q) << "class " << label;
        }
        EXPECT_EQ(class_sum, plan.target_total);
    }
}

TEST(Hfga, InverseFrequencyMonotoneOnRealShares) {
    // Smaller class => strictly larger pre-rounding share.
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<long long> size(1, 4000);
    for (int trial = 0; trial < 100; ++trial) {
        const long long na = size(rng);
        long long nb = size(rng);
        if (na == nb) ++nb;
        const double wa = 1.0 / (na + 1e-6);
        const double wb = 1.0 / (nb + 1e-6);
        if (na < nb) {
            EXPECT_GT(wa / (wa + wb), wb / (wa + wb));
        } else {
            EXPECT_LT(wa / (wa + wb), wb / (wa + wb));
        }
    }
}

TEST(Hfga, SeparationScalesSparsityInvariant) {
    std::mt19937_64 rng(99);
    const Fixture f = random_fixture(rng, 2, 4);
    const double s = 3.7;
    Fixture scaled = f;
    for (auto& [id, e] : scaled.embeddings) {
        for (double& v : e) v *= s;
    }
    for (auto& [label, cs] : scaled.clusters) {
        for (ClusterModel& c : cs) {
            for (double& v : c.centroid) v *= s;
        }
    }
    for (const auto& [label, cs] : f.clusters) {
        for (std::size_t k = 0; k < cs.size(); ++k) {
            const ClusterPriority orig =
                cluster_priority(cs[k], cs, {0.5, 0.25, 0.25}, f.embeddings);
            const ClusterPriority big = cluster_priority(
                scaled.clusters.at(label)[k], scaled.clusters.at(label), {0.5, 0.25, 0.25},
                scaled.embeddings);
            EXPECT_NEAR(big.separation_term, s * orig.separation_term,
                        1e-9 * std::max(1.0, orig.separation_term));
            EXPECT_NEAR(big.sparsity_term, orig.sparsity_term, 1e-9);
        }
    }
}

TEST(Hfga, PriorityOrderPreservedInRealShares) {
    std::mt19937_64 rng(111);
    const Fixture f = random_fixture(rng, 1, 10);
    const auto& cs = f.clusters.begin()->second;
    std::vector<double> combined;
    for (const ClusterModel& c : cs) {
        combined.push_back(cluster_priority(c, cs, {0.5, 0.25, 0.25}, f.embeddings).combined);
    }
    double total = 0.0;
    for (double v : combined) total += v;
    // Real-valued shares A_y * v / sum(v) are ordered exactly like v.
    for (std::size_t i = 0; i < combined.size(); ++i) {
        for (std::size_t j = 0; j < combined.size(); ++j) {
            if (combined[i] > combined[j]) {
                EXPECT_GT(1000.0 * combined[i] / total, 1000.0 * combined[j] / total);
            }
        }
    }
}

TEST(Hfga, TinyClustersExcludedWhenRequested) {
    Fixture f;
    ClusterModel big;
    big.class_label = "y";
    big.cluster_id = 0;
    std::mt19937_64 rng(8);
    auto pts = testutil::random_vectors(rng, 20, 3, 2.0);
    for (int i = 0; i < 20; ++i) {
        const std::string id = testutil::padded_id("g-", i);
        f.embeddings[id] = pts[i];
        big.member_ids.push_back(id);
    }
    big.centroid = centroid(pts);
    ClusterModel lone;
    lone.class_label = "y";
    lone.cluster_id = 1;
    f.embeddings["lone"] = vec({9, 9, 9});
    lone.member_ids = {"lone"};
    lone.centroid = vec({9, 9, 9});
    f.clusters["y"] = {big, lone};

    HfgaOptions opt;
    opt.min_generatable_size = 2;
    const AllocationPlan plan = hfga(f.clusters, 1.0, f.embeddings, opt);
    EXPECT_EQ(plan.target_total, 21);
    EXPECT_EQ(plan.cluster_quotas.at("y")[0], 21);  // singleton's share redistributed
    EXPECT_EQ(plan.cluster_quotas.at("y")[1], 0);
    EXPECT_FALSE(plan.notes.empty());
}
