#include <doctest.h>

#include <algorithm>
#include <random>

#include "weasul/core_data.hpp"
#include "weasul/errors.hpp"

using namespace weasul;

namespace {

LabelMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::bernoulli_distribution coin(0.4);
    std::vector<std::vector<int>> rows(n, std::vector<int>(m));
    for (auto& r : rows)
        for (auto& v : r) v = coin(rng);
    return LabelMatrix::from_rows(rows);
}

}  // namespace

TEST_CASE("label matrix rejects non-binary entries and single columns") {
    CHECK_THROWS_AS(LabelMatrix::from_rows({{0, 2}, {1, 0}}), Error);
    CHECK_THROWS_AS(LabelMatrix::from_rows({{0}, {1}}), Error);
    CHECK_THROWS_AS(LabelMatrix::from_rows({{0, 1}, {1}}), Error);
    const auto lm = LabelMatrix::from_rows({{0, 1}, {1, 1}});
    CHECK(lm.rows() == 2);
    CHECK(lm.cols() == 2);
    CHECK(lm(1, 0) == 1);
}

TEST_CASE("build_buckets groups identical rows in first-occurrence order") {
    SUBCASE("two buckets") {
        const auto b = build_buckets(LabelMatrix::from_rows({{1, 1, 0}, {1, 1, 0}, {0, 1, 0}}));
        CHECK(b.size() == 2);
        CHECK(b.counts == std::vector<std::size_t>{2, 1});
        CHECK(b.point_to_bucket == std::vector<std::size_t>{0, 0, 1});
    }
    SUBCASE("identical rows") {
        const auto b = build_buckets(LabelMatrix::from_rows(std::vector<std::vector<int>>(7, {0, 1, 1})));
        CHECK(b.size() == 1);
        CHECK(b.counts[0] == 7);
    }
    SUBCASE("all eight configurations") {
        std::vector<std::vector<int>> rows;
        for (int k = 0; k < 8; ++k) rows.push_back({k >> 2 & 1, k >> 1 & 1, k & 1});
        const auto b = build_buckets(LabelMatrix::from_rows(rows));
        CHECK(b.size() == 8);
        for (auto c : b.counts) CHECK(c == 1);
    }
}

TEST_CASE("buckets reconstruct the label matrix exactly") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto lm = random_matrix(rng, 200, 4);
        const auto b = build_buckets(lm);
        std::size_t total = 0;
        for (auto c : b.counts) total += c;
        CHECK(total == lm.rows());
        for (std::size_t i = 0; i < lm.rows(); ++i) {
            const auto k = b.point_to_bucket[i];
            for (std::size_t j = 0; j < lm.cols(); ++j) CHECK(b.configs(k, j) == lm(i, j));
            CHECK(std::find(b.members[k].begin(), b.members[k].end(), i) != b.members[k].end());
        }
        for (std::size_t a = 0; a < b.size(); ++a)
            for (std::size_t c = a + 1; c < b.size(); ++c) CHECK(config_key(b.configs.row(a)) != config_key(b.configs.row(c)));
        CHECK(b.find(lm.row(0)) == b.point_to_bucket[0]);
    }
}

TEST_CASE("psi expansion adds one joint column per dependent pair") {
    const auto lm = LabelMatrix::from_rows({{1, 0, 1}, {0, 1, 1}, {1, 1, 0}, {0, 0, 0}});
    SUBCASE("no cliques is the identity") {
        const auto mi = psi_expand(lm, {});
        CHECK(mi.dim() == 3);
        CHECK(mi.psi == lm.values().cast<double>());
    }
    SUBCASE("clique {1,2}") {
        const auto mi = psi_expand(lm, DependencyStructure{{{1, 2}}});
        REQUIRE(mi.dim() == 4);
        for (Eigen::Index i = 0; i < 4; ++i) CHECK(mi.psi(i, 3) == mi.psi(i, 1) * mi.psi(i, 2));
    }
    SUBCASE("column means") {
        const auto mi = psi_expand(LabelMatrix::from_rows({{1, 1}, {1, 0}, {0, 1}, {0, 0}}), DependencyStructure{{{0, 1}}});
        CHECK(mi.col_means(0) == doctest::Approx(0.5));
        CHECK(mi.col_means(1) == doctest::Approx(0.5));
        CHECK(mi.col_means(2) == doctest::Approx(0.25));
    }
    SUBCASE("clique index out of range") {
        CHECK_THROWS_AS(psi_expand(lm, DependencyStructure{{{1, 3}}}), Error);
    }
}

TEST_CASE("dependency structures are validated") {
    CHECK_NOTHROW((DependencyStructure{{{0, 1}}}.validate(3)));
    CHECK_THROWS_AS((DependencyStructure{{{0, 1}, {1, 2}}}.validate(3)), Error);
    CHECK_THROWS_AS((DependencyStructure{{{0, 1, 2}}}.validate(4)), Error);
    CHECK_THROWS_AS((DependencyStructure{{{0}}}.validate(3)), Error);
    CHECK_THROWS_AS((DependencyStructure{{{2, 5}}}.validate(3)), Error);
}

TEST_CASE("covariance matches hand computations") {
    SUBCASE("single column variance") {
        Eigen::MatrixXd psi(4, 2);
        psi << 0, 1, 1, 0, 0, 0, 1, 1;
        const auto cov = covariance(psi);
        CHECK(cov.sigma(0, 0) == doctest::Approx(0.25));
    }
    SUBCASE("zero off-diagonal") {
        Eigen::MatrixXd psi(4, 2);
        psi << 1, 0, 0, 1, 1, 1, 0, 0;
        const auto cov = covariance(psi);
        CHECK(cov.sigma(0, 1) == doctest::Approx(0.0));
        CHECK(!cov.ridged);
        CHECK((cov.sigma_inv * cov.sigma - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("constant column falls to the ridge path") {
        Eigen::MatrixXd psi(4, 2);
        psi << 1, 0, 1, 1, 1, 0, 1, 1;
        const auto cov = covariance(psi);
        CHECK(cov.ridged);
        CHECK(cov.sigma_inv.allFinite());
    }
    SUBCASE("all-constant matrix is singular") {
        CHECK_THROWS_AS(covariance(Eigen::MatrixXd::Ones(5, 2)), Error);
    }
}

TEST_CASE("covariance is invariant under row permutation") {
    std::mt19937_64 rng(5);
    const auto lm = random_matrix(rng, 300, 3);
    const auto mi = psi_expand(lm, DependencyStructure{{{1, 2}}});
    Eigen::MatrixXd shuffled = mi.psi;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(shuffled.rows()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = mi.psi.row(order[i]);
    const auto a = covariance(mi.psi);
    const auto b = covariance(shuffled);
    CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("omega pairs exclude within-clique pairs") {
    SUBCASE("no cliques") {
        CHECK(omega_pairs({}, 3) == std::vector<IndexPair>{{0, 1}, {0, 2}, {1, 2}});
    }
    SUBCASE("clique {1,2}") {
        CHECK(omega_pairs(DependencyStructure{{{1, 2}}}, 3) == std::vector<IndexPair>{{0, 1}, {0, 2}, {0, 3}});
    }
    SUBCASE("fully dependent pair leaves omega empty and is rejected") {
        CHECK(omega_pairs(DependencyStructure{{{0, 1}}}, 2).empty());
        CHECK_THROWS_AS(make_moment_input(LabelMatrix::from_rows({{0, 1}, {1, 0}, {1, 1}}), DependencyStructure{{{0, 1}}}),
                        Error);
    }
    SUBCASE("pair counts add up to d squared") {
        for (std::size_t m = 2; m <= 6; ++m) {
            for (int with_pair = 0; with_pair < 2; ++with_pair) {
                DependencyStructure dep;
                if (with_pair) dep.cliques = {{0, 1}};
                const std::size_t d = m + (with_pair ? 1 : 0);
                const auto omega = omega_pairs(dep, m);
                const std::size_t excluded = with_pair ? 6 : 0;  // ordered within-clique off-diagonal pairs of {0,1,joint}
                CHECK(2 * omega.size() + excluded + d == d * d);
            }
        }
    }
}

TEST_CASE("moment input from a sample with a duplicated pair column survives via ridge") {
    // lf2 implies lf1, so the joint column equals lf2.
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({i % 2, i % 3 == 0 ? 1 : 0, i % 6 == 0 ? 1 : 0});
    const auto mi = make_moment_input(LabelMatrix::from_rows(rows), DependencyStructure{{{1, 2}}});
    CHECK(mi.ridged);
    CHECK(mi.sigma_inv.allFinite());
}
