#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "weasul/errors.hpp"
#include "weasul/generative.hpp"

using namespace weasul;

namespace {

// Independent labelling functions, no cliques, from explicit moments.
MomentInput independent_input(const Eigen::VectorXd& means, const Eigen::MatrixXd& sigma) {
    MomentInput mi;
    mi.num_lfs = static_cast<std::size_t>(means.size());
    mi.col_means = means;
    mi.sigma = sigma;
    mi.sigma_inv = sigma.inverse();
    mi.omega = omega_pairs({}, mi.num_lfs);
    mi.factors = factor_layout({}, mi.num_lfs);
    return mi;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd z,
                                   double h = 1e-5) {
    Eigen::VectorXd g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double keep = z(i);
        z(i) = keep + h;
        const double up = f(z);
        z(i) = keep - h;
        const double down = f(z);
        z(i) = keep;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

PenaltyTerm one_label(const std::vector<std::uint8_t>& config, int y) {
    PenaltyTerm t;
    t.configs.push_back(config);
    t.positives.push_back(y == 1 ? 1.0 : 0.0);
    t.negatives.push_back(y == 0 ? 1.0 : 0.0);
    return t;
}

}  // namespace

TEST_CASE("base loss on hand examples") {
    const auto mi0 = independent_input(Eigen::Vector2d(0.5, 0.5), Eigen::Matrix2d::Identity() * 0.25);
    CHECK(loss_base(Eigen::Vector2d::Zero(), mi0) == doctest::Approx(0.0));

    // Omega entries of Sigma^-1 equal to 1 and -1.
    MomentInput mi = independent_input(Eigen::Vector3d(0.5, 0.5, 0.5), Eigen::Matrix3d::Identity());
    mi.omega = {{0, 1}, {0, 2}};
    mi.sigma_inv << 2, 1, -1, 1, 2, 0, -1, 0, 2;
    CHECK(loss_base(Eigen::Vector3d::Zero(), mi) == doctest::Approx(std::sqrt(2.0)));

    CHECK_THROWS_AS(loss_base(Eigen::Vector2d::Zero(), mi), Error);
}

TEST_CASE("base loss is sign symmetric and matches its definition") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto model = oracle::random_model(rng);
        const auto mi = oracle::population_input(model);
        Eigen::VectorXd z(4);
        for (auto& v : z) v = u(rng);
        CHECK(loss_base(z, mi) == doctest::Approx(loss_base(-z, mi)).epsilon(1e-12));
        CHECK(loss_base(z, mi) == doctest::Approx(oracle::restricted_norm(mi.sigma_inv, z, mi.omega)).epsilon(1e-12));
    }
}

TEST_CASE("the population parameter vector has zero loss under conditional independence") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto model = oracle::random_model(rng, 0.1, 0.9, 0.3 + 0.02 * trial);
        const auto mi = oracle::population_input(model);
        CHECK(loss_base(oracle::true_z(model), mi) < 1e-9);
    }
}

TEST_CASE("recover_moments") {
    std::mt19937_64 rng(21);
    SUBCASE("zero coupling gives uninformative moments") {
        const auto mi = oracle::population_input(oracle::random_model(rng));
        const auto rec = recover_moments(Eigen::VectorXd::Zero(4), mi, 0.4);
        CHECK((rec.moments - mi.col_means * 0.4).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("single perfect function") {
        MomentInput mi = independent_input(Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.25));
        const auto rec = recover_moments(Eigen::VectorXd::Constant(1, 1e7), mi, 0.5);
        CHECK(rec.moments(0) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(rec.moments(0) / 0.5 == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("round trip through the population parameters") {
        for (int trial = 0; trial < 30; ++trial) {
            const auto model = oracle::random_model(rng, 0.05, 0.95, 0.35);
            // Functions better than random on average so the sign rule picks the truth.
            auto m = model;
            for (int y = 0; y < 2; ++y) m.single[y] = y == 1 ? std::max(model.single[0], model.single[1]) : std::min(model.single[0], model.single[1]);
            const auto pop = oracle::population(m);
            const auto mi = oracle::population_input(m);
            const Eigen::VectorXd cov_y = pop.mu - pop.means * m.prior;
            const double mean_singleton = cov_y.head(3).sum();
            const auto rec = recover_moments(oracle::true_z(m), mi, m.prior);
            const Eigen::VectorXd expected = mean_singleton >= 0 ? pop.mu : Eigen::VectorXd(-cov_y + pop.means * m.prior);
            CHECK((rec.moments - expected).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
    SUBCASE("sign flip of z leaves the moments unchanged") {
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        for (int trial = 0; trial < 30; ++trial) {
            const auto mi = oracle::population_input(oracle::random_model(rng));
            Eigen::VectorXd z(4);
            for (auto& v : z) v = u(rng);
            const auto a = recover_moments(z, mi, 0.5);
            const auto b = recover_moments(-z, mi, 0.5);
            CHECK((a.moments - b.moments).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("predict_from_moments on hand examples") {
    const double eps = 1e-4;
    SUBCASE("single perfect function is clamped to 1 - eps") {
        const auto mi = independent_input(Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.25));
        const std::vector<std::uint8_t> one{1};
        CHECK(predict_from_moments(Eigen::VectorXd::Constant(1, 0.5), one, mi, 0.5, eps) ==
              doctest::Approx(1.0 - eps).epsilon(1e-12));
    }
    SUBCASE("uninformative functions return the prior") {
        const auto mi = independent_input(Eigen::Vector3d(0.3, 0.6, 0.5), Eigen::Matrix3d::Identity() * 0.2);
        const double prior = 0.3;
        const Eigen::VectorXd mu = mi.col_means * prior;
        for (int k = 0; k < 8; ++k) {
            const std::vector<std::uint8_t> config{std::uint8_t(k >> 2 & 1), std::uint8_t(k >> 1 & 1), std::uint8_t(k & 1)};
            CHECK(predict_from_moments(mu, config, mi, prior, eps) == doctest::Approx(prior).epsilon(1e-12));
        }
    }
    SUBCASE("two independent functions with 0.8 / 0.2 conditionals") {
        const auto mi = independent_input(Eigen::Vector2d(0.5, 0.5), Eigen::Matrix2d::Identity() * 0.25);
        const std::vector<std::uint8_t> both{1, 1};
        CHECK(predict_from_moments(Eigen::Vector2d(0.4, 0.4), both, mi, 0.5, eps) ==
              doctest::Approx(16.0 / 17.0).epsilon(1e-12));
    }
}

TEST_CASE("population moments reproduce the enumerated posterior") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const auto model = oracle::random_model(rng, 0.05, 0.95, 0.2 + 0.6 * (trial / 25.0));
        const auto mi = oracle::population_input(model);
        const auto pop = oracle::population(model);
        for (int k = 0; k < 8; ++k) {
            const int l0 = k >> 2 & 1, l1 = k >> 1 & 1, l2 = k & 1;
            const std::vector<std::uint8_t> config{std::uint8_t(l0), std::uint8_t(l1), std::uint8_t(l2)};
            CHECK(std::abs(predict_from_moments(pop.mu, config, mi, model.prior, 1e-4) - model.posterior(l0, l1, l2)) < 1e-8);
        }
    }
}

TEST_CASE("penalty") {
    // lf0 carries all the signal: P(lf0 = 0 | y = 1) = 0.25, P(lf0 = 0 | y = 0) = 0.75;
    // the pair is uninformative. Buckets with lf0 = 0 then have posterior 0.25.
    oracle::ThreeLfModel model;
    model.prior = 0.5;
    model.single = {0.25, 0.75};
    model.pair[0] = model.pair[1] = {0.3, 0.2, 0.1, 0.4};
    const auto mi = oracle::population_input(model);
    const Eigen::VectorXd z = oracle::true_z(model);
    const std::vector<std::uint8_t> config{0, 1, 0};
    REQUIRE(predict_bucket(make_params(z, mi, 0.5), config, mi, 1e-4) == doctest::Approx(0.25).epsilon(1e-12));

    CHECK(penalty(z, PenaltyTerm{}, mi, 0.5, 1e-4) == 0.0);
    CHECK(penalty(z, one_label(config, 1), mi, 0.5, 1e-4) == doctest::Approx(0.5625).epsilon(1e-10));

    SUBCASE("labelled-set overload matches the bucket aggregate") {
        const auto lm = LabelMatrix::from_rows({{0, 1, 0}, {1, 1, 1}, {0, 1, 0}, {1, 0, 0}});
        const auto buckets = build_buckets(lm);
        LabeledSet labeled;
        labeled.add(0, 1);
        labeled.add(2, 0);
        labeled.add(3, 1);
        double expected = 0.0;
        for (std::size_t p : labeled.order()) {
            const double f = predict_bucket(make_params(z, mi, 0.5), lm.row(p), mi, 1e-4);
            expected += (f - labeled.label(p)) * (f - labeled.label(p));
        }
        CHECK(penalty(z, labeled, buckets, mi, 0.5, 1e-4) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(penalty(z, make_penalty_term(labeled, buckets), mi, 0.5, 1e-4) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("exact agreement gives zero") {
        // Perfectly informative lf0, so its buckets are pushed to the clamp
        // limits and agreement means f equals y up to eps.
        oracle::ThreeLfModel sure = model;
        sure.single = {0.0, 1.0};
        const auto mis = oracle::population_input(sure);
        const Eigen::VectorXd zs = Eigen::Vector4d(1e6, 0, 0, 0);
        const double p = penalty(zs, one_label({1, 0, 0}, 1), mis, 0.5, 1e-4);
        CHECK(p < 1e-6);
    }
    SUBCASE("unknown points are rejected") {
        const auto buckets = build_buckets(LabelMatrix::from_rows({{0, 1, 0}, {1, 1, 1}}));
        LabeledSet labeled;
        labeled.add(5, 1);
        CHECK_THROWS_AS(penalty(z, labeled, buckets, mi, 0.5, 1e-4), Error);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> noise(-0.3, 0.3);
    std::bernoulli_distribution coin(0.5);
    int checked = 0;
    for (int trial = 0; checked < 20 && trial < 400; ++trial) {
        const auto model = oracle::random_model(rng, 0.1, 0.9);
        const auto mi = oracle::population_input(model);
        Eigen::VectorXd z = oracle::true_z(model);
        for (auto& v : z) v *= 1.0 + noise(rng);
        PenaltyTerm term;
        for (int k = 0; k < 8; ++k) {
            term.configs.push_back({std::uint8_t(k >> 2 & 1), std::uint8_t(k >> 1 & 1), std::uint8_t(k & 1)});
            term.positives.push_back(coin(rng) ? 2.0 : 0.0);
            term.negatives.push_back(coin(rng) ? 1.0 : 0.0);
        }
        const double alpha = trial % 2 ? 0.0 : 3.0;
        auto f = [&](const Eigen::VectorXd& x) { return objective(x, mi, model.prior, term, alpha, 1e-4); };
        const Eigen::VectorXd g = gradient(z, mi, model.prior, term, alpha, 1e-4);
        const Eigen::VectorXd fd = central_difference(f, z);
        if (fd.norm() < 1e-6) continue;
        CHECK((g - fd).norm() / fd.norm() < 1e-4);
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("gradient vanishes at a smooth minimizer") {
    // Omega entries -w w^T plus a perturbation that no rank-one term can cancel,
    // so the minimum loss is positive and attained near w.
    MomentInput mi = independent_input(Eigen::Vector4d::Constant(0.5), Eigen::Matrix4d::Identity() * 0.25);
    const Eigen::Vector4d w(1.0, 0.8, -0.6, 1.2);
    Eigen::Matrix4d target = -w * w.transpose();
    const double delta[6] = {0.05, -0.04, 0.03, 0.06, -0.05, 0.02};
    int k = 0;
    for (int i = 0; i < 4; ++i) {
        target(i, i) = 4.0;
        for (int j = i + 1; j < 4; ++j, ++k) {
            target(i, j) += delta[k];
            target(j, i) += delta[k];
        }
    }
    mi.sigma_inv = target;
    FitConfig cfg;
    cfg.alpha = 0.0;
    cfg.tolerance = 0.0;
    cfg.max_iters = 5000;
    const auto result = fit(mi, 0.5, PenaltyTerm{}, cfg);
    CHECK(result.diagnostics.base_loss > 0.01);
    CHECK(gradient(result.params.z, mi, 0.5, PenaltyTerm{}, 0.0, 1e-4).norm() <= 1e-5);
}

TEST_CASE("fit") {
    SUBCASE("zero Omega entries are fitted to zero loss") {
        const auto mi = independent_input(Eigen::Vector3d(0.5, 0.4, 0.3), Eigen::Vector3d(0.25, 0.24, 0.21).asDiagonal());
        const auto result = fit(mi, 0.5, PenaltyTerm{}, FitConfig{});
        CHECK(result.diagnostics.base_loss <= FitConfig{}.tolerance);
    }
    SUBCASE("the loss trace never increases") {
        std::mt19937_64 rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            const auto model = oracle::random_model(rng);
            const auto mi = oracle::population_input(model);
            PenaltyTerm term = one_label({1, 0, 1}, trial % 2);
            FitConfig cfg;
            cfg.seed = static_cast<std::uint64_t>(trial);
            const auto result = fit(mi, model.prior, term, cfg);
            const auto& trace = result.diagnostics.loss_trace;
            REQUIRE(!trace.empty());
            for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
        }
    }
    SUBCASE("with alpha 0 the expert labels do not matter") {
        std::mt19937_64 rng(4);
        const auto model = oracle::random_model(rng);
        const auto mi = oracle::population_input(model);
        FitConfig cfg;
        cfg.alpha = 0.0;
        const auto a = fit(mi, model.prior, PenaltyTerm{}, cfg);
        const auto b = fit(mi, model.prior, one_label({0, 0, 1}, 1), cfg);
        CHECK(a.params.z == b.params.z);
    }
    SUBCASE("same seed, same result") {
        std::mt19937_64 rng(6);
        const auto model = oracle::random_model(rng);
        const auto mi = oracle::population_input(model);
        CHECK(fit(mi, 0.5, PenaltyTerm{}, FitConfig{}).params.z == fit(mi, 0.5, PenaltyTerm{}, FitConfig{}).params.z);
    }
    SUBCASE("a very large alpha does not step onto the saturated plateau") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 10; ++trial) {
            auto model = oracle::random_model(rng, 0.15, 0.85);
            while (oracle::lf_label_covariance(model) < 0.02) model = oracle::random_model(rng, 0.15, 0.85);
            const auto mi = oracle::population_input(model);
            PenaltyTerm term;
            for (std::uint8_t c = 0; c < 8; ++c) {
                const std::uint8_t a = c >> 2, b = (c >> 1) & 1, d = c & 1;
                const double post = model.posterior(a, b, d);
                term.configs.push_back({a, b, d});
                term.positives.push_back(40.0 * post);
                term.negatives.push_back(40.0 * (1.0 - post));
            }
            FitConfig cfg;
            const auto initial = fit(mi, model.prior, PenaltyTerm{}, cfg);
            cfg.alpha = 1e6;
            const auto result = fit(mi, model.prior, term, cfg, initial.params.z);
            CHECK(result.diagnostics.base_loss < 1.0);
            CHECK(result.diagnostics.loss_trace.back() <= result.diagnostics.loss_trace.front());
        }
    }
    SUBCASE("invalid configuration") {
        std::mt19937_64 rng(6);
        const auto mi = oracle::population_input(oracle::random_model(rng));
        FitConfig cfg;
        cfg.epsilon = 0.5;
        CHECK_THROWS_AS(fit(mi, 0.5, PenaltyTerm{}, cfg), Error);
        CHECK_THROWS_AS(fit(mi, 1.0, PenaltyTerm{}, FitConfig{}), Error);
    }
}

TEST_CASE("probabilistic labels are constant within buckets") {
    std::mt19937_64 rng(12);
    const auto model = oracle::random_model(rng);
    const auto data = oracle::realise(model, 2000);
    const auto mi = make_moment_input(data.lm, oracle::pair_dependency());
    const auto buckets = build_buckets(data.lm);
    const auto result = fit(mi, model.prior, PenaltyTerm{}, FitConfig{});
    const auto labels = make_probabilistic_labels(result.params, mi, buckets, 1e-4, 0);
    for (std::size_t i = 0; i < data.lm.rows(); ++i) {
        CHECK(labels.per_point[i] == labels.per_bucket[buckets.point_to_bucket[i]]);
        CHECK(labels.per_point[i] >= 0.0);
        CHECK(labels.per_point[i] <= 1.0);
    }
}

TEST_CASE("auto alpha") {
    SUBCASE("curvature of a quadratic") {
        const auto quadratic = [](const Eigen::VectorXd& z) { return z.squaredNorm(); };
        CHECK(max_curvature(quadratic, Eigen::Vector2d(0.3, -1.0)) == doctest::Approx(2.0).epsilon(1e-6));
    }
    SUBCASE("near-zero loss is floored at one") {
        std::mt19937_64 rng(1);
        const auto model = oracle::random_model(rng);
        const auto mi = oracle::population_input(model);
        const auto z0 = fit(mi, model.prior, PenaltyTerm{}, FitConfig{}).params.z;
        CHECK(auto_alpha(mi, z0) >= 1.0);
        MomentInput flat = independent_input(Eigen::Vector2d(0.5, 0.5), Eigen::Matrix2d::Identity() * 0.25);
        CHECK(auto_alpha(flat, Eigen::Vector2d(1e-3, 1e-3)) == 1.0);
    }
    SUBCASE("a narrow valley with residual loss gives a large weight") {
        // Residuals (1, -1, 0) at z = (10, 10, 10): curvature along z0 is about 200 / sqrt(2).
        MomentInput mi = independent_input(Eigen::Vector3d(0.5, 0.5, 0.5), Eigen::Matrix3d::Identity());
        mi.sigma_inv << 300, -99, -101, -99, 300, -100, -101, -100, 300;
        const double alpha = auto_alpha(mi, Eigen::Vector3d(10.0, 10.0, 10.0));
        CHECK(alpha > 100.0);
        CHECK(alpha == doctest::Approx(200.0 / std::sqrt(2.0)).epsilon(1e-3));
    }
}
