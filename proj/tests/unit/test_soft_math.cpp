#include "zsil/common/error.hpp"
#include "zsil/iq/soft_math.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace zsil::iq;

TEST_CASE("soft_value closed forms") {
    const std::vector<double> zeros{0.0, 0.0};
    CHECK(soft_value(zeros) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> big{10.0, 0.0};
    CHECK(soft_value(big) == doctest::Approx(10.0 + std::log1p(std::exp(-10.0))).epsilon(1e-15));
    CHECK(soft_value(big) == doctest::Approx(10.0000454).epsilon(1e-8));
    const std::vector<double> single{-3.25};
    CHECK(soft_value(single) == -3.25);
    const std::vector<double> huge{1000.0, 999.0};
    CHECK(std::isfinite(soft_value(huge)));
    CHECK(soft_value(huge) == doctest::Approx(1000.0 + std::log1p(std::exp(-1.0))));
}

TEST_CASE("log-sum-exp bounds on random Q vectors") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::uniform_int_distribution<int> width(1, 8);
    for (int i = 0; i < 10000; ++i) {
        std::vector<double> q(static_cast<std::size_t>(width(rng)));
        for (auto& v : q) v = u(rng);
        const double m = *std::max_element(q.begin(), q.end());
        const double v = soft_value(q);
        CHECK(v >= m);
        CHECK(v <= m + std::log(static_cast<double>(q.size())) + 1e-12);
    }
}

TEST_CASE("phi identities") {
    CHECK(phi(0.0, 0.5) == 0.0);
    CHECK(phi(1.0, 0.5) == 0.5);
    CHECK(phi(2.0, 0.5) == 0.0);
    CHECK(phi_derivative(0.0, 0.5) == 1.0);
    CHECK(phi_derivative(1.0, 0.5) == 0.0);
    CHECK_THROWS_AS(phi(1.0, 0.0), zsil::ContractViolation);
}

TEST_CASE("phi is concave") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-20.0, 20.0), lam(0.0, 1.0), alpha(0.05, 10.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng), y = u(rng), l = lam(rng), a = alpha(rng);
        const double lhs = phi(l * x + (1 - l) * y, a);
        const double rhs = l * phi(x, a) + (1 - l) * phi(y, a);
        CHECK(lhs >= rhs - 1e-9 * (1 + std::abs(rhs)));
    }
}

TEST_CASE("softmax is normalized, positive and shift invariant") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> q(1 + rng() % 6);
        for (auto& v : q) v = u(rng);
        const auto p = softmax(q);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        const double c = u(rng);
        auto shifted = q;
        for (auto& v : shifted) v += c;
        const auto ps = softmax(shifted);
        for (std::size_t k = 0; k < p.size(); ++k) CHECK(std::abs(ps[k] - p[k]) <= 1e-9);
        CHECK(greedy_action(q) == static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    const std::vector<double> q{std::log(2.0), 0.0};
    const auto p = softmax(q);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const std::vector<double> flat{0.3, 0.3, 0.3};
    for (double v : softmax(flat)) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("greedy_action breaks ties toward the lowest index") {
    const std::vector<double> tie{1.0, 3.0, 3.0};
    CHECK(greedy_action(tie) == 1);
    const std::vector<double> all{0.0, 0.0};
    CHECK(greedy_action(all) == 0);
}

TEST_CASE("recover_reward masks terminal bootstraps") {
    CHECK(recover_reward(2.0, 5.0, false, 0.0) == 2.0);
    CHECK(recover_reward(2.0, 5.0, true, 0.99) == 2.0);
    CHECK(recover_reward(2.0, 5.0, false, 0.5) == doctest::Approx(-0.5));
}

TEST_CASE("iq objective terms on the zero Q function") {
    // Q = 0 with two actions: V = log 2 everywhere.
    const double g = 0.99, a = 0.5, v = std::log(2.0);
    const double x = -g * v;
    const double expert = x - x * x / (4 * a);
    const double value = v - g * v;
    const std::vector<double> q_sa(4, 0.0), vs(4, v), vn(4, v);
    const std::vector<std::uint8_t> done(4, 0);
    const auto t = iq_objective_terms(q_sa, vs, vn, done, g, a);
    CHECK(t.expert_term == doctest::Approx(expert).epsilon(1e-14));
    CHECK(t.value_term == doctest::Approx(value).epsilon(1e-14));
    CHECK(t.objective == doctest::Approx(expert - value).epsilon(1e-14));
    CHECK(t.objective == doctest::Approx(-0.928593).epsilon(1e-6));
    CHECK(t.expert_term == doctest::Approx(-0.921662).epsilon(1e-6));
    CHECK(t.value_term == doctest::Approx(0.006931).epsilon(1e-4));
}

TEST_CASE("iq objective reductions") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> q_sa(6), vs(6), vn(6);
    for (std::size_t i = 0; i < 6; ++i) {
        q_sa[i] = u(rng);
        vs[i] = u(rng);
        vn[i] = u(rng);
    }
    double mean_phi = 0.0, mean_v = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        mean_phi += phi(q_sa[i], 0.5) / 6;
        mean_v += vs[i] / 6;
    }
    const std::vector<std::uint8_t> none(6, 0), all(6, 1);
    CHECK(iq_objective_terms(q_sa, vs, vn, none, 0.0, 0.5).objective == doctest::Approx(mean_phi - mean_v));
    CHECK(iq_objective_terms(q_sa, vs, vn, all, 0.99, 0.5).objective == doctest::Approx(mean_phi - mean_v));
    CHECK_THROWS_AS(iq_objective_terms({}, {}, {}, {}, 0.9, 0.5), zsil::ContractViolation);
}
