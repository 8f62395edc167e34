#include "cbeval/rng.hpp"
#include "cbeval/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace cbeval;

namespace {

// Plain rank-then-Pearson Spearman for cross-checking the production code.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> brute_ranks(const std::vector<double>& values) {
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double below = 0.0, equal = 0.0;
        for (double v : values) {
            if (v < values[i]) below += 1.0;
            if (v == values[i]) equal += 1.0;
        }
        ranks[i] = below + (equal + 1.0) / 2.0;  // average rank of the tie block
    }
    return ranks;
}

}  // namespace

TEST_CASE("two-sided t p-values match a 50-digit reference within 1e-9") {
    // p = I_{nu/(nu+t^2)}(nu/2, 1/2), values computed with 50-digit arithmetic
    struct Case { double t, nu, p; };
    const Case cases[] = {
        {0.5, 1, 0.704832764699133452},
        {1.0, 1, 0.5},
        {2.0, 2, 0.183503419072273967},
        {2.5, 3, 0.0877066470080655473},
        {0.1, 4, 0.925155840939453281},
        {3.7, 5, 0.0139994069756991079},
        {1.96, 10, 0.0784362402476997129},
        {2.2281, 10, 0.0500032935864744832},
        {0.7, 19, 0.492410088224937156},
        {1.3, 24, 0.205948298102117763},
        {2.0086, 49, 0.0501069988230339968},
        {4.5, 49, 0.000041925684965140332},
        {0.0, 7, 1.0},
        {6.0, 30, 1.39427687672047427e-6},
        {0.01, 2, 0.992929108958200971},
    };
    for (const auto& c : cases) {
        CHECK(std::abs(student_t_two_sided_p(c.t, c.nu) - c.p) <= 1e-9);
        CHECK(std::abs(student_t_two_sided_p(-c.t, c.nu) - c.p) <= 1e-9);
    }
}

TEST_CASE("paired t-test matches reference t and p") {
    struct Case {
        std::vector<double> diffs;
        double t, p;
    };
    const Case cases[] = {
        {{0.1, 0.2, 0.15, 0.05, 0.3}, 3.71992443980221689, 0.0204758744209106871},
        {{1.0, -1.0, 2.0, 0.5, 0.25, -0.75}, 0.732743305447311609, 0.496605841252330812},
        {{0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.01, 0.01, 0.01,
          0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01},
         13.0766968306220238, 5.99044430439839165e-11},
    };
    for (const auto& c : cases) {
        const TTestResult r = paired_t_test(c.diffs);
        CHECK(r.t == doctest::Approx(c.t).epsilon(1e-12));
        CHECK(std::abs(r.p - c.p) <= 1e-9);
        CHECK(!r.degenerate);
        CHECK(r.significant == (c.p < 0.05));
    }
}

TEST_CASE("paired t-test degenerate and edge behavior") {
    const TTestResult zero_var = paired_t_test({0.5, 0.5, 0.5});
    CHECK(zero_var.degenerate);
    CHECK(!zero_var.significant);

    const TTestResult zero_mean = paired_t_test({0.0, 0.0, 0.0});
    CHECK(zero_mean.degenerate);
    CHECK(zero_mean.p == 1.0);

    CHECK_THROWS(paired_t_test({1.0}));
}

TEST_CASE("fractional ranks average ties") {
    CHECK(fractional_ranks({10.0, 20.0, 30.0}) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(fractional_ranks({5.0, 5.0, 1.0}) == std::vector<double>{2.5, 2.5, 1.0});
    CHECK(fractional_ranks({2.0, 2.0, 2.0, 2.0}) ==
          std::vector<double>{2.5, 2.5, 2.5, 2.5});
}

TEST_CASE("spearman matches the rank-then-pearson oracle within 1e-12") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(20));
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            // quantize so ties actually occur
            xs[i] = std::floor(rng.uniform(0.0, 6.0));
            ys[i] = std::floor(rng.uniform(0.0, 6.0));
        }
        const auto rho = spearman_rho(xs, ys);
        const auto rx = brute_ranks(xs);
        const auto ry = brute_ranks(ys);
        const bool x_const = std::all_of(xs.begin(), xs.end(),
                                         [&](double v) { return v == xs[0]; });
        const bool y_const = std::all_of(ys.begin(), ys.end(),
                                         [&](double v) { return v == ys[0]; });
        if (x_const || y_const) {
            CHECK(!rho.has_value());
            continue;
        }
        REQUIRE(rho.has_value());
        CHECK(std::abs(*rho - pearson(rx, ry)) <= 1e-12);
    }
}

TEST_CASE("spearman endpoints and constant input") {
    const std::vector<double> xs = {1.0, 4.0, 2.0, 9.0, 7.0};
    std::vector<double> rev = xs;
    std::reverse(rev.begin(), rev.end());
    std::vector<double> neg;
    for (double v : xs) neg.push_back(-v);

    CHECK(*spearman_rho(xs, xs) == doctest::Approx(1.0));
    CHECK(*spearman_rho(xs, neg) == doctest::Approx(-1.0));
    CHECK(!spearman_rho(xs, {3.0, 3.0, 3.0, 3.0, 3.0}).has_value());
}

TEST_CASE("incomplete beta basic identities") {
    CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1,1) = x
    for (double x : {0.1, 0.35, 0.77}) {
        CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-14));
        // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
        CHECK(incomplete_beta(2.5, 4.0, x) ==
              doctest::Approx(1.0 - incomplete_beta(4.0, 2.5, 1.0 - x)).epsilon(1e-12));
    }
}
