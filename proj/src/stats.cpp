#include "cbeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cbeval {

namespace {

// Lentz's continued fraction for the incomplete beta function.
double beta_cf(double a, double b, double x) {
    constexpr double kFpMin = 1e-300;
    constexpr double kEps = 1e-16;
    constexpr int kMaxIter = 500;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0)
        throw std::domain_error("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    // use the symmetry relation on the side where the fraction converges fast
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
    if (nu <= 0.0) throw std::domain_error("student_t_two_sided_p: nu must be > 0");
    if (!std::isfinite(t)) return 0.0;
    const double x = nu / (nu + t * t);
    return incomplete_beta(nu / 2.0, 0.5, x);
}

TTestResult paired_t_test(const std::vector<double>& diffs, double alpha) {
    const std::size_t n = diffs.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 values");

    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double var = ss / (n - 1);

    TTestResult r;
    if (var == 0.0) {
        r.degenerate = true;
        r.t = 0.0;
        r.p = mean == 0.0 ? 1.0 : 0.0;
        r.significant = false;
        return r;
    }
    r.t = mean / std::sqrt(var / n);
    r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
    r.significant = r.p < alpha;
    return r;
}

std::vector<double> fractional_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman_rho(const std::vector<double>& xs,
                                   const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("spearman_rho: length mismatch");
    if (xs.size() < 2) throw std::invalid_argument("spearman_rho: need >= 2 points");

    const auto rx = fractional_ranks(xs);
    const auto ry = fractional_ranks(ys);
    const std::size_t n = xs.size();
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // constant input
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cbeval
