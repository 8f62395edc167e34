#pragma once

#include <optional>
#include <vector>

namespace cbeval {

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation.
double incomplete_beta(double a, double b, double x);

// Two-sided CDF tail of Student's t with nu degrees of freedom:
// P(|T| >= |t|).
double student_t_two_sided_p(double t, double nu);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool significant = false;
    bool degenerate = false;  // zero variance
};

// One-sample two-sided t-test of the mean against 0.
TTestResult paired_t_test(const std::vector<double>& diffs, double alpha = 0.05);

// Spearman's rank correlation with average-rank tie handling. Returns
// nothing when either input is constant.
std::optional<double> spearman_rho(const std::vector<double>& xs,
                                   const std::vector<double>& ys);

// Fractional ranks (1-based, ties averaged).
std::vector<double> fractional_ranks(const std::vector<double>& values);

}  // namespace cbeval
