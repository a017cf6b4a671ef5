#pragma once

#include "mcal/data.hpp"
#include "mcal/estimands.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"

#include <string>
#include <vector>

namespace mcal {

/// Maximum absolute standardized calibration difference for treatment t.
double mascd(const Dataset& d, const Matrix& probs, int t);

/// Relative variance of 1/pi(t, X) within group t.
double rv(const Dataset& d, const Matrix& probs, int t);

struct BalanceReport {
    /// Entry j-1 is for regressor j: |E(R f_j / pi) - E f_j|.
    std::vector<double> residuals;
    /// Entry j-1: (E(R f_j/pi)/E(R/pi) - E f_j) / sd(f_j).
    std::vector<double> standardized_differences;
    double max_residual = 0.0;
    double mascd = 0.0;
    double rv = 0.0;
    double weight_sum_residual = 0.0;
    double balance_bound = 0.0;
};

/// Balance summary; the bound is sqrt(K-1) lambda under one-to-zero and
/// lambda under sum-to-zero.
BalanceReport balance_report(const Dataset& d, const Matrix& probs, int t, double lambda, Constraint c);

struct Check {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    bool passed = true;
    /// Reported for information only; never fails the bundle.
    bool informational = false;
};

struct VerifyReport {
    std::vector<Check> checks;
    bool passed = true;
};

/**
 * Post-fit residual checks against solver-precision bounds: the inverse
 * probability weight sum, covariate balance, outcome orthogonality of each
 * RWL copy, boundedness of mu_hat and the nu decomposition. Bounds are
 * 100 x the default coefficient tolerance x the final curvature bound b.
 * Calibration checks are informational for likelihood-based fits.
 */
VerifyReport verify_fit(const Dataset& d, const PsFit& ps, const OrFit& outcome, const EstimateReport& report);

} // namespace mcal
