#pragma once

#include "mcal/data.hpp"

#include <map>
#include <string>

namespace mcal {

/**
 * Augmented IPW estimate of mu_t with its per-observation influence values.
 *
 * `phi_k` holds phi_t^(k) in column k (column t is zero), so that
 * influence = R^(t) Y + sum_{k != t} phi_k.col(k).
 */
struct EstimateReport {
    int target = 0;
    std::string method;
    double mu_hat = 0.0;
    double v_hat = 0.0;
    Vector influence;
    Matrix phi_k;
    std::map<int, double> nu_hat;
    std::map<int, double> u_hat;

    Interval ci(double level) const;
};

/**
 * Generalized AIPW. `probs` is the n x K propensity matrix and `copies` an
 * n x K matrix whose column k != t holds m^(k)(t, X); column t is ignored.
 * Throws NumericalError when some pi(t, X_i) falls below kMinProbability.
 */
EstimateReport aipw_mu(const Dataset& d, const Matrix& probs, const Matrix& copies, int t,
                       std::string method = "RCAL");

/// Classical AIPW with a single outcome prediction m(t, X) for every k.
EstimateReport aipw_mu_single(const Dataset& d, const Matrix& probs, const Vector& m, int t,
                              std::string method);

struct NuEstimate {
    double nu_hat = 0.0;
    double u_hat = 0.0;
};

/// ATT-type mean nu_t^(k) = E(Y^(t) | T = k) and its variance estimate.
NuEstimate aipw_nu(const Dataset& d, const EstimateReport& report, int k);

/// Raw group mean E(Y R^(k)) / E(R^(k)).
double group_mean(const Dataset& d, int k);

/// Standard normal quantile.
double normal_quantile(double p);

/// estimate +- z_{(1+level)/2} sqrt(variance / n).
Interval wald_ci(double estimate, double variance, Index n, double level);

struct Contrast {
    double diff = 0.0;
    double variance = 0.0;
    Interval ci;
};

/// mu_a - mu_b with the empirical variance of the influence difference.
Contrast ate_contrast(const EstimateReport& a, const EstimateReport& b, double level);

} // namespace mcal
