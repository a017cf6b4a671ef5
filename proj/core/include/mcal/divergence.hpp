#pragma once

#include "mcal/types.hpp"

namespace mcal {

// Losses written in the K linear predictors h (n x K). `r` holds the class
// indicators R^(k) as an n x K matrix, or any rows summing to one, such as
// conditional probabilities when a population version is wanted.

double kappa_cal(const Matrix& r, const Matrix& h, int t);
double kappa_ml(const Matrix& r, const Matrix& h);

/// d kappa / d h_{ik}, n x K. Entries include the 1/n of the sample mean.
Matrix kappa_cal_gradient(const Matrix& r, const Matrix& h, int t);
Matrix kappa_ml_gradient(const Matrix& r, const Matrix& h);

/// kappa(h) - kappa(h') - <grad kappa(h'), h - h'>.
double bregman_cal(const Matrix& r, const Matrix& h, const Matrix& hp, int t);
double bregman_ml(const Matrix& r, const Matrix& h, const Matrix& hp);

/// sum_k rho'_k log(rho'_k / rho_k).
double kl_divergence(const Vector& rho, const Vector& rho_p);
/// c'/c - 1 - log(c'/c).
double k_divergence(double c, double c_p);
/// (c'/c - 1)^2.
double relative_error_sq(double c, double c_p);

/// mean_i r_it / pi'_it [K(pi_it, pi'_it) + L(pi_i, pi'_i)], with pi and pi'
/// the softmax of h and h'.
double cal_divergence_form(const Matrix& r, const Matrix& h, const Matrix& hp, int t);
/// mean_i L(pi_i, pi'_i).
double ml_divergence_form(const Matrix& h, const Matrix& hp);

/// Fisher-scored K x K Hessian of the calibration loss in all K predictors
/// for one observation with probabilities pi: pi_k on (k, k), -pi_k on
/// (k, t) and (t, k), 1 - pi_t on (t, t).
Matrix cal_fisher_hessian(const Vector& pi, int t);
/// Diagonal bound 2 diag(pi_k for k != t, 1 - pi_t at t) dominating it.
Matrix cal_hessian_bound(const Vector& pi, int t);

} // namespace mcal
