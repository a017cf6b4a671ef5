#pragma once

// Slow, independent reference computations. Nothing here calls into the
// library's fitting code; losses are re-summed with plain loops and the
// optimizers are textbook algorithms unrelated to the block-coordinate engine.

#include "mcal/data.hpp"
#include "mcal/outcome.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace oracle {

using mcal::Index;
using mcal::Matrix;
using mcal::Vector;

/// Random dataset with correlated normal covariates, treatments drawn from a
/// softmax of random linear logits (every level forced to appear at least
/// twice) and a linear outcome with unit noise.
mcal::Dataset random_dataset(Index n, Index p, int k, std::uint64_t seed, double signal = 0.5);

/// Same as random_dataset but with Y in {0, 1}.
mcal::Dataset random_binary_dataset(Index n, Index p, int k, std::uint64_t seed);

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0);

/// Row-wise softmax by the naive formula, with a max shift.
Matrix softmax(const Matrix& eta);

/// Calibration loss of a full (p+1) x K gamma for target t, summed term by term.
double cal_loss(const mcal::Dataset& d, const Matrix& gamma, int t);
/// Averaged multinomial negative log-likelihood of a full gamma.
double ml_loss(const mcal::Dataset& d, const Matrix& gamma);
/// Weighted likelihood loss of RWL copies; `coef` column c belongs to the c-th k != t.
double wl_loss(const mcal::Dataset& d, int t, const Matrix& probs, const Matrix& coef, mcal::Link link);

/// Central finite-difference gradient of f at x, entry by entry.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-6);

/// Ordinary least squares by the normal equations.
Vector least_squares(const Matrix& f, const Vector& y);
/// Weighted least squares by the normal equations.
Vector weighted_least_squares(const Matrix& f, const Vector& y, const Vector& w);
/// Unpenalized logistic regression by iteratively reweighted least squares.
Vector irls_logistic(const Matrix& f, const Vector& y, double tol = 1e-12);

/// A smooth loss in the linear predictors eta = F B, with its gradient in
/// eta (entries already divided by n).
struct SmoothLoss {
    std::function<double(const Matrix& eta)> value;
    std::function<Matrix(const Matrix& eta)> gradient;
};

SmoothLoss cal_smooth(const mcal::Dataset& d, int t);
SmoothLoss ml_smooth(const mcal::Dataset& d);

/// Sum over rows j >= 1 of the Euclidean row norms.
double group_penalty(const Matrix& b);

/**
 * Minimizes loss(F B) + lambda sum_{j>=1} ||B_j.||_2 by accelerated proximal
 * gradient with backtracking, restarting momentum when the objective rises.
 * Columns with free(c) == false stay at their initial value.
 */
Matrix proximal_gradient(const Matrix& f, const SmoothLoss& loss, double lambda, Matrix init,
                         const std::vector<bool>& free, int iters = 200000, double tol = 1e-14);

/// Per-observation loss l_i(eta) with first and second derivatives.
struct ScalarLoss {
    std::function<double(Index i, double eta)> value;
    std::function<double(Index i, double eta)> d1;
    std::function<double(Index i, double eta)> d2;
};

/**
 * Lasso for a single linear predictor: minimizes mean_i l_i(f_i' beta) +
 * lambda sum_{j>=1} |beta_j| by cyclic exact coordinate minimization, each
 * coordinate solved by safeguarded Newton on the subgradient equation.
 */
Vector lasso_cd(const Matrix& f, const ScalarLoss& loss, double lambda, int sweeps = 5000, double tol = 1e-13);

/// Binary calibration loss for K=2 and target 1: mean[R1 e^{eta} - R0 eta],
/// eta the log ratio pi(0)/pi(1).
ScalarLoss binary_cal(const std::vector<int>& t);
/// Weighted squared error 1/2 mean w_i (y_i - eta)^2.
ScalarLoss weighted_squares(const Vector& y, const Vector& w);
/// Weighted logistic deviance mean w_i [log(1 + e^eta) - y_i eta].
ScalarLoss weighted_logistic(const Vector& y, const Vector& w);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& a);

} // namespace oracle
