#pragma once

#include "mcal/types.hpp"

#include <string>
#include <vector>

namespace mcal {

/**
 * Smooth multi-response loss L(B) = loss(F B) seen through its linear
 * predictors. Row 0 of B multiplies the intercept column of F.
 *
 * Implementations expose the per-observation gradient signals G (n x m) so
 * that dL/dB_{jc} = mean_i G_{ic} F_{ij}, and a scalar b bounding the
 * (possibly Fisher-scored) curvature in the linear predictors.
 */
/// Layout of per-observation curvature: Diagonal is n x m with one weight per
/// response; Full is n x m^2 holding each symmetric m x m block column-major.
enum class CurvatureShape { Diagonal, Full };

class LossAdapter {
public:
    virtual ~LossAdapter() = default;

    virtual const Matrix& design() const = 0;
    virtual Index responses() const = 0;

    /// Loss at linear predictors eta (n x m).
    virtual double loss(const Matrix& eta) const = 0;
    /// Gradient signals at eta, written into g (resized by the callee).
    virtual void gradient(const Matrix& eta, Matrix& g) const = 0;
    /// Per-observation Hessian of the loss in the linear predictors at eta,
    /// laid out as described by curvature_shape().
    virtual void curvature(const Matrix& eta, Matrix& v) const = 0;
    virtual CurvatureShape curvature_shape() const { return CurvatureShape::Diagonal; }
    /// Scalar curvature bound b > 0 used by the uniform scheme.
    virtual double majorizer(const Matrix& eta) const = 0;
    /// True when eta has left the region where the fit is usable, for example
    /// fitted probabilities collapsing to zero; the solver then stops.
    virtual bool diverged(const Matrix& /*eta*/) const { return false; }
    /// Restores identification constraints on an iterate; a no-op by default.
    virtual void normalize(Matrix& /*coef*/) const {}

    double eval(const Matrix& coef) const { return loss(design() * coef); }
    Matrix pseudo_gradient(const Matrix& coef) const;
    /// (p+1) x m matrix of mean_i G_{ic} F_{ij}.
    Matrix coef_gradient(const Matrix& coef) const;
};

/// Uniform uses the scalar bound b for every observation. Pointwise uses the
/// per-observation Hessian, a proximal Newton step guarded by the line search.
enum class Curvature { Uniform, Pointwise };

struct SolveConfig {
    double lambda = 0.0;
    int max_outer = 200;
    int max_inner = 1000;
    double tol_obj = 1e-8;
    double tol_coef = 1e-7;
    double tol_inner = 1e-10;
    double linesearch_shrink = 0.5;
    int linesearch_max = 20;
    Curvature curvature = Curvature::Pointwise;
    /// Keep every penalized row at zero and fit the intercept row only.
    bool intercept_only = false;

    void validate() const;
};

struct SolveResult {
    Matrix coef;
    double objective = 0.0;
    int outer_iters = 0;
    bool converged = false;
    std::vector<Index> active_rows;
    std::vector<double> trace;
    double last_b = 0.0;
    std::string diagnostic;
};

/// Group soft-threshold update for one row of B given partial residuals.
Vector block_update(const Matrix& z_partial, const Vector& fj, double lambda_over_b);

/// Minimizer of 1/2 sum_c a_c (beta_c - m_c)^2 + mu ||beta||_2 with a_c > 0.
Vector weighted_group_threshold(const Vector& a, const Vector& m, double mu);

/// Minimizer of 1/2 beta' A beta - z' beta + mu ||beta||_2 for symmetric
/// positive semidefinite A; null directions of A stay at zero.
Vector matrix_group_threshold(const Matrix& a, const Vector& z, double mu);

/// Sum over penalized rows j >= 1 of the row norms.
double group_penalty(const Matrix& coef);

SolveResult solve(const LossAdapter& adapter, const Matrix& init, const SolveConfig& cfg);

struct KktReport {
    double max_violation = 0.0;
    double intercept_norm = 0.0;
    /// Gradient row norms for j = 1..p (index 0 holds the intercept norm).
    std::vector<double> gradient_norms;
    std::vector<double> violations;
};

KktReport check_kkt(const LossAdapter& adapter, const Matrix& coef, double lambda);

} // namespace mcal
