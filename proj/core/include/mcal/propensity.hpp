#pragma once

#include "mcal/data.hpp"
#include "mcal/glasso.hpp"

#include <string>

namespace mcal {

enum class Constraint { OneToZero, SumToZero };
enum class PsMethod { Rcal, Rml };

std::string to_string(Constraint c);
std::string to_string(PsMethod m);

/**
 * Multi-class logistic propensity score model pi(k, X) = softmax_k(f(X)' gamma).
 *
 * `gamma` always holds all K columns. Under the one-to-zero constraint column
 * `reference` is identically zero; under sum-to-zero every row sums to zero.
 * RCAL fits use the target treatment as reference, RML fits use level 0.
 */
struct PsModel {
    Matrix gamma;
    PsMethod method = PsMethod::Rcal;
    Constraint constraint = Constraint::OneToZero;
    int target = 0;
    int reference = 0;
    double lambda = 0.0;
};

struct PsFit {
    PsModel model;
    SolveResult solve;
};

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& eta);

Matrix predict_probs(const PsModel& model, const Matrix& f);

/// Calibration loss for target t evaluated at a full (p+1) x K gamma.
double cal_loss(const Dataset& d, const Matrix& gamma, int t);
/// Multinomial negative log-likelihood (averaged) at a full gamma.
double ml_loss(const Dataset& d, const Matrix& gamma);
/// Gradients of the two losses with respect to every entry of a full gamma.
Matrix cal_gradient(const Dataset& d, const Matrix& gamma, int t);
Matrix ml_gradient(const Dataset& d, const Matrix& gamma);

/// Calibration loss in the free linear predictors. One-to-zero works on the
/// K-1 columns k != t; sum-to-zero works on all K columns.
class CalAdapter final : public LossAdapter {
public:
    CalAdapter(const Matrix& f, const std::vector<int>& t_codes, int k, int target, Constraint c);

    const Matrix& design() const override { return f_; }
    Index responses() const override { return constraint_ == Constraint::OneToZero ? k_ - 1 : k_; }
    double loss(const Matrix& eta) const override;
    void gradient(const Matrix& eta, Matrix& g) const override;
    void curvature(const Matrix& eta, Matrix& v) const override;
    CurvatureShape curvature_shape() const override
    {
        return constraint_ == Constraint::OneToZero ? CurvatureShape::Diagonal : CurvatureShape::Full;
    }
    double majorizer(const Matrix& eta) const override;
    bool diverged(const Matrix& eta) const override;
    void normalize(Matrix& coef) const override;

    /// Free coefficient matrix -> full gamma, and back.
    Matrix expand(const Matrix& free) const;
    Matrix reduce(const Matrix& gamma) const;

private:
    // Log ratios h_k = eta_k - eta_t for k != t, as an n x (K-1) matrix.
    // With `guard`, magnitudes above 700 raise NumericalError.
    void log_ratios(const Matrix& eta, Matrix& h, bool guard = true) const;

    const Matrix& f_;
    Matrix r_;    // n x (K-1) indicators R^(k), k != t
    Vector rt_;   // R^(t)
    int k_;
    int target_;
    Constraint constraint_;
};

/// Multinomial likelihood in the free linear predictors; one-to-zero uses
/// the columns k != reference.
class MlAdapter final : public LossAdapter {
public:
    MlAdapter(const Matrix& f, const std::vector<int>& t_codes, int k, int reference, Constraint c);

    const Matrix& design() const override { return f_; }
    Index responses() const override { return constraint_ == Constraint::OneToZero ? k_ - 1 : k_; }
    double loss(const Matrix& eta) const override;
    void gradient(const Matrix& eta, Matrix& g) const override;
    void curvature(const Matrix& eta, Matrix& v) const override;
    CurvatureShape curvature_shape() const override { return CurvatureShape::Full; }
    double majorizer(const Matrix& eta) const override { (void)eta; return 0.5; }
    bool diverged(const Matrix& eta) const override;
    void normalize(Matrix& coef) const override;

    Matrix expand(const Matrix& free) const;
    Matrix reduce(const Matrix& gamma) const;

private:
    void full_eta(const Matrix& eta, Matrix& full, bool guard = true) const;

    const Matrix& f_;
    Matrix r_; // n x K indicators
    int k_;
    int reference_;
    Constraint constraint_;
};

/// Penalized calibration fit for target t. `init` is a full gamma used as a
/// warm start; an empty matrix means a cold start at zero.
PsFit fit_rcal_ps(const Dataset& d, int t, double lambda, Constraint c, const SolveConfig& cfg,
                  const Matrix& init = Matrix());

/// Penalized multinomial likelihood fit. One-to-zero uses column 0 as reference.
PsFit fit_rml_ps(const Dataset& d, double lambda, Constraint c, const SolveConfig& cfg,
                 const Matrix& init = Matrix(), int reference = 0);

} // namespace mcal
