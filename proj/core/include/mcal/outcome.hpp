#pragma once

#include "mcal/data.hpp"
#include "mcal/glasso.hpp"

#include <string>
#include <vector>

namespace mcal {

enum class Link { Identity, Logit };
enum class OrMethod { Rwl, Rmls, Rmlg };

std::string to_string(Link l);
std::string to_string(OrMethod m);

/**
 * Outcome regression m(t, X) = psi(f(X)' alpha).
 *
 * For RWL, `coef` has one column per copy alpha_t^(k) and `columns` lists
 * the treatments k != t the copies belong to. For RMLs and RMLg there is
 * one column per treatment and `columns` is 0..K-1.
 */
struct OrModel {
    OrMethod method = OrMethod::Rwl;
    Link link = Link::Identity;
    int target = 0;
    Matrix coef;
    std::vector<int> columns;
    std::vector<double> lambdas;
};

struct OrFit {
    OrModel model;
    std::vector<SolveResult> solves;
};

double inverse_link(Link link, double eta);

/// psi(f * coef), one column per model column.
Matrix predict_means(const OrModel& model, const Matrix& f);

/**
 * Weighted canonical-GLM loss mean_i sum_c w_ic [-y_i eta_ic + Psi(eta_ic)].
 *
 * The identity link adds w y^2 / 2 so the loss reads as half a weighted
 * squared error. `v` carries the Fisher weights used for the curvature bound
 * max_ic v_ic psi'(eta_ic).
 */
class WeightedGlmAdapter final : public LossAdapter {
public:
    WeightedGlmAdapter(const Matrix& f, const Vector& y, Matrix w, Matrix v, Link link);

    const Matrix& design() const override { return f_; }
    Index responses() const override { return w_.cols(); }
    double loss(const Matrix& eta) const override;
    void gradient(const Matrix& eta, Matrix& g) const override;
    void curvature(const Matrix& eta, Matrix& v) const override;
    double majorizer(const Matrix& eta) const override;

private:
    const Matrix& f_;
    const Vector& y_;
    Matrix w_;
    Matrix v_;
    Link link_;
};

/// n x (K-1) probability ratios R^(t) pi(k)/pi(t) for k != t.
Matrix rwl_weights(const Dataset& d, const Matrix& probs, int t);

void check_outcome_for_link(const Vector& y, Link link);

/// Weighted likelihood loss of the RWL copies given fitted probabilities.
double wl_loss(const Dataset& d, int t, const Matrix& probs, const Matrix& coef, Link link);

/// Builds the RWL adapter for target t; `probs` is the n x K fitted propensity matrix.
WeightedGlmAdapter make_rwl_adapter(const Dataset& d, int t, const Matrix& probs, Link link);

OrFit fit_rwl(const Dataset& d, int t, const Matrix& probs, double lambda, Link link,
              const SolveConfig& cfg, const Matrix& init = Matrix());

/// Lasso GLM on the rows with T = t, with the penalty on the full-sample scale.
SolveResult fit_rmls_group(const Dataset& d, int t, double lambda, Link link, const SolveConfig& cfg,
                           const Matrix& init = Matrix());

OrFit fit_rmls(const Dataset& d, const std::vector<double>& lambda_per_t, Link link,
               const SolveConfig& cfg);

OrFit fit_rmlg(const Dataset& d, double lambda, Link link, const SolveConfig& cfg,
               const Matrix& init = Matrix());

/// Group-t likelihood loss (full-sample average) of a single coefficient vector.
double ml_outcome_loss(const Dataset& d, int t, const Vector& alpha, Link link);

} // namespace mcal
