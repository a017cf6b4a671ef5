#pragma once

#include "mcal/data.hpp"
#include "mcal/glasso.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mcal {

enum class PsLoss { Cal, Ml };

/// {lambda_star * ratio^(j / (size - 1)) : j = 0..size-1}, strictly decreasing.
std::vector<double> lambda_grid(double lambda_star, int size = 21, double ratio = 0.01);

/**
 * Smallest penalty giving an all-zero propensity fit, from the gradient at
 * the empirical class frequencies. `t` is the RCAL target for Cal and the
 * reference level for one-to-zero Ml.
 */
double lambda_star_ps(const Dataset& d, PsLoss loss, int t, Constraint c = Constraint::OneToZero);

/// Generic zero threshold: fits the intercept-only model, then returns the
/// largest penalized-row gradient norm.
double lambda_star(const LossAdapter& adapter, const SolveConfig& cfg = {});

double lambda_star_rwl(const Dataset& d, int t, const Matrix& probs, Link link);
double lambda_star_rmls(const Dataset& d, int t, Link link);
double lambda_star_rmlg(const Dataset& d, Link link);

/// One cross-validation split. When re-standardization is enabled, `train`
/// and `valid` are both scaled with the training-fold parameters.
struct FoldData {
    int fold = 0;
    std::vector<Index> train_rows;
    std::vector<Index> valid_rows;
    Dataset train;
    Dataset valid;
};

/// Fits the whole grid on one training fold; returns one coefficient matrix
/// per grid value. An empty matrix marks a failed fit and scores +inf.
using PathFitter = std::function<std::vector<Matrix>(const FoldData&, const std::vector<double>& grid)>;
/// Unpenalized loss of `coef` on the validation fold.
using LossEvaluator = std::function<double(const FoldData&, const Matrix& coef)>;

struct CvOptions {
    std::uint64_t seed = 1;
    bool restandardize = false;
    int threads = 1;
};

struct CVPath {
    std::vector<double> grid;
    Matrix fold_losses; // 5 x grid size
    Vector cv_mean;
    Vector cv_se;
    Index index_min = 0;
    Index index_1se = 0;
    double lambda_min = 0.0;
    double lambda_1se = 0.0;
    std::vector<int> fold_assignment;
    bool stratified = false;
};

constexpr int kFolds = 5;

/// Seeded 5-fold partition with fold sizes floor(n/5) plus one for the first
/// n mod 5 folds. Redraws up to 10 times when a fold or its complement lacks
/// a treatment level, then falls back to treatment-stratified folds.
std::vector<int> assign_folds(const Dataset& d, std::uint64_t seed, bool* stratified = nullptr);

/// Fills cv_mean, cv_se and the lambda.min / lambda.1se selections from fold_losses.
void select_lambda(CVPath& path);

CVPath cv5(const Dataset& d, const std::vector<double>& grid, const PathFitter& fitter,
           const LossEvaluator& evaluator, const CvOptions& opts);

} // namespace mcal
