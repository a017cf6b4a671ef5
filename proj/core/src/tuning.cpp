#include "mcal/tuning.hpp"

#include "mcal/parallel.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

namespace mcal {

std::vector<double> lambda_grid(double lambda_star, int size, double ratio)
{
    if (!(lambda_star >= 0.0) || size < 1 || !(ratio > 0.0 && ratio < 1.0)) {
        throw ValidationError("invalid lambda grid parameters");
    }
    std::vector<double> grid(static_cast<std::size_t>(size));
    for (int j = 0; j < size; ++j) {
        const double e = size == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(size - 1);
        grid[static_cast<std::size_t>(j)] = lambda_star * std::pow(ratio, e);
    }
    return grid;
}

double lambda_star_ps(const Dataset& d, PsLoss loss, int t, Constraint c)
{
    if (t < 0 || t >= d.k) {
        throw ValidationError("treatment level outside 0..K-1");
    }
    const Index n = d.n();
    const Matrix r = treatment_indicators(d);
    const Vector freq = r.colwise().mean().transpose();
    // Per-observation gradient columns at the intercept-only optimum.
    Matrix g;
    if (loss == PsLoss::Ml) {
        g = (-r).rowwise() + freq.transpose();
    } else {
        g = Matrix::Zero(n, d.k);
        for (int k = 0; k < d.k; ++k) {
            if (k != t) {
                g.col(k) = r.col(t) * (freq(k) / freq(t)) - r.col(k);
            }
        }
        if (c == Constraint::SumToZero) {
            g.col(t) = -g.rowwise().sum();
        }
    }
    if (c == Constraint::OneToZero) {
        // Drop the reference column.
        Matrix kept(n, d.k - 1);
        Index col = 0;
        for (int k = 0; k < d.k; ++k) {
            if (k != t) {
                kept.col(col++) = g.col(k);
            }
        }
        g = std::move(kept);
    }
    const Matrix grad = d.f.transpose() * g / static_cast<double>(n);
    double best = 0.0;
    for (Index j = 1; j < grad.rows(); ++j) {
        best = std::max(best, grad.row(j).norm());
    }
    return best;
}

double lambda_star(const LossAdapter& adapter, const SolveConfig& cfg)
{
    SolveConfig local = cfg;
    local.lambda = 0.0;
    local.intercept_only = true;
    const Matrix init = Matrix::Zero(adapter.design().cols(), adapter.responses());
    const SolveResult res = solve(adapter, init, local);
    const Matrix grad = adapter.coef_gradient(res.coef);
    double best = 0.0;
    for (Index j = 1; j < grad.rows(); ++j) {
        best = std::max(best, grad.row(j).norm());
    }
    return best;
}

double lambda_star_rwl(const Dataset& d, int t, const Matrix& probs, Link link)
{
    return lambda_star(make_rwl_adapter(d, t, probs, link));
}

double lambda_star_rmls(const Dataset& d, int t, Link link)
{
    check_outcome_for_link(d.y, link);
    Matrix w = Matrix::Zero(d.n(), 1);
    for (Index i = 0; i < d.n(); ++i) {
        w(i, 0) = d.t[static_cast<std::size_t>(i)] == t ? 1.0 : 0.0;
    }
    return lambda_star(WeightedGlmAdapter(d.f, d.y, w, w, link));
}

double lambda_star_rmlg(const Dataset& d, Link link)
{
    check_outcome_for_link(d.y, link);
    const Matrix r = treatment_indicators(d);
    return lambda_star(WeightedGlmAdapter(d.f, d.y, r, r, link));
}

namespace {

bool folds_usable(const Dataset& d, const std::vector<int>& fold)
{
    // counts[f][k] = rows of level k in fold f.
    std::vector<std::vector<Index>> counts(kFolds, std::vector<Index>(static_cast<std::size_t>(d.k), 0));
    for (std::size_t i = 0; i < fold.size(); ++i) {
        ++counts[static_cast<std::size_t>(fold[i])][static_cast<std::size_t>(d.t[i])];
    }
    const auto totals = d.group_sizes();
    for (int f = 0; f < kFolds; ++f) {
        for (int k = 0; k < d.k; ++k) {
            const Index in = counts[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)];
            if (in == 0 || in == totals[static_cast<std::size_t>(k)]) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

std::vector<int> assign_folds(const Dataset& d, std::uint64_t seed, bool* stratified)
{
    const Index n = d.n();
    if (n < 2 * kFolds) {
        throw ValidationError("cross-validation needs at least 10 observations");
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::vector<int> fold(static_cast<std::size_t>(n));
    const Index base = n / kFolds;
    const Index extra = n % kFolds;
    for (std::uint64_t attempt = 0; attempt <= 10; ++attempt) {
        std::seed_seq seq{seed, attempt};
        std::mt19937_64 rng(seq);
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        Index pos = 0;
        for (int f = 0; f < kFolds; ++f) {
            const Index size = base + (f < extra ? 1 : 0);
            for (Index r = 0; r < size; ++r) {
                fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos++)])] = f;
            }
        }
        if (folds_usable(d, fold)) {
            if (stratified != nullptr) {
                *stratified = false;
            }
            return fold;
        }
    }
    // Stratified fallback: deal each level's shuffled rows round-robin.
    std::seed_seq seq{seed, std::uint64_t{11}};
    std::mt19937_64 rng(seq);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) {
        return d.t[static_cast<std::size_t>(a)] < d.t[static_cast<std::size_t>(b)];
    });
    for (Index pos = 0; pos < n; ++pos) {
        fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % kFolds);
    }
    if (!folds_usable(d, fold)) {
        throw ValidationError(
            "cannot form 5 cross-validation folds containing every treatment level");
    }
    if (stratified != nullptr) {
        *stratified = true;
    }
    return fold;
}

void select_lambda(CVPath& path)
{
    const Index g = path.fold_losses.cols();
    path.cv_mean = path.fold_losses.colwise().mean().transpose();
    path.cv_se.resize(g);
    for (Index j = 0; j < g; ++j) {
        const auto col = path.fold_losses.col(j);
        if (!std::isfinite(path.cv_mean(j))) {
            path.cv_mean(j) = std::numeric_limits<double>::infinity();
            path.cv_se(j) = std::numeric_limits<double>::infinity();
            continue;
        }
        const double var = (col.array() - path.cv_mean(j)).square().sum() / static_cast<double>(kFolds - 1);
        path.cv_se(j) = std::sqrt(var / static_cast<double>(kFolds));
    }
    Index best = 0;
    for (Index j = 1; j < g; ++j) {
        if (path.cv_mean(j) < path.cv_mean(best)) {
            best = j;
        }
    }
    if (!std::isfinite(path.cv_mean(best))) {
        throw NumericalError("cross-validation loss is infinite at every lambda");
    }
    path.index_min = best;
    const double bound = path.cv_mean(best) + path.cv_se(best);
    path.index_1se = best;
    for (Index j = 0; j < best; ++j) {
        if (path.cv_mean(j) <= bound) {
            path.index_1se = j;
            break;
        }
    }
    path.lambda_min = path.grid[static_cast<std::size_t>(path.index_min)];
    path.lambda_1se = path.grid[static_cast<std::size_t>(path.index_1se)];
}

CVPath cv5(const Dataset& d, const std::vector<double>& grid, const PathFitter& fitter,
           const LossEvaluator& evaluator, const CvOptions& opts)
{
    if (grid.empty()) {
        throw ValidationError("empty lambda grid");
    }
    CVPath path;
    path.grid = grid;
    path.fold_assignment = assign_folds(d, opts.seed, &path.stratified);
    path.fold_losses.resize(kFolds, static_cast<Index>(grid.size()));

    parallel_for(kFolds, opts.threads, [&](std::size_t f) {
        FoldData fold;
        fold.fold = static_cast<int>(f);
        for (Index i = 0; i < d.n(); ++i) {
            (path.fold_assignment[static_cast<std::size_t>(i)] == fold.fold ? fold.valid_rows
                                                                             : fold.train_rows)
                .push_back(i);
        }
        fold.train = subset_rows(d, fold.train_rows);
        fold.valid = subset_rows(d, fold.valid_rows);
        if (opts.restandardize) {
            const Standardization s = fit_standardization(fold.train.f, fold.train.names);
            fold.train.f = s.transform(fold.train.f);
            fold.valid.f = s.transform(fold.valid.f);
        }
        const std::vector<Matrix> coefs = fitter(fold, grid);
        if (coefs.size() != grid.size()) {
            throw ValidationError("path fitter returned the wrong number of fits");
        }
        for (std::size_t j = 0; j < grid.size(); ++j) {
            double value = std::numeric_limits<double>::infinity();
            try {
                if (coefs[j].size() > 0) {
                    value = evaluator(fold, coefs[j]);
                }
            } catch (const NumericalError&) {
                // Validation predictors beyond the overflow guard: the held-out
                // loss is effectively infinite at this lambda.
            }
            path.fold_losses(static_cast<Index>(f), static_cast<Index>(j)) = value;
        }
    });
    select_lambda(path);
    return path;
}

} // namespace mcal
