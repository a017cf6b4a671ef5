#include "mcal/pipeline.hpp"

#include <algorithm>

namespace mcal {

namespace {

Matrix rows_of(const Matrix& m, const std::vector<Index>& rows)
{
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Index>(r)) = m.row(rows[r]);
    }
    return out;
}

std::size_t selected(const CVPath& path, Selection s)
{
    return static_cast<std::size_t>(s == Selection::Min ? path.index_min : path.index_1se);
}

CvOptions cv_options(const PipelineOptions& opts)
{
    return CvOptions{opts.seed, opts.restandardize_folds && opts.standardize, opts.threads};
}

bool all_converged(const OrFit& f)
{
    return std::all_of(f.solves.begin(), f.solves.end(), [](const SolveResult& r) { return r.converged; });
}

// Fits along `grid` with warm starts, keeping coefficient matrices.
template <typename Fit>
std::vector<Matrix> warm_path(const std::vector<double>& grid, std::size_t last, Fit fit)
{
    std::vector<Matrix> out;
    out.reserve(last + 1);
    Matrix warm;
    for (std::size_t j = 0; j <= last; ++j) {
        auto [coef, converged] = fit(grid[j], warm);
        if (!converged) {
            // Smaller lambdas only get harder; the rest of the path is left
            // empty and scores an infinite validation loss.
            out.resize(last + 1);
            break;
        }
        warm = coef;
        out.push_back(std::move(coef));
    }
    return out;
}

} // namespace

std::string to_string(Method m)
{
    switch (m) {
    case Method::Rcal:
        return "RCAL";
    case Method::Rmls:
        return "RMLs";
    case Method::Rmlg:
        return "RMLg";
    }
    return "unknown";
}

Method parse_method(const std::string& s)
{
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "rcal") {
        return Method::Rcal;
    }
    if (lower == "rmls") {
        return Method::Rmls;
    }
    if (lower == "rmlg") {
        return Method::Rmlg;
    }
    throw ValidationError("unknown method '" + s + "' (expected rcal, rmls or rmlg)");
}

PsFit fit_ps(const Dataset& d, PsMethod method, int t, const PipelineOptions& opts, std::vector<CVPath>* paths)
{
    const Constraint c = opts.constraint;
    auto fit_on = [&](const Dataset& data, double lambda, const Matrix& init) {
        return method == PsMethod::Rcal ? fit_rcal_ps(data, t, lambda, c, opts.solver, init)
                                        : fit_rml_ps(data, lambda, c, opts.solver, init);
    };
    if (opts.lambda_ps) {
        return fit_on(d, *opts.lambda_ps, Matrix());
    }
    const PsLoss loss = method == PsMethod::Rcal ? PsLoss::Cal : PsLoss::Ml;
    const int ref = method == PsMethod::Rcal ? t : 0;
    const std::vector<double> grid = lambda_grid(lambda_star_ps(d, loss, ref, c));

    const PathFitter fitter = [&](const FoldData& fold, const std::vector<double>& g) {
        return warm_path(g, g.size() - 1,
                         [&](double lambda, const Matrix& warm) {
            PsFit f = fit_on(fold.train, lambda, warm);
            return std::pair{std::move(f.model.gamma), f.solve.converged};
        });
    };
    const LossEvaluator evaluator = [&](const FoldData& fold, const Matrix& gamma) {
        return method == PsMethod::Rcal ? cal_loss(fold.valid, gamma, t) : ml_loss(fold.valid, gamma);
    };
    CVPath path = cv5(d, grid, fitter, evaluator, cv_options(opts));
    const std::size_t pick = selected(path, opts.selection);
    PsFit fit;
    Matrix warm;
    for (std::size_t j = 0; j <= pick; ++j) {
        fit = fit_on(d, grid[j], warm);
        warm = fit.model.gamma;
    }
    if (paths != nullptr) {
        paths->push_back(std::move(path));
    }
    return fit;
}

OrFit fit_or(const Dataset& d, Method method, int t, const Matrix& probs, const PipelineOptions& opts,
             std::vector<CVPath>* paths)
{
    const Link link = opts.link;
    const CvOptions cvo = cv_options(opts);
    switch (method) {
    case Method::Rcal: {
        if (opts.lambda_or) {
            return fit_rwl(d, t, probs, *opts.lambda_or, link, opts.solver);
        }
        const std::vector<double> grid = lambda_grid(lambda_star_rwl(d, t, probs, link));
        // The propensity fit stays fixed across folds.
        const PathFitter fitter = [&](const FoldData& fold, const std::vector<double>& g) {
            const Matrix p = rows_of(probs, fold.train_rows);
            return warm_path(g, g.size() - 1, [&](double lambda, const Matrix& warm) {
                OrFit f = fit_rwl(fold.train, t, p, lambda, link, opts.solver, warm);
                return std::pair{std::move(f.model.coef), all_converged(f)};
            });
        };
        const LossEvaluator evaluator = [&](const FoldData& fold, const Matrix& coef) {
            return wl_loss(fold.valid, t, rows_of(probs, fold.valid_rows), coef, link);
        };
        CVPath path = cv5(d, grid, fitter, evaluator, cvo);
        const std::size_t pick = selected(path, opts.selection);
        OrFit fit;
        Matrix warm;
        for (std::size_t j = 0; j <= pick; ++j) {
            fit = fit_rwl(d, t, probs, grid[j], link, opts.solver, warm);
            warm = fit.model.coef;
        }
        if (paths != nullptr) {
            paths->push_back(std::move(path));
        }
        return fit;
    }
    case Method::Rmls: {
        if (opts.lambda_or) {
            return fit_rmls(d, std::vector<double>(static_cast<std::size_t>(d.k), *opts.lambda_or), link,
                            opts.solver);
        }
        OrFit fit;
        fit.model.method = OrMethod::Rmls;
        fit.model.link = link;
        fit.model.target = -1;
        fit.model.coef.resize(d.f.cols(), d.k);
        for (int g = 0; g < d.k; ++g) {
            const std::vector<double> grid = lambda_grid(lambda_star_rmls(d, g, link));
            const PathFitter fitter = [&](const FoldData& fold, const std::vector<double>& gr) {
                return warm_path(gr, gr.size() - 1, [&](double lambda, const Matrix& warm) {
                    SolveResult r = fit_rmls_group(fold.train, g, lambda, link, opts.solver, warm);
                    return std::pair{std::move(r.coef), r.converged};
                });
            };
            const LossEvaluator evaluator = [&](const FoldData& fold, const Matrix& coef) {
                return ml_outcome_loss(fold.valid, g, coef.col(0), link);
            };
            CVPath path = cv5(d, grid, fitter, evaluator, cvo);
            const std::size_t pick = selected(path, opts.selection);
            SolveResult res;
            Matrix warm;
            for (std::size_t j = 0; j <= pick; ++j) {
                res = fit_rmls_group(d, g, grid[j], link, opts.solver, warm);
                warm = res.coef;
            }
            fit.model.coef.col(g) = res.coef.col(0);
            fit.model.columns.push_back(g);
            fit.model.lambdas.push_back(grid[pick]);
            fit.solves.push_back(std::move(res));
            if (paths != nullptr) {
                paths->push_back(std::move(path));
            }
        }
        return fit;
    }
    case Method::Rmlg: {
        if (opts.lambda_or) {
            return fit_rmlg(d, *opts.lambda_or, link, opts.solver);
        }
        const std::vector<double> grid = lambda_grid(lambda_star_rmlg(d, link));
        const PathFitter fitter = [&](const FoldData& fold, const std::vector<double>& g) {
            return warm_path(g, g.size() - 1, [&](double lambda, const Matrix& warm) {
                OrFit f = fit_rmlg(fold.train, lambda, link, opts.solver, warm);
                return std::pair{std::move(f.model.coef), all_converged(f)};
            });
        };
        const LossEvaluator evaluator = [&](const FoldData& fold, const Matrix& coef) {
            double total = 0.0;
            for (int g = 0; g < d.k; ++g) {
                total += ml_outcome_loss(fold.valid, g, coef.col(g), link);
            }
            return total;
        };
        CVPath path = cv5(d, grid, fitter, evaluator, cvo);
        const std::size_t pick = selected(path, opts.selection);
        OrFit fit;
        Matrix warm;
        for (std::size_t j = 0; j <= pick; ++j) {
            fit = fit_rmlg(d, grid[j], link, opts.solver, warm);
            warm = fit.model.coef;
        }
        if (paths != nullptr) {
            paths->push_back(std::move(path));
        }
        return fit;
    }
    }
    throw ValidationError("unknown method");
}

EstimateReport estimate(const Dataset& d, Method method, int t, const PsFit& ps, const OrFit& outcome)
{
    const Matrix probs = predict_probs(ps.model, d.f);
    const Matrix means = predict_means(outcome.model, d.f);
    if (method == Method::Rcal) {
        Matrix copies = Matrix::Zero(d.n(), d.k);
        for (std::size_t c = 0; c < outcome.model.columns.size(); ++c) {
            copies.col(outcome.model.columns[c]) = means.col(static_cast<Index>(c));
        }
        return aipw_mu(d, probs, copies, t, to_string(method));
    }
    return aipw_mu_single(d, probs, means.col(t), t, to_string(method));
}

PipelineResult run_pipeline(const Dataset& raw, const std::vector<int>& targets, const PipelineOptions& opts)
{
    PipelineResult out;
    out.method = opts.method;
    if (opts.standardize && raw.p() > 0) {
        auto [data, scaling] = standardize(raw);
        out.data = std::move(data);
        out.scaling = std::move(scaling);
    } else {
        out.data = raw;
    }
    const Dataset& d = out.data;
    for (int t : targets) {
        if (t < 0 || t >= d.k) {
            throw ValidationError("target treatment outside 0..K-1");
        }
    }

    if (opts.method == Method::Rcal) {
        for (int t : targets) {
            TargetResult tr;
            tr.target = t;
            tr.ps = fit_ps(d, PsMethod::Rcal, t, opts, &tr.ps_paths);
            const Matrix probs = predict_probs(tr.ps.model, d.f);
            tr.outcome = fit_or(d, Method::Rcal, t, probs, opts, &tr.or_paths);
            tr.estimate = estimate(d, Method::Rcal, t, tr.ps, tr.outcome);
            tr.balance = balance_report(d, probs, t, tr.ps.model.lambda, opts.constraint);
            tr.verify = verify_fit(d, tr.ps, tr.outcome, tr.estimate);
            out.targets.push_back(std::move(tr));
        }
        return out;
    }

    // Likelihood baselines: one propensity fit and one outcome fit shared by all targets.
    std::vector<CVPath> ps_paths;
    std::vector<CVPath> or_paths;
    const PsFit ps = fit_ps(d, PsMethod::Rml, 0, opts, &ps_paths);
    const Matrix probs = predict_probs(ps.model, d.f);
    const OrFit outcome = fit_or(d, opts.method, 0, probs, opts, &or_paths);
    for (int t : targets) {
        TargetResult tr;
        tr.target = t;
        tr.ps = ps;
        tr.outcome = outcome;
        tr.ps_paths = ps_paths;
        tr.or_paths = or_paths;
        tr.estimate = estimate(d, opts.method, t, ps, outcome);
        tr.balance = balance_report(d, probs, t, ps.model.lambda, opts.constraint);
        tr.verify = verify_fit(d, ps, outcome, tr.estimate);
        out.targets.push_back(std::move(tr));
    }
    return out;
}

} // namespace mcal
