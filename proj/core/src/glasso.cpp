#include "mcal/glasso.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcal {

Matrix LossAdapter::pseudo_gradient(const Matrix& coef) const
{
    Matrix g;
    gradient(design() * coef, g);
    return g;
}

Matrix LossAdapter::coef_gradient(const Matrix& coef) const
{
    const Matrix& f = design();
    return f.transpose() * pseudo_gradient(coef) / static_cast<double>(f.rows());
}

void SolveConfig::validate() const
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("lambda must be finite and non-negative");
    }
    if (max_outer < 1 || max_inner < 1 || linesearch_max < 0) {
        throw ValidationError("iteration caps must be positive");
    }
    if (!(tol_obj > 0.0) || !(tol_coef > 0.0) || !(tol_inner > 0.0)) {
        throw ValidationError("solver tolerances must be positive");
    }
    if (!(linesearch_shrink > 0.0 && linesearch_shrink < 1.0)) {
        throw ValidationError("line-search shrink factor must lie in (0, 1)");
    }
}

namespace {

// Minimizer of 1/2 sum_c a_c beta_c^2 - z' beta + mu ||beta||_2 for a_c >= 0.
// Directions with negligible curvature carry no signal and stay at zero.
Vector group_prox(const Vector& a, const Vector& z, double mu)
{
    const Index m = a.size();
    const double floor = 1e-12 * std::max(a.maxCoeff(), 0.0);
    Vector zz = z;
    for (Index c = 0; c < m; ++c) {
        if (!(a(c) > floor)) {
            zz(c) = 0.0;
        }
    }
    const double znorm = zz.norm();
    if (znorm <= mu || znorm == 0.0) {
        return Vector::Zero(m);
    }
    Vector aa = a.cwiseMax(floor > 0.0 ? floor : 1.0);
    if (mu == 0.0) {
        return zz.cwiseQuotient(aa);
    }
    if (aa.maxCoeff() - aa.minCoeff() <= 1e-15 * aa.maxCoeff()) {
        return zz * ((1.0 - mu / znorm) / aa(0));
    }
    // beta_c = z_c s / (a_c s + mu) where s = ||beta|| is the root of
    // phi(s) = sum_c (z_c / (a_c s + mu))^2 - 1, decreasing in s.
    double lo = 0.0;
    double hi = (znorm - mu) / aa.minCoeff();
    double s = (znorm - mu) / aa.maxCoeff();
    for (int it = 0; it < 100; ++it) {
        const Eigen::ArrayXd den = aa.array() * s + mu;
        const double val = (zz.array() / den).square().sum() - 1.0;
        if (val > 0.0) {
            lo = s;
        } else {
            hi = s;
        }
        const double deriv = -2.0 * (zz.array().square() * aa.array() / den.cube()).sum();
        double next = s - val / deriv;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        const bool done = std::abs(next - s) <= 1e-15 * s;
        s = next;
        if (done) {
            break;
        }
    }
    return (zz.array() * s / (aa.array() * s + mu)).matrix();
}

} // namespace

Vector weighted_group_threshold(const Vector& a, const Vector& m, double mu)
{
    if ((a.array() <= 0.0).any()) {
        throw ValidationError("curvature weights must be positive");
    }
    return group_prox(a, a.cwiseProduct(m), mu);
}

Vector matrix_group_threshold(const Matrix& a, const Vector& z, double mu)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    const Matrix& q = eig.eigenvectors();
    return q * group_prox(eig.eigenvalues(), q.transpose() * z, mu);
}

Vector block_update(const Matrix& z_partial, const Vector& fj, double lambda_over_b)
{
    const double n = static_cast<double>(fj.size());
    const double d = fj.squaredNorm() / n;
    Vector u = z_partial.transpose() * fj / n;
    const double norm = u.norm();
    if (norm <= lambda_over_b || norm == 0.0) {
        return Vector::Zero(u.size());
    }
    return u * ((1.0 - lambda_over_b / norm) / d);
}

double group_penalty(const Matrix& coef)
{
    double total = 0.0;
    for (Index j = 1; j < coef.rows(); ++j) {
        total += coef.row(j).norm();
    }
    return total;
}

namespace {

// Quadratic surrogate around the expansion point eta0:
//   mean_i [ G_i' d_i + d_i' H_i d_i / 2 ] + lambda sum_j ||B_j||,
// with d = F B - eta0 row-wise. `grad` tracks G + H (F B - eta0), the
// surrogate gradient in the linear predictors, so the row-j gradient is
// F_j' grad / n.
struct Surrogate {
    const Matrix& f;
    CurvatureShape shape;
    const Matrix* weights; // n x m or n x m^2 curvature; null for a uniform b
    double b;
    Matrix blocks;         // (p+1) x m or (p+1) x m^2: mean_i f_ij^2 H_i
    double lambda;
    double tol;            // coordinate-change tolerance for the inner sweeps
    const SolveConfig& cfg;
};

void minimize_surrogate(const Surrogate& s, Matrix& coef, Matrix& grad)
{
    const Index rows = s.cfg.intercept_only ? 1 : coef.rows();
    const double n = static_cast<double>(s.f.rows());
    const Index m = coef.cols();
    const bool full = s.weights != nullptr && s.shape == CurvatureShape::Full;
    Vector u(m);
    Vector z(m);
    Vector next(m);
    Vector delta(m);
    Matrix a(m, m);
    std::vector<Index> active;
    struct Eig {
        bool ready = false;
        Matrix q;
        Vector values;
    };
    std::vector<Eig> eig(full ? static_cast<std::size_t>(coef.rows()) : 0);

    auto update_row = [&](Index j) {
        u.noalias() = grad.transpose() * s.f.col(j);
        u /= n;
        const Vector beta = coef.row(j).transpose();
        const double mu = j == 0 ? 0.0 : s.lambda;
        if (full) {
            auto& e = eig[static_cast<std::size_t>(j)];
            if (!e.ready) {
                for (Index c = 0; c < m; ++c) {
                    for (Index d = 0; d < m; ++d) {
                        a(c, d) = s.blocks(j, c + d * m);
                    }
                }
                const Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
                e.q = solver.eigenvectors();
                e.values = solver.eigenvalues();
                e.ready = true;
            }
            // In the eigenbasis the block is diagonal and the norm unchanged.
            const Vector qb = e.q.transpose() * beta;
            z = e.values.cwiseProduct(qb) - e.q.transpose() * u;
            next = e.q * group_prox(e.values, z, mu);
        } else {
            const Vector d = s.blocks.row(j).transpose();
            if (d.maxCoeff() <= 0.0) {
                return 0.0;
            }
            z = d.cwiseProduct(beta) - u;
            next = group_prox(d, z, mu);
        }
        delta = next - beta;
        const double change = delta.cwiseAbs().maxCoeff();
        if (change > 0.0) {
            const auto fj = s.f.col(j);
            if (s.weights == nullptr) {
                grad.noalias() += (s.b * fj) * delta.transpose();
            } else if (!full) {
                for (Index c = 0; c < m; ++c) {
                    if (delta(c) != 0.0) {
                        grad.col(c).array() += delta(c) * s.weights->col(c).array() * fj.array();
                    }
                }
            } else {
                const Matrix& h = *s.weights;
                for (Index c = 0; c < m; ++c) {
                    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(h.rows());
                    for (Index e = 0; e < m; ++e) {
                        if (delta(e) != 0.0) {
                            acc += delta(e) * h.col(c + e * m).array();
                        }
                    }
                    grad.col(c).array() += acc * fj.array();
                }
            }
            coef.row(j) = next.transpose();
        }
        return change;
    };

    for (int sweep = 0; sweep < s.cfg.max_inner;) {
        double change = 0.0;
        active.clear();
        for (Index j = 0; j < rows; ++j) {
            change = std::max(change, update_row(j));
            if (j == 0 || coef.row(j).squaredNorm() > 0.0) {
                active.push_back(j);
            }
        }
        ++sweep;
        if (change < s.tol) {
            break;
        }
        while (sweep < s.cfg.max_inner) {
            double inner_change = 0.0;
            for (Index j : active) {
                inner_change = std::max(inner_change, update_row(j));
            }
            ++sweep;
            if (inner_change < s.tol) {
                break;
            }
        }
    }
}

constexpr int kDivergenceRun = 5;
constexpr double kObjectiveSlack = 8.0;
constexpr const char* kDivergedMessage = "fit diverged: fitted probabilities below the usable range";

double penalized(double loss, double lambda, const Matrix& coef)
{
    return lambda > 0.0 ? loss + lambda * group_penalty(coef) : loss;
}

void check_finite(double value, const char* what)
{
    if (!std::isfinite(value)) {
        throw NumericalError(std::string("non-finite ") + what + " during group-lasso solve");
    }
}

} // namespace

SolveResult solve(const LossAdapter& adapter, const Matrix& init, const SolveConfig& cfg)
{
    cfg.validate();
    const Matrix& f = adapter.design();
    const Index p1 = f.cols();
    const Index m = adapter.responses();
    if (init.rows() != p1 || init.cols() != m) {
        throw ValidationError("initial coefficient matrix has the wrong shape");
    }
    const double n = static_cast<double>(f.rows());
    const Vector col_sq = f.colwise().squaredNorm().transpose() / n;
    const Matrix f_sq = f.array().square().matrix();

    SolveResult res;
    Matrix coef = init;
    if (cfg.intercept_only) {
        coef.bottomRows(p1 - 1).setZero();
    }
    adapter.normalize(coef);
    Matrix eta = f * coef;
    double loss = adapter.loss(eta);
    check_finite(loss, "loss");
    double obj = penalized(loss, cfg.lambda, coef);
    res.trace.push_back(obj);

    Matrix g;
    Matrix weights;
    Matrix proposal;
    Matrix eta_prop;
    Matrix trial;
    Matrix eta_trial;
    double b = 0.0;
    // Inexact inner solves: the tolerance tracks the size of the last outer step.
    double last_step = 0.1;
    int degenerate = 0;
    for (int it = 1; it <= cfg.max_outer; ++it) {
        res.outer_iters = it;
        adapter.gradient(eta, g);
        Surrogate sur{f,      adapter.curvature_shape(), nullptr, 0.0, Matrix(), cfg.lambda,
                      std::max(cfg.tol_inner, 1e-2 * last_step), cfg};
        if (cfg.curvature == Curvature::Uniform) {
            b = adapter.majorizer(eta);
            check_finite(b, "curvature bound");
            if (!(b > 0.0)) {
                throw NumericalError("curvature bound must be positive");
            }
            sur.shape = CurvatureShape::Diagonal;
            sur.b = b;
            sur.blocks = b * col_sq.replicate(1, m);
        } else {
            adapter.curvature(eta, weights);
            const Index width = sur.shape == CurvatureShape::Full ? m * m : m;
            if (weights.rows() != f.rows() || weights.cols() != width) {
                throw NumericalError("curvature matrix has the wrong shape");
            }
            if (!weights.allFinite()) {
                throw NumericalError("non-finite curvature weights during group-lasso solve");
            }
            b = weights.cwiseAbs().maxCoeff();
            sur.weights = &weights;
            sur.blocks = f_sq.transpose() * weights / n;
        }
        proposal = coef;
        minimize_surrogate(sur, proposal, g);
        adapter.normalize(proposal);
        eta_prop.noalias() = f * proposal;
        const double step = (proposal - coef).cwiseAbs().maxCoeff();

        double weight = 1.0;
        double new_obj = penalized(adapter.loss(eta_prop), cfg.lambda, proposal);
        // Near the optimum the decrease from a full step can fall below the
        // rounding error of the loss itself; allow a few ulps so that exact
        // Newton steps are not cut back to noise.
        const double slack = kObjectiveSlack * std::numeric_limits<double>::epsilon() * std::max(std::abs(obj), 1.0);
        bool accepted = std::isfinite(new_obj) && new_obj <= obj + slack;
        if (accepted) {
            coef.swap(proposal);
            eta.swap(eta_prop);
        } else {
            weight = cfg.linesearch_shrink;
            for (int ls = 0; ls < cfg.linesearch_max; ++ls) {
                trial = (1.0 - weight) * coef + weight * proposal;
                eta_trial = (1.0 - weight) * eta + weight * eta_prop;
                new_obj = penalized(adapter.loss(eta_trial), cfg.lambda, trial);
                if (std::isfinite(new_obj) && new_obj <= obj) {
                    accepted = true;
                    break;
                }
                weight *= cfg.linesearch_shrink;
            }
            if (accepted) {
                coef.swap(trial);
                eta.noalias() = f * coef;
                new_obj = penalized(adapter.loss(eta), cfg.lambda, coef);
            }
        }

        if (!accepted) {
            res.last_b = b;
            if (step < cfg.tol_coef) {
                // The surrogate step is already below tolerance; no descent is
                // available at rounding level.
                res.converged = true;
            } else {
                res.diagnostic = "line search failed to decrease the objective";
            }
            break;
        }
        check_finite(new_obj, "objective");
        // A single Newton step may overshoot; only a run of degenerate
        // iterates counts as divergence.
        degenerate = adapter.diverged(eta) ? degenerate + 1 : 0;
        if (degenerate >= kDivergenceRun) {
            res.trace.push_back(new_obj);
            obj = new_obj;
            res.last_b = b;
            res.diagnostic = kDivergedMessage;
            break;
        }
        last_step = weight * step;
        const double change = (obj - new_obj) / std::max(std::abs(obj), 1.0);
        obj = new_obj;
        res.trace.push_back(obj);
        res.last_b = b;
        if (change < cfg.tol_obj && weight * step < cfg.tol_coef) {
            res.converged = degenerate == 0;
            if (!res.converged) {
                res.diagnostic = kDivergedMessage;
            }
            break;
        }
    }
    if (!res.converged && res.diagnostic.empty()) {
        res.diagnostic = "iteration limit reached";
    }
    // Report the scalar Fisher-scored bound at the final iterate whichever
    // curvature scheme drove the iterations.
    if (cfg.curvature == Curvature::Pointwise) {
        res.last_b = adapter.majorizer(eta);
    }
    res.objective = obj;
    for (Index j = 1; j < p1; ++j) {
        if (coef.row(j).squaredNorm() > 0.0) {
            res.active_rows.push_back(j);
        }
    }
    res.coef = std::move(coef);
    return res;
}

KktReport check_kkt(const LossAdapter& adapter, const Matrix& coef, double lambda)
{
    const Matrix grad = adapter.coef_gradient(coef);
    KktReport rep;
    rep.gradient_norms.resize(static_cast<std::size_t>(grad.rows()));
    rep.violations.resize(static_cast<std::size_t>(grad.rows()));
    for (Index j = 0; j < grad.rows(); ++j) {
        const double norm = grad.row(j).norm();
        double v = 0.0;
        if (j == 0) {
            v = norm;
            rep.intercept_norm = norm;
        } else if (coef.row(j).squaredNorm() > 0.0) {
            v = std::abs(norm - lambda);
        } else {
            v = std::max(norm - lambda, 0.0);
        }
        rep.gradient_norms[static_cast<std::size_t>(j)] = norm;
        rep.violations[static_cast<std::size_t>(j)] = v;
        rep.max_violation = std::max(rep.max_violation, v);
    }
    return rep;
}

} // namespace mcal
