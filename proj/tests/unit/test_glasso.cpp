#include "oracles.hpp"

#include "mcal/glasso.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"
#include "mcal/tuning.hpp"

#include <doctest.h>

#include <limits>

#include <random>

using namespace mcal;

namespace {

// Minimizes 1/2 a r^2 - s r + mu r over r >= 0 by bisection on the derivative.
double bisect_radius(double a, double s, double mu)
{
    if (s <= mu) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = 1.0;
    while (a * hi - s + mu < 0) {
        hi *= 2.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (a * mid - s + mu < 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double group_objective(const Matrix& a, const Vector& z, double mu, const Vector& beta)
{
    return 0.5 * beta.dot(a * beta) - z.dot(beta) + mu * beta.norm();
}

struct LeastSquares {
    Matrix f;
    Vector y;
    WeightedGlmAdapter adapter;

    LeastSquares(Matrix f_, Vector y_)
        : f(std::move(f_)), y(std::move(y_)),
          adapter(f, y, Matrix::Ones(f.rows(), 1), Matrix::Ones(f.rows(), 1), Link::Identity)
    {
    }
};

Matrix cal_free_oracle(const Dataset& d, int t, double lambda)
{
    std::vector<bool> free(static_cast<std::size_t>(d.k), true);
    free[static_cast<std::size_t>(t)] = false;
    return oracle::proximal_gradient(d.f, oracle::cal_smooth(d, t), lambda, Matrix::Zero(d.f.cols(), d.k), free);
}

} // namespace

TEST_SUITE("glasso_engine")
{
    TEST_CASE("block update: threshold dominates")
    {
        Matrix z(2, 2);
        z << 0.24, 0.18, 0.24, 0.18;
        const Vector f = Vector::Ones(2);
        const Vector out = block_update(z, f, 0.5);
        CHECK(out.isZero(0.0));
        CHECK(out(0) == 0.0);
    }

    TEST_CASE("block update: direct formula")
    {
        Matrix z(2, 2);
        z << 0.8, 0.6, 0.8, 0.6;
        const Vector out = block_update(z, Vector::Ones(2), 0.5);
        CHECK(out(0) == doctest::Approx(0.4).epsilon(1e-15));
        CHECK(out(1) == doctest::Approx(0.3).epsilon(1e-15));
    }

    TEST_CASE("block update: unpenalized limit is least squares")
    {
        std::mt19937_64 rng(3);
        const Matrix z = oracle::random_matrix(20, 3, rng);
        const Vector f = oracle::random_matrix(20, 1, rng).col(0);
        const Vector out = block_update(z, f, 0.0);
        for (Index c = 0; c < 3; ++c) {
            CHECK(out(c) == doctest::Approx(oracle::least_squares(f, z.col(c))(0)).epsilon(1e-12));
        }
    }

    TEST_CASE("block update matches a bisection oracle on the radius")
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        for (int rep = 0; rep < 200; ++rep) {
            const Index n = 5 + rep % 7;
            const Matrix z = oracle::random_matrix(n, 3, rng);
            const Vector f = oracle::random_matrix(n, 1, rng).col(0);
            const double mu = u(rng);
            const Vector out = block_update(z, f, mu);
            const double nn = static_cast<double>(n);
            const Vector zf = z.transpose() * f / nn;
            const double a = f.squaredNorm() / nn;
            const double r = bisect_radius(a, zf.norm(), mu);
            if (r == 0.0) {
                CHECK(out.isZero(0.0));
            } else {
                CHECK((out - r * zf / zf.norm()).norm() <= 1e-12 * (1.0 + r));
            }
        }
    }

    TEST_CASE("weighted group threshold satisfies its optimality conditions")
    {
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> pos(0.05, 3.0);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        for (int rep = 0; rep < 300; ++rep) {
            const Index m = 1 + rep % 4;
            Vector a(m);
            for (Index c = 0; c < m; ++c) {
                a(c) = rep % 3 == 0 ? 1.3 : pos(rng);
            }
            const Vector target = oracle::random_matrix(m, 1, rng).col(0);
            const double mu = u(rng);
            const Vector beta = weighted_group_threshold(a, target, mu);
            const Vector grad = a.cwiseProduct(beta - target);
            if (beta.norm() == 0.0) {
                CHECK(grad.norm() <= mu + 1e-12);
            } else {
                CHECK((grad + mu * beta / beta.norm()).norm() <= 1e-9);
            }
        }
        CHECK_THROWS_AS(weighted_group_threshold(Vector::Zero(2), Vector::Ones(2), 0.1), ValidationError);
    }

    TEST_CASE("matrix group threshold beats every random competitor")
    {
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> u(0.0, 1.5);
        for (int rep = 0; rep < 100; ++rep) {
            const Index m = 2 + rep % 3;
            const Matrix g = oracle::random_matrix(m, m, rng);
            const Matrix a = g * g.transpose() + 0.1 * Matrix::Identity(m, m);
            const Vector z = oracle::random_matrix(m, 1, rng).col(0);
            const double mu = u(rng);
            const Vector beta = matrix_group_threshold(a, z, mu);
            const double best = group_objective(a, z, mu, beta);
            if (beta.norm() == 0.0) {
                CHECK(z.norm() <= mu + 1e-12);
            } else {
                CHECK((a * beta - z + mu * beta / beta.norm()).norm() <= 1e-8);
            }
            for (int probe = 0; probe < 50; ++probe) {
                const Vector other = beta + 0.1 * oracle::random_matrix(m, 1, rng).col(0);
                CHECK(group_objective(a, z, mu, other) >= best - 1e-12);
            }
        }
    }

    TEST_CASE("matrix threshold reduces to the weighted threshold for diagonal blocks")
    {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> pos(0.1, 2.0);
        for (int rep = 0; rep < 50; ++rep) {
            Vector a(3);
            a << pos(rng), pos(rng), pos(rng);
            const Vector m = oracle::random_matrix(3, 1, rng).col(0);
            const Vector w = weighted_group_threshold(a, m, 0.3);
            const Vector v = matrix_group_threshold(a.asDiagonal(), a.cwiseProduct(m), 0.3);
            CHECK((w - v).norm() <= 1e-10);
        }
    }

    TEST_CASE("null directions of a singular block stay at zero")
    {
        Matrix a = Matrix::Zero(2, 2);
        a(0, 0) = 2.0;
        Vector z(2);
        z << 3.0, 1.0;
        const Vector beta = matrix_group_threshold(a, z, 0.5);
        CHECK(beta(1) == 0.0);
        CHECK(beta(0) == doctest::Approx(1.25).epsilon(1e-12));
    }

    TEST_CASE("unpenalized least squares matches the normal equations")
    {
        Matrix f(5, 3);
        f << 1, 0.3, -1.2, 1, 1.1, 0.4, 1, -0.7, 0.9, 1, 2.0, -0.3, 1, -1.5, 1.7;
        Vector y(5);
        y << 1.0, -0.5, 2.2, 0.3, -1.1;
        LeastSquares ls(f, y);
        SolveConfig cfg;
        for (Curvature c : {Curvature::Pointwise, Curvature::Uniform}) {
            cfg.curvature = c;
            cfg.max_outer = 5000;
            const SolveResult r = solve(ls.adapter, Matrix::Zero(3, 1), cfg);
            CHECK(r.converged);
            CHECK((r.coef.col(0) - oracle::least_squares(f, y)).lpNorm<Eigen::Infinity>() <= 1e-8);
        }
    }

    TEST_CASE("penalty above the zero threshold gives an intercept-only fit")
    {
        const Dataset d = oracle::random_dataset(80, 4, 3, 31);
        LeastSquares ls(d.f, d.y);
        const double star = lambda_star(ls.adapter);
        SolveConfig cfg;
        cfg.lambda = star * 1.0001;
        const SolveResult r = solve(ls.adapter, Matrix::Zero(5, 1), cfg);
        CHECK(r.converged);
        CHECK(r.coef.bottomRows(4).isZero(0.0));
        CHECK(r.coef(0, 0) == doctest::Approx(d.y.mean()).epsilon(1e-10));
        CHECK(r.active_rows.empty());

        cfg.lambda = star * 0.95;
        const SolveResult below = solve(ls.adapter, Matrix::Zero(5, 1), cfg);
        CHECK(!below.active_rows.empty());
    }

    TEST_CASE("calibration objective matches a proximal gradient oracle")
    {
        for (int rep = 0; rep < 4; ++rep) {
            const Dataset d = oracle::random_dataset(50, 4, 3, 40 + rep);
            const int t = rep % 3;
            const double lambda = 0.1;
            const Matrix ref = cal_free_oracle(d, t, lambda);
            const double best = oracle::cal_loss(d, ref, t) + lambda * oracle::group_penalty(ref);
            for (Curvature c : {Curvature::Pointwise, Curvature::Uniform}) {
                SolveConfig cfg;
                cfg.curvature = c;
                cfg.max_outer = 5000;
                const PsFit fit = fit_rcal_ps(d, t, lambda, Constraint::OneToZero, cfg);
                CHECK(fit.solve.converged);
                const double mine = oracle::cal_loss(d, fit.model.gamma, t) + lambda * oracle::group_penalty(fit.model.gamma);
                CHECK(std::abs(mine - best) <= 1e-5);
                CHECK(std::abs(fit.solve.objective - mine) <= 1e-12);
            }
        }
    }

    TEST_CASE("uniform and pointwise curvature reach the same minimizer")
    {
        const Dataset d = oracle::random_dataset(120, 6, 4, 77);
        SolveConfig a;
        a.curvature = Curvature::Pointwise;
        a.tol_coef = 1e-9;
        a.tol_obj = 1e-12;
        SolveConfig b = a;
        b.curvature = Curvature::Uniform;
        b.max_outer = 20000;
        for (Constraint c : {Constraint::OneToZero, Constraint::SumToZero}) {
            const PsFit fa = fit_rcal_ps(d, 1, 0.05, c, a);
            const PsFit fb = fit_rcal_ps(d, 1, 0.05, c, b);
            CHECK(fa.solve.converged);
            CHECK(fb.solve.converged);
            CHECK(std::abs(fa.solve.objective - fb.solve.objective) <= 1e-9);
            CHECK((fa.model.gamma - fb.model.gamma).lpNorm<Eigen::Infinity>() <= 1e-5);
            CHECK(fb.solve.outer_iters >= fa.solve.outer_iters);
        }
        const PsFit ma = fit_rml_ps(d, 0.03, Constraint::OneToZero, a);
        const PsFit mb = fit_rml_ps(d, 0.03, Constraint::OneToZero, b);
        CHECK(std::abs(ma.solve.objective - mb.solve.objective) <= 1e-9);
        CHECK((ma.model.gamma - mb.model.gamma).lpNorm<Eigen::Infinity>() <= 1e-5);
    }

    TEST_CASE("trace descends and converged fits satisfy the KKT bound")
    {
        for (int rep = 0; rep < 10; ++rep) {
            const Dataset d = oracle::random_dataset(300, 5, 3, 200 + rep);
            const int t = rep % 3;
            const double star = lambda_star_ps(d, PsLoss::Cal, t);
            SolveConfig cfg;
            for (Curvature c : {Curvature::Pointwise, Curvature::Uniform}) {
                cfg.curvature = c;
                cfg.max_outer = 5000;
                const PsFit fit = fit_rcal_ps(d, t, 0.2 * star, Constraint::OneToZero, cfg);
                REQUIRE(fit.solve.converged);
                for (std::size_t i = 1; i < fit.solve.trace.size(); ++i) {
                    // Non-increasing up to the rounding error of the loss.
                    const double ulps = 8.0 * std::numeric_limits<double>::epsilon() *
                                        std::max(std::abs(fit.solve.trace[i - 1]), 1.0);
                    CHECK(fit.solve.trace[i] <= fit.solve.trace[i - 1] + ulps);
                }
                const CalAdapter adapter(d.f, d.t, d.k, t, Constraint::OneToZero);
                const Matrix free = adapter.reduce(fit.model.gamma);
                const KktReport kkt = check_kkt(adapter, free, 0.2 * star);
                CHECK(kkt.max_violation <= 10.0 * cfg.tol_coef * fit.solve.last_b);
                // Zero rows are exactly zero and active rows are reported.
                for (Index j = 1; j < free.rows(); ++j) {
                    const bool active = std::find(fit.solve.active_rows.begin(), fit.solve.active_rows.end(), j) !=
                                        fit.solve.active_rows.end();
                    CHECK(active == (free.row(j).norm() > 0.0));
                }
            }
        }
    }

    TEST_CASE("unpenalized fit has vanishing gradient")
    {
        const Dataset d = oracle::random_dataset(200, 3, 3, 5);
        const PsFit fit = fit_rcal_ps(d, 0, 0.0, Constraint::OneToZero, SolveConfig{});
        const CalAdapter adapter(d.f, d.t, d.k, 0, Constraint::OneToZero);
        const KktReport kkt = check_kkt(adapter, adapter.reduce(fit.model.gamma), 0.0);
        for (double g : kkt.gradient_norms) {
            CHECK(g <= 1e-6);
        }
    }

    TEST_CASE("a truncated fit reports its KKT violation without failing")
    {
        const Dataset d = oracle::random_dataset(100, 5, 3, 8);
        SolveConfig cfg;
        cfg.max_outer = 1;
        const PsFit fit = fit_rcal_ps(d, 0, 0.01, Constraint::OneToZero, cfg);
        CHECK_FALSE(fit.solve.converged);
        CHECK_FALSE(fit.solve.diagnostic.empty());
        const CalAdapter adapter(d.f, d.t, d.k, 0, Constraint::OneToZero);
        const KktReport kkt = check_kkt(adapter, adapter.reduce(fit.model.gamma), 0.01);
        CHECK(kkt.max_violation > 1e-4);
    }

    TEST_CASE("intercept-only solves leave penalized rows at zero")
    {
        const Dataset d = oracle::random_dataset(60, 3, 3, 4);
        LeastSquares ls(d.f, d.y);
        SolveConfig cfg;
        cfg.intercept_only = true;
        const SolveResult r = solve(ls.adapter, Matrix::Zero(4, 1), cfg);
        CHECK(r.coef.bottomRows(3).isZero(0.0));
        CHECK(r.coef(0, 0) == doctest::Approx(d.y.mean()).epsilon(1e-10));
    }

    TEST_CASE("invalid solver settings are rejected")
    {
        SolveConfig cfg;
        cfg.tol_obj = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = SolveConfig{};
        cfg.linesearch_shrink = 1.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = SolveConfig{};
        cfg.lambda = -1.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }

    TEST_CASE("group penalty sums penalized row norms")
    {
        Matrix b(3, 2);
        b << 100, 100, 3, 4, 0, -2;
        CHECK(group_penalty(b) == 7.0);
    }
}
