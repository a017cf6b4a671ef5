#include "oracles.hpp"

#include "mcal/estimands.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"
#include "mcal/tuning.hpp"

#include <doctest.h>

#include <random>

using namespace mcal;

namespace {

Matrix fitted_probs(const Dataset& d, int t, double scale = 0.3)
{
    const PsFit ps = fit_rcal_ps(d, t, scale * lambda_star_ps(d, PsLoss::Cal, t), Constraint::OneToZero, SolveConfig{});
    REQUIRE(ps.solve.converged);
    return predict_probs(ps.model, d.f);
}

std::vector<Index> rows_of(const Dataset& d, int t)
{
    std::vector<Index> rows;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] == t) {
            rows.push_back(i);
        }
    }
    return rows;
}

// Weights R_t pi_k / pi_t for the c-th copy, as a vector over all rows.
Vector copy_weights(const Dataset& d, const Matrix& probs, int t, int k)
{
    Vector w(d.n());
    for (Index i = 0; i < d.n(); ++i) {
        w(i) = d.t[static_cast<std::size_t>(i)] == t ? probs(i, k) / probs(i, t) : 0.0;
    }
    return w;
}

} // namespace

TEST_SUITE("or_fit")
{
    TEST_CASE("weighted likelihood gradient matches central differences")
    {
        std::mt19937_64 rng(2);
        for (int rep = 0; rep < 20; ++rep) {
            const int k = 2 + rep % 3;
            const bool logit = rep % 2 == 1;
            const Dataset d = logit ? oracle::random_binary_dataset(25, 3, k, 300 + rep)
                                    : oracle::random_dataset(25, 3, k, 300 + rep);
            const int t = rep % k;
            const Matrix probs = oracle::softmax(oracle::random_matrix(25, k, rng, 0.5));
            const Link link = logit ? Link::Logit : Link::Identity;
            const WeightedGlmAdapter adapter = make_rwl_adapter(d, t, probs, link);
            const Matrix coef = oracle::random_matrix(4, k - 1, rng, 0.5);
            CHECK(wl_loss(d, t, probs, coef, link) == doctest::Approx(oracle::wl_loss(d, t, probs, coef, link)).epsilon(1e-12));
            const Matrix fd = oracle::fd_gradient([&](const Matrix& b) { return oracle::wl_loss(d, t, probs, b, link); }, coef);
            const double scale = std::max(1e-3, fd.lpNorm<Eigen::Infinity>());
            CHECK((adapter.coef_gradient(coef) - fd).lpNorm<Eigen::Infinity>() / scale <= 1e-6);
        }
    }

    TEST_CASE("heavy penalty: copy intercepts are weighted group means")
    {
        const Dataset d = oracle::random_dataset(200, 4, 3, 5);
        const int t = 1;
        const Matrix probs = fitted_probs(d, t);
        const double star = lambda_star_rwl(d, t, probs, Link::Identity);
        const OrFit fit = fit_rwl(d, t, probs, 1.01 * star, Link::Identity, SolveConfig{});
        CHECK(fit.model.columns == std::vector<int>{0, 2});
        CHECK(fit.model.coef.bottomRows(4).isZero(0.0));
        for (int c = 0; c < 2; ++c) {
            const Vector w = copy_weights(d, probs, t, fit.model.columns[static_cast<std::size_t>(c)]);
            CHECK(fit.model.coef(0, c) == doctest::Approx(w.dot(d.y) / w.sum()).epsilon(1e-9));
        }
    }

    TEST_CASE("RWL stationarity and group KKT")
    {
        for (int rep = 0; rep < 6; ++rep) {
            const int k = 3 + rep % 2;
            const Dataset d = oracle::random_dataset(250, 6, k, 400 + rep);
            const int t = rep % k;
            const Matrix probs = fitted_probs(d, t);
            const double lambda = 0.1 * lambda_star_rwl(d, t, probs, Link::Identity);
            const SolveConfig cfg;
            const OrFit fit = fit_rwl(d, t, probs, lambda, Link::Identity, cfg);
            REQUIRE(fit.solves.front().converged);
            const Matrix means = predict_means(fit.model, d.f);
            const double tol = 10.0 * cfg.tol_coef * fit.solves.front().last_b;
            Matrix scores = Matrix::Zero(d.f.cols(), k - 1);
            for (int c = 0; c < k - 1; ++c) {
                const Vector w = copy_weights(d, probs, t, fit.model.columns[static_cast<std::size_t>(c)]);
                const Vector resid = w.cwiseProduct(d.y - means.col(c));
                scores.col(c) = d.f.transpose() * resid / static_cast<double>(d.n());
            }
            CHECK(scores.row(0).lpNorm<Eigen::Infinity>() <= tol);
            for (Index j = 1; j < scores.rows(); ++j) {
                CHECK(scores.row(j).norm() <= lambda + tol);
                if (fit.model.coef.row(j).norm() > 0.0) {
                    CHECK(std::abs(scores.row(j).norm() - lambda) <= tol);
                }
            }
        }
    }

    TEST_CASE("K=2 RWL equals a weighted lasso oracle")
    {
        for (int rep = 0; rep < 4; ++rep) {
            const Dataset d = oracle::random_dataset(150, 4, 2, 500 + rep);
            const int t = rep % 2;
            const Matrix probs = fitted_probs(d, t);
            const double lambda = 0.05 + 0.05 * rep;
            SolveConfig cfg;
            cfg.tol_coef = 1e-10;
            cfg.tol_obj = 1e-14;
            const OrFit fit = fit_rwl(d, t, probs, lambda, Link::Identity, cfg);
            const Vector w = copy_weights(d, probs, t, 1 - t);
            const Vector beta = oracle::lasso_cd(d.f, oracle::weighted_squares(d.y, w), lambda);
            CHECK((fit.model.coef.col(0) - beta).lpNorm<Eigen::Infinity>() <= 1e-6);
        }
    }

    TEST_CASE("unit weights reduce RWL to the per-group lasso")
    {
        const Dataset d = oracle::random_dataset(120, 5, 2, 17);
        const Matrix probs = Matrix::Constant(d.n(), 2, 0.5);
        for (int t = 0; t < 2; ++t) {
            const OrFit rwl = fit_rwl(d, t, probs, 0.08, Link::Identity, SolveConfig{});
            const SolveResult group = fit_rmls_group(d, t, 0.08, Link::Identity, SolveConfig{});
            CHECK((rwl.model.coef.col(0) - group.coef.col(0)).lpNorm<Eigen::Infinity>() <= 1e-6);
        }
    }

    TEST_CASE("RMLs without penalty is per-group least squares")
    {
        const Dataset d = oracle::random_dataset(200, 4, 3, 21);
        SolveConfig cfg;
        cfg.tol_coef = 1e-11;
        cfg.tol_obj = 1e-15;
        const OrFit fit = fit_rmls(d, {0.0, 0.0, 0.0}, Link::Identity, cfg);
        CHECK(fit.model.columns == std::vector<int>{0, 1, 2});
        for (int t = 0; t < 3; ++t) {
            const auto rows = rows_of(d, t);
            Matrix f(static_cast<Index>(rows.size()), d.f.cols());
            Vector y(static_cast<Index>(rows.size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                f.row(static_cast<Index>(r)) = d.f.row(rows[r]);
                y(static_cast<Index>(r)) = d.y(rows[r]);
            }
            CHECK((fit.model.coef.col(t) - oracle::least_squares(f, y)).lpNorm<Eigen::Infinity>() <= 1e-8);
        }
    }

    TEST_CASE("RMLs above the group threshold gives group means")
    {
        const Dataset d = oracle::random_dataset(150, 3, 3, 22);
        std::vector<double> lambdas;
        for (int t = 0; t < 3; ++t) {
            lambdas.push_back(1.01 * lambda_star_rmls(d, t, Link::Identity));
        }
        const OrFit fit = fit_rmls(d, lambdas, Link::Identity, SolveConfig{});
        for (int t = 0; t < 3; ++t) {
            CHECK(fit.model.coef.col(t).tail(3).isZero(0.0));
            CHECK(fit.model.coef(0, t) == doctest::Approx(group_mean(d, t)).epsilon(1e-9));
        }
    }

    TEST_CASE("RMLs with the logit link matches IRLS")
    {
        const Dataset d = oracle::random_binary_dataset(300, 2, 2, 23);
        SolveConfig cfg;
        cfg.tol_coef = 1e-10;
        const OrFit fit = fit_rmls(d, {0.0, 0.0}, Link::Logit, cfg);
        const auto rows = rows_of(d, 1);
        Matrix f(static_cast<Index>(rows.size()), d.f.cols());
        Vector y(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            f.row(static_cast<Index>(r)) = d.f.row(rows[r]);
            y(static_cast<Index>(r)) = d.y(rows[r]);
        }
        CHECK((fit.model.coef.col(1) - oracle::irls_logistic(f, y)).lpNorm<Eigen::Infinity>() <= 1e-6);
    }

    TEST_CASE("RMLg without penalty equals RMLs")
    {
        const Dataset d = oracle::random_dataset(180, 4, 3, 24);
        SolveConfig cfg;
        cfg.tol_coef = 1e-11;
        cfg.tol_obj = 1e-15;
        const OrFit g = fit_rmlg(d, 0.0, Link::Identity, cfg);
        const OrFit s = fit_rmls(d, {0.0, 0.0, 0.0}, Link::Identity, cfg);
        CHECK((g.model.coef - s.model.coef).lpNorm<Eigen::Infinity>() <= 1e-8);
    }

    TEST_CASE("RMLg above the threshold is intercept-only")
    {
        const Dataset d = oracle::random_dataset(180, 4, 3, 25);
        const OrFit g = fit_rmlg(d, 1.01 * lambda_star_rmlg(d, Link::Identity), Link::Identity, SolveConfig{});
        CHECK(g.model.coef.bottomRows(4).isZero(0.0));
        for (int t = 0; t < 3; ++t) {
            CHECK(g.model.coef(0, t) == doctest::Approx(group_mean(d, t)).epsilon(1e-9));
        }
    }

    TEST_CASE("RMLg objective is no worse than the RMLs solution")
    {
        for (int rep = 0; rep < 5; ++rep) {
            const Dataset d = oracle::random_dataset(150, 5, 3, 600 + rep);
            const double lambda = 0.05;
            const OrFit g = fit_rmlg(d, lambda, Link::Identity, SolveConfig{});
            const OrFit s = fit_rmls(d, {lambda, lambda, lambda}, Link::Identity, SolveConfig{});
            auto objective = [&](const Matrix& coef) {
                double total = 0.0;
                for (int t = 0; t < 3; ++t) {
                    total += ml_outcome_loss(d, t, coef.col(t), Link::Identity);
                }
                return total + lambda * oracle::group_penalty(coef);
            };
            CHECK(objective(g.model.coef) <= objective(s.model.coef) + 1e-10);
            CHECK(g.solves.front().objective == doctest::Approx(objective(g.model.coef)).epsilon(1e-12));
        }
    }

    TEST_CASE("logit link requires outcomes in [0, 1]")
    {
        const Dataset d = oracle::random_dataset(60, 2, 2, 7);
        CHECK_THROWS_AS(fit_rmls(d, {0.1, 0.1}, Link::Logit, SolveConfig{}), ValidationError);
        CHECK_THROWS_AS(fit_rwl(d, 0, Matrix::Constant(60, 2, 0.5), 0.1, Link::Logit, SolveConfig{}), ValidationError);
    }

    TEST_CASE("predicted means apply the inverse link")
    {
        OrModel m;
        m.link = Link::Logit;
        m.coef = Matrix::Zero(2, 1);
        m.coef(1, 0) = 1.0;
        Matrix f(2, 2);
        f << 1, 0, 1, 2;
        const Matrix mu = predict_means(m, f);
        CHECK(mu(0, 0) == doctest::Approx(0.5));
        CHECK(mu(1, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
        CHECK(inverse_link(Link::Identity, -3.5) == -3.5);
    }
}
