#include "oracles.hpp"

#include "mcal/estimands.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"
#include "mcal/tuning.hpp"

#include <doctest.h>

#include <random>

using namespace mcal;

namespace {

// Classical AIPW influence values summed directly from the textbook formula.
Vector classical_influence(const Dataset& d, const Matrix& probs, const Vector& m, int t)
{
    Vector phi(d.n());
    for (Index i = 0; i < d.n(); ++i) {
        const double r = d.t[static_cast<std::size_t>(i)] == t ? 1.0 : 0.0;
        phi(i) = r * d.y(i) / probs(i, t) - (r / probs(i, t) - 1.0) * m(i);
    }
    return phi;
}

struct Fitted {
    Dataset d;
    Matrix probs;
    OrFit outcome;
    Matrix copies;
};

Fitted rcal_fit(std::uint64_t seed, int k, int t, Link link = Link::Identity)
{
    Fitted out{link == Link::Logit ? oracle::random_binary_dataset(300, 5, k, seed)
                                   : oracle::random_dataset(300, 5, k, seed),
               {}, {}, {}};
    const Dataset& d = out.d;
    SolveConfig cfg;
    cfg.tol_coef = 1e-9;
    const PsFit ps = fit_rcal_ps(d, t, 0.1 * lambda_star_ps(d, PsLoss::Cal, t), Constraint::OneToZero, cfg);
    REQUIRE(ps.solve.converged);
    out.probs = predict_probs(ps.model, d.f);
    out.outcome = fit_rwl(d, t, out.probs, 0.1 * lambda_star_rwl(d, t, out.probs, link), link, cfg);
    REQUIRE(out.outcome.solves.front().converged);
    const Matrix means = predict_means(out.outcome.model, d.f);
    out.copies = Matrix::Zero(d.n(), k);
    for (std::size_t c = 0; c < out.outcome.model.columns.size(); ++c) {
        out.copies.col(out.outcome.model.columns[c]) = means.col(static_cast<Index>(c));
    }
    return out;
}

} // namespace

TEST_SUITE("estimands")
{
    TEST_CASE("tied copies reduce to classical AIPW")
    {
        std::mt19937_64 rng(1);
        for (int rep = 0; rep < 30; ++rep) {
            const int k = 2 + rep % 3;
            const int t = rep % k;
            const Dataset d = oracle::random_dataset(40, 2, k, 700 + rep);
            const Matrix probs = oracle::softmax(oracle::random_matrix(40, k, rng, 0.6));
            const Vector m = oracle::random_matrix(40, 1, rng, 2.0).col(0);
            const EstimateReport single = aipw_mu_single(d, probs, m, t, "RML");
            const EstimateReport tied = aipw_mu(d, probs, m.replicate(1, k), t, "RML");
            CHECK(single.mu_hat == tied.mu_hat);
            CHECK(single.influence == tied.influence);
            const Vector phi = classical_influence(d, probs, m, t);
            CHECK((tied.influence - phi).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + phi.lpNorm<Eigen::Infinity>()));
            CHECK(tied.mu_hat == doctest::Approx(phi.mean()).epsilon(1e-12));
        }
    }

    TEST_CASE("mean and variance come from the influence values")
    {
        std::mt19937_64 rng(2);
        const Dataset d = oracle::random_dataset(80, 2, 3, 9);
        const Matrix probs = oracle::softmax(oracle::random_matrix(80, 3, rng, 0.5));
        const Matrix copies = oracle::random_matrix(80, 3, rng);
        const EstimateReport rep = aipw_mu(d, probs, copies, 1);
        double mean = 0.0;
        for (Index i = 0; i < 80; ++i) {
            mean += rep.influence(i);
        }
        mean /= 80.0;
        double var = 0.0;
        for (Index i = 0; i < 80; ++i) {
            var += (rep.influence(i) - mean) * (rep.influence(i) - mean);
        }
        var /= 80.0;
        CHECK(rep.mu_hat == doctest::Approx(mean).epsilon(1e-13));
        CHECK(rep.v_hat == doctest::Approx(var).epsilon(1e-12));
        const Vector sum = rep.phi_k.rowwise().sum();
        for (Index i = 0; i < 80; ++i) {
            const double rt = d.t[static_cast<std::size_t>(i)] == 1 ? d.y(i) : 0.0;
            CHECK(rep.influence(i) == doctest::Approx(rt + sum(i)).epsilon(1e-13));
        }
        CHECK(rep.phi_k.col(1).isZero(0.0));
    }

    TEST_CASE("nu estimates match a direct re-summation")
    {
        std::mt19937_64 rng(3);
        for (int rep = 0; rep < 10; ++rep) {
            const int k = 3 + rep % 2;
            const int t = rep % k;
            const Dataset d = oracle::random_dataset(60, 2, k, 800 + rep);
            const Matrix probs = oracle::softmax(oracle::random_matrix(60, k, rng, 0.5));
            const Matrix copies = oracle::random_matrix(60, k, rng);
            const EstimateReport r = aipw_mu(d, probs, copies, t);
            for (int j = 0; j < k; ++j) {
                if (j == t) {
                    continue;
                }
                double num = 0.0;
                double count = 0.0;
                for (Index i = 0; i < 60; ++i) {
                    const int ti = d.t[static_cast<std::size_t>(i)];
                    const double ratio = ti == t ? probs(i, j) / probs(i, t) : 0.0;
                    const double rj = ti == j ? 1.0 : 0.0;
                    num += ratio * d.y(i) - (ratio - rj) * copies(i, j);
                    count += rj;
                }
                const double nu = num / count;
                double u = 0.0;
                for (Index i = 0; i < 60; ++i) {
                    const double rj = d.t[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
                    const double dev = r.phi_k(i, j) - rj * nu;
                    u += dev * dev;
                }
                u = u / 60.0 / ((count / 60.0) * (count / 60.0));
                CHECK(std::abs(r.nu_hat.at(j) - nu) <= 1e-12 * (1.0 + std::abs(nu)));
                CHECK(r.u_hat.at(j) == doctest::Approx(u).epsilon(1e-11));
            }
            CHECK_THROWS_AS(aipw_nu(d, r, t), ValidationError);
        }
    }

    TEST_CASE("mu decomposes into the treated mean and the nu terms")
    {
        std::mt19937_64 rng(4);
        for (int rep = 0; rep < 20; ++rep) {
            const int k = 2 + rep % 4;
            const int t = rep % k;
            const Dataset d = oracle::random_dataset(70, 3, k, 900 + rep);
            const Matrix probs = oracle::softmax(oracle::random_matrix(70, k, rng, 0.7));
            const Matrix copies = oracle::random_matrix(70, k, rng, 3.0);
            const EstimateReport r = aipw_mu(d, probs, copies, t);
            double recomposed = 0.0;
            for (Index i = 0; i < 70; ++i) {
                recomposed += d.t[static_cast<std::size_t>(i)] == t ? d.y(i) : 0.0;
            }
            recomposed /= 70.0;
            const auto sizes = d.group_sizes();
            for (const auto& [j, nu] : r.nu_hat) {
                recomposed += nu * static_cast<double>(sizes[static_cast<std::size_t>(j)]) / 70.0;
            }
            CHECK(std::abs(recomposed - r.mu_hat) <= 1e-10);
        }
    }

    TEST_CASE("calibrated fits keep mu within the range of observed and fitted outcomes")
    {
        for (int rep = 0; rep < 6; ++rep) {
            const int k = 3 + rep % 2;
            const int t = rep % k;
            const Link link = rep % 2 == 0 ? Link::Identity : Link::Logit;
            const Fitted f = rcal_fit(1000 + rep, k, t, link);
            const EstimateReport r = aipw_mu(f.d, f.probs, f.copies, t);
            double lo = 1e300;
            double hi = -1e300;
            for (Index i = 0; i < f.d.n(); ++i) {
                const int ti = f.d.t[static_cast<std::size_t>(i)];
                const double v = ti == t ? f.d.y(i) : f.copies(i, ti);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            CHECK(r.mu_hat >= lo - 1e-6);
            CHECK(r.mu_hat <= hi + 1e-6);
            if (link == Link::Logit) {
                CHECK(r.mu_hat >= 0.0);
                CHECK(r.mu_hat <= 1.0);
            }
        }
    }

    TEST_CASE("constant outcomes give a constant estimate with zero variance")
    {
        std::mt19937_64 rng(5);
        Dataset d = oracle::random_dataset(50, 2, 3, 12);
        d.y.setConstant(2.5);
        const Matrix probs = oracle::softmax(oracle::random_matrix(50, 3, rng, 0.5));
        const Matrix copies = Matrix::Constant(50, 3, 2.5);
        const EstimateReport r = aipw_mu(d, probs, copies, 0);
        CHECK(r.mu_hat == doctest::Approx(2.5).epsilon(1e-14));
        CHECK(r.v_hat <= 1e-24);
    }

    TEST_CASE("extreme weights are rejected with the row")
    {
        const Dataset d = oracle::random_dataset(20, 1, 2, 3);
        Matrix probs = Matrix::Constant(20, 2, 0.5);
        probs(7, 0) = 1e-12;
        probs(7, 1) = 1.0 - 1e-12;
        try {
            aipw_mu(d, probs, Matrix::Zero(20, 2), 0);
            FAIL("expected a numerical error");
        } catch (const NumericalError& e) {
            CHECK(std::string(e.what()).find("row 7") != std::string::npos);
        }
    }

    TEST_CASE("normal quantiles and Wald intervals")
    {
        CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
        CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
        const Interval ci = wald_ci(0.0, 1.0, 100, 0.95);
        CHECK(ci.lower == doctest::Approx(-0.19599639845).epsilon(1e-10));
        CHECK(ci.upper == doctest::Approx(0.19599639845).epsilon(1e-10));
        const Interval flat = wald_ci(1.5, 0.0, 10, 0.9);
        CHECK(flat.lower == 1.5);
        CHECK(flat.upper == 1.5);
        const Interval narrow = wald_ci(0.3, 2.0, 40, 0.9);
        const Interval wide = wald_ci(0.3, 2.0, 40, 0.95);
        CHECK(wide.lower < narrow.lower);
        CHECK(narrow.upper < wide.upper);
        CHECK_THROWS_AS(wald_ci(0.0, -1.0, 10, 0.95), ValidationError);
        CHECK_THROWS_AS(wald_ci(0.0, 1.0, 10, 1.0), ValidationError);
    }

    TEST_CASE("treatment contrasts")
    {
        std::mt19937_64 rng(6);
        const Dataset d = oracle::random_dataset(90, 2, 3, 13);
        const Matrix probs = oracle::softmax(oracle::random_matrix(90, 3, rng, 0.5));
        const Matrix copies = oracle::random_matrix(90, 3, rng);
        const EstimateReport a = aipw_mu(d, probs, copies, 0);
        const EstimateReport b = aipw_mu(d, probs, copies, 2);
        const Contrast self = ate_contrast(a, a, 0.95);
        CHECK(self.diff == 0.0);
        CHECK(self.variance == 0.0);
        const Contrast c = ate_contrast(a, b, 0.95);
        CHECK(c.diff == doctest::Approx(a.mu_hat - b.mu_hat));
        double cov = 0.0;
        for (Index i = 0; i < 90; ++i) {
            cov += (a.influence(i) - a.mu_hat) * (b.influence(i) - b.mu_hat);
        }
        cov /= 90.0;
        CHECK(c.variance == doctest::Approx(a.v_hat + b.v_hat - 2.0 * cov).epsilon(1e-12));
        CHECK(c.ci.contains(c.diff));
    }

    TEST_CASE("group means")
    {
        Matrix x(4, 1);
        x << 0, 1, 2, 3;
        Vector y(4);
        y << 1, 2, 3, 6;
        const Dataset d = from_covariates(y, {0, 1, 0, 1}, x, 2);
        CHECK(group_mean(d, 0) == 2.0);
        CHECK(group_mean(d, 1) == 4.0);
    }
}
