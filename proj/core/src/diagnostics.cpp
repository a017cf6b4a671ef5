#include "mcal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcal {

namespace {

Vector indicator(const Dataset& d, int t)
{
    Vector r(d.n());
    for (Index i = 0; i < d.n(); ++i) {
        r(i) = d.t[static_cast<std::size_t>(i)] == t ? 1.0 : 0.0;
    }
    return r;
}

void check_probs(const Dataset& d, const Matrix& probs, int t)
{
    if (probs.rows() != d.n() || probs.cols() != d.k) {
        throw ValidationError("propensity matrix does not match the dataset");
    }
    if (t < 0 || t >= d.k) {
        throw ValidationError("target treatment outside 0..K-1");
    }
}

// R^(t) / pi(t, X) per row.
Vector inverse_weights(const Dataset& d, const Matrix& probs, int t)
{
    return indicator(d, t).cwiseQuotient(probs.col(t));
}

} // namespace

double mascd(const Dataset& d, const Matrix& probs, int t)
{
    check_probs(d, probs, t);
    const Vector w = inverse_weights(d, probs, t);
    const double wsum = w.mean();
    double best = 0.0;
    for (Index j = 1; j < d.f.cols(); ++j) {
        const auto fj = d.f.col(j);
        const double mean = fj.mean();
        const double sd = std::sqrt((fj.array() - mean).square().mean());
        const double weighted = w.dot(fj) / static_cast<double>(d.n()) / wsum;
        best = std::max(best, std::abs((weighted - mean) / sd));
    }
    return best;
}

double rv(const Dataset& d, const Matrix& probs, int t)
{
    check_probs(d, probs, t);
    double sum = 0.0;
    double sq = 0.0;
    Index count = 0;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] == t) {
            const double w = 1.0 / probs(i, t);
            sum += w;
            sq += w * w;
            ++count;
        }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(sq / static_cast<double>(count) - mean * mean, 0.0);
    return var / (mean * mean);
}

BalanceReport balance_report(const Dataset& d, const Matrix& probs, int t, double lambda, Constraint c)
{
    check_probs(d, probs, t);
    BalanceReport rep;
    const Vector w = inverse_weights(d, probs, t);
    const double n = static_cast<double>(d.n());
    rep.weight_sum_residual = std::abs(w.mean() - 1.0);
    for (Index j = 1; j < d.f.cols(); ++j) {
        const auto fj = d.f.col(j);
        const double mean = fj.mean();
        const double sd = std::sqrt((fj.array() - mean).square().mean());
        const double raw = w.dot(fj) / n;
        const double res = std::abs(raw - mean);
        rep.residuals.push_back(res);
        rep.standardized_differences.push_back((raw / w.mean() - mean) / sd);
        rep.max_residual = std::max(rep.max_residual, res);
    }
    rep.mascd = mascd(d, probs, t);
    rep.rv = rv(d, probs, t);
    rep.balance_bound = c == Constraint::OneToZero ? std::sqrt(static_cast<double>(d.k - 1)) * lambda : lambda;
    return rep;
}

VerifyReport verify_fit(const Dataset& d, const PsFit& ps, const OrFit& outcome, const EstimateReport& report)
{
    const double tol_coef = SolveConfig{}.tol_coef;
    const int t = report.target;
    const Matrix probs = predict_probs(ps.model, d.f);
    const bool calibrated = ps.model.method == PsMethod::Rcal;
    VerifyReport out;
    auto add = [&](std::string name, double value, double bound, bool informational) {
        Check c{std::move(name), value, bound, value <= bound, informational};
        if (!c.informational && !c.passed) {
            out.passed = false;
        }
        out.checks.push_back(std::move(c));
    };

    const double ps_tol = 100.0 * tol_coef * std::max(ps.solve.last_b, 1e-3);
    const BalanceReport bal = balance_report(d, probs, t, ps.model.lambda, ps.model.constraint);
    add("weight_sum_residual", bal.weight_sum_residual, ps_tol, !calibrated);
    add("balance_residual", bal.max_residual, bal.balance_bound + ps_tol, !calibrated);

    const Matrix means = predict_means(outcome.model, d.f);
    const Vector rt = indicator(d, t);
    double or_b = 0.0;
    for (const auto& s : outcome.solves) {
        or_b = std::max(or_b, s.last_b);
    }
    const double or_tol = 100.0 * tol_coef * std::max(or_b, 1e-3);
    const bool rwl = outcome.model.method == OrMethod::Rwl;
    if (rwl) {
        double worst = 0.0;
        for (std::size_t c = 0; c < outcome.model.columns.size(); ++c) {
            const int k = outcome.model.columns[c];
            const Vector resid = rt.cwiseProduct(probs.col(k).cwiseQuotient(probs.col(t)))
                                     .cwiseProduct(d.y - means.col(static_cast<Index>(c)));
            worst = std::max(worst, std::abs(resid.mean()));
        }
        add("outcome_orthogonality", worst, or_tol, false);
    }

    // mu_hat against the range of observed outcomes in group t and fitted
    // copies in the other groups.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index i = 0; i < d.n(); ++i) {
        const int ti = d.t[static_cast<std::size_t>(i)];
        double v = 0.0;
        if (ti == t) {
            v = d.y(i);
        } else if (rwl) {
            const auto pos = std::find(outcome.model.columns.begin(), outcome.model.columns.end(), ti) -
                             outcome.model.columns.begin();
            v = means(i, pos);
        } else {
            v = means(i, t);
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double excess = std::max({lo - report.mu_hat, report.mu_hat - hi, 0.0});
    add("boundedness", excess, or_tol, !(calibrated && rwl));

    double recomposed = 0.0;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] == t) {
            recomposed += d.y(i);
        }
    }
    recomposed /= static_cast<double>(d.n());
    const auto sizes = d.group_sizes();
    for (const auto& [k, nu] : report.nu_hat) {
        recomposed += nu * static_cast<double>(sizes[static_cast<std::size_t>(k)]) / static_cast<double>(d.n());
    }
    add("decomposition", std::abs(recomposed - report.mu_hat), 1e-10 * std::max(1.0, std::abs(report.mu_hat)),
        false);
    return out;
}

} // namespace mcal
