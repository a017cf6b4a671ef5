#include "mcal/estimands.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <sstream>

namespace mcal {

Interval EstimateReport::ci(double level) const
{
    return wald_ci(mu_hat, v_hat, influence.size(), level);
}

EstimateReport aipw_mu(const Dataset& d, const Matrix& probs, const Matrix& copies, int t,
                       std::string method)
{
    const Index n = d.n();
    if (t < 0 || t >= d.k) {
        throw ValidationError("target treatment outside 0..K-1");
    }
    if (probs.rows() != n || probs.cols() != d.k || copies.rows() != n || copies.cols() != d.k) {
        throw ValidationError("propensity or outcome matrix does not match the dataset");
    }
    for (Index i = 0; i < n; ++i) {
        if (!(probs(i, t) >= kMinProbability)) {
            std::ostringstream msg;
            msg << "extreme weight: fitted probability of treatment " << t << " is " << probs(i, t)
                << " at row " << i;
            throw NumericalError(msg.str());
        }
    }
    EstimateReport rep;
    rep.target = t;
    rep.method = std::move(method);
    rep.phi_k = Matrix::Zero(n, d.k);
    rep.influence.resize(n);
    for (Index i = 0; i < n; ++i) {
        const int ti = d.t[static_cast<std::size_t>(i)];
        const double rt = ti == t ? 1.0 : 0.0;
        double phi = rt * d.y(i);
        for (int k = 0; k < d.k; ++k) {
            if (k == t) {
                continue;
            }
            const double ratio = rt * probs(i, k) / probs(i, t);
            const double rk = ti == k ? 1.0 : 0.0;
            const double term = ratio * d.y(i) - (ratio - rk) * copies(i, k);
            rep.phi_k(i, k) = term;
            phi += term;
        }
        rep.influence(i) = phi;
    }
    rep.mu_hat = rep.influence.mean();
    rep.v_hat = (rep.influence.array() - rep.mu_hat).square().mean();
    for (int k = 0; k < d.k; ++k) {
        if (k != t) {
            const NuEstimate nu = aipw_nu(d, rep, k);
            rep.nu_hat[k] = nu.nu_hat;
            rep.u_hat[k] = nu.u_hat;
        }
    }
    return rep;
}

EstimateReport aipw_mu_single(const Dataset& d, const Matrix& probs, const Vector& m, int t,
                              std::string method)
{
    if (m.size() != d.n()) {
        throw ValidationError("outcome prediction length does not match the dataset");
    }
    const Matrix copies = m.replicate(1, d.k);
    return aipw_mu(d, probs, copies, t, std::move(method));
}

NuEstimate aipw_nu(const Dataset& d, const EstimateReport& report, int k)
{
    if (k == report.target) {
        throw ValidationError("nu_t^(k) requires k != t; use group_mean for k = t");
    }
    if (k < 0 || k >= d.k) {
        throw ValidationError("treatment level outside 0..K-1");
    }
    const Index n = d.n();
    Vector rk(n);
    for (Index i = 0; i < n; ++i) {
        rk(i) = d.t[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
    }
    const double pk = rk.mean();
    NuEstimate out;
    out.nu_hat = report.phi_k.col(k).mean() / pk;
    out.u_hat = (report.phi_k.col(k) - rk * out.nu_hat).array().square().mean() / (pk * pk);
    return out;
}

double group_mean(const Dataset& d, int k)
{
    double total = 0.0;
    Index count = 0;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] == k) {
            total += d.y(i);
            ++count;
        }
    }
    if (count == 0) {
        throw ValidationError("treatment level has no rows");
    }
    return total / static_cast<double>(count);
}

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("normal quantile requires 0 < p < 1");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval wald_ci(double estimate, double variance, Index n, double level)
{
    if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError("confidence level must lie in (0, 1)");
    }
    if (!(variance >= 0.0) || n < 1) {
        throw ValidationError("variance must be non-negative and n positive");
    }
    const double half = normal_quantile(0.5 + level / 2.0) * std::sqrt(variance / static_cast<double>(n));
    return {estimate - half, estimate + half};
}

Contrast ate_contrast(const EstimateReport& a, const EstimateReport& b, double level)
{
    if (a.influence.size() != b.influence.size()) {
        throw ValidationError("influence vectors have different lengths");
    }
    Contrast c;
    c.diff = a.mu_hat - b.mu_hat;
    const Vector centred = (a.influence.array() - a.mu_hat) - (b.influence.array() - b.mu_hat);
    c.variance = centred.squaredNorm() / static_cast<double>(centred.size());
    c.ci = wald_ci(c.diff, c.variance, a.influence.size(), level);
    return c;
}

} // namespace mcal
