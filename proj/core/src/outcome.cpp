#include "mcal/outcome.hpp"

#include <cmath>

namespace mcal {

namespace {

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix start_or_zero(const Matrix& init, Index rows, Index cols)
{
    if (init.size() == 0) {
        return Matrix::Zero(rows, cols);
    }
    if (init.rows() != rows || init.cols() != cols) {
        throw ValidationError("warm start has the wrong shape");
    }
    return init;
}

} // namespace

std::string to_string(Link l)
{
    return l == Link::Identity ? "identity" : "logit";
}

std::string to_string(OrMethod m)
{
    switch (m) {
    case OrMethod::Rwl:
        return "RWL";
    case OrMethod::Rmls:
        return "RMLs";
    case OrMethod::Rmlg:
        return "RMLg";
    }
    return "unknown";
}

double inverse_link(Link link, double eta)
{
    return link == Link::Identity ? eta : logistic(eta);
}

Matrix predict_means(const OrModel& model, const Matrix& f)
{
    if (f.cols() != model.coef.rows()) {
        throw ValidationError("design column count does not match the outcome model");
    }
    Matrix eta = f * model.coef;
    if (model.link == Link::Logit) {
        eta = eta.unaryExpr([](double x) { return logistic(x); });
    }
    return eta;
}

WeightedGlmAdapter::WeightedGlmAdapter(const Matrix& f, const Vector& y, Matrix w, Matrix v, Link link)
    : f_(f), y_(y), w_(std::move(w)), v_(std::move(v)), link_(link)
{
    if (w_.rows() != f.rows() || v_.rows() != f.rows() || v_.cols() != w_.cols() || y.size() != f.rows()) {
        throw ValidationError("weighted GLM inputs have inconsistent shapes");
    }
}

double WeightedGlmAdapter::loss(const Matrix& eta) const
{
    double total = 0.0;
    for (Index c = 0; c < eta.cols(); ++c) {
        for (Index i = 0; i < eta.rows(); ++i) {
            const double w = w_(i, c);
            if (w == 0.0) {
                continue;
            }
            const double e = eta(i, c);
            if (link_ == Link::Identity) {
                const double r = y_(i) - e;
                total += 0.5 * w * r * r;
            } else {
                total += w * (softplus(e) - y_(i) * e);
            }
        }
    }
    return total / static_cast<double>(eta.rows());
}

void WeightedGlmAdapter::gradient(const Matrix& eta, Matrix& g) const
{
    if (link_ == Link::Identity) {
        g = w_.array() * (eta.colwise() - y_).array();
        return;
    }
    g.resize(eta.rows(), eta.cols());
    for (Index c = 0; c < eta.cols(); ++c) {
        for (Index i = 0; i < eta.rows(); ++i) {
            g(i, c) = w_(i, c) * (logistic(eta(i, c)) - y_(i));
        }
    }
}

void WeightedGlmAdapter::curvature(const Matrix& eta, Matrix& v) const
{
    // Observed Hessian w psi''(eta); the Fisher weights v only enter the scalar bound.
    if (link_ == Link::Identity) {
        v = w_;
        return;
    }
    v.resize(eta.rows(), eta.cols());
    for (Index c = 0; c < eta.cols(); ++c) {
        for (Index i = 0; i < eta.rows(); ++i) {
            const double mu = logistic(eta(i, c));
            v(i, c) = w_(i, c) * mu * (1.0 - mu);
        }
    }
}

double WeightedGlmAdapter::majorizer(const Matrix& eta) const
{
    double best = 0.0;
    if (link_ == Link::Identity) {
        best = v_.maxCoeff();
    } else {
        for (Index c = 0; c < eta.cols(); ++c) {
            for (Index i = 0; i < eta.rows(); ++i) {
                const double mu = logistic(eta(i, c));
                best = std::max(best, v_(i, c) * mu * (1.0 - mu));
            }
        }
    }
    return std::max(best, 1e-12);
}

Matrix rwl_weights(const Dataset& d, const Matrix& probs, int t)
{
    if (probs.rows() != d.n() || probs.cols() != d.k) {
        throw ValidationError("propensity matrix does not match the dataset");
    }
    Matrix w = Matrix::Zero(d.n(), d.k - 1);
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] != t) {
            continue;
        }
        Index c = 0;
        for (int k = 0; k < d.k; ++k) {
            if (k != t) {
                w(i, c++) = probs(i, k) / probs(i, t);
            }
        }
    }
    return w;
}

void check_outcome_for_link(const Vector& y, Link link)
{
    if (link == Link::Logit && (y.minCoeff() < 0.0 || y.maxCoeff() > 1.0)) {
        throw ValidationError("logit link requires outcomes in [0, 1]");
    }
}

WeightedGlmAdapter make_rwl_adapter(const Dataset& d, int t, const Matrix& probs, Link link)
{
    if (t < 0 || t >= d.k) {
        throw ValidationError("target treatment outside 0..K-1");
    }
    check_outcome_for_link(d.y, link);
    Matrix w = rwl_weights(d, probs, t);
    Matrix v(d.n(), d.k - 1);
    Index c = 0;
    for (int k = 0; k < d.k; ++k) {
        if (k != t) {
            v.col(c++) = probs.col(k);
        }
    }
    return WeightedGlmAdapter(d.f, d.y, std::move(w), std::move(v), link);
}

double wl_loss(const Dataset& d, int t, const Matrix& probs, const Matrix& coef, Link link)
{
    return make_rwl_adapter(d, t, probs, link).eval(coef);
}

OrFit fit_rwl(const Dataset& d, int t, const Matrix& probs, double lambda, Link link,
              const SolveConfig& cfg, const Matrix& init)
{
    const WeightedGlmAdapter adapter = make_rwl_adapter(d, t, probs, link);
    SolveConfig local = cfg;
    local.lambda = lambda;
    OrFit fit;
    fit.solves.push_back(solve(adapter, start_or_zero(init, d.f.cols(), d.k - 1), local));
    fit.model.method = OrMethod::Rwl;
    fit.model.link = link;
    fit.model.target = t;
    fit.model.coef = fit.solves.front().coef;
    for (int k = 0; k < d.k; ++k) {
        if (k != t) {
            fit.model.columns.push_back(k);
        }
    }
    fit.model.lambdas = {lambda};
    return fit;
}

SolveResult fit_rmls_group(const Dataset& d, int t, double lambda, Link link, const SolveConfig& cfg,
                           const Matrix& init)
{
    check_outcome_for_link(d.y, link);
    std::vector<Index> rows;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.t[static_cast<std::size_t>(i)] == t) {
            rows.push_back(i);
        }
    }
    if (rows.empty()) {
        throw ValidationError("treatment group " + std::to_string(t) + " has no rows");
    }
    const auto nt = static_cast<Index>(rows.size());
    Matrix f(nt, d.f.cols());
    Vector y(nt);
    for (Index r = 0; r < nt; ++r) {
        f.row(r) = d.f.row(rows[static_cast<std::size_t>(r)]);
        y(r) = d.y(rows[static_cast<std::size_t>(r)]);
    }
    const WeightedGlmAdapter adapter(f, y, Matrix::Ones(nt, 1), Matrix::Ones(nt, 1), link);
    // The group loss averages over n_t rows instead of n, so the penalty is
    // rescaled to keep the same minimizer.
    SolveConfig local = cfg;
    local.lambda = lambda * static_cast<double>(d.n()) / static_cast<double>(nt);
    SolveResult res = solve(adapter, start_or_zero(init, d.f.cols(), 1), local);
    res.objective *= static_cast<double>(nt) / static_cast<double>(d.n());
    for (double& v : res.trace) {
        v *= static_cast<double>(nt) / static_cast<double>(d.n());
    }
    return res;
}

OrFit fit_rmls(const Dataset& d, const std::vector<double>& lambda_per_t, Link link, const SolveConfig& cfg)
{
    if (static_cast<int>(lambda_per_t.size()) != d.k) {
        throw ValidationError("fit_rmls needs one penalty per treatment");
    }
    OrFit fit;
    fit.model.method = OrMethod::Rmls;
    fit.model.link = link;
    fit.model.target = -1;
    fit.model.coef.resize(d.f.cols(), d.k);
    for (int t = 0; t < d.k; ++t) {
        fit.solves.push_back(fit_rmls_group(d, t, lambda_per_t[static_cast<std::size_t>(t)], link, cfg));
        fit.model.coef.col(t) = fit.solves.back().coef.col(0);
        fit.model.columns.push_back(t);
    }
    fit.model.lambdas = lambda_per_t;
    return fit;
}

OrFit fit_rmlg(const Dataset& d, double lambda, Link link, const SolveConfig& cfg, const Matrix& init)
{
    check_outcome_for_link(d.y, link);
    Matrix r = treatment_indicators(d);
    const WeightedGlmAdapter adapter(d.f, d.y, r, r, link);
    SolveConfig local = cfg;
    local.lambda = lambda;
    OrFit fit;
    fit.solves.push_back(solve(adapter, start_or_zero(init, d.f.cols(), d.k), local));
    fit.model.method = OrMethod::Rmlg;
    fit.model.link = link;
    fit.model.target = -1;
    fit.model.coef = fit.solves.front().coef;
    for (int t = 0; t < d.k; ++t) {
        fit.model.columns.push_back(t);
    }
    fit.model.lambdas = {lambda};
    return fit;
}

double ml_outcome_loss(const Dataset& d, int t, const Vector& alpha, Link link)
{
    Matrix w = Matrix::Zero(d.n(), 1);
    for (Index i = 0; i < d.n(); ++i) {
        w(i, 0) = d.t[static_cast<std::size_t>(i)] == t ? 1.0 : 0.0;
    }
    const WeightedGlmAdapter adapter(d.f, d.y, w, w, link);
    return adapter.eval(alpha);
}

} // namespace mcal
