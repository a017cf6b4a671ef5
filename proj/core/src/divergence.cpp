#include "mcal/divergence.hpp"

#include "mcal/propensity.hpp"

#include <cmath>

namespace mcal {

namespace {

void check_shapes(const Matrix& r, const Matrix& h)
{
    if (r.rows() != h.rows() || r.cols() != h.cols() || h.cols() < 2) {
        throw ValidationError("indicator and predictor matrices must both be n x K with K >= 2");
    }
}

void check_target(int t, Index k)
{
    if (t < 0 || t >= k) {
        throw ValidationError("target treatment outside 0..K-1");
    }
}

} // namespace

double kappa_cal(const Matrix& r, const Matrix& h, int t)
{
    check_shapes(r, h);
    check_target(t, h.cols());
    double total = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
        for (Index k = 0; k < h.cols(); ++k) {
            if (k == t) {
                continue;
            }
            const double d = h(i, k) - h(i, t);
            total += r(i, t) * std::exp(d) - r(i, k) * d;
        }
    }
    return total / static_cast<double>(h.rows());
}

double kappa_ml(const Matrix& r, const Matrix& h)
{
    check_shapes(r, h);
    double total = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
        const double mx = h.row(i).maxCoeff();
        const double lse = mx + std::log((h.row(i).array() - mx).exp().sum());
        total += lse - r.row(i).dot(h.row(i));
    }
    return total / static_cast<double>(h.rows());
}

Matrix kappa_cal_gradient(const Matrix& r, const Matrix& h, int t)
{
    check_shapes(r, h);
    check_target(t, h.cols());
    const double n = static_cast<double>(h.rows());
    Matrix g = Matrix::Zero(h.rows(), h.cols());
    for (Index i = 0; i < h.rows(); ++i) {
        for (Index k = 0; k < h.cols(); ++k) {
            if (k == t) {
                continue;
            }
            const double gk = (r(i, t) * std::exp(h(i, k) - h(i, t)) - r(i, k)) / n;
            g(i, k) = gk;
            g(i, t) -= gk;
        }
    }
    return g;
}

Matrix kappa_ml_gradient(const Matrix& r, const Matrix& h)
{
    check_shapes(r, h);
    return (softmax(h) - r) / static_cast<double>(h.rows());
}

double bregman_cal(const Matrix& r, const Matrix& h, const Matrix& hp, int t)
{
    const Matrix g = kappa_cal_gradient(r, hp, t);
    return kappa_cal(r, h, t) - kappa_cal(r, hp, t) - (g.array() * (h - hp).array()).sum();
}

double bregman_ml(const Matrix& r, const Matrix& h, const Matrix& hp)
{
    const Matrix g = kappa_ml_gradient(r, hp);
    return kappa_ml(r, h) - kappa_ml(r, hp) - (g.array() * (h - hp).array()).sum();
}

double kl_divergence(const Vector& rho, const Vector& rho_p)
{
    if (rho.size() != rho_p.size()) {
        throw ValidationError("probability vectors differ in length");
    }
    double total = 0.0;
    for (Index k = 0; k < rho.size(); ++k) {
        if (rho_p(k) > 0.0) {
            total += rho_p(k) * std::log(rho_p(k) / rho(k));
        }
    }
    return total;
}

double k_divergence(double c, double c_p)
{
    const double ratio = c_p / c;
    return ratio - 1.0 - std::log(ratio);
}

double relative_error_sq(double c, double c_p)
{
    const double e = c_p / c - 1.0;
    return e * e;
}

double cal_divergence_form(const Matrix& r, const Matrix& h, const Matrix& hp, int t)
{
    check_shapes(r, h);
    check_shapes(r, hp);
    check_target(t, h.cols());
    const Matrix pi = softmax(h);
    const Matrix pip = softmax(hp);
    double total = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
        const double kd = k_divergence(pi(i, t), pip(i, t));
        const double ld = kl_divergence(pi.row(i).transpose(), pip.row(i).transpose());
        total += r(i, t) / pip(i, t) * (kd + ld);
    }
    return total / static_cast<double>(h.rows());
}

double ml_divergence_form(const Matrix& h, const Matrix& hp)
{
    if (h.rows() != hp.rows() || h.cols() != hp.cols()) {
        throw ValidationError("predictor matrices differ in shape");
    }
    const Matrix pi = softmax(h);
    const Matrix pip = softmax(hp);
    double total = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
        total += kl_divergence(pi.row(i).transpose(), pip.row(i).transpose());
    }
    return total / static_cast<double>(h.rows());
}

Matrix cal_fisher_hessian(const Vector& pi, int t)
{
    check_target(t, pi.size());
    const Index k = pi.size();
    Matrix h = Matrix::Zero(k, k);
    for (Index j = 0; j < k; ++j) {
        if (j == t) {
            continue;
        }
        h(j, j) = pi(j);
        h(j, t) = -pi(j);
        h(t, j) = -pi(j);
    }
    h(t, t) = 1.0 - pi(t);
    return h;
}

Matrix cal_hessian_bound(const Vector& pi, int t)
{
    check_target(t, pi.size());
    Vector d = 2.0 * pi;
    d(t) = 2.0 * (1.0 - pi(t));
    return d.asDiagonal();
}

} // namespace mcal
