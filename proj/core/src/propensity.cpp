#include "mcal/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcal {

namespace {

constexpr double kMaxLogRatio = 700.0;

bool separated(const Matrix& h)
{
    return h.size() > 0 && h.cwiseAbs().maxCoeff() > kMaxLogRatio;
}

void guard_separation(const Matrix& h)
{
    if (h.size() > 0 && h.cwiseAbs().maxCoeff() > kMaxLogRatio) {
        throw NumericalError(
            "separation suspected: linear predictor exceeds 700 in magnitude; reduce the model "
            "or increase the penalty");
    }
}

std::vector<int> other_levels(int k, int skip)
{
    std::vector<int> out;
    for (int c = 0; c < k; ++c) {
        if (c != skip) {
            out.push_back(c);
        }
    }
    return out;
}

void check_target(int t, int k)
{
    if (t < 0 || t >= k) {
        throw ValidationError("target treatment outside 0..K-1");
    }
}

Matrix drop_column_expand(const Matrix& free, int k, int ref)
{
    Matrix gamma = Matrix::Zero(free.rows(), k);
    Index c = 0;
    for (int col = 0; col < k; ++col) {
        if (col != ref) {
            gamma.col(col) = free.col(c++);
        }
    }
    return gamma;
}

Matrix drop_column(const Matrix& m, int ref);

// Full gamma -> free columns relative to the reference column.
Matrix drop_column_reduce(const Matrix& gamma, int ref)
{
    return drop_column(gamma.colwise() - gamma.col(ref), ref);
}

Matrix drop_column(const Matrix& m, int ref)
{
    Matrix out(m.rows(), m.cols() - 1);
    Index c = 0;
    for (Index col = 0; col < m.cols(); ++col) {
        if (col != ref) {
            out.col(c++) = m.col(col);
        }
    }
    return out;
}

Matrix center_rows(const Matrix& gamma)
{
    return gamma.colwise() - gamma.rowwise().mean();
}

} // namespace

std::string to_string(Constraint c)
{
    return c == Constraint::OneToZero ? "one_to_zero" : "sum_to_zero";
}

std::string to_string(PsMethod m)
{
    return m == PsMethod::Rcal ? "RCAL" : "RML";
}

Matrix softmax(const Matrix& eta)
{
    Matrix out = eta.colwise() - eta.rowwise().maxCoeff();
    out = out.array().exp().matrix();
    const Vector sums = out.rowwise().sum();
    return out.array().colwise() / sums.array();
}

Matrix predict_probs(const PsModel& model, const Matrix& f)
{
    if (f.cols() != model.gamma.rows()) {
        throw ValidationError("design column count does not match the propensity model");
    }
    return softmax(f * model.gamma);
}

double cal_loss(const Dataset& d, const Matrix& gamma, int t)
{
    check_target(t, d.k);
    const Matrix eta = d.f * gamma;
    double total = 0.0;
    for (Index i = 0; i < d.n(); ++i) {
        const int ti = d.t[static_cast<std::size_t>(i)];
        for (int k = 0; k < d.k; ++k) {
            if (k == t) {
                continue;
            }
            const double h = eta(i, k) - eta(i, t);
            if (std::abs(h) > kMaxLogRatio) {
                throw NumericalError("separation suspected: linear predictor exceeds 700 in magnitude");
            }
            if (ti == t) {
                total += std::exp(h);
            } else if (ti == k) {
                total -= h;
            }
        }
    }
    return total / static_cast<double>(d.n());
}

double ml_loss(const Dataset& d, const Matrix& gamma)
{
    const Matrix eta = d.f * gamma;
    double total = 0.0;
    for (Index i = 0; i < d.n(); ++i) {
        const double mx = eta.row(i).maxCoeff();
        const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
        total += lse - eta(i, d.t[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(d.n());
}

Matrix cal_gradient(const Dataset& d, const Matrix& gamma, int t)
{
    check_target(t, d.k);
    const Matrix eta = d.f * gamma;
    Matrix g = Matrix::Zero(d.n(), d.k);
    for (Index i = 0; i < d.n(); ++i) {
        const int ti = d.t[static_cast<std::size_t>(i)];
        for (int k = 0; k < d.k; ++k) {
            if (k == t) {
                continue;
            }
            const double gk = (ti == t ? std::exp(eta(i, k) - eta(i, t)) : 0.0) - (ti == k ? 1.0 : 0.0);
            g(i, k) += gk;
            g(i, t) -= gk;
        }
    }
    return d.f.transpose() * g / static_cast<double>(d.n());
}

Matrix ml_gradient(const Dataset& d, const Matrix& gamma)
{
    Matrix g = softmax(d.f * gamma) - treatment_indicators(d);
    return d.f.transpose() * g / static_cast<double>(d.n());
}

CalAdapter::CalAdapter(const Matrix& f, const std::vector<int>& t_codes, int k, int target, Constraint c)
    : f_(f), k_(k), target_(target), constraint_(c)
{
    check_target(target, k);
    const Index n = f.rows();
    r_ = Matrix::Zero(n, k - 1);
    rt_ = Vector::Zero(n);
    const auto others = other_levels(k, target);
    for (Index i = 0; i < n; ++i) {
        const int ti = t_codes[static_cast<std::size_t>(i)];
        if (ti == target) {
            rt_(i) = 1.0;
        } else {
            const auto pos = std::find(others.begin(), others.end(), ti) - others.begin();
            r_(i, pos) = 1.0;
        }
    }
}

void CalAdapter::log_ratios(const Matrix& eta, Matrix& h, bool guard) const
{
    if (constraint_ == Constraint::OneToZero) {
        h = eta;
    } else {
        h.resize(eta.rows(), k_ - 1);
        Index c = 0;
        for (int k = 0; k < k_; ++k) {
            if (k != target_) {
                h.col(c++) = eta.col(k) - eta.col(target_);
            }
        }
    }
    if (guard) {
        guard_separation(h);
    }
}

double CalAdapter::loss(const Matrix& eta) const
{
    Matrix h;
    log_ratios(eta, h, false);
    if (separated(h)) {
        // Trial points this far out are rejected by the line search.
        return std::numeric_limits<double>::infinity();
    }
    const double expo = (h.array().exp().colwise() * rt_.array()).sum();
    const double lin = (r_.array() * h.array()).sum();
    return (expo - lin) / static_cast<double>(eta.rows());
}

void CalAdapter::gradient(const Matrix& eta, Matrix& g) const
{
    Matrix h;
    log_ratios(eta, h);
    Matrix gh = (h.array().exp().colwise() * rt_.array()).matrix() - r_;
    if (constraint_ == Constraint::OneToZero) {
        g = std::move(gh);
        return;
    }
    g.resize(eta.rows(), k_);
    g.col(target_) = -gh.rowwise().sum();
    Index c = 0;
    for (int k = 0; k < k_; ++k) {
        if (k != target_) {
            g.col(k) = gh.col(c++);
        }
    }
}

double CalAdapter::majorizer(const Matrix& eta) const
{
    Matrix h;
    log_ratios(eta, h);
    // Fitted pi_k for k != t, with pi_t the complement.
    double best = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
        const double mx = std::max(0.0, h.row(i).maxCoeff());
        const Eigen::ArrayXd e = (h.row(i).array() - mx).exp();
        const double denom = std::exp(-mx) + e.sum();
        if (constraint_ == Constraint::OneToZero) {
            best = std::max(best, e.maxCoeff() / denom);
        } else {
            best = std::max(best, 2.0 * e.sum() / denom);
        }
    }
    return std::max(best, 1e-12);
}

void CalAdapter::curvature(const Matrix& eta, Matrix& v) const
{
    Matrix h;
    log_ratios(eta, h);
    // Observed Hessian R_t exp(h_k), diagonal in the log ratios.
    Matrix hk = (h.array().exp().colwise() * rt_.array()).matrix();
    if (constraint_ == Constraint::OneToZero) {
        v = std::move(hk);
        return;
    }
    // In all K predictors: +w_k on (k, k), -w_k on (k, t) and (t, k), and
    // sum_k w_k on (t, t).
    const Index k = k_;
    v = Matrix::Zero(h.rows(), k * k);
    Index c = 0;
    for (int j = 0; j < k_; ++j) {
        if (j == target_) {
            continue;
        }
        v.col(j + j * k) = hk.col(c);
        v.col(j + target_ * k) = -hk.col(c);
        v.col(target_ + j * k) = -hk.col(c);
        v.col(target_ + target_ * k) += hk.col(c);
        ++c;
    }
}

bool CalAdapter::diverged(const Matrix& eta) const
{
    // pi_t = 1 / (1 + sum_k exp(h_k)) below kMinProbability on some row.
    Matrix h;
    log_ratios(eta, h, false);
    const double limit = std::log(1.0 / kMinProbability);
    for (Index i = 0; i < h.rows(); ++i) {
        const double mx = std::max(0.0, h.row(i).maxCoeff());
        if (mx + std::log(std::exp(-mx) + (h.row(i).array() - mx).exp().sum()) > limit) {
            return true;
        }
    }
    return false;
}

void CalAdapter::normalize(Matrix& coef) const
{
    if (constraint_ == Constraint::SumToZero) {
        coef.row(0).array() -= coef.row(0).mean();
    }
}

Matrix CalAdapter::expand(const Matrix& free) const
{
    return constraint_ == Constraint::OneToZero ? drop_column_expand(free, k_, target_) : free;
}

Matrix CalAdapter::reduce(const Matrix& gamma) const
{
    return constraint_ == Constraint::OneToZero ? drop_column_reduce(gamma, target_) : center_rows(gamma);
}

MlAdapter::MlAdapter(const Matrix& f, const std::vector<int>& t_codes, int k, int reference, Constraint c)
    : f_(f), k_(k), reference_(reference), constraint_(c)
{
    check_target(reference, k);
    r_ = Matrix::Zero(f.rows(), k);
    for (Index i = 0; i < f.rows(); ++i) {
        r_(i, t_codes[static_cast<std::size_t>(i)]) = 1.0;
    }
}

void MlAdapter::full_eta(const Matrix& eta, Matrix& full, bool guard) const
{
    if (constraint_ == Constraint::OneToZero) {
        full = drop_column_expand(eta, k_, reference_);
    } else {
        full = eta;
    }
    if (guard) {
        guard_separation(full);
    }
}

double MlAdapter::loss(const Matrix& eta) const
{
    Matrix full;
    full_eta(eta, full, false);
    if (separated(full)) {
        return std::numeric_limits<double>::infinity();
    }
    const Vector mx = full.rowwise().maxCoeff();
    const Vector lse =
        mx.array() + (full.colwise() - mx).array().exp().rowwise().sum().log();
    const double lin = (r_.array() * full.array()).sum();
    return (lse.sum() - lin) / static_cast<double>(eta.rows());
}

void MlAdapter::gradient(const Matrix& eta, Matrix& g) const
{
    Matrix full;
    full_eta(eta, full);
    const Matrix gf = softmax(full) - r_;
    g = constraint_ == Constraint::OneToZero ? drop_column(gf, reference_) : gf;
}

void MlAdapter::curvature(const Matrix& eta, Matrix& v) const
{
    Matrix full;
    full_eta(eta, full);
    const Matrix p = softmax(full);
    // diag(pi) - pi pi' over the free columns.
    std::vector<int> cols;
    for (int k = 0; k < k_; ++k) {
        if (constraint_ == Constraint::SumToZero || k != reference_) {
            cols.push_back(k);
        }
    }
    const Index m = static_cast<Index>(cols.size());
    v.resize(p.rows(), m * m);
    for (Index c = 0; c < m; ++c) {
        for (Index d = 0; d < m; ++d) {
            const auto pc = p.col(cols[static_cast<std::size_t>(c)]).array();
            const auto pd = p.col(cols[static_cast<std::size_t>(d)]).array();
            if (c == d) {
                v.col(c + d * m) = (pc * (1.0 - pc)).matrix();
            } else {
                v.col(c + d * m) = (-pc * pd).matrix();
            }
        }
    }
}

bool MlAdapter::diverged(const Matrix& eta) const
{
    Matrix full;
    full_eta(eta, full, false);
    return (softmax(full).array() < kMinProbability).any();
}

void MlAdapter::normalize(Matrix& coef) const
{
    if (constraint_ == Constraint::SumToZero) {
        coef.row(0).array() -= coef.row(0).mean();
    }
}

Matrix MlAdapter::expand(const Matrix& free) const
{
    return constraint_ == Constraint::OneToZero ? drop_column_expand(free, k_, reference_) : free;
}

Matrix MlAdapter::reduce(const Matrix& gamma) const
{
    return constraint_ == Constraint::OneToZero ? drop_column_reduce(gamma, reference_)
                                                 : center_rows(gamma);
}

PsFit fit_rcal_ps(const Dataset& d, int t, double lambda, Constraint c, const SolveConfig& cfg,
                  const Matrix& init)
{
    CalAdapter adapter(d.f, d.t, d.k, t, c);
    SolveConfig local = cfg;
    local.lambda = lambda;
    const Matrix start = init.size() == 0 ? Matrix::Zero(d.f.cols(), adapter.responses())
                                          : adapter.reduce(init);
    PsFit fit;
    fit.solve = solve(adapter, start, local);
    fit.model.gamma = adapter.expand(fit.solve.coef);
    fit.model.method = PsMethod::Rcal;
    fit.model.constraint = c;
    fit.model.target = t;
    fit.model.reference = t;
    fit.model.lambda = lambda;
    return fit;
}

PsFit fit_rml_ps(const Dataset& d, double lambda, Constraint c, const SolveConfig& cfg,
                 const Matrix& init, int reference)
{
    MlAdapter adapter(d.f, d.t, d.k, reference, c);
    SolveConfig local = cfg;
    local.lambda = lambda;
    const Matrix start = init.size() == 0 ? Matrix::Zero(d.f.cols(), adapter.responses())
                                          : adapter.reduce(init);
    PsFit fit;
    fit.solve = solve(adapter, start, local);
    fit.model.gamma = adapter.expand(fit.solve.coef);
    fit.model.method = PsMethod::Rml;
    fit.model.constraint = c;
    fit.model.target = -1;
    fit.model.reference = reference;
    fit.model.lambda = lambda;
    return fit;
}

} // namespace mcal
