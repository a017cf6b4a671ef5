#include "mcal/simulation.hpp"

#include "mcal/parallel.hpp"
#include "mcal/propensity.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mcal {

namespace {

constexpr double kLogitCoef[3][4] = {
    {1.0, -0.5, -0.25, 0.125},
    {-0.5, -0.25, 0.125, 1.0},
    {-0.25, 0.125, 1.0, -0.5},
};

// Outcome mean for treatment t: t + Z_{t+1} - Z_{2t+5} - Z_{2t+6} + Z_{2t+7}
// (1-based covariate indices).
double outcome_mean(int t, const Eigen::Ref<const Eigen::RowVectorXd>& z)
{
    return t + z(t) - z(2 * t + 4) - z(2 * t + 5) + z(2 * t + 6);
}

double normal_pdf(double x)
{
    return std::exp(-0.5 * x * x) / boost::math::constants::root_two_pi<double>();
}

WMoments compute_w_moments()
{
    using boost::math::quadrature::gauss_kronrod;
    const double inf = std::numeric_limits<double>::infinity();
    auto w = [](double x) { return x + (x > -1.0 ? (x + 1.0) * (x + 1.0) : 0.0); };
    auto moment = [&](auto g) {
        const double left = gauss_kronrod<double, 61>::integrate(
            [&](double x) { return g(w(x)) * normal_pdf(x); }, -inf, -1.0, 15, 1e-14);
        const double right = gauss_kronrod<double, 61>::integrate(
            [&](double x) { return g(w(x)) * normal_pdf(x); }, -1.0, inf, 15, 1e-14);
        return left + right;
    };
    const double m1 = moment([](double v) { return v; });
    const double m2 = moment([](double v) { return v * v; });
    return {m1, m2 - m1 * m1};
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t replication, std::uint64_t stream)
{
    std::seed_seq seq{seed, replication, stream};
    return std::mt19937_64(seq);
}

} // namespace

ScenarioId parse_scenario(const std::string& s)
{
    if (s == "C1" || s == "c1") {
        return ScenarioId::C1;
    }
    if (s == "C2" || s == "c2") {
        return ScenarioId::C2;
    }
    if (s == "C3" || s == "c3") {
        return ScenarioId::C3;
    }
    throw ValidationError("unknown configuration '" + s + "' (expected C1, C2 or C3)");
}

std::string to_string(ScenarioId c)
{
    switch (c) {
    case ScenarioId::C1:
        return "C1";
    case ScenarioId::C2:
        return "C2";
    case ScenarioId::C3:
        return "C3";
    }
    return "unknown";
}

void SimConfig::validate() const
{
    if (p < kSimMinCovariates) {
        throw ValidationError("simulation needs p >= 13");
    }
    if (n < 100) {
        throw ValidationError("simulation needs n >= 100");
    }
    if (replications < 1) {
        throw ValidationError("simulation needs at least one replication");
    }
    if (methods.empty() || targets.empty()) {
        throw ValidationError("simulation needs at least one method and one target");
    }
    for (int t : targets) {
        if (t < 0 || t >= kSimTreatments) {
            throw ValidationError("simulation targets must lie in 0..3");
        }
    }
}

const WMoments& w_moments()
{
    static const WMoments moments = compute_w_moments();
    return moments;
}

Matrix gen_covariates(Index n, Index p, std::mt19937_64& rng)
{
    if (n < 1 || p < 1) {
        throw ValidationError("gen_covariates needs n, p >= 1");
    }
    std::normal_distribution<double> normal;
    const double rho = 0.5;
    const double innov = std::sqrt(1.0 - rho * rho);
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i) {
        double prev = normal(rng);
        x(i, 0) = prev;
        for (Index j = 1; j < p; ++j) {
            prev = rho * prev + innov * normal(rng);
            x(i, j) = prev;
        }
    }
    return x;
}

Matrix gen_covariates(Index n, Index p, std::uint64_t seed)
{
    auto rng = stream_rng(seed, 0, 0);
    return gen_covariates(n, p, rng);
}

Matrix dagger(const Matrix& x)
{
    const WMoments& m = w_moments();
    const double sd = std::sqrt(m.var);
    return x.unaryExpr([&](double v) {
        const double shifted = std::max(v + 1.0, 0.0);
        return (v + shifted * shifted - m.mean) / sd;
    });
}

Matrix true_logits(ScenarioId c, const Matrix& x)
{
    const Matrix z = c == ScenarioId::C3 ? dagger(x.leftCols(4)) : Matrix(x.leftCols(4));
    Matrix logits = Matrix::Zero(x.rows(), kSimTreatments);
    for (int k = 1; k < kSimTreatments; ++k) {
        for (int j = 0; j < 4; ++j) {
            logits.col(k) += kLogitCoef[k - 1][j] * z.col(j);
        }
    }
    return logits;
}

Matrix true_means(ScenarioId c, const Matrix& x)
{
    const Matrix z = c == ScenarioId::C2 ? dagger(x.leftCols(kSimMinCovariates))
                                         : Matrix(x.leftCols(kSimMinCovariates));
    Matrix means(x.rows(), kSimTreatments);
    for (Index i = 0; i < x.rows(); ++i) {
        for (int t = 0; t < kSimTreatments; ++t) {
            means(i, t) = outcome_mean(t, z.row(i));
        }
    }
    return means;
}

SimDraw gen_data(ScenarioId c, Index n, Index p, std::uint64_t seed, std::uint64_t replication)
{
    if (p < kSimMinCovariates) {
        throw ValidationError("simulation needs p >= 13");
    }
    auto rng = stream_rng(seed, replication, 0);
    const Matrix x = gen_covariates(n, p, rng);
    SimDraw draw;
    draw.probs = softmax(true_logits(c, x));
    draw.means = true_means(c, x);

    auto trng = stream_rng(seed, replication, 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    std::vector<int> t(static_cast<std::size_t>(n));
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        const double u = unif(trng);
        int level = kSimTreatments - 1;
        double acc = 0.0;
        for (int k = 0; k < kSimTreatments - 1; ++k) {
            acc += draw.probs(i, k);
            if (u < acc) {
                level = k;
                break;
            }
        }
        t[static_cast<std::size_t>(i)] = level;
    }
    for (Index i = 0; i < n; ++i) {
        y(i) = draw.means(i, t[static_cast<std::size_t>(i)]) + normal(trng);
    }
    const auto counts = [&] {
        std::vector<Index> cnt(kSimTreatments, 0);
        for (int v : t) {
            ++cnt[static_cast<std::size_t>(v)];
        }
        return cnt;
    }();
    if (std::any_of(counts.begin(), counts.end(), [](Index v) { return v == 0; })) {
        throw NumericalError("simulated dataset has an empty treatment group");
    }
    draw.data = from_covariates(std::move(y), std::move(t), x, kSimTreatments);
    return draw;
}

Truth compute_truth(ScenarioId c, Index draws, std::uint64_t seed)
{
    Truth truth;
    truth.mu = {0.0, 1.0, 2.0, 3.0};
    truth.draws = draws;
    const int k = kSimTreatments;
    truth.nu = Matrix::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    truth.nu_se = truth.nu;
    truth.proportions = Vector::Zero(k);
    truth.proportions_se = Vector::Zero(k);
    if (draws < 2) {
        return truth;
    }
    // Running sums of pi_k, pi_k^2, m_t pi_k, (m_t pi_k)^2 and m_t pi_k^2.
    Vector s_pi = Vector::Zero(k);
    Vector s_pi2 = Vector::Zero(k);
    Matrix s_mp = Matrix::Zero(k, k);
    Matrix s_mp2 = Matrix::Zero(k, k);
    Matrix s_cross = Matrix::Zero(k, k);
    auto rng = stream_rng(seed, std::numeric_limits<std::uint64_t>::max(), 2);
    const Index block = 100000;
    for (Index done = 0; done < draws; done += block) {
        const Index b = std::min(block, draws - done);
        const Matrix x = gen_covariates(b, kSimMinCovariates, rng);
        const Matrix pi = softmax(true_logits(c, x));
        const Matrix m = true_means(c, x);
        s_pi += pi.colwise().sum().transpose();
        s_pi2 += pi.array().square().colwise().sum().matrix().transpose();
        for (int t = 0; t < k; ++t) {
            for (int kk = 0; kk < k; ++kk) {
                const Eigen::ArrayXd mp = m.col(t).array() * pi.col(kk).array();
                s_mp(t, kk) += mp.sum();
                s_mp2(t, kk) += mp.square().sum();
                s_cross(t, kk) += (mp * pi.col(kk).array()).sum();
            }
        }
    }
    const double nd = static_cast<double>(draws);
    for (int kk = 0; kk < k; ++kk) {
        const double ep = s_pi(kk) / nd;
        const double vp = s_pi2(kk) / nd - ep * ep;
        truth.proportions(kk) = ep;
        truth.proportions_se(kk) = std::sqrt(vp / nd);
        for (int t = 0; t < k; ++t) {
            const double em = s_mp(t, kk) / nd;
            const double vm = s_mp2(t, kk) / nd - em * em;
            const double cov = s_cross(t, kk) / nd - em * ep;
            const double ratio = em / ep;
            // Delta method for a ratio of means.
            const double var = (vm - 2.0 * ratio * cov + ratio * ratio * vp) / (ep * ep);
            truth.nu(t, kk) = ratio;
            truth.nu_se(t, kk) = std::sqrt(std::max(var, 0.0) / nd);
        }
    }
    return truth;
}

const SimRow& SimSummary::row(Method m, int target) const
{
    for (const auto& r : rows) {
        if (r.method == m && r.target == target) {
            return r;
        }
    }
    throw ValidationError("no simulation row for the requested method and target");
}

SimSummary run_monte_carlo(const SimConfig& cfg)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t reps = static_cast<std::size_t>(cfg.replications);
    const std::size_t nm = cfg.methods.size();
    const std::size_t nt = cfg.targets.size();

    // Slot [rep][method][target]; NaN marks a failed replication.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> est(reps * nm * nt, nan);
    std::vector<double> var(reps * nm * nt, nan);

    parallel_for(reps, cfg.threads, [&](std::size_t r) {
        const SimDraw draw = gen_data(cfg.scenario, cfg.n, cfg.p, cfg.seed, r);
        for (std::size_t mi = 0; mi < nm; ++mi) {
            PipelineOptions opts = cfg.pipeline;
            opts.method = cfg.methods[mi];
            opts.threads = 1;
            std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(r), std::uint64_t{3}};
            std::uint32_t cv_seed[2];
            seq.generate(cv_seed, cv_seed + 2);
            opts.seed = (static_cast<std::uint64_t>(cv_seed[0]) << 32) | cv_seed[1];
            try {
                const PipelineResult res = run_pipeline(draw.data, cfg.targets, opts);
                for (std::size_t ti = 0; ti < nt; ++ti) {
                    const TargetResult& tr = res.targets[ti];
                    bool ok = tr.ps.solve.converged;
                    for (const auto& s : tr.outcome.solves) {
                        ok = ok && s.converged;
                    }
                    if (!ok) {
                        continue;
                    }
                    const std::size_t slot = (r * nm + mi) * nt + ti;
                    est[slot] = tr.estimate.mu_hat;
                    var[slot] = tr.estimate.v_hat / static_cast<double>(cfg.n);
                }
            } catch (const NumericalError&) {
                // Counted as failures below.
            }
        }
    });

    SimSummary summary;
    summary.config = cfg;
    const double z90 = normal_quantile(0.95);
    const double z95 = normal_quantile(0.975);
    int worst_failures = 0;
    for (std::size_t mi = 0; mi < nm; ++mi) {
        for (std::size_t ti = 0; ti < nt; ++ti) {
            SimRow row;
            row.method = cfg.methods[mi];
            row.target = cfg.targets[ti];
            row.truth = static_cast<double>(row.target);
            double c90 = 0.0;
            double c95 = 0.0;
            double evar = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                const std::size_t slot = (r * nm + mi) * nt + ti;
                row.estimates.push_back(est[slot]);
                row.variances.push_back(var[slot]);
                if (std::isnan(est[slot])) {
                    ++row.failures;
                    continue;
                }
                const double err = std::abs(est[slot] - row.truth);
                const double se = std::sqrt(var[slot]);
                c90 += err <= z90 * se ? 1.0 : 0.0;
                c95 += err <= z95 * se ? 1.0 : 0.0;
                evar += var[slot];
                ++row.used;
            }
            if (row.used > 0) {
                double mean = 0.0;
                for (double e : row.estimates) {
                    if (!std::isnan(e)) {
                        mean += e;
                    }
                }
                mean /= row.used;
                double ss = 0.0;
                for (double e : row.estimates) {
                    if (!std::isnan(e)) {
                        ss += (e - mean) * (e - mean);
                    }
                }
                row.bias = mean - row.truth;
                row.sqrt_var = std::sqrt(ss / row.used);
                row.sqrt_evar = std::sqrt(evar / row.used);
                row.cov90 = c90 / row.used;
                row.cov95 = c95 / row.used;
            }
            worst_failures = std::max(worst_failures, row.failures);
            summary.rows.push_back(std::move(row));
        }
    }
    summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (static_cast<double>(worst_failures) > 0.05 * static_cast<double>(reps)) {
        throw NumericalError("more than 5% of simulation replications failed (" + std::to_string(worst_failures) +
                             " of " + std::to_string(reps) + ")");
    }
    return summary;
}

std::string summary_csv(const SimSummary& s)
{
    std::ostringstream out;
    out << "config,n,p,replications,method,target,truth,bias,sqrt_var,sqrt_evar,cov90,cov95,used,failures\n";
    out << std::setprecision(10);
    for (const auto& r : s.rows) {
        out << to_string(s.config.scenario) << ',' << s.config.n << ',' << s.config.p << ','
            << s.config.replications << ',' << to_string(r.method) << ",mu" << r.target << ',' << r.truth << ','
            << r.bias << ',' << r.sqrt_var << ',' << r.sqrt_evar << ',' << r.cov90 << ',' << r.cov95 << ','
            << r.used << ',' << r.failures << '\n';
    }
    return out.str();
}

void write_summary_csv(const std::filesystem::path& path, const SimSummary& s)
{
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot open output file '" + path.string() + "'");
    }
    out << summary_csv(s);
}

} // namespace mcal
