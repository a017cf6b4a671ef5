#pragma once

#include "mcal/data.hpp"
#include "mcal/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace mcal {

/**
 * Data-generating configurations with K = 4 treatments.
 *
 * C1: linear logits in X and linear outcome means in X (both models correct).
 * C2: logits as C1, outcome means in the transformed covariates X-dagger.
 * C3: logits in X-dagger, outcome means as C1.
 */
enum class ScenarioId { C1, C2, C3 };

ScenarioId parse_scenario(const std::string& s);
std::string to_string(ScenarioId c);

constexpr int kSimTreatments = 4;
constexpr Index kSimMinCovariates = 13;

struct SimConfig {
    ScenarioId scenario = ScenarioId::C1;
    Index n = 1000;
    Index p = 50;
    int replications = 200;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::Rcal, Method::Rmls, Method::Rmlg};
    std::vector<int> targets{0, 1, 2, 3};
    int threads = 1;
    /// Solver, selection and constraint settings shared by every replication.
    PipelineOptions pipeline;

    void validate() const;
};

/// Mean and variance of W = X + ((X + 1)_+)^2 for standard normal X.
struct WMoments {
    double mean = 0.0;
    double var = 0.0;
};

/// Computed once by adaptive Gauss-Kronrod quadrature on each side of the kink at -1.
const WMoments& w_moments();

/// Normal rows with cov(X_a, X_b) = 2^{-|a-b|}, via the AR(1) recursion.
Matrix gen_covariates(Index n, Index p, std::mt19937_64& rng);
Matrix gen_covariates(Index n, Index p, std::uint64_t seed);

/// Standardized X-dagger_j for j = 1..4 (n x 4) from covariates x.
Matrix dagger(const Matrix& x);

/// True treatment logits (n x 4, column 0 zero) and outcome means (n x 4).
Matrix true_logits(ScenarioId c, const Matrix& x);
Matrix true_means(ScenarioId c, const Matrix& x);

struct SimDraw {
    Dataset data;
    Matrix probs;
    Matrix means;
};

/// One dataset; the random stream is fixed by (seed, replication).
SimDraw gen_data(ScenarioId c, Index n, Index p, std::uint64_t seed, std::uint64_t replication);

/// Population targets. mu_t = t in every configuration; nu_t^(k) =
/// E(Y^(t) | T = k) is estimated by Monte Carlo integration of
/// E[m_t(X) pi_k(X)] / E[pi_k(X)] with standard errors.
struct Truth {
    std::vector<double> mu;
    Matrix nu;
    Matrix nu_se;
    Vector proportions;
    Vector proportions_se;
    Index draws = 0;
};

Truth compute_truth(ScenarioId c, Index draws, std::uint64_t seed);

struct SimRow {
    Method method = Method::Rcal;
    int target = 0;
    double truth = 0.0;
    double bias = 0.0;
    double sqrt_var = 0.0;
    double sqrt_evar = 0.0;
    double cov90 = 0.0;
    double cov95 = 0.0;
    int used = 0;
    int failures = 0;
    std::vector<double> estimates;
    std::vector<double> variances;
};

struct SimSummary {
    SimConfig config;
    std::vector<SimRow> rows;
    double seconds = 0.0;

    const SimRow& row(Method m, int target) const;
};

/// Runs every replication. Replications where a method fails (numerical
/// error or non-converged final fit) are excluded for that method and
/// counted; more than 5% failures raises NumericalError.
SimSummary run_monte_carlo(const SimConfig& cfg);

/// Table-style CSV: one row per (method, target).
void write_summary_csv(const std::filesystem::path& path, const SimSummary& s);
std::string summary_csv(const SimSummary& s);

} // namespace mcal
