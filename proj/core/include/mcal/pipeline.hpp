#pragma once

#include "mcal/data.hpp"
#include "mcal/diagnostics.hpp"
#include "mcal/estimands.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"
#include "mcal/tuning.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcal {

/// RCAL pairs the calibrated propensity fit with RWL; RMLs and RMLg pair the
/// multinomial likelihood fit with per-group or grouped Lasso outcome fits.
enum class Method { Rcal, Rmls, Rmlg };
enum class Selection { Min, OneSe };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct PipelineOptions {
    Method method = Method::Rcal;
    Constraint constraint = Constraint::OneToZero;
    Link link = Link::Identity;
    /// Fixed penalties; unset means 5-fold cross-validation over the grid.
    std::optional<double> lambda_ps;
    std::optional<double> lambda_or;
    Selection selection = Selection::Min;
    double level = 0.95;
    std::uint64_t seed = 1;
    bool standardize = true;
    bool restandardize_folds = true;
    int threads = 1;
    SolveConfig solver;
};

struct TargetResult {
    int target = 0;
    PsFit ps;
    OrFit outcome;
    EstimateReport estimate;
    std::vector<CVPath> ps_paths;
    std::vector<CVPath> or_paths;
    BalanceReport balance;
    VerifyReport verify;
};

struct PipelineResult {
    Method method = Method::Rcal;
    /// Design the models were fitted on (standardized when requested).
    Dataset data;
    Standardization scaling;
    std::vector<TargetResult> targets;
};

/// Cross-validated (or fixed-penalty) propensity fit. RCAL fits target t;
/// RML ignores t and uses reference level 0.
PsFit fit_ps(const Dataset& d, PsMethod method, int t, const PipelineOptions& opts, std::vector<CVPath>* paths);

/// Cross-validated outcome fit matching `method`; RWL needs the fitted probabilities.
OrFit fit_or(const Dataset& d, Method method, int t, const Matrix& probs, const PipelineOptions& opts,
             std::vector<CVPath>* paths);

EstimateReport estimate(const Dataset& d, Method method, int t, const PsFit& ps, const OrFit& outcome);

/// Full pipeline per target: propensity fit, outcome fit, AIPW, diagnostics.
PipelineResult run_pipeline(const Dataset& raw, const std::vector<int>& targets, const PipelineOptions& opts);

} // namespace mcal
