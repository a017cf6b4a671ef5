#pragma once

#include "mcal/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mcal {

/**
 * Observations (Y, T, f(X)) shared by every fitter.
 *
 * Column 0 of `f` is the intercept and is identically one. Treatments are
 * coded 0..k-1 and every level occurs at least once. Instances are immutable
 * once built through make_dataset(); they may be shared across threads.
 */
struct Dataset {
    Vector y;
    std::vector<int> t;
    Matrix f;
    int k = 0;
    /// Names of the columns of f; entry 0 is "(Intercept)".
    std::vector<std::string> names;

    Index n() const { return f.rows(); }
    Index p() const { return f.cols() - 1; }
    std::vector<Index> group_sizes() const;
};

/// Validates and assembles a Dataset. Throws ValidationError on any violated
/// invariant (intercept column, empty treatment level, non-finite values).
Dataset make_dataset(Vector y, std::vector<int> t, Matrix f, int k,
                     std::vector<std::string> names = {});

/// Builds a dataset from raw covariates by prepending the intercept column.
Dataset from_covariates(Vector y, std::vector<int> t, const Matrix& x, int k,
                        std::vector<std::string> covariate_names = {});

void validate(const Dataset& d);

/// Rows `rows` of `d`, in the given order. Throws ValidationError when a
/// treatment level has no rows in the subset.
Dataset subset_rows(const Dataset& d, std::span<const Index> rows);

/// Which CSV columns play which role. An empty covariate list selects every
/// column other than the outcome and the treatment.
struct ColumnSchema {
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;
};

struct LoadedData {
    Dataset data;
    /// Original treatment label for each internal code.
    std::vector<std::string> treatment_labels;
};

/// Reads an RFC-4180 CSV with a header row. Treatment labels must be
/// integers; they are mapped to contiguous codes in ascending order.
LoadedData load_csv(const std::filesystem::path& path, const ColumnSchema& schema);

/// Writes y, t and the non-intercept columns of f in a layout load_csv reads back.
void write_csv(const std::filesystem::path& path, const Dataset& d,
               const std::string& outcome = "y", const std::string& treatment = "t");

/// Per-column centring and scaling of the non-intercept regressors.
struct Standardization {
    Vector means;
    Vector scales;
    bool applied = false;

    /// Applies the stored transform to a design matrix with intercept column.
    Matrix transform(const Matrix& f) const;
    /// Maps coefficients fitted on the standardized scale back to the raw scale,
    /// so that f_raw * result == f_std * coef.
    Matrix destandardize(const Matrix& coef) const;
    /// Inverse of destandardize().
    Matrix standardize_coefficients(const Matrix& coef) const;
};

/// Column means and scales computed over the rows of `f` (divisor n).
Standardization fit_standardization(const Matrix& f, const std::vector<std::string>& names);

/// Standardizes every non-intercept column to mean 0 and variance 1 (divisor n).
/// Throws ValidationError naming the first zero-variance column.
std::pair<Dataset, Standardization> standardize(const Dataset& d);

/// n x k matrix of indicators R^(k) = 1{T = k}.
Matrix treatment_indicators(const Dataset& d);

/// Appends all pairwise products of non-intercept columns whose fraction of
/// nonzero entries is at least `min_frequency`.
Dataset expand_pairwise(const Dataset& d, double min_frequency);

} // namespace mcal
