#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace mcal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Bad input: malformed files, inconsistent options, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that cannot produce a finite answer (separation, extreme
/// weights, non-finite losses).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smallest fitted propensity accepted by the estimators; fits driving some
/// probability below it are treated as diverged.
inline constexpr double kMinProbability = 1e-10;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    double width() const { return upper - lower; }
    bool contains(double x) const { return lower <= x && x <= upper; }
};

} // namespace mcal
