#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/multivariate.hpp"
#include "maxent/univariate.hpp"

namespace maxent {

enum class Method { Newton, GradientAscent, FixedPoint };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct CalibrationOptions
{
    double tol_rel = 1e-6;
    std::size_t max_iter = 10000;
    Method method = Method::Newton;
    /// Strength of the mu * sum(ln g + ln s) barrier; 0 disables it.
    double barrier_strength = 0.0;
    /// Seed for the jittered starting point used when random_init is set.
    std::uint64_t seed = 0;
    bool random_init = false;
    /// Warm start for the multivariate solver (shape must match).
    std::optional<MultiplierSet> initial;
};

/// One constraint's empirical value against the ensemble average.
struct ConstraintResidual
{
    std::string name;
    double empirical = 0.0;
    double expected = 0.0;
    double rel_err = 0.0;
    bool dropped = false;
};

struct CalibrationResult
{
    MultiplierSet multipliers;
    bool converged = false;
    std::size_t iterations = 0;
    double max_rel_constraint_err = 0.0;
    double final_log_likelihood = 0.0;
    std::vector<std::string> dropped_constraints;
    std::vector<ConstraintResidual> residuals;
    /// ln L after every accepted step.
    std::vector<double> log_likelihood_trace;
    Method method = Method::Newton;
};

/// Solve <O> = O_bar for the multivariate ensemble. Never throws on
/// non-convergence; check `converged`. Throws InfeasibleConstraints when a
/// sum is positive while its count is zero (or the reverse).
CalibrationResult calibrate(const ConstraintSpec& spec, const MarginConstraints& margins,
                            const CalibrationOptions& opts = {});

/// Convenience wrapper: margins from a centered matrix, model with labels.
std::pair<MultivariateModel, CalibrationResult>
calibrate_matrix(const DataMatrix& centered, const ConstraintSpec& spec,
                 const CalibrationOptions& opts = {});

struct UnivariateCalibration
{
    UnivariateModel model;
    bool converged = false;
    std::size_t iterations = 0;
    double max_rel_constraint_err = 0.0;
    double final_log_likelihood = 0.0;
    std::vector<std::string> dropped_constraints;
    std::vector<double> log_likelihood_trace;
};

UnivariateCalibration calibrate(const UnivariateSpec& spec, const BinStatistics& stats,
                                const CalibrationOptions& opts = {});

/// Fit a family to a series on a grid built from its own quantiles.
UnivariateCalibration calibrate_series(std::span<const double> series,
                                       std::span<const double> xi, UnivariateFamily family,
                                       const CalibrationOptions& opts = {});

/// ln Z by enumerating every occupancy configuration and integrating each
/// occupied magnitude with composite Simpson (`resolution` panels on
/// [0, 40 / lambda]). Throws OracleTooLarge above six cells.
double brute_force_log_partition(const MultiplierSet& ms, int resolution = 4000);

/// ln Z of a univariate spec by composite Simpson on every bin, with
/// infinite ends cut where the integrand falls below 1e-18 of its peak.
double brute_force_log_partition(const UnivariateSpec& spec, std::span<const double> params,
                                 int resolution = 20000);

/// Gibbs entropy S = ln Z + theta . O_bar at the stored constraints.
double entropy(const UnivariateModel& model);
double entropy(const MultivariateModel& model);

} // namespace maxent
