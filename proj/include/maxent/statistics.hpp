#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maxent/core.hpp"
#include "maxent/multivariate.hpp"

namespace maxent {

enum class Moment { Mean, Variance, Skewness, Kurtosis };
enum class StatAxis { Row, Column, Global };

std::string to_string(Moment m);
Moment parse_moment(const std::string& s);
std::string to_string(StatAxis a);
StatAxis parse_axis(const std::string& s);

/// Moment of a set of values; NaN when it is undefined (too few values or a
/// zero variance for the standardized moments). Kurtosis is not excess.
double sample_moment(std::span<const double> v, Moment m);

/// Moment of every row, column, or of all observed values.
std::vector<double> empirical_moments(const DataMatrix& data, Moment m, StatAxis axis);

/// Monte Carlo distribution of a statistic over sampled ensemble members.
struct EnsembleDistribution
{
    Moment moment = Moment::Mean;
    StatAxis axis = StatAxis::Row;
    /// samples[target][replicate]; NaN where the statistic was undefined
    std::vector<std::vector<double>> samples;
    /// replicates excluded per target because the statistic was undefined
    std::vector<std::size_t> excluded;
    /// Closed-form ensemble average of the statistic per target, available
    /// for Mean and Variance when no cell can be missing.
    std::vector<double> analytic;

    std::size_t targets() const { return samples.size(); }
    /// Type-7 quantile of the defined replicates of one target.
    double quantile(std::size_t target, double p) const;
    /// Fraction of targets whose value lies inside [quantile(lo), quantile(hi)].
    double band_fraction(std::span<const double> values, double lo, double hi) const;
};

EnsembleDistribution moment_distribution(const MultivariateModel& model, Moment moment,
                                         StatAxis axis, std::size_t n_rep, std::uint64_t seed);

struct KsResult
{
    double statistic = 0.0;
    double p_value = 1.0;
    bool reject = false;
    std::size_t n1 = 0, n2 = 0;
    /// false when the target had too few points to be tested
    bool valid = true;
};

/// Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
double kolmogorov_q(double x);

/// Two-sample KS with the asymptotic p-value. Throws InsufficientSample when
/// either side has fewer than 5 points.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double significance = 0.01);
KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf,
                       double significance = 0.01);

enum class KsMode { TwoSample, OneSample };

/// Per-row (or per-column) KS of the observed data against the model. In
/// two-sample mode the reference is the target's values pooled over n_rep
/// sampled matrices; in one-sample mode it is the analytic mixture CDF.
std::vector<KsResult> ks_compare(const DataMatrix& data, const MultivariateModel& model,
                                 StatAxis axis, std::size_t n_rep, std::uint64_t seed,
                                 double significance = 0.01, KsMode mode = KsMode::TwoSample);

struct FlaggedCell
{
    std::size_t row = 0, col = 0;
    double value = 0.0, lower = 0.0, upper = 0.0;
};

struct AnomalyReport
{
    std::vector<FlaggedCell> flags;
    double coverage_level = 0.95;
    double fcr_q = 0.05;
    double adjusted_level = 1.0;
    std::size_t selected = 0;
    std::size_t observed = 0;
};

/// Two-stage false-coverage-rate scan: cells outside the coverage interval
/// of their marginal are selected, then re-tested at level 1 - R q / m.
AnomalyReport anomaly_scan(const DataMatrix& data, const MultivariateModel& model,
                           double coverage = 0.95, double fcr_q = 0.05);

/// Pairwise-complete Pearson correlation. Rows sharing fewer than 10
/// observed columns with some other row are left out; `used` receives the
/// kept rows. Throws DegenerateRow on a zero-variance row.
Eigen::MatrixXd correlation_matrix(const DataMatrix& data, std::vector<std::size_t>* used = nullptr);

struct Spectrum
{
    std::vector<double> eigenvalues; ///< descending
    std::vector<std::size_t> rows_used;
};

Spectrum correlation_spectrum(const DataMatrix& data);

/// Marchenko-Pastur edges (1 -+ sqrt q)^2 and density for 0 < q < 1.
std::pair<double, double> mp_edges(double q);
double mp_density(double lambda, double q);

double silverman_bandwidth(std::span<const double> v);
std::vector<double> gaussian_kde(std::span<const double> samples, std::span<const double> grid,
                                 double bandwidth);

struct EnsembleSpectrum
{
    std::vector<double> grid;
    std::vector<double> density;    ///< KDE of the pooled eigenvalues
    std::vector<double> lambda_max; ///< one per successful replicate
    double bandwidth = 0.0;
    std::size_t failures = 0;
};

EnsembleSpectrum ensemble_spectrum(const MultivariateModel& model, std::size_t n_rep,
                                   std::uint64_t seed, std::size_t grid_points = 256);

/// |DFT|^2 / T of the mean-removed series at k = 0..T-1. Missing values are
/// replaced by the mean with a warning.
std::vector<double> power_spectrum(std::span<const double> series);

std::vector<double> ensemble_power_spectrum(const MultivariateModel& model, std::size_t row,
                                            std::size_t n_rep, std::uint64_t seed);

} // namespace maxent
