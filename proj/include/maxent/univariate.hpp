#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maxent/core.hpp"

namespace maxent {

/// Hamiltonians for a single series binned on a quantile grid.
///   H1: per-bin count and per-bin sum multipliers (alpha_i, beta_i)
///   H2: per-bin count multipliers plus global sum and square-sum (beta, gamma)
///   M1: per-bin sum multipliers plus global square-sum, no count constraints
/// Every family is a restriction of the per-bin exponent -(a_i + b_i x + c_i x^2).
enum class UnivariateFamily { H1, H2, M1 };

std::string to_string(UnivariateFamily f);
UnivariateFamily parse_family(const std::string& s);

/// Counts, sums and squared sums over half-open bins [q_i, q_{i+1}); the last
/// bin is closed when its upper edge is finite.
struct BinStatistics
{
    std::vector<double> count, sum, sum_sq;

    double total_count() const;
};

BinStatistics bin_statistics(std::span<const double> series, const QuantileGrid& grid);

struct UnivariateSpec
{
    QuantileGrid grid;
    UnivariateFamily family = UnivariateFamily::H1;
    std::size_t samples = 1; ///< T, the number of i.i.d. draws per ensemble member

    std::size_t bins() const { return grid.bins(); }
    std::size_t parameter_count() const;
    /// Parameter fixed at zero by the alpha_1 = 0 gauge, if the family has one.
    std::optional<std::size_t> gauge_index() const;
    std::vector<std::string> parameter_names() const;
};

/// One (bin, power) pair a parameter couples to: the parameter multiplies
/// sum_t x_t^power restricted to that bin.
struct ParamTerm
{
    std::size_t bin;
    int power;
};

std::vector<std::vector<ParamTerm>> parameter_terms(const UnivariateSpec& spec);

/// Per-parameter empirical values of the coupled statistics.
std::vector<double> empirical_values(const UnivariateSpec& spec, const BinStatistics& stats);

/// Exponent coefficients of bin i: density proportional to exp(-(a + b x + c x^2)).
struct BinCoefficients
{
    double a = 0.0, b = 0.0, c = 0.0;
};

std::vector<BinCoefficients> bin_coefficients(const UnivariateSpec& spec,
                                              std::span<const double> params);

struct UnivariateEvaluation
{
    double log_partition = 0.0;          ///< T ln sum_i z_i
    std::vector<double> bin_log_weight;  ///< ln z_i, -inf for inactive bins
    std::vector<std::array<double, 5>> bin_moments;
    Eigen::VectorXd expected;            ///< T E[s_k] per parameter
    Eigen::MatrixXd covariance;          ///< T Cov(s_k, s_l), filled on request
};

/// Throws DivergentPartition outside the admissible region.
UnivariateEvaluation evaluate(const UnivariateSpec& spec, std::span<const double> params,
                              const std::vector<bool>& active_bins, bool with_covariance);

class UnivariateModel
{
  public:
    UnivariateModel(UnivariateSpec spec, std::vector<double> params,
                    std::optional<BinStatistics> constraints = std::nullopt,
                    std::vector<bool> active_bins = {});

    const UnivariateSpec& spec() const { return spec_; }
    const std::vector<double>& params() const { return params_; }
    const std::optional<BinStatistics>& constraints() const { return constraints_; }
    const std::vector<bool>& active_bins() const { return active_; }
    bool calibrated() const { return constraints_.has_value(); }

    double log_partition() const { return eval_.log_partition; }
    /// Selection probability p_i of each bin.
    const std::vector<double>& bin_probabilities() const { return probs_; }
    const UnivariateEvaluation& evaluation() const { return eval_; }

    double density(double x) const;
    double log_density(double x) const;
    double cdf(double x) const;
    double quantile(double p) const;
    double mean() const;
    double variance() const;

    std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

    /// ln L of the stored constraints; throws NotCalibrated without them.
    double log_likelihood() const;

  private:
    std::size_t find_bin(double x) const;

    UnivariateSpec spec_;
    std::vector<double> params_;
    std::optional<BinStatistics> constraints_;
    std::vector<bool> active_;
    std::vector<BinCoefficients> coef_;
    UnivariateEvaluation eval_;
    std::vector<double> probs_;
    std::vector<double> cum_;
};

/// ln Z of the model's spec evaluated at arbitrary parameters.
double log_partition(const UnivariateModel& model, std::span<const double> params);

/// ln L = -theta . O - ln Z for arbitrary parameters and statistics.
double log_likelihood(const UnivariateSpec& spec, std::span<const double> params,
                      const BinStatistics& stats, const std::vector<bool>& active_bins = {});

/// Kullback-Leibler divergence of p from q by adaptive Simpson between the
/// given breakpoints. Infinite ends are cut where both densities fall below
/// 1e-12. Throws SupportError if p > 0 where q = 0. Pass log_q when q
/// underflows in the tails before p does.
double kl_divergence(const std::function<double(double)>& p,
                     const std::function<double(double)>& q,
                     std::vector<double> breakpoints, double tol = 1e-8,
                     const std::function<double(double)>& log_q = {});

enum class Criterion { AIC, BIC };

double information_criterion(std::size_t k, double log_likelihood, std::size_t n, Criterion which);
double information_criterion(const UnivariateModel& model, Criterion which);

} // namespace maxent
