#pragma once

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace maxent::numeric {

inline constexpr double inf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v);

/// log of the standard normal density.
double log_phi(double z);
/// log Q(z) = log P(Z > z), accurate far into both tails.
double log_upper_tail(double z);
/// log(Phi(hi) - Phi(lo)) for lo < hi, stable when the interval sits in a tail.
double log_normal_mass(double lo, double hi);
/// z with log P(Z > z) = log_q.
double upper_tail_inverse_log(double log_q);

/// Inverse of the within-interval standard normal CDF on [lo, hi].
double truncated_normal_inverse(double lo, double hi, double v);

/// Result of integrating exp(-(b x + c x^2)) over one interval.
struct BinIntegral
{
    double log_mass = 0.0;
    /// Conditional moments E[x^k | interval], k = 0..4.
    std::array<double, 5> moments{};
};

/// Exponent -(b x) over [lo, hi]; needs b > 0 for hi = inf and b < 0 for
/// lo = -inf. Throws DivergentPartition otherwise.
BinIntegral exponential_bin(double lo, double hi, double b);
/// Exponent -(b x + c x^2) with c > 0.
BinIntegral gaussian_bin(double lo, double hi, double b, double c);

/// Within-bin CDF and its inverse for the two shapes above.
double exponential_bin_cdf(double lo, double hi, double b, double x);
double exponential_bin_inverse(double lo, double hi, double b, double v);
double gaussian_bin_cdf(double lo, double hi, double b, double c, double x);
double gaussian_bin_inverse(double lo, double hi, double b, double c, double v);

/// -expm1(-s L) / s with the s -> 0 and L -> inf limits.
double exp_window(double s, double len);

/// Adaptive Simpson on a finite interval to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 50);

/// Adaptive Gauss-Kronrod over [a, b]; either end may be infinite.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-12);

/// Composite Simpson rule with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n);

/// Sample moments over a span; kurtosis is m4 / m2^2 (not excess).
double mean(std::span<const double> v);
double variance(std::span<const double> v);
double skewness(std::span<const double> v);
double kurtosis(std::span<const double> v);

/// Type-7 quantile of already sorted data.
double sorted_quantile(std::span<const double> sorted, double p);

} // namespace maxent::numeric
