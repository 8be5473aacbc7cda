#pragma once

#include <cstdint>
#include <vector>

#include "maxent/core.hpp"
#include "maxent/random.hpp"

namespace maxent {

/// Student-t draw scaled to unit variance (nu > 2).
double unit_student_t(Engine& rng, double nu);

/// Half N(0,1), half Student-t with nu degrees of freedom (unscaled).
std::vector<double> gaussian_t_mixture(std::size_t n, std::uint64_t seed, double nu = 5.0);
double gaussian_t_mixture_density(double x, double nu = 5.0);

std::vector<double> gaussian_stream(std::size_t n, double sigma, std::uint64_t seed);

struct FactorMarketOptions
{
    double market_vol = 0.01;
    double idio_vol = 0.015;
    double beta_mean = 1.0, beta_sd = 0.3;
    /// Student-t shocks when > 2, Gaussian otherwise. nu = 2.9 gives a
    /// density tail exponent of 3.9.
    double tail_nu = 0.0;
    /// Probability and size (in idiosyncratic sd) of isolated spikes.
    double outlier_prob = 0.0;
    double outlier_scale = 10.0;
};

/// r_it = beta_i f_t + e_it. Rows are stocks, columns are days.
DataMatrix one_factor_market(std::size_t n, std::size_t t, std::uint64_t seed,
                             const FactorMarketOptions& opts = {});

/// Gaussian noise plus amplitude * sin(2 pi t / period) on every row.
DataMatrix seasonal_matrix(std::size_t n, std::size_t t, double period, double amplitude,
                           std::uint64_t seed);

} // namespace maxent
