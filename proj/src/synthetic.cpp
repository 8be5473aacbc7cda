#include "maxent/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace maxent {

namespace {

double chi2(Engine& rng, double nu)
{
    std::gamma_distribution<double> g(0.5 * nu, 2.0);
    return g(rng);
}

double student_t(Engine& rng, double nu)
{
    return standard_normal(rng) / std::sqrt(chi2(rng, nu) / nu);
}

DataMatrix labelled(std::size_t n, std::size_t t)
{
    DataMatrix m(n, t);
    for (std::size_t i = 0; i < n; ++i)
        m.row_ids[i] = "S" + std::to_string(i);
    for (std::size_t k = 0; k < t; ++k)
        m.col_ids[k] = "t" + std::to_string(k);
    return m;
}

} // namespace

double unit_student_t(Engine& rng, double nu)
{
    return student_t(rng, nu) * std::sqrt((nu - 2.0) / nu);
}

std::vector<double> gaussian_t_mixture(std::size_t n, std::uint64_t seed, double nu)
{
    Engine rng = make_engine(seed, 0);
    std::vector<double> out(n);
    for (double& x : out)
        x = uniform01(rng) < 0.5 ? standard_normal(rng) : student_t(rng, nu);
    return out;
}

double gaussian_t_mixture_density(double x, double nu)
{
    const double normal = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double t = std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
                     std::sqrt(nu * std::numbers::pi) * std::pow(1.0 + x * x / nu, -0.5 * (nu + 1.0));
    return 0.5 * normal + 0.5 * t;
}

std::vector<double> gaussian_stream(std::size_t n, double sigma, std::uint64_t seed)
{
    Engine rng = make_engine(seed, 0);
    std::vector<double> out(n);
    for (double& x : out)
        x = sigma * standard_normal(rng);
    return out;
}

DataMatrix one_factor_market(std::size_t n, std::size_t t, std::uint64_t seed,
                             const FactorMarketOptions& opts)
{
    const bool heavy = opts.tail_nu > 2.0;
    auto shock = [&](Engine& rng) { return heavy ? unit_student_t(rng, opts.tail_nu) : standard_normal(rng); };

    Engine market = make_engine(seed, 0);
    std::vector<double> f(t);
    for (double& x : f)
        x = opts.market_vol * shock(market);

    DataMatrix m = labelled(n, t);
    for (std::size_t i = 0; i < n; ++i) {
        Engine rng = make_engine(seed, i + 1);
        const double beta = opts.beta_mean + opts.beta_sd * standard_normal(rng);
        for (std::size_t k = 0; k < t; ++k) {
            double e = opts.idio_vol * shock(rng);
            if (opts.outlier_prob > 0.0 && uniform01(rng) < opts.outlier_prob)
                e += (uniform01(rng) < 0.5 ? -1.0 : 1.0) * opts.outlier_scale * opts.idio_vol;
            m.set(i, k, beta * f[k] + e);
        }
    }
    return m;
}

DataMatrix seasonal_matrix(std::size_t n, std::size_t t, double period, double amplitude,
                           std::uint64_t seed)
{
    DataMatrix m = labelled(n, t);
    for (std::size_t i = 0; i < n; ++i) {
        Engine rng = make_engine(seed, i);
        for (std::size_t k = 0; k < t; ++k)
            m.set(i, k, amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period) +
                            standard_normal(rng));
    }
    return m;
}

} // namespace maxent
