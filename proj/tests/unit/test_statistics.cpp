#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "maxent/calibration.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"
#include "maxent/statistics.hpp"
#include "maxent/synthetic.hpp"

using namespace maxent;

namespace {

MultivariateModel symmetric_model(std::size_t n, std::size_t t, Variant v = Variant::NoMissing)
{
    MultivariateModel m;
    m.spec = v == Variant::NoMissing ? ConstraintSpec::no_missing() : ConstraintSpec::with_missing();
    m.multipliers = MultiplierSet::zeros(n, t, v);
    Engine rng = make_engine(2, 0);
    for (std::size_t i = 0; i < n; ++i)
        m.multipliers.gamma_row[i] = m.multipliers.sigma_row[i] = 0.5 + uniform01(rng);
    for (std::size_t k = 0; k < t; ++k)
        m.multipliers.gamma_col[k] = m.multipliers.sigma_col[k] = 0.5 + uniform01(rng);
    return m;
}

MultivariateModel asymmetric_model(std::size_t n, std::size_t t)
{
    MultivariateModel m = symmetric_model(n, t);
    Engine rng = make_engine(3, 0);
    for (std::size_t i = 0; i < n; ++i) {
        m.multipliers.alpha_row[i] = uniform01(rng) - 0.5;
        m.multipliers.sigma_row[i] += uniform01(rng);
    }
    return m;
}

DataMatrix gaussian_matrix(std::size_t n, std::size_t t, std::uint64_t seed)
{
    Engine rng = make_engine(seed, 0);
    DataMatrix d(n, t);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < t; ++k)
            d.set(i, k, standard_normal(rng));
    return d;
}

double mean_of(const std::vector<double>& v)
{
    double s = 0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x))
            s += x, ++n;
    return s / n;
}

double se_of(const std::vector<double>& v)
{
    const double m = mean_of(v);
    double s = 0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x))
            s += (x - m) * (x - m), ++n;
    return std::sqrt(s / (n - 1) / n);
}

} // namespace

TEST_CASE("sample moments")
{
    const std::vector<double> v = {1, 2, 3, 4, 10};
    CHECK(sample_moment(v, Moment::Mean) == 4.0);
    CHECK(sample_moment(v, Moment::Variance) == doctest::Approx(numeric::variance(v)));
    CHECK(sample_moment(v, Moment::Skewness) > 0);
    const std::vector<double> c = {2, 2, 2};
    CHECK(std::isnan(sample_moment(c, Moment::Skewness)));
    CHECK(parse_moment("kurtosis") == Moment::Kurtosis);
    CHECK(parse_axis("column") == StatAxis::Column);
}

TEST_CASE("empirical moments by axis")
{
    const DataMatrix d = DataMatrix::from_rows({{1, 2, 3}, {4, 6, 8}});
    CHECK(empirical_moments(d, Moment::Mean, StatAxis::Row) == std::vector<double>{2, 6});
    CHECK(empirical_moments(d, Moment::Mean, StatAxis::Column) == std::vector<double>{2.5, 4, 5.5});
    CHECK(empirical_moments(d, Moment::Mean, StatAxis::Global)[0] == 4.0);
}

TEST_CASE("symmetric model has zero mean skewness")
{
    const MultivariateModel m = symmetric_model(4, 60);
    const auto dist = moment_distribution(m, Moment::Skewness, StatAxis::Row, 2000, 5);
    for (std::size_t k = 0; k < dist.targets(); ++k)
        CHECK(std::abs(mean_of(dist.samples[k])) < 4 * se_of(dist.samples[k]));
}

TEST_CASE("analytic variance matches Monte Carlo")
{
    const MultivariateModel m = asymmetric_model(3, 50);
    const auto dist = moment_distribution(m, Moment::Variance, StatAxis::Row, 4000, 8);
    REQUIRE(dist.analytic.size() == 3);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(mean_of(dist.samples[k]) - dist.analytic[k]) < 4 * se_of(dist.samples[k]));
    const auto means = moment_distribution(m, Moment::Mean, StatAxis::Column, 4000, 9);
    for (std::size_t k = 0; k < 5; ++k)
        CHECK(std::abs(mean_of(means.samples[k]) - means.analytic[k]) < 4 * se_of(means.samples[k]));
}

TEST_CASE("band fraction and quantiles")
{
    EnsembleDistribution d;
    d.samples = {{1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}};
    CHECK(d.quantile(0, 0.5) == 3.0);
    CHECK(d.quantile(1, 0.25) == 20.0);
    const std::vector<double> v = {2.5, 60};
    CHECK(d.band_fraction(v, 0.1, 0.9) == 0.5);
}

TEST_CASE("heavy-tailed factor data: most row variances inside the ensemble band")
{
    FactorMarketOptions o;
    o.tail_nu = 4.2;
    const DataMatrix raw = one_factor_market(30, 250, 41, o);
    auto [model, res] = calibrate_matrix(center_rows(raw), ConstraintSpec::with_missing());
    REQUIRE(res.converged);
    const auto emp = empirical_moments(center_rows(raw), Moment::Variance, StatAxis::Row);
    const auto dist = moment_distribution(model, Moment::Variance, StatAxis::Row, 500, 1);
    CHECK(dist.band_fraction(emp, 0.05, 0.95) >= 2.0 / 3.0);
}

TEST_CASE("Kolmogorov distribution and KS tests")
{
    CHECK(kolmogorov_q(1.0) == doctest::Approx(0.2699996716).epsilon(1e-8));
    CHECK(kolmogorov_q(0.5) == doctest::Approx(0.9639452436).epsilon(1e-8));

    const std::vector<double> a = {0.1, 0.5, 0.9, 1.3, 2.0, 2.2};
    const KsResult same = ks_two_sample(a, a);
    CHECK(same.statistic == 0.0);
    CHECK_FALSE(same.reject);
    CHECK_THROWS_AS(ks_two_sample({1, 2}, a), InsufficientSample);

    Engine rng = make_engine(1, 0);
    std::vector<double> x(2000), y(2000);
    for (double& v : x)
        v = standard_normal(rng);
    for (double& v : y)
        v = standard_normal(rng) + 0.3;
    CHECK(ks_two_sample(x, y).reject);
    auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    CHECK_FALSE(ks_one_sample(x, phi).reject);
}

TEST_CASE("KS on data drawn from the model rejects near the nominal rate")
{
    const MultivariateModel m = asymmetric_model(40, 100);
    const DataMatrix d = sample_matrix(m.multipliers, 77);
    const double sig = 0.05;
    const auto res = ks_compare(d, m, StatAxis::Row, 50, 3, sig);
    std::size_t rej = 0;
    for (const auto& r : res)
        rej += r.reject;
    CHECK(double(rej) / res.size() <= 2 * sig);

    const auto one = ks_compare(d, m, StatAxis::Column, 1, 3, sig, KsMode::OneSample);
    rej = 0;
    for (const auto& r : one)
        rej += r.reject;
    CHECK(double(rej) / one.size() <= 2 * sig + 0.05);
}

TEST_CASE("correlated synthetic data: most rows and days compatible")
{
    const DataMatrix raw = one_factor_market(40, 200, 12);
    auto [model, res] = calibrate_matrix(center_rows(raw), ConstraintSpec::with_missing());
    REQUIRE(res.converged);
    for (auto axis : {StatAxis::Row, StatAxis::Column}) {
        const auto ks = ks_compare(center_rows(raw), model, axis, 50, 4, 0.01);
        std::size_t ok = 0;
        for (const auto& r : ks)
            ok += !r.reject;
        CHECK(double(ok) / ks.size() >= 0.8);
    }
}

TEST_CASE("anomaly scan")
{
    const MultivariateModel m = asymmetric_model(10, 40);
    DataMatrix d = sample_matrix(m.multipliers, 5);
    const CellMarginal c = marginal(m.multipliers, 3, 7);
    d.set(3, 7, 10.0 * std::sqrt(c.variance()) + 10.0 / c.lambda_plus);
    const AnomalyReport r = anomaly_scan(d, m);
    const bool found = std::any_of(r.flags.begin(), r.flags.end(),
                                   [](const FlaggedCell& f) { return f.row == 3 && f.col == 7; });
    CHECK(found);
    CHECK(r.observed == 400);

    const AnomalyReport none = anomaly_scan(DataMatrix(10, 40), m);
    CHECK(none.flags.empty());
    CHECK(none.observed == 0);
}

TEST_CASE("anomaly flag rate on model data stays near nominal")
{
    const MultivariateModel m = asymmetric_model(20, 60);
    double flagged = 0, observed = 0;
    for (std::uint64_t r = 0; r < 100; ++r) {
        const AnomalyReport rep = anomaly_scan(sample_matrix(m.multipliers, 1000 + r), m);
        flagged += rep.flags.size();
        observed += rep.observed;
    }
    CHECK(flagged / observed <= 1.5 * 0.05 * 0.05);
}

TEST_CASE("Marchenko-Pastur law")
{
    const auto [lo, hi] = mp_edges(0.2);
    CHECK(lo == doctest::Approx(std::pow(1 - std::sqrt(0.2), 2)));
    CHECK(numeric::integrate([](double l) { return mp_density(l, 0.2); }, lo, hi, 1e-12)
          == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(mp_density(lo, 0.2) == doctest::Approx(0.0));
    CHECK(mp_density(hi, 0.2) == doctest::Approx(0.0));
    CHECK(mp_edges(100.0 / 560.0).second == doctest::Approx(2.024).epsilon(1e-3));
}

TEST_CASE("spectrum of independent data fits inside the MP edges")
{
    const Spectrum s = correlation_spectrum(gaussian_matrix(50, 500, 6));
    const auto [lo, hi] = mp_edges(0.1);
    CHECK(s.eigenvalues.front() <= hi + 0.1);
    CHECK(s.eigenvalues.back() >= lo - 0.1);
    double tr = 0;
    for (double l : s.eigenvalues)
        tr += l;
    CHECK(tr == doctest::Approx(50.0).epsilon(1e-10));
}

TEST_CASE("duplicated rows give a rank-one correlation")
{
    const DataMatrix g = gaussian_matrix(1, 100, 2);
    DataMatrix d(8, 100);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t t = 0; t < 100; ++t)
            d.set(i, t, g(0, t));
    const Spectrum s = correlation_spectrum(d);
    CHECK(s.eigenvalues.front() == doctest::Approx(8.0).epsilon(1e-10));
    CHECK(std::abs(s.eigenvalues[1]) < 1e-10);
}

TEST_CASE("correlation matrix skips rows without overlap")
{
    DataMatrix d = gaussian_matrix(3, 30, 1);
    for (std::size_t t = 5; t < 30; ++t)
        d.set_missing(2, t);
    std::vector<std::size_t> used;
    const auto c = correlation_matrix(d, &used);
    CHECK(used == std::vector<std::size_t>{0, 1});
    REQUIRE(c.rows() == 2);
    CHECK(c(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("ensemble spectrum")
{
    const MultivariateModel m = symmetric_model(20, 200);
    const EnsembleSpectrum one = ensemble_spectrum(m, 1, 4);
    REQUIRE(one.lambda_max.size() == 1);
    // with one replicate the density is the KDE of that replicate
    const Spectrum s = correlation_spectrum(sample_matrix(m.multipliers, derive_seed(4, 0)));
    const auto kde = gaussian_kde(s.eigenvalues, one.grid, one.bandwidth);
    CHECK(one.lambda_max[0] == doctest::Approx(s.eigenvalues.front()));
    for (std::size_t k = 0; k < one.grid.size(); k += 17)
        CHECK(one.density[k] == doctest::Approx(kde[k]).epsilon(1e-10));

    // independent cells: the bulk sits inside the MP support up to edge effects
    const EnsembleSpectrum many = ensemble_spectrum(m, 50, 5);
    const auto [lo, hi] = mp_edges(0.1);
    double inside = 0, total = 0;
    for (std::size_t k = 1; k < many.grid.size(); ++k) {
        const double w = many.density[k] * (many.grid[k] - many.grid[k - 1]);
        total += w;
        if (many.grid[k] >= lo - 0.2 && many.grid[k] <= hi + 0.2)
            inside += w;
    }
    CHECK(inside / total > 0.95);
}

TEST_CASE("factor market pushes lambda_max above the MP edge")
{
    const DataMatrix raw = one_factor_market(30, 150, 9);
    auto [model, res] = calibrate_matrix(center_rows(raw), ConstraintSpec::with_missing());
    const EnsembleSpectrum es = ensemble_spectrum(model, 30, 2);
    const double edge = mp_edges(30.0 / 150.0).second;
    for (double l : es.lambda_max)
        CHECK(l > edge);
}

TEST_CASE("periodogram")
{
    const std::size_t T = 128;
    std::vector<double> x(T);
    for (std::size_t t = 0; t < T; ++t)
        x[t] = std::sin(2 * std::numbers::pi * 5 * t / T);
    const auto p = power_spectrum(x);
    const auto peak = std::max_element(p.begin(), p.begin() + T / 2) - p.begin();
    CHECK(peak == 5);

    Engine rng = make_engine(3, 0);
    for (double& v : x)
        v = standard_normal(rng);
    const auto q = power_spectrum(x);
    double s = 0;
    for (double v : q)
        s += v;
    CHECK(s == doctest::Approx(numeric::variance(x) * T).epsilon(1e-8));
}

TEST_CASE("seasonal sign pattern shows in the ensemble periodogram")
{
    const double period = 16;
    const DataMatrix raw = seasonal_matrix(20, 256, period, 1.5, 3);
    auto [model, res] = calibrate_matrix(center_rows(raw), ConstraintSpec::with_missing());
    REQUIRE(res.converged);
    const auto p = ensemble_power_spectrum(model, 0, 50, 1);
    const auto peak = std::max_element(p.begin() + 1, p.begin() + 128) - p.begin();
    CHECK(peak == 256 / 16);
}
