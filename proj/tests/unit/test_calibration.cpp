#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "maxent/calibration.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

using namespace maxent;

namespace {

DataMatrix random_centered(std::size_t n, std::size_t t, std::uint64_t seed, double missing = 0.0)
{
    Engine rng = make_engine(seed, 0);
    DataMatrix m(n, t);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < t; ++k)
            if (uniform01(rng) >= missing)
                m.set(i, k, standard_normal(rng) * (1.0 + 0.3 * i));
    return center_rows(m);
}

void check_margins_match(const MarginConstraints& a, const MarginConstraints& b, double tol)
{
    auto cmp = [&](const std::vector<double>& x, const std::vector<double>& y) {
        REQUIRE(x.size() == y.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            CHECK(std::abs(x[k] - y[k]) <= tol * std::max(1.0, std::abs(y[k])));
    };
    cmp(a.n_plus_row, b.n_plus_row), cmp(a.n_minus_row, b.n_minus_row);
    cmp(a.s_plus_row, b.s_plus_row), cmp(a.s_minus_row, b.s_minus_row);
    cmp(a.m_plus_col, b.m_plus_col), cmp(a.m_minus_col, b.m_minus_col);
    cmp(a.r_plus_col, b.r_plus_col), cmp(a.r_minus_col, b.r_minus_col);
}

} // namespace

TEST_CASE("symmetric Laplace row solves in closed form")
{
    const DataMatrix d = DataMatrix::from_rows({{1, 1, 1, 1, 1, -1, -1, -1, -1, -1}});
    auto [model, res] = calibrate_matrix(d, ConstraintSpec::parse("custom:no_missing:ags:"));
    REQUIRE(res.converged);
    for (std::size_t t = 0; t < 10; ++t) {
        const CellMarginal m = marginal(model.multipliers, 0, t);
        CHECK(m.p_plus == doctest::Approx(0.5).epsilon(1e-7));
        CHECK(m.lambda_plus == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(m.lambda_minus == doctest::Approx(1.0).epsilon(1e-7));
    }
}

TEST_CASE("calibrated margins reproduce the data")
{
    for (auto spec : {ConstraintSpec::with_missing(), ConstraintSpec::no_missing(),
                      ConstraintSpec::sums_only()}) {
        const DataMatrix d = random_centered(3, 4, 19, spec.variant == Variant::WithMissing ? 0.1 : 0.0);
        auto [model, res] = calibrate_matrix(d, spec);
        REQUIRE(res.converged);
        CHECK(res.max_rel_constraint_err < 1e-6);
        const MarginConstraints e = expected_constraints(model.multipliers);
        const MarginConstraints c = compute_margins(d);
        // only the families the spec constrains are matched
        if (spec.name() == "sums_only") {
            for (std::size_t i = 0; i < 3; ++i)
                CHECK(e.s_plus_row[i] == doctest::Approx(c.s_plus_row[i]).epsilon(1e-6));
        } else {
            check_margins_match(e, c, 1e-6);
        }
    }
}

TEST_CASE("accepted steps never lower the likelihood")
{
    const DataMatrix d = random_centered(8, 30, 3, 0.1);
    for (auto method : {Method::Newton, Method::GradientAscent}) {
        CalibrationOptions o;
        o.method = method;
        o.max_iter = 200000;
        auto [model, res] = calibrate_matrix(d, ConstraintSpec::with_missing(), o);
        REQUIRE(res.converged);
        for (std::size_t k = 1; k < res.log_likelihood_trace.size(); ++k)
            CHECK(res.log_likelihood_trace[k] >= res.log_likelihood_trace[k - 1] - 1e-9);
    }
}

TEST_CASE("solution is unique up to gauge")
{
    const DataMatrix d = random_centered(5, 12, 8, 0.1);
    CalibrationOptions a, b;
    a.random_init = b.random_init = true;
    a.seed = 1, b.seed = 2;
    a.tol_rel = b.tol_rel = 1e-10;
    auto ra = calibrate_matrix(d, ConstraintSpec::with_missing(), a);
    auto rb = calibrate_matrix(d, ConstraintSpec::with_missing(), b);
    REQUIRE(ra.second.converged);
    REQUIRE(rb.second.converged);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t = 0; t < 12; ++t) {
            const CellMarginal x = marginal(ra.first.multipliers, i, t);
            const CellMarginal y = marginal(rb.first.multipliers, i, t);
            CHECK(std::abs(x.p_plus - y.p_plus) < 1e-6);
            CHECK(std::abs(x.p_missing - y.p_missing) < 1e-6);
            // a disabled state has p = 0 and an unidentified rate
            if (x.p_plus > 0)
                CHECK(x.lambda_plus == doctest::Approx(y.lambda_plus).epsilon(1e-6));
            if (x.p_minus > 0)
                CHECK(x.lambda_minus == doctest::Approx(y.lambda_minus).epsilon(1e-6));
        }
}

TEST_CASE("scaling the data divides the rates")
{
    const DataMatrix d = random_centered(4, 10, 27);
    DataMatrix scaled = d;
    const double c = 3.5;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t t = 0; t < 10; ++t)
            scaled.set(i, t, c * d(i, t));
    CalibrationOptions o;
    o.tol_rel = 1e-10;
    auto a = calibrate_matrix(d, ConstraintSpec::no_missing(), o);
    auto b = calibrate_matrix(scaled, ConstraintSpec::no_missing(), o);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t t = 0; t < 10; ++t) {
            const CellMarginal x = marginal(a.first.multipliers, i, t);
            const CellMarginal y = marginal(b.first.multipliers, i, t);
            CHECK(y.p_plus == doctest::Approx(x.p_plus).epsilon(1e-7));
            CHECK(y.lambda_plus == doctest::Approx(x.lambda_plus / c).epsilon(1e-7));
        }
}

TEST_CASE("warm start from the solution converges at once")
{
    const DataMatrix d = random_centered(6, 20, 5, 0.1);
    auto first = calibrate_matrix(d, ConstraintSpec::with_missing());
    CalibrationOptions o;
    o.initial = first.second.multipliers;
    auto again = calibrate_matrix(d, ConstraintSpec::with_missing(), o);
    CHECK(again.second.converged);
    CHECK(again.second.iterations <= 1);
}

TEST_CASE("inconsistent margins are infeasible")
{
    MarginConstraints c = MarginConstraints::zeros(1, 2);
    c.n_plus_row = {0}, c.s_plus_row = {1.0};
    c.n_minus_row = {2}, c.s_minus_row = {1.0}, c.n_obs_row = {2};
    c.m_plus_col = {0, 0}, c.r_plus_col = {0.5, 0.5};
    c.m_minus_col = {1, 1}, c.r_minus_col = {0.5, 0.5}, c.m_obs_col = {1, 1};
    CHECK_THROWS_AS(calibrate(ConstraintSpec::with_missing(), c), InfeasibleConstraints);

    const DataMatrix zero_row = DataMatrix::from_rows({{0, 0, 0}, {1, -2, 1}});
    CHECK_THROWS_AS(calibrate_matrix(zero_row, ConstraintSpec::with_missing()), InfeasibleConstraints);
}

TEST_CASE("brute-force partition oracle")
{
    MultiplierSet z3 = MultiplierSet::zeros(1, 1, Variant::WithMissing);
    z3.gamma_row = z3.gamma_col = z3.sigma_row = z3.sigma_col = {0.5};
    CHECK(brute_force_log_partition(z3) == doctest::Approx(std::log(3.0)).epsilon(1e-6));

    Engine rng = make_engine(4, 0);
    MultiplierSet ms = MultiplierSet::zeros(2, 2, Variant::WithMissing);
    for (auto f : {Family::Alpha, Family::Beta})
        for (auto a : {Axis::Row, Axis::Col})
            for (double& x : ms.family(f, a))
                x = 2 * uniform01(rng) - 1;
    for (auto f : {Family::Gamma, Family::Sigma})
        for (auto a : {Axis::Row, Axis::Col})
            for (double& x : ms.family(f, a))
                x = 0.2 + 1.8 * uniform01(rng);
    const double lz = log_partition(ms);
    const double coarse = brute_force_log_partition(ms, 2000);
    const double fine = brute_force_log_partition(ms, 8000);
    CHECK(coarse == doctest::Approx(lz).epsilon(1e-4));
    CHECK(fine == doctest::Approx(lz).epsilon(1e-4));
    CHECK(std::abs(fine - lz) <= std::abs(coarse - lz) + 1e-12);

    CHECK_THROWS_AS(brute_force_log_partition(MultiplierSet::zeros(3, 3, Variant::WithMissing)),
                    OracleTooLarge);

    UnivariateSpec g{make_grid({-numeric::inf, numeric::inf}), UnivariateFamily::H2, 1};
    const std::vector<double> p = {0.0, 0.0, 0.5};
    CHECK(brute_force_log_partition(g, p) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-6));
}

TEST_CASE("univariate calibration on uniform data leaves a flat density")
{
    const std::size_t n = 1001;
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k)
        x[k] = static_cast<double>(k) / (n - 1);
    UnivariateSpec spec{make_grid({0.0, 1.0}), UnivariateFamily::H1, n};
    const UnivariateCalibration c = calibrate(spec, bin_statistics(x, spec.grid));
    REQUIRE(c.converged);
    CHECK(c.model.params()[0] == 0.0);
    CHECK(std::abs(c.model.params()[1]) < 1e-6);
    CHECK(c.model.density(0.3) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(entropy(c.model)) / n < 1e-8);
}

TEST_CASE("Gaussian H2 entropy")
{
    const std::size_t n = 500;
    UnivariateSpec spec{make_grid({-numeric::inf, numeric::inf}), UnivariateFamily::H2, n};
    BinStatistics s{{double(n)}, {0.0}, {double(n)}};
    const UnivariateCalibration c = calibrate(spec, s);
    REQUIRE(c.converged);
    CHECK(c.model.params()[2] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(entropy(c.model) == doctest::Approx(n * 0.5 * std::log(2 * std::numbers::pi * std::numbers::e)).epsilon(1e-8));
}

TEST_CASE("multivariate entropy matches the differential entropy of one cell")
{
    MultiplierSet ms = MultiplierSet::zeros(1, 1, Variant::WithMissing);
    ms.alpha_row = {0.3}, ms.beta_row = {-0.4};
    ms.gamma_row = {0.8}, ms.gamma_col = {0.4};
    ms.sigma_row = {1.1}, ms.sigma_col = {0.6};
    MultivariateModel model;
    model.spec = ConstraintSpec::with_missing();
    model.multipliers = ms;
    model.constraints = expected_constraints(ms);

    const CellMarginal m = marginal(ms, 0, 0);
    auto flnf = [&](double x) {
        const double f = m.density(x);
        return f > 0 ? -f * std::log(f) : 0.0;
    };
    const double s = -m.p_missing * std::log(m.p_missing)
                     + numeric::integrate(flnf, 0.0, numeric::inf)
                     + numeric::integrate(flnf, -numeric::inf, 0.0);
    CHECK(entropy(model) == doctest::Approx(s).epsilon(1e-6));
}

TEST_CASE("method names")
{
    CHECK(parse_method("newton") == Method::Newton);
    CHECK(to_string(Method::GradientAscent) == to_string(parse_method(to_string(Method::GradientAscent))));
    CHECK_THROWS_AS(parse_method("simplex"), InvalidArgument);
}
