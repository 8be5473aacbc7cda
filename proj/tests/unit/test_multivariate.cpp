#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "maxent/multivariate.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

using namespace maxent;

namespace {

MultiplierSet uniform_set(std::size_t n, std::size_t t, Variant v, double half_rate = 0.5)
{
    MultiplierSet ms = MultiplierSet::zeros(n, t, v);
    for (auto* f : {&ms.gamma_row, &ms.gamma_col, &ms.sigma_row, &ms.sigma_col})
        std::fill(f->begin(), f->end(), half_rate);
    return ms;
}

MultiplierSet random_set(std::size_t n, std::size_t t, Variant v, std::uint64_t seed)
{
    MultiplierSet ms = MultiplierSet::zeros(n, t, v);
    Engine rng = make_engine(seed, 0);
    auto fill = [&](std::vector<double>& x, double lo, double hi) {
        for (double& e : x)
            e = lo + (hi - lo) * uniform01(rng);
    };
    fill(ms.alpha_row, -1, 1), fill(ms.alpha_col, -1, 1);
    if (v == Variant::WithMissing)
        fill(ms.beta_row, -1, 1), fill(ms.beta_col, -1, 1);
    fill(ms.gamma_row, 0.2, 2), fill(ms.gamma_col, 0.2, 2);
    fill(ms.sigma_row, 0.2, 2), fill(ms.sigma_col, 0.2, 2);
    return ms;
}

// Z of one cell by quadrature of each occupied state plus the empty state
double quadrature_cell_z(double a, double b, double g, double s, bool missing_allowed)
{
    auto side = [](double mult, double rate) {
        return numeric::simpson([&](double w) { return std::exp(-mult - rate * w); }, 0.0,
                                60.0 / rate, 20000);
    };
    return (missing_allowed ? 1.0 : 0.0) + side(a, g) + side(b, s);
}

} // namespace

TEST_CASE("hand-computed cell partition functions")
{
    const MultiplierSet wm = uniform_set(1, 1, Variant::WithMissing);
    CHECK(cell_partition(wm, 0, 0) == doctest::Approx(3.0).epsilon(1e-14));
    const CellMarginal m = marginal(wm, 0, 0);
    CHECK(m.p_plus == doctest::Approx(1.0 / 3));
    CHECK(m.p_minus == doctest::Approx(1.0 / 3));
    CHECK(m.p_missing == doctest::Approx(1.0 / 3));

    const MultiplierSet nm = uniform_set(1, 1, Variant::NoMissing);
    CHECK(cell_partition(nm, 0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(marginal(nm, 0, 0).p_plus == doctest::Approx(0.5));
    CHECK(marginal(nm, 0, 0).p_missing == 0.0);
}

TEST_CASE("cell partition matches quadrature")
{
    for (auto v : {Variant::WithMissing, Variant::NoMissing}) {
        const MultiplierSet ms = random_set(2, 3, v, 42);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t < 3; ++t) {
                const double z = quadrature_cell_z(ms.a(i, t), ms.b(i, t), ms.g(i, t), ms.s(i, t),
                                                   v == Variant::WithMissing);
                CHECK(cell_partition(ms, i, t) == doctest::Approx(z).epsilon(1e-6));
            }
    }
}

TEST_CASE("nonpositive rates diverge")
{
    MultiplierSet ms = uniform_set(1, 2, Variant::WithMissing);
    ms.gamma_col[1] = -0.6;
    CHECK_THROWS_AS(log_cell_partition(ms, 0, 1), DivergentPartition);
    CHECK_THROWS_AS(log_partition(ms), DivergentPartition);
}

TEST_CASE("symmetric multipliers give even marginals")
{
    MultiplierSet ms = random_set(2, 2, Variant::WithMissing, 3);
    ms.beta_row = ms.alpha_row, ms.beta_col = ms.alpha_col;
    ms.sigma_row = ms.gamma_row, ms.sigma_col = ms.gamma_col;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t t = 0; t < 2; ++t) {
            const CellMarginal m = marginal(ms, i, t);
            CHECK(m.p_plus == doctest::Approx(m.p_minus).epsilon(1e-14));
            CHECK(std::abs(m.mean()) < 1e-14);
            for (double x : {0.1, 0.7, 3.0})
                CHECK(m.density(x) == doctest::Approx(m.density(-x)).epsilon(1e-14));
        }
}

TEST_CASE("marginal mean and variance against Monte Carlo")
{
    const MultiplierSet ms = random_set(1, 1, Variant::WithMissing, 8);
    const CellMarginal m = marginal(ms, 0, 0);
    // conditional on being observed the draw is a two-sided exponential mixture
    Engine rng = make_engine(8, 1);
    const std::size_t n = 1000000;
    double s = 0, s2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = uniform01(rng) * (m.p_plus + m.p_minus + m.p_missing);
        double x = 0;
        if (u < m.p_plus)
            x = -std::log(uniform_open(rng)) / m.lambda_plus;
        else if (u < m.p_plus + m.p_minus)
            x = std::log(uniform_open(rng)) / m.lambda_minus;
        s += x, s2 += x * x;
    }
    const double mc_mean = s / n;
    const double mc_var = s2 / n - mc_mean * mc_mean;
    CHECK(std::abs(mc_mean - m.mean()) < 4.0 * std::sqrt(mc_var / n));
    // the variance treats missing as zero, like the MC above
    CHECK(m.variance() == doctest::Approx(mc_var).epsilon(0.01));
}

TEST_CASE("observed cdf and quantile are inverse")
{
    const CellMarginal m = marginal(random_set(1, 1, Variant::WithMissing, 4), 0, 0);
    for (double p : {0.01, 0.2, 0.5, 0.77, 0.99})
        CHECK(m.observed_cdf(m.observed_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("likelihood of single cells")
{
    const MultiplierSet ms = random_set(1, 1, Variant::WithMissing, 6);
    DataMatrix empty(1, 1);
    CHECK(log_likelihood(empty, ms) == doctest::Approx(-log_cell_partition(ms, 0, 0)));

    DataMatrix one(1, 1);
    one.set(0, 0, 0.8);
    CHECK(log_likelihood(one, ms)
          == doctest::Approx(-ms.a(0, 0) - ms.g(0, 0) * 0.8 - log_cell_partition(ms, 0, 0)));
    CHECK(log_likelihood(compute_margins(one), ms) == doctest::Approx(log_likelihood(one, ms)));
}

TEST_CASE("likelihood gradient is expected minus empirical")
{
    Engine rng = make_engine(12, 0);
    DataMatrix data(3, 4);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t t = 0; t < 4; ++t)
            if (uniform01(rng) > 0.15)
                data.set(i, t, standard_normal(rng));
    const MarginConstraints c = compute_margins(data);
    MultiplierSet ms = random_set(3, 4, Variant::WithMissing, 13);
    const MarginConstraints e = expected_constraints(ms);

    struct Probe
    {
        Family f;
        Axis a;
        std::size_t k;
        double emp, exp;
    };
    const std::vector<Probe> probes = {
        {Family::Alpha, Axis::Row, 1, c.n_plus_row[1], e.n_plus_row[1]},
        {Family::Beta, Axis::Col, 2, c.m_minus_col[2], e.m_minus_col[2]},
        {Family::Gamma, Axis::Row, 0, c.s_plus_row[0], e.s_plus_row[0]},
        {Family::Sigma, Axis::Col, 3, c.r_minus_col[3], e.r_minus_col[3]},
    };
    const double h = 1e-6;
    for (const auto& p : probes) {
        MultiplierSet up = ms, dn = ms;
        up.family(p.f, p.a)[p.k] += h;
        dn.family(p.f, p.a)[p.k] -= h;
        const double fd = (log_likelihood(c, up) - log_likelihood(c, dn)) / (2 * h);
        CHECK(fd == doctest::Approx(p.exp - p.emp).epsilon(1e-5));
    }
}

TEST_CASE("expected constraints")
{
    const MultiplierSet ms = uniform_set(1, 3, Variant::WithMissing);
    const MarginConstraints e = expected_constraints(ms);
    CHECK(e.n_plus_row[0] == doctest::Approx(1.0));
    CHECK(e.s_plus_row[0] == doctest::Approx(1.0));

    const MarginConstraints r = expected_constraints(random_set(4, 5, Variant::WithMissing, 21));
    CHECK(margin_totals_mismatch(r) < 1e-12);
}

TEST_CASE("expected constraints against sampled matrices")
{
    const MultiplierSet ms = random_set(3, 4, Variant::WithMissing, 31);
    const MarginConstraints e = expected_constraints(ms);
    const std::size_t reps = 20000;
    std::vector<double> s(3), s2(3), n(3), n2(3);
    for (std::size_t r = 0; r < reps; ++r) {
        const MarginConstraints c = compute_margins(sample_matrix(ms, derive_seed(77, r)));
        for (std::size_t i = 0; i < 3; ++i) {
            s[i] += c.s_plus_row[i], s2[i] += c.s_plus_row[i] * c.s_plus_row[i];
            n[i] += c.n_minus_row[i], n2[i] += c.n_minus_row[i] * c.n_minus_row[i];
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const double ms_ = s[i] / reps, mn = n[i] / reps;
        const double ses = std::sqrt((s2[i] / reps - ms_ * ms_) / reps);
        const double sen = std::sqrt((n2[i] / reps - mn * mn) / reps);
        CHECK(std::abs(ms_ - e.s_plus_row[i]) < 4 * ses);
        CHECK(std::abs(mn - e.n_minus_row[i]) < 4 * sen);
    }
}

TEST_CASE("physical quantities")
{
    MultiplierSet ms = uniform_set(1, 1, Variant::WithMissing);
    ms.gamma_row[0] = 0.5, ms.gamma_col[0] = 0.5;
    ms.sigma_row[0] = std::exp(1.0) - 0.5, ms.sigma_col[0] = 0.5;
    auto r = physical_quantities(ms, 0, 0);
    REQUIRE(std::holds_alternative<PhysicalQuantities>(r));
    CHECK(std::get<PhysicalQuantities>(r).temperature == doctest::Approx(1.0));

    MultiplierSet sym = random_set(1, 1, Variant::WithMissing, 2);
    sym.beta_row = sym.alpha_row, sym.beta_col = sym.alpha_col;
    sym.sigma_row = sym.gamma_row, sym.sigma_col = sym.gamma_col;
    sym.gamma_row[0] = sym.sigma_row[0] = 1.5; // keeps g s > 1
    auto rs = physical_quantities(sym, 0, 0);
    REQUIRE(std::holds_alternative<PhysicalQuantities>(rs));
    CHECK(std::abs(std::get<PhysicalQuantities>(rs).mu1) < 1e-12);
    CHECK(std::abs(std::get<PhysicalQuantities>(rs).mu2) < 1e-12);

    for (std::uint64_t seed = 0; seed < 20; ++seed)
        for (auto v : {Variant::WithMissing, Variant::NoMissing}) {
            const MultiplierSet x = random_set(1, 1, v, 100 + seed);
            const auto q = physical_quantities(x, 0, 0);
            if (!std::holds_alternative<PhysicalQuantities>(q))
                continue; // g s <= 1 has no finite temperature
            CHECK(reconstruct_partition(std::get<PhysicalQuantities>(q), v)
                  == doctest::Approx(cell_partition(x, 0, 0)).epsilon(1e-10));
        }
}

TEST_CASE("sampling edge cases")
{
    MultiplierSet ms = uniform_set(2, 3, Variant::WithMissing);
    ms.mask.row.assign(2, StateMask::missing);
    ms.mask.col.assign(3, StateMask::all);
    CHECK(sample_matrix(ms, 1).observed_count() == 0);

    const MultiplierSet sym = uniform_set(40, 50, Variant::NoMissing, 0.7);
    const DataMatrix d = sample_matrix(sym, 5);
    CHECK(d.complete());
    const double n = 2000;
    double plus = 0;
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t t = 0; t < 50; ++t)
            plus += d(i, t) >= 0;
    CHECK(std::abs(plus - n / 2) < 4 * std::sqrt(n / 4));
}

TEST_CASE("sampling is independent of the thread count")
{
    const MultiplierSet ms = random_set(30, 40, Variant::WithMissing, 9);
    set_thread_count(1);
    const DataMatrix a = sample_matrix(ms, 123);
    set_thread_count(4);
    const DataMatrix b = sample_matrix(ms, 123);
    set_thread_count(0);
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t t = 0; t < 40; ++t) {
            REQUIRE(a.observed(i, t) == b.observed(i, t));
            if (a.observed(i, t))
                CHECK(a(i, t) == b(i, t));
        }
}

TEST_CASE("constraint spec parsing and counts")
{
    CHECK(ConstraintSpec::parse("no-missing").name() == "no_missing");
    CHECK(ConstraintSpec::parse("M2").name() == "sums_only");
    CHECK(ConstraintSpec::with_missing().parameter_count(10, 40) == 200);
    CHECK(ConstraintSpec::no_missing().parameter_count(25, 127) == 456);
    CHECK(ConstraintSpec::sums_only().parameter_count(25, 127) == 304);
    const ConstraintSpec c = ConstraintSpec::parse("custom:with_missing:ags:g");
    CHECK(c.on(Family::Alpha, Axis::Row));
    CHECK_FALSE(c.on(Family::Alpha, Axis::Col));
    CHECK(c.on(Family::Gamma, Axis::Col));
    CHECK_THROWS_AS(ConstraintSpec::parse("nonsense"), InvalidArgument);
    CHECK_THROWS_AS(ConstraintSpec::parse("custom:with_missing:xz:"), InvalidArgument);
}

TEST_CASE("canonicalize moves the gauge into the rows")
{
    const MultiplierSet ms = random_set(2, 3, Variant::WithMissing, 55);
    MultiplierSet c = ms;
    c.canonicalize(ConstraintSpec::with_missing());
    CHECK(c.alpha_col[0] == 0.0);
    CHECK(c.gamma_col[0] == 0.0);
    CHECK(log_partition(c) == doctest::Approx(log_partition(ms)).epsilon(1e-12));
}
