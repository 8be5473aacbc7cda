#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "maxent/finance.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"
#include "maxent/synthetic.hpp"

using namespace maxent;

namespace {

std::vector<bool> exceptions_at(std::size_t n, std::initializer_list<std::size_t> idx)
{
    std::vector<bool> e(n, false);
    for (auto k : idx)
        e[k] = true;
    return e;
}

std::vector<bool> first_k(std::size_t n, std::size_t k)
{
    std::vector<bool> e(n, false);
    std::fill(e.begin(), e.begin() + k, true);
    return e;
}

double xlogy(double x, double y)
{
    return x == 0 ? 0.0 : x * std::log(y);
}

// Christoffersen independence LR straight from the transition counts
double cci_oracle(const std::vector<bool>& e)
{
    double n[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t t = 1; t < e.size(); ++t)
        n[e[t - 1]][e[t]] += 1;
    const double p01 = n[0][1] / (n[0][0] + n[0][1]);
    const double p11 = n[1][1] / (n[1][0] + n[1][1]);
    const double p = (n[0][1] + n[1][1]) / (n[0][0] + n[0][1] + n[1][0] + n[1][1]);
    const double l0 = xlogy(n[0][0] + n[1][0], 1 - p) + xlogy(n[0][1] + n[1][1], p);
    const double l1 = xlogy(n[0][0], 1 - p01) + xlogy(n[0][1], p01) + xlogy(n[1][0], 1 - p11)
                      + xlogy(n[1][1], p11);
    return -2 * (l0 - l1);
}

MultivariateModel symmetric_model(std::size_t n, std::size_t t)
{
    MultivariateModel m;
    m.spec = ConstraintSpec::no_missing();
    m.multipliers = MultiplierSet::zeros(n, t, Variant::NoMissing);
    for (auto* f : {&m.multipliers.gamma_row, &m.multipliers.gamma_col, &m.multipliers.sigma_row,
                    &m.multipliers.sigma_col})
        std::fill(f->begin(), f->end(), 0.7);
    return m;
}

} // namespace

// -- detrending ----------------------------------------------------------------

TEST_CASE("detrending with a symmetric model is the identity")
{
    const MultivariateModel m = symmetric_model(3, 5);
    const DataMatrix d = sample_matrix(m.multipliers, 1);
    const DataMatrix out = detrend(d, m);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t t = 0; t < 5; ++t)
            CHECK(out(i, t) == doctest::Approx(d(i, t)).epsilon(1e-14));
}

TEST_CASE("detrending subtracts the exponential mean")
{
    MultivariateModel m = symmetric_model(1, 2);
    m.multipliers.gamma_row = {1.0};
    m.multipliers.gamma_col = {1.0, 1.0};
    m.multipliers.mask.row = {StateMask::plus};
    m.multipliers.mask.col = {StateMask::all, StateMask::all};
    DataMatrix d(1, 2);
    d.set(0, 0, 1.25);
    const DataMatrix out = detrend(d, m);
    CHECK(out(0, 0) == doctest::Approx(0.75));
    CHECK_FALSE(out.observed(0, 1));
}

TEST_CASE("detrended model draws average to zero")
{
    MultivariateModel m = symmetric_model(2, 3);
    m.multipliers.alpha_row = {0.4, -0.3};
    m.multipliers.sigma_col = {0.3, 1.2, 0.9};
    const std::size_t reps = 20000;
    std::vector<double> s(6), s2(6);
    for (std::size_t r = 0; r < reps; ++r) {
        const DataMatrix d = detrend(sample_matrix(m.multipliers, derive_seed(3, r)), m);
        for (std::size_t k = 0; k < 6; ++k) {
            const double v = d(k / 3, k % 3);
            s[k] += v, s2[k] += v * v;
        }
    }
    for (std::size_t k = 0; k < 6; ++k) {
        const double mean = s[k] / reps;
        const double se = std::sqrt((s2[k] / reps - mean * mean) / reps);
        CHECK(std::abs(mean) < 4 * se);
    }
}

// -- Markowitz -----------------------------------------------------------------

TEST_CASE("two assets with identity correlation")
{
    const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(2, 2);
    const std::vector<double> mu = {0.01, 0.03};
    const double target = 0.25 * mu[0] + 0.75 * mu[1];
    const PortfolioSolution s = markowitz_weights(C, mu, target);
    // two constraints pin both weights
    CHECK(s.weights[0] == doctest::Approx((mu[1] - target) / (mu[1] - mu[0])).epsilon(1e-12));
    CHECK(s.weights[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s.in_sample_variance == doctest::Approx(0.25 * 0.25 + 0.75 * 0.75));

    const PortfolioSolution mid = markowitz_weights(C, mu, 0.5 * (mu[0] + mu[1]));
    CHECK(mid.weights[0] == doctest::Approx(0.5));
}

TEST_CASE("equal expected returns give the minimum-variance portfolio")
{
    Eigen::MatrixXd C(3, 3);
    C << 1.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.0;
    const std::vector<double> mu = {0.02, 0.02, 0.02};
    const PortfolioSolution s = markowitz_weights(C, mu, 0.02);
    const Eigen::VectorXd w = C.llt().solve(Eigen::VectorXd::Ones(3));
    const Eigen::VectorXd gmv = w / w.sum();
    for (int k = 0; k < 3; ++k)
        CHECK(s.weights[k] == doctest::Approx(gmv(k)).epsilon(1e-12));
    CHECK_THROWS_AS(markowitz_weights(C, mu, 0.05), DegenerateFrontier);
}

TEST_CASE("constraint residuals on random SPD matrices")
{
    Engine rng = make_engine(17, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 8;
        Eigen::MatrixXd A(n, 3 * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3 * n; ++j)
                A(i, j) = standard_normal(rng);
        const Eigen::MatrixXd C = A * A.transpose() / (3 * n);
        std::vector<double> mu(n);
        for (double& m : mu)
            m = 0.01 * standard_normal(rng);
        const double target = 0.004 * standard_normal(rng);
        const PortfolioSolution s = markowitz_weights(C, mu, target);
        double sum = 0, ret = 0;
        for (int i = 0; i < n; ++i)
            sum += s.weights[i], ret += s.weights[i] * mu[i];
        CHECK(std::abs(sum - 1) < 1e-8);
        CHECK(std::abs(ret - target) < 1e-8);
    }
}

TEST_CASE("singular correlation is reported")
{
    Eigen::MatrixXd C = Eigen::MatrixXd::Ones(3, 3);
    const std::vector<double> mu = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(markowitz_weights(C, mu, 0.2), SingularCorrelation);
}

TEST_CASE("mean-reversion expectations and window weights")
{
    DataMatrix w = DataMatrix::from_rows({{0.1, -0.2, 0.3}, {0.2, 0.1, -0.4}});
    CHECK(mean_reversion_returns(w) == std::vector<double>{-0.3, 0.4});
    w.set_missing(0, 2);
    CHECK(mean_reversion_returns(w)[0] == 0.2);

    const DataMatrix r = one_factor_market(5, 40, 2);
    const PortfolioSolution s = markowitz_weights(r);
    double sum = 0;
    for (double x : s.weights)
        sum += x;
    CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("zero returns give zero variance and no Sharpe ratio")
{
    const DataMatrix z = DataMatrix::from_rows(std::vector<std::vector<double>>(4, std::vector<double>(200, 0.0)));
    OosOptions o;
    o.portfolios = {{0, 1, 2}};
    o.q_ratios = {0.1};
    o.detrend = false;
    const auto res = out_of_sample_eval(z, o);
    REQUIRE(res.size() == 1);
    REQUIRE(!res[0].variance.empty());
    for (std::size_t w = 0; w < res[0].variance.size(); ++w) {
        CHECK(res[0].variance[w] == 0.0);
        CHECK_FALSE(res[0].sharpe[w].has_value());
    }
    CHECK_FALSE(res[0].mean_sharpe().has_value());
    CHECK(res[0].fallbacks == res[0].variance.size());
}

TEST_CASE("window order does not change the aggregates")
{
    const DataMatrix r = one_factor_market(12, 400, 4);
    OosOptions o;
    o.portfolios = {{0, 2, 4, 6}};
    o.q_ratios = {0.25};
    o.detrend = false;
    const OosSeries s = out_of_sample_eval(r, o).front();
    OosSeries shuffled = s;
    std::reverse(shuffled.variance.begin(), shuffled.variance.end());
    std::reverse(shuffled.sharpe.begin(), shuffled.sharpe.end());
    CHECK(shuffled.mean_variance() == doctest::Approx(s.mean_variance()).epsilon(1e-14));
    CHECK(shuffled.variance_quantile(0.3) == s.variance_quantile(0.3));
    CHECK(*shuffled.mean_sharpe() == doctest::Approx(*s.mean_sharpe()).epsilon(1e-14));
}

TEST_CASE("out-of-sample windows and detrended series")
{
    FactorMarketOptions fo;
    fo.tail_nu = 4.2;
    const DataMatrix r = one_factor_market(20, 600, 8, fo);
    OosOptions o;
    o.portfolios = {{1, 3, 5, 7, 9, 11}};
    o.q_ratios = {0.5};
    o.horizon = 30;
    const auto res = out_of_sample_eval(r, o);
    REQUIRE(res.size() == 2);
    const auto& raw = res[0].detrended ? res[1] : res[0];
    const auto& det = res[0].detrended ? res[0] : res[1];
    // in-sample length is N / q
    CHECK(raw.in_sample == 12);
    // windows step by the horizon and stop before running past the data
    CHECK(raw.window_starts.front() == 0);
    CHECK(raw.window_starts[1] == 30);
    CHECK(raw.window_starts.back() + 12 + 30 <= 600);
    CHECK(raw.window_starts.back() + 30 + 12 + 30 > 600);
    CHECK(det.window_starts == raw.window_starts);
    CHECK(det.fallbacks == 0);
}

TEST_CASE("random portfolios")
{
    const std::vector<std::size_t> sizes = {3, 5};
    const auto a = random_portfolios(10, sizes, 4, 9);
    CHECK(a == random_portfolios(10, sizes, 4, 9));
    REQUIRE(a.size() == 8);
    CHECK(a[0].size() == 3);
    CHECK(a[7].size() == 5);
    for (const auto& p : a) {
        CHECK(std::is_sorted(p.begin(), p.end()));
        CHECK(std::adjacent_find(p.begin(), p.end()) == p.end());
        CHECK(p.back() < 10);
    }
    const std::vector<std::size_t> too_big = {11};
    CHECK_THROWS_AS(random_portfolios(10, too_big, 1, 0), InvalidArgument);
}

TEST_CASE("power-law tail fit on Pareto draws")
{
    Engine rng = make_engine(6, 0);
    const double alpha = 3.5;
    std::vector<double> x(5000);
    for (double& v : x)
        v = (uniform01(rng) < 0.5 ? -1 : 1) * std::pow(uniform_open(rng), -1.0 / (alpha - 1.0));
    const PowerLawFit f = power_law_fit(x);
    CHECK(f.alpha == doctest::Approx(alpha).epsilon(0.06));
    CHECK(f.n_tail >= 20);
}

// -- value at risk -------------------------------------------------------------

TEST_CASE("circulant layout")
{
    const std::vector<double> r = {1, 2, 3, 4};
    const DataMatrix m = circulant_embed(r, 2, 3, 9);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 4);
    const std::vector<std::vector<double>> want = {{2, 3, 4, 9}, {1, 2, 3, 4}};
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t t = 0; t < 4; ++t)
            CHECK(m(i, t) == want[i][t]);

    std::vector<double> big(150);
    for (std::size_t k = 0; k < 150; ++k)
        big[k] = k + 1.0;
    const DataMatrix c = circulant_embed(big, 25, 126, -0.5);
    CHECK(c.rows() == 25);
    CHECK(c.cols() == 127);
    CHECK(c(24, 0) == 1.0);
    CHECK(c(0, 0) == 25.0);
    CHECK(c(0, 126) == -0.5);
    // constant along each diagonal
    for (std::size_t k = 1; k < 25; ++k)
        for (std::size_t j = 1; j < 126; ++j)
            CHECK(c(k, j) == c(k - 1, j - 1));
    // each return fills its whole diagonal, less the corner taken by the extra value
    std::vector<int> seen(151, 0);
    for (std::size_t k = 0; k < 25; ++k)
        for (std::size_t j = 0; j < 127; ++j)
            if (!(k == 0 && j == 126))
                ++seen[static_cast<std::size_t>(c(k, j))];
    for (std::size_t i = 1; i <= 150; ++i)
        CHECK(seen[i] == static_cast<int>(std::min({i, std::size_t{25}, 152 - i})));

    CHECK_THROWS_AS(circulant_embed(r, 2, 2, 0), ShapeMismatch);
}

TEST_CASE("VaR model parameter counts")
{
    VarModelSpec s;
    s.kind = VarModel::M2;
    CHECK(s.parameter_count() == 304);
    s.kind = VarModel::M3;
    CHECK(s.parameter_count() == 456);
    s.kind = VarModel::M1;
    CHECK(s.parameter_count() == 5);
    CHECK(parse_var_model("m3") == VarModel::M3);
    s.kind = VarModel::M3;
    s.window = 100;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s.window = 150;
    s.level = 1.0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("M1 VaR of Gaussian windows")
{
    const double sigma = 0.02;
    VarModelSpec s;
    s.kind = VarModel::M1;
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 100; ++r)
        v.push_back(var_estimate(gaussian_stream(150, sigma, 300 + r), s).value);
    std::sort(v.begin(), v.end());
    const double median = 0.5 * (v[49] + v[50]);
    CHECK(median == doctest::Approx(-1.645 * sigma).epsilon(0.15));
}

TEST_CASE("VaR is monotone in the level")
{
    const auto w = gaussian_stream(150, 0.01, 5);
    for (auto kind : {VarModel::M1, VarModel::M2, VarModel::M3}) {
        VarModelSpec s;
        s.kind = kind;
        double prev = 0;
        for (double level : {0.9, 0.95, 0.99}) {
            s.level = level;
            const double v = var_estimate(w, s).value;
            if (level > 0.9)
                CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("alternating window is deterministic")
{
    std::vector<double> w(150);
    for (std::size_t k = 0; k < w.size(); ++k)
        w[k] = k % 2 ? 0.02 : -0.02;
    VarModelSpec s;
    s.kind = VarModel::M1;
    const double a = var_estimate(w, s).value;
    CHECK(a == var_estimate(w, s).value);
    // half the mass sits on -0.02, so the 5% quantile lies on the negative point
    CHECK(a == doctest::Approx(-0.02).epsilon(1e-3));

    const std::vector<double> flat(150, 0.01);
    CHECK_THROWS_AS(var_estimate(flat, s), DegenerateWindow);
}

TEST_CASE("rolling VaR does not depend on the thread count")
{
    const auto r = gaussian_stream(260, 0.01, 12);
    VarModelSpec s;
    s.kind = VarModel::M2;
    set_thread_count(1);
    const RollingVar a = rolling_var(r, s);
    set_thread_count(4);
    const RollingVar b = rolling_var(r, s);
    set_thread_count(0);
    CHECK(a.var.size() == 260 - 150 - 1);
    CHECK(a.var == b.var);
    CHECK(a.exceptions == b.exceptions);
    for (std::size_t k = 0; k < a.var.size(); ++k) {
        CHECK(a.realized[k] == r[150 + k]);
        CHECK(a.exceptions[k] == (a.realized[k] < a.var[k]));
    }
}

// -- backtests -----------------------------------------------------------------

TEST_CASE("traffic light follows the Basel zones")
{
    CHECK(*traffic_light_test(first_k(250, 4), 0.01).zone == Zone::Green);
    CHECK(*traffic_light_test(first_k(250, 5), 0.01).zone == Zone::Yellow);
    CHECK(*traffic_light_test(first_k(250, 9), 0.01).zone == Zone::Yellow);
    CHECK(*traffic_light_test(first_k(250, 10), 0.01).zone == Zone::Red);
    CHECK_FALSE(traffic_light_test(first_k(250, 10), 0.01).pass);
}

TEST_CASE("POF matches the Kupiec formula")
{
    const double n = 250, x = 10, p = 0.01;
    const double lr = -2 * (xlogy(n - x, 1 - p) + xlogy(x, p))
                      + 2 * (xlogy(n - x, 1 - x / n) + xlogy(x, x / n));
    const TestOutcome t = pof_test(first_k(250, 10), p, 0.05);
    CHECK(*t.statistic == doctest::Approx(lr).epsilon(1e-12));
    CHECK_FALSE(t.pass);
}

TEST_CASE("CCI on a 20-observation toy")
{
    const auto scattered = exceptions_at(20, {2, 7, 12, 17});
    const auto clustered = exceptions_at(20, {8, 9, 10, 11});
    CHECK(*cci_test(scattered, 0.05).statistic == doctest::Approx(cci_oracle(scattered)).epsilon(1e-12));
    CHECK(*cci_test(clustered, 0.05).statistic == doctest::Approx(cci_oracle(clustered)).epsilon(1e-12));
    CHECK(cci_test(scattered, 0.05).pass);
    CHECK_FALSE(cci_test(clustered, 0.05).pass);
}

TEST_CASE("tripled exception rate")
{
    Engine rng = make_engine(4, 0);
    std::vector<bool> e(1000);
    for (std::size_t k = 0; k < e.size(); ++k)
        e[k] = uniform01(rng) < 0.15;
    const BacktestReport r = backtest_suite(e, 0.95);
    CHECK(*r.at("TrafficLight").zone == Zone::Red);
    CHECK_FALSE(r.at("Binomial").pass);
    CHECK_FALSE(r.at("POF").pass);
}

TEST_CASE("no exceptions: time-between-failure tests pass vacuously")
{
    const BacktestReport r = backtest_suite(std::vector<bool>(300, false), 0.95);
    for (const char* name : {"TUFF", "TBF", "TBFI"}) {
        CHECK(r.at(name).pass);
        CHECK(r.at(name).vacuous);
    }
    CHECK(r.tests.size() == 8);
    CHECK(r.exception_count == 0);
}

TEST_CASE("backtests are deterministic and combine consistently")
{
    Engine rng = make_engine(9, 0);
    std::vector<bool> e(500);
    for (std::size_t k = 0; k < e.size(); ++k)
        e[k] = uniform01(rng) < 0.05;
    const BacktestReport a = backtest_suite(e, 0.95);
    const BacktestReport b = backtest_suite(e, 0.95);
    for (std::size_t k = 0; k < a.tests.size(); ++k)
        CHECK(a.tests[k].statistic == b.tests[k].statistic);
    CHECK(*a.at("CC").statistic
          == doctest::Approx(*a.at("POF").statistic + *a.at("CCI").statistic).epsilon(1e-12));
}

TEST_CASE("POF rejects at the nominal rate under the null")
{
    Engine rng = make_engine(21, 0);
    const int reps = 1000;
    int rejected = 0;
    for (int r = 0; r < reps; ++r) {
        std::vector<bool> e(1000);
        for (std::size_t k = 0; k < e.size(); ++k)
            e[k] = uniform01(rng) < 0.05;
        rejected += !pof_test(e, 0.05, 0.05).pass;
    }
    const double rate = double(rejected) / reps;
    CHECK(std::abs(rate - 0.05) < 3 * std::sqrt(0.05 * 0.95 / reps));
}
