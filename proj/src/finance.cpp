#include "maxent/finance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <spdlog/spdlog.h>

#include "maxent/numeric.hpp"
#include "maxent/random.hpp"
#include "maxent/statistics.hpp"

namespace maxent {

DataMatrix detrend(const DataMatrix& data, const MultivariateModel& model)
{
    const auto& ms = model.multipliers;
    if (ms.rows() != data.rows() || ms.cols() != data.cols())
        throw ShapeMismatch("model and data shapes differ");
    DataMatrix out = data;
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t t = 0; t < data.cols(); ++t)
            if (data.observed(i, t))
                out.set(i, t, data(i, t) - marginal(ms, i, t).mean());
    return out;
}

// -----------------------------------------------------------------------------
// portfolios

PortfolioSolution markowitz_weights(const Eigen::MatrixXd& C, std::span<const double> mu_i, double mu)
{
    const Eigen::Index n = C.rows();
    if (C.cols() != n || static_cast<std::size_t>(n) != mu_i.size())
        throw ShapeMismatch("correlation matrix and expected returns disagree");
    if (n == 0)
        throw EmptyInput("empty portfolio");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    // rcond() skips exactly zero pivots, so check D directly as well
    const Eigen::VectorXd D = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13
        || D.minCoeff() <= 1e-13 * D.maxCoeff())
        throw SingularCorrelation("correlation matrix is not invertible");

    const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(mu_i.data(), n);
    const Eigen::VectorXd c1 = ldlt.solve(one);
    const Eigen::VectorXd cm = ldlt.solve(m);
    const double a = one.dot(c1), b = one.dot(cm), c = m.dot(cm);
    const double det = a * c - b * b;

    Eigen::VectorXd pi;
    const auto [lo, hi] = std::minmax_element(mu_i.begin(), mu_i.end());
    const double spread = *hi - *lo;
    if (spread <= 1e-14 * std::max(1.0, std::abs(*hi))) {
        if (std::abs(mu - *lo) > 1e-12 * std::max(1.0, std::abs(mu)))
            throw DegenerateFrontier("target return unreachable with equal expected returns");
        pi = c1 / a;
    } else {
        if (!(std::abs(det) > 1e-12 * std::abs(a * c)))
            throw DegenerateFrontier("ac - b^2 vanishes");
        const double ell = (c - b * mu) / det;
        const double g = (a * mu - b) / det;
        pi = ell * c1 + g * cm;
    }

    PortfolioSolution sol;
    sol.weights.assign(pi.data(), pi.data() + n);
    sol.target_return = mu;
    sol.in_sample_variance = pi.dot(C * pi);
    return sol;
}

std::vector<double> mean_reversion_returns(const DataMatrix& window)
{
    std::vector<double> mu(window.rows(), 0.0);
    for (std::size_t i = 0; i < window.rows(); ++i)
        for (std::size_t t = window.cols(); t-- > 0;)
            if (window.observed(i, t)) {
                mu[i] = -window(i, t);
                break;
            }
    return mu;
}

PortfolioSolution markowitz_weights(const DataMatrix& window, std::optional<double> target)
{
    if (window.rows() >= window.cols())
        throw SingularCorrelation("correlation matrix needs more days than assets");
    std::vector<std::size_t> used;
    Eigen::MatrixXd C = correlation_matrix(window, &used);
    if (used.size() != window.rows())
        throw SingularCorrelation("some assets overlap too little to be correlated");
    const auto mu_i = mean_reversion_returns(window);
    const double mu = target ? *target : numeric::mean(mu_i);
    auto sol = markowitz_weights(C, mu_i, mu);
    sol.window_end = window.cols();
    return sol;
}

namespace {

double sorted_q(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    return numeric::sorted_quantile(v, p);
}

std::vector<double> defined(const std::vector<std::optional<double>>& v)
{
    std::vector<double> out;
    for (const auto& x : v)
        if (x)
            out.push_back(*x);
    return out;
}

} // namespace

double OosSeries::mean_variance() const { return numeric::mean(variance); }
double OosSeries::variance_quantile(double p) const { return sorted_q(variance, p); }

std::optional<double> OosSeries::mean_sharpe() const
{
    auto v = defined(sharpe);
    if (v.empty())
        return std::nullopt;
    return numeric::mean(v);
}

std::optional<double> OosSeries::sharpe_quantile(double p) const
{
    auto v = defined(sharpe);
    if (v.empty())
        return std::nullopt;
    return sorted_q(std::move(v), p);
}

std::vector<OosSeries> out_of_sample_eval(const DataMatrix& returns, const OosOptions& opts)
{
    if (opts.portfolios.empty() || opts.q_ratios.empty())
        throw InvalidArgument("need at least one portfolio and one q ratio");
    if (opts.horizon < 2)
        throw InvalidArgument("horizon must be at least 2 days");
    for (const auto& p : opts.portfolios)
        for (std::size_t i : p)
            if (i >= returns.rows())
                throw InvalidArgument("portfolio refers to a missing row");

    struct Job
    {
        std::size_t portfolio;
        double q;
        std::size_t in_sample;
        std::vector<std::size_t> starts;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < opts.portfolios.size(); ++p)
        for (double q : opts.q_ratios) {
            if (!(q > 0.0 && q < 1.0))
                throw InvalidArgument("q must lie in (0, 1)");
            const auto n = opts.portfolios[p].size();
            const auto L = static_cast<std::size_t>(std::llround(static_cast<double>(n) / q));
            Job j{p, q, L, {}};
            for (std::size_t s = 0; s + L + opts.horizon <= returns.cols(); s += opts.horizon)
                j.starts.push_back(s);
            if (j.starts.size() < 2)
                throw InsufficientSample("fewer than two in-sample/out-of-sample window pairs");
            jobs.push_back(std::move(j));
        }

    // The detrending ensemble is calibrated on every row of the in-sample
    // window. Column constraints make the detrended cross-section sum to
    // zero, so calibrating on the portfolio alone would make its correlation
    // matrix singular.
    struct Detrended
    {
        std::optional<DataMatrix> data;
        bool converged = true;
    };
    std::vector<std::pair<std::size_t, std::size_t>> windows; // (start, length)
    if (opts.detrend) {
        for (const auto& j : jobs)
            for (std::size_t s : j.starts)
                windows.emplace_back(s, j.in_sample);
        std::sort(windows.begin(), windows.end());
        windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
    }
    std::vector<Detrended> detrended(windows.size());
    parallel_for(windows.size(), [&](std::size_t k) {
        const auto [s, L] = windows[k];
        try {
            const DataMatrix centered = center_rows(returns.slice_cols(s, s + L));
            auto [model, res] = calibrate_matrix(centered, opts.spec, opts.calibration);
            detrended[k].converged = res.converged;
            detrended[k].data = detrend(centered, model);
        } catch (const Error& e) {
            spdlog::warn("window at {}: detrending failed: {}", s, e.what());
        }
    });

    const int schemes = opts.detrend ? 2 : 1;
    struct Cell
    {
        double variance = 0.0;
        std::optional<double> sharpe;
        bool unconverged = false;
        bool fallback = false;
    };
    // one task per (job, window, scheme)
    std::vector<std::size_t> offset(jobs.size() + 1, 0);
    for (std::size_t j = 0; j < jobs.size(); ++j)
        offset[j + 1] = offset[j] + jobs[j].starts.size() * schemes;
    std::vector<Cell> cells(offset.back());

    parallel_for(cells.size(), [&](std::size_t task) {
        const std::size_t j = std::upper_bound(offset.begin(), offset.end(), task) - offset.begin() - 1;
        const Job& job = jobs[j];
        const std::size_t local = task - offset[j];
        const std::size_t w = local / schemes;
        const bool use_detrended = local % schemes == 1;
        const auto& rows = opts.portfolios[job.portfolio];
        const std::size_t s = job.starts[w];
        const DataMatrix sub = returns.select_rows(rows);
        Cell& out = cells[task];

        std::vector<double> weights;
        try {
            if (use_detrended) {
                const auto it = std::lower_bound(windows.begin(), windows.end(), std::pair{s, job.in_sample});
                const Detrended& d = detrended[it - windows.begin()];
                out.unconverged = !d.converged;
                if (!d.data)
                    throw DegenerateWindow("no detrended window");
                weights = markowitz_weights(d.data->select_rows(rows)).weights;
            } else {
                weights = markowitz_weights(sub.slice_cols(s, s + job.in_sample)).weights;
            }
        } catch (const Error& e) {
            spdlog::warn("window {} of portfolio {}: {}; using equal weights", s, job.portfolio, e.what());
            weights.assign(rows.size(), 1.0 / static_cast<double>(rows.size()));
            out.fallback = true;
        }

        std::vector<double> pr(opts.horizon, 0.0);
        for (std::size_t h = 0; h < opts.horizon; ++h)
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const std::size_t t = s + job.in_sample + h;
                if (sub.observed(k, t))
                    pr[h] += weights[k] * sub(k, t);
            }
        out.variance = numeric::variance(pr);
        if (out.variance > 0.0)
            out.sharpe = numeric::mean(pr) / out.variance;
    });

    std::vector<OosSeries> result;
    for (std::size_t j = 0; j < jobs.size(); ++j)
        for (int sch = 0; sch < schemes; ++sch) {
            OosSeries ser;
            ser.portfolio = jobs[j].portfolio;
            ser.q = jobs[j].q;
            ser.in_sample = jobs[j].in_sample;
            ser.detrended = sch == 1;
            ser.window_starts = jobs[j].starts;
            for (std::size_t w = 0; w < jobs[j].starts.size(); ++w) {
                const Cell& c = cells[offset[j] + w * schemes + sch];
                ser.variance.push_back(c.variance);
                ser.sharpe.push_back(c.sharpe);
                ser.unconverged += c.unconverged;
                ser.fallbacks += c.fallback;
            }
            result.push_back(std::move(ser));
        }
    return result;
}

std::vector<std::vector<std::size_t>> random_portfolios(std::size_t n_stocks,
                                                        std::span<const std::size_t> sizes,
                                                        std::size_t count, std::uint64_t seed)
{
    std::vector<std::vector<std::size_t>> out;
    std::uint64_t stream = 0;
    for (std::size_t size : sizes) {
        if (size == 0 || size > n_stocks)
            throw InvalidArgument("portfolio size out of range");
        for (std::size_t c = 0; c < count; ++c) {
            Engine rng = make_engine(seed, stream++);
            std::vector<std::size_t> idx(n_stocks);
            std::iota(idx.begin(), idx.end(), 0);
            // partial Fisher-Yates with our own uniform draws keeps the result portable
            for (std::size_t k = 0; k < size; ++k) {
                const std::size_t r = k + static_cast<std::size_t>(uniform01(rng) * (n_stocks - k));
                std::swap(idx[k], idx[std::min(r, n_stocks - 1)]);
            }
            idx.resize(size);
            std::sort(idx.begin(), idx.end());
            out.push_back(std::move(idx));
        }
    }
    return out;
}

PowerLawFit power_law_fit(std::span<const double> values, std::size_t min_tail)
{
    std::vector<double> x;
    for (double v : values)
        if (std::isfinite(v) && v != 0.0)
            x.push_back(std::abs(v));
    std::sort(x.begin(), x.end());
    if (x.size() < min_tail || min_tail < 2)
        throw InsufficientSample("too few nonzero values for a tail fit");

    // suffix sums of ln x for O(1) alpha per candidate
    const std::size_t n = x.size();
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;)
        suffix[k] = suffix[k + 1] + std::log(x[k]);

    PowerLawFit best;
    best.ks = numeric::inf;
    for (std::size_t k = 0; k + min_tail <= n; ++k) {
        if (k > 0 && x[k] == x[k - 1])
            continue;
        const std::size_t m = n - k;
        const double xmin = x[k];
        const double denom = suffix[k] - static_cast<double>(m) * std::log(xmin);
        if (!(denom > 0.0))
            continue;
        const double alpha = 1.0 + static_cast<double>(m) / denom;
        double d = 0.0;
        for (std::size_t j = k; j < n; ++j) {
            const double model = 1.0 - std::pow(x[j] / xmin, 1.0 - alpha);
            const double lo = static_cast<double>(j - k) / static_cast<double>(m);
            const double hi = static_cast<double>(j - k + 1) / static_cast<double>(m);
            d = std::max({d, std::abs(model - lo), std::abs(model - hi)});
        }
        if (d < best.ks)
            best = {alpha, xmin, d, m};
    }
    if (!std::isfinite(best.ks))
        throw InsufficientSample("no admissible tail cutoff");
    return best;
}

// -----------------------------------------------------------------------------
// value at risk

DataMatrix circulant_embed(std::span<const double> r, std::size_t L1, std::size_t L2, double epsilon)
{
    if (L1 == 0 || L2 == 0)
        throw InvalidArgument("circulant shape must be positive");
    if (r.size() != L1 + L2 - 1)
        throw ShapeMismatch("circulant embedding needs L1 + L2 - 1 returns");
    DataMatrix R(L1, L2 + 1);
    for (std::size_t k = 0; k < L1; ++k)
        for (std::size_t j = 0; j <= L2; ++j) {
            const std::size_t idx = L1 - k + j; // 1-based
            R.set(k, j, idx == L1 + L2 ? epsilon : r[idx - 1]);
        }
    return R;
}

std::string to_string(VarModel m)
{
    switch (m) {
    case VarModel::M1: return "M1";
    case VarModel::M2: return "M2";
    case VarModel::M3: return "M3";
    }
    return "?";
}

VarModel parse_var_model(const std::string& s)
{
    if (s == "M1" || s == "m1")
        return VarModel::M1;
    if (s == "M2" || s == "m2")
        return VarModel::M2;
    if (s == "M3" || s == "m3")
        return VarModel::M3;
    throw InvalidArgument("unknown VaR model '" + s + "'");
}

namespace {

ConstraintSpec var_constraints(VarModel m)
{
    return m == VarModel::M2 ? ConstraintSpec::sums_only() : ConstraintSpec::no_missing();
}

const std::vector<double> quartiles = {0.0, 0.25, 0.5, 0.75, 1.0};

} // namespace

void VarModelSpec::validate() const
{
    if (!(level > 0.0 && level < 1.0))
        throw InvalidArgument("VaR level must lie in (0, 1)");
    if (window < 8)
        throw InvalidArgument("VaR window too short");
    if (kind != VarModel::M1 && L1 + L2 - 1 != window)
        throw InvalidArgument("circulant shape needs L1 + L2 - 1 = window");
}

std::size_t VarModelSpec::parameter_count() const
{
    if (kind == VarModel::M1)
        return UnivariateSpec{make_grid({-numeric::inf, -1, 0, 1, numeric::inf}), UnivariateFamily::M1, 0}
            .parameter_count();
    return var_constraints(kind).parameter_count(L1, L2 + 1);
}

namespace {

double m1_estimate(std::span<const double> window, const VarModelSpec& spec, bool& converged)
{
    auto grid = empirical_quantiles(window, quartiles, true);
    std::vector<double> q = grid.q;
    q.erase(std::unique(q.begin(), q.end()), q.end());
    // an empty bin would force a zero-mass sum constraint; merge it into a neighbour
    BinStatistics st;
    while (true) {
        grid = make_grid(q);
        st = bin_statistics(window, grid);
        auto empty = std::find(st.count.begin(), st.count.end(), 0.0);
        if (empty == st.count.end() || q.size() <= 3)
            break;
        const std::size_t i = empty - st.count.begin();
        q.erase(q.begin() + static_cast<std::ptrdiff_t>(i == 0 ? 1 : i));
    }
    UnivariateSpec us{grid, UnivariateFamily::M1, window.size()};
    CalibrationOptions o = spec.calibration;
    o.initial.reset();
    auto cal = calibrate(us, st, o);
    converged = cal.converged;
    return cal.model.quantile(1.0 - spec.level);
}

double pooled_quantile(const CellMarginal& a, const CellMarginal& b, double p)
{
    double lo = std::min(a.observed_quantile(p), b.observed_quantile(p));
    double hi = std::max(a.observed_quantile(p), b.observed_quantile(p));
    if (lo == hi)
        return lo;
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * (a.observed_cdf(mid) + b.observed_cdf(mid)) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

VarEstimate var_estimate(std::span<const double> window, const VarModelSpec& spec,
                         const MultiplierSet* warm_plus, const MultiplierSet* warm_minus)
{
    spec.validate();
    if (window.size() != spec.window)
        throw ShapeMismatch("window length differs from the model's");
    const auto [mn, mx] = std::minmax_element(window.begin(), window.end());
    if (*mn == *mx)
        throw DegenerateWindow("every return in the window is equal");

    VarEstimate est;
    if (spec.kind == VarModel::M1) {
        est.value = m1_estimate(window, spec, est.converged);
        return est;
    }

    double eps = numeric::inf;
    for (double r : window)
        eps = std::min(eps, std::abs(r));
    const ConstraintSpec cs = var_constraints(spec.kind);
    CellMarginal marg[2];
    for (int side = 0; side < 2; ++side) {
        const DataMatrix R = circulant_embed(window, spec.L1, spec.L2, side == 0 ? eps : -eps);
        CalibrationOptions o = spec.calibration;
        const MultiplierSet* warm = side == 0 ? warm_plus : warm_minus;
        if (warm)
            o.initial = *warm;
        auto [model, res] = calibrate_matrix(R, cs, o);
        est.converged = est.converged && res.converged;
        marg[side] = marginal(model.multipliers, 0, spec.L2);
        (side == 0 ? est.plus_state : est.minus_state) = std::move(model.multipliers);
    }
    est.value = pooled_quantile(marg[0], marg[1], 1.0 - spec.level);
    return est;
}

namespace {

// The next window's circulant is the current one shifted left by a column.
MultiplierSet shifted(const MultiplierSet& ms)
{
    MultiplierSet out = ms;
    out.mask = {};
    for (int f = 0; f < 4; ++f) {
        auto& v = out.family(static_cast<Family>(f), Axis::Col);
        if (v.size() > 1)
            std::rotate(v.begin(), v.begin() + 1, v.end() - 1);
    }
    return out;
}

constexpr std::size_t var_chunk = 64;

} // namespace

RollingVar rolling_var(std::span<const double> returns, const VarModelSpec& spec)
{
    spec.validate();
    if (returns.size() < spec.window + 2)
        throw InsufficientSample("series shorter than one window plus its test day");
    const std::size_t W = returns.size() - spec.window - 1;
    RollingVar out;
    out.var.assign(W, 0.0);
    out.realized.assign(W, 0.0);
    std::vector<char> conv(W, 1);

    // chunks start cold so the result is independent of the thread count
    const std::size_t chunks = (W + var_chunk - 1) / var_chunk;
    parallel_for(chunks, [&](std::size_t c) {
        std::optional<MultiplierSet> wp, wm;
        for (std::size_t t0 = c * var_chunk; t0 < std::min(W, (c + 1) * var_chunk); ++t0) {
            const auto win = returns.subspan(t0, spec.window);
            try {
                auto e = var_estimate(win, spec, wp ? &*wp : nullptr, wm ? &*wm : nullptr);
                out.var[t0] = e.value;
                conv[t0] = e.converged;
                if (e.plus_state)
                    wp = shifted(*e.plus_state);
                if (e.minus_state)
                    wm = shifted(*e.minus_state);
            } catch (const DegenerateWindow&) {
                out.var[t0] = win[0];
                wp.reset();
                wm.reset();
            }
            out.realized[t0] = returns[t0 + spec.window];
        }
    });

    out.exceptions.resize(W);
    for (std::size_t t = 0; t < W; ++t) {
        out.exceptions[t] = out.realized[t] < out.var[t];
        out.unconverged += conv[t] == 0;
    }
    return out;
}

// -----------------------------------------------------------------------------
// backtests

std::string to_string(Zone z)
{
    switch (z) {
    case Zone::Green: return "green";
    case Zone::Yellow: return "yellow";
    case Zone::Red: return "red";
    }
    return "?";
}

namespace {

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

double chi2_sf(double stat, double dof)
{
    if (!(stat > 0.0))
        return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

std::size_t count_exc(const std::vector<bool>& e)
{
    return static_cast<std::size_t>(std::count(e.begin(), e.end(), true));
}

void check_obs(const std::vector<bool>& e, double p)
{
    if (e.empty())
        throw EmptyInput("no backtest observations");
    if (!(p > 0.0 && p < 1.0))
        throw InvalidArgument("exception probability must lie in (0, 1)");
}

TestOutcome lr_outcome(std::string name, double lr, double dof, double significance)
{
    TestOutcome t;
    t.name = std::move(name);
    t.statistic = std::max(lr, 0.0);
    t.p_value = chi2_sf(*t.statistic, dof);
    t.pass = *t.p_value >= significance;
    return t;
}

TestOutcome vacuous(std::string name)
{
    TestOutcome t;
    t.name = std::move(name);
    t.pass = true;
    t.vacuous = true;
    return t;
}

// Kupiec LR of a single failure after v days.
double tuff_lr(double v, double p)
{
    return -2.0 * (std::log(p) + (v - 1.0) * std::log1p(-p)) +
           2.0 * (-std::log(v) + xlogy(v - 1.0, 1.0 - 1.0 / v));
}

double pof_lr(double n, double x, double p)
{
    const double ph = x / n;
    return -2.0 * (xlogy(n - x, 1.0 - p) + xlogy(x, p)) + 2.0 * (xlogy(n - x, 1.0 - ph) + xlogy(x, ph));
}

std::vector<double> gaps(const std::vector<bool>& e)
{
    std::vector<double> v;
    std::size_t last = 0;
    for (std::size_t t = 0; t < e.size(); ++t)
        if (e[t]) {
            v.push_back(static_cast<double>(t + 1 - last));
            last = t + 1;
        }
    return v;
}

} // namespace

TestOutcome traffic_light_test(const std::vector<bool>& exc, double p)
{
    check_obs(exc, p);
    const double x = static_cast<double>(count_exc(exc));
    const double cdf = boost::math::cdf(boost::math::binomial(static_cast<double>(exc.size()), p), x);
    TestOutcome t;
    t.name = "TrafficLight";
    t.statistic = cdf;
    t.zone = cdf <= 0.95 ? Zone::Green : cdf < 0.9999 ? Zone::Yellow : Zone::Red;
    t.pass = *t.zone != Zone::Red;
    return t;
}

TestOutcome binomial_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    const double n = static_cast<double>(exc.size());
    const double z = (static_cast<double>(count_exc(exc)) - n * p) / std::sqrt(n * p * (1.0 - p));
    TestOutcome t;
    t.name = "Binomial";
    t.statistic = z;
    t.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
    t.pass = *t.p_value >= significance;
    return t;
}

TestOutcome pof_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    const double n = static_cast<double>(exc.size());
    return lr_outcome("POF", pof_lr(n, static_cast<double>(count_exc(exc)), p), 1.0, significance);
}

TestOutcome tuff_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    const auto g = gaps(exc);
    if (g.empty())
        return vacuous("TUFF");
    return lr_outcome("TUFF", tuff_lr(g[0], p), 1.0, significance);
}

namespace {

double cci_lr(const std::vector<bool>& exc)
{
    double n[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t t = 1; t < exc.size(); ++t)
        n[exc[t - 1] ? 1 : 0][exc[t] ? 1 : 0] += 1.0;
    const double n0 = n[0][0] + n[0][1], n1 = n[1][0] + n[1][1];
    const double pi0 = n0 > 0 ? n[0][1] / n0 : 0.0;
    const double pi1 = n1 > 0 ? n[1][1] / n1 : 0.0;
    const double pi = (n[0][1] + n[1][1]) / (n0 + n1);
    const double null = xlogy(n[0][0] + n[1][0], 1.0 - pi) + xlogy(n[0][1] + n[1][1], pi);
    const double alt = xlogy(n[0][0], 1.0 - pi0) + xlogy(n[0][1], pi0) + xlogy(n[1][0], 1.0 - pi1) +
                       xlogy(n[1][1], pi1);
    return -2.0 * (null - alt);
}

} // namespace

TestOutcome cci_test(const std::vector<bool>& exc, double significance)
{
    if (exc.size() < 2)
        throw InsufficientSample("independence test needs two observations");
    return lr_outcome("CCI", cci_lr(exc), 1.0, significance);
}

TestOutcome cc_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    if (exc.size() < 2)
        throw InsufficientSample("conditional coverage needs two observations");
    const double n = static_cast<double>(exc.size());
    const double lr = pof_lr(n, static_cast<double>(count_exc(exc)), p) + cci_lr(exc);
    return lr_outcome("CC", lr, 2.0, significance);
}

TestOutcome tbf_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    const auto g = gaps(exc);
    if (g.empty())
        return vacuous("TBF");
    double lr = 0.0;
    for (double v : g)
        lr += tuff_lr(v, p);
    return lr_outcome("TBF", lr, static_cast<double>(g.size()), significance);
}

TestOutcome tbfi_test(const std::vector<bool>& exc, double p, double significance)
{
    check_obs(exc, p);
    const auto g = gaps(exc);
    if (g.empty())
        return vacuous("TBFI");
    double lr = 0.0;
    for (double v : g)
        lr += tuff_lr(v, p);
    lr -= pof_lr(static_cast<double>(exc.size()), static_cast<double>(g.size()), p);
    const double dof = std::max(1.0, static_cast<double>(g.size()) - 1.0);
    return lr_outcome("TBFI", lr, dof, significance);
}

std::size_t BacktestReport::passed() const
{
    return static_cast<std::size_t>(std::count_if(tests.begin(), tests.end(), [](const auto& t) { return t.pass; }));
}

const TestOutcome& BacktestReport::at(const std::string& name) const
{
    for (const auto& t : tests)
        if (t.name == name)
            return t;
    throw InvalidArgument("no backtest named '" + name + "'");
}

BacktestReport backtest_suite(const std::vector<bool>& exceptions, double level, double significance)
{
    if (exceptions.empty())
        throw EmptyInput("no backtest observations");
    if (!(significance > 0.0 && significance < 1.0))
        throw InvalidArgument("significance must lie in (0, 1)");
    if (exceptions.size() < 30)
        spdlog::warn("backtest on only {} observations", exceptions.size());
    const double p = 1.0 - level;
    BacktestReport r;
    r.level = level;
    r.significance = significance;
    r.n_obs = exceptions.size();
    r.exception_count = count_exc(exceptions);
    r.tests = {traffic_light_test(exceptions, p),   binomial_test(exceptions, p, significance),
               pof_test(exceptions, p, significance), tuff_test(exceptions, p, significance),
               cc_test(exceptions, p, significance),  cci_test(exceptions, significance),
               tbf_test(exceptions, p, significance), tbfi_test(exceptions, p, significance)};
    return r;
}

} // namespace maxent
