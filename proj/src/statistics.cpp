#include "maxent/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <spdlog/spdlog.h>

#include "maxent/error.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

namespace maxent {

namespace {
constexpr double nan = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(Moment m)
{
    switch (m) {
    case Moment::Mean: return "mean";
    case Moment::Variance: return "variance";
    case Moment::Skewness: return "skewness";
    case Moment::Kurtosis: return "kurtosis";
    }
    return "?";
}

Moment parse_moment(const std::string& s)
{
    if (s == "mean")
        return Moment::Mean;
    if (s == "variance" || s == "var")
        return Moment::Variance;
    if (s == "skewness" || s == "skew")
        return Moment::Skewness;
    if (s == "kurtosis" || s == "kurt")
        return Moment::Kurtosis;
    throw InvalidArgument("unknown moment '" + s + "'");
}

std::string to_string(StatAxis a)
{
    switch (a) {
    case StatAxis::Row: return "row";
    case StatAxis::Column: return "column";
    case StatAxis::Global: return "global";
    }
    return "?";
}

StatAxis parse_axis(const std::string& s)
{
    if (s == "row" || s == "rows")
        return StatAxis::Row;
    if (s == "column" || s == "col" || s == "columns")
        return StatAxis::Column;
    if (s == "global" || s == "all")
        return StatAxis::Global;
    throw InvalidArgument("unknown axis '" + s + "'");
}

double sample_moment(std::span<const double> v, Moment m)
{
    switch (m) {
    case Moment::Mean:
        return v.empty() ? nan : numeric::mean(v);
    case Moment::Variance:
        return v.size() < 2 ? nan : numeric::variance(v);
    case Moment::Skewness:
    case Moment::Kurtosis: {
        if (v.size() < 3 || !(numeric::variance(v) > 0.0))
            return nan;
        return m == Moment::Skewness ? numeric::skewness(v) : numeric::kurtosis(v);
    }
    }
    return nan;
}

namespace {

std::vector<std::vector<double>> targets_of(const DataMatrix& d, StatAxis axis)
{
    std::vector<std::vector<double>> out;
    switch (axis) {
    case StatAxis::Row:
        for (std::size_t i = 0; i < d.rows(); ++i)
            out.push_back(d.observed_row(i));
        break;
    case StatAxis::Column:
        for (std::size_t t = 0; t < d.cols(); ++t)
            out.push_back(d.observed_col(t));
        break;
    case StatAxis::Global: {
        std::vector<double> all;
        for (std::size_t i = 0; i < d.rows(); ++i) {
            auto r = d.observed_row(i);
            all.insert(all.end(), r.begin(), r.end());
        }
        out.push_back(std::move(all));
        break;
    }
    }
    return out;
}

std::size_t target_count(const MultiplierSet& ms, StatAxis axis)
{
    return axis == StatAxis::Row ? ms.rows() : axis == StatAxis::Column ? ms.cols() : 1;
}

} // namespace

std::vector<double> empirical_moments(const DataMatrix& data, Moment m, StatAxis axis)
{
    std::vector<double> out;
    for (const auto& v : targets_of(data, axis))
        out.push_back(sample_moment(v, m));
    return out;
}

double EnsembleDistribution::quantile(std::size_t target, double p) const
{
    std::vector<double> v;
    for (double x : samples.at(target))
        if (!std::isnan(x))
            v.push_back(x);
    if (v.empty())
        return nan;
    std::sort(v.begin(), v.end());
    return numeric::sorted_quantile(v, p);
}

double EnsembleDistribution::band_fraction(std::span<const double> values, double lo, double hi) const
{
    if (values.size() != targets())
        throw ShapeMismatch("one value per target expected");
    std::size_t inside = 0, counted = 0;
    for (std::size_t k = 0; k < targets(); ++k) {
        if (std::isnan(values[k]))
            continue;
        const double a = quantile(k, lo), b = quantile(k, hi);
        if (std::isnan(a))
            continue;
        ++counted;
        inside += values[k] >= a && values[k] <= b;
    }
    return counted ? static_cast<double>(inside) / static_cast<double>(counted) : nan;
}

EnsembleDistribution moment_distribution(const MultivariateModel& model, Moment moment,
                                         StatAxis axis, std::size_t n_rep, std::uint64_t seed)
{
    if (n_rep == 0)
        throw InvalidArgument("n_rep must be positive");
    const auto& ms = model.multipliers;
    const std::size_t K = target_count(ms, axis);
    EnsembleDistribution out;
    out.moment = moment;
    out.axis = axis;
    out.samples.assign(K, std::vector<double>(n_rep, nan));
    out.excluded.assign(K, 0);

    parallel_for(n_rep, [&](std::size_t r) {
        const DataMatrix w = sample_matrix(ms, derive_seed(seed, r));
        const auto vals = targets_of(w, axis);
        for (std::size_t k = 0; k < K; ++k)
            out.samples[k][r] = sample_moment(vals[k], moment);
    });
    for (std::size_t k = 0; k < K; ++k)
        for (double x : out.samples[k])
            out.excluded[k] += std::isnan(x);

    // E[mean] and E[population variance] are exact for independent cells
    // when every cell is observed.
    bool complete = true;
    for (std::size_t i = 0; i < ms.rows() && complete; ++i)
        for (std::size_t t = 0; t < ms.cols() && complete; ++t)
            complete = !(ms.states(i, t) & StateMask::missing);
    if (complete && (moment == Moment::Mean || moment == Moment::Variance)) {
        out.analytic.assign(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<std::pair<std::size_t, std::size_t>> cells;
            if (axis == StatAxis::Row)
                for (std::size_t t = 0; t < ms.cols(); ++t)
                    cells.emplace_back(k, t);
            else if (axis == StatAxis::Column)
                for (std::size_t i = 0; i < ms.rows(); ++i)
                    cells.emplace_back(i, k);
            else
                for (std::size_t i = 0; i < ms.rows(); ++i)
                    for (std::size_t t = 0; t < ms.cols(); ++t)
                        cells.emplace_back(i, t);
            const double n = static_cast<double>(cells.size());
            double mu = 0.0, second = 0.0, var_sum = 0.0;
            for (auto [i, t] : cells) {
                const auto m = marginal(ms, i, t);
                const double mi = m.mean(), vi = m.variance();
                mu += mi;
                second += vi + mi * mi;
                var_sum += vi;
            }
            mu /= n;
            out.analytic[k] =
                moment == Moment::Mean ? mu : second / n - mu * mu - var_sum / (n * n);
        }
    }
    return out;
}

// -- Kolmogorov-Smirnov ----------------------------------------------------------

double kolmogorov_q(double x)
{
    // the alternating series only converges usefully away from zero
    if (x < 0.2)
        return 1.0;
    const double a2 = -2.0 * x * x;
    double fac = 2.0, sum = 0.0, prev = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = fac * std::exp(a2 * j * j);
        sum += term;
        if (std::abs(term) <= 1e-10 * prev || std::abs(term) <= 1e-16 * sum)
            return std::clamp(sum, 0.0, 1.0);
        fac = -fac;
        prev = std::abs(term);
    }
    return 1.0;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double significance)
{
    if (a.size() < 5 || b.size() < 5)
        throw InsufficientSample("KS needs at least 5 points per sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    KsResult r;
    r.statistic = d;
    r.n1 = a.size();
    r.n2 = b.size();
    const double en = std::sqrt(na * nb / (na + nb));
    r.p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    r.reject = r.p_value < significance;
    return r;
}

KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf,
                       double significance)
{
    if (a.size() < 5)
        throw InsufficientSample("KS needs at least 5 points");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double f = cdf(a[k]);
        d = std::max({d, (k + 1) / n - f, f - k / n});
    }
    KsResult r;
    r.statistic = d;
    r.n1 = a.size();
    const double en = std::sqrt(n);
    r.p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    r.reject = r.p_value < significance;
    return r;
}

std::vector<KsResult> ks_compare(const DataMatrix& data, const MultivariateModel& model,
                                 StatAxis axis, std::size_t n_rep, std::uint64_t seed,
                                 double significance, KsMode mode)
{
    const auto& ms = model.multipliers;
    if (data.rows() != ms.rows() || data.cols() != ms.cols())
        throw ShapeMismatch("data and model shapes differ");
    const auto empirical = targets_of(data, axis);
    const std::size_t K = empirical.size();
    std::vector<std::vector<double>> pooled(K);

    if (mode == KsMode::TwoSample) {
        std::vector<std::vector<std::vector<double>>> per_rep(n_rep);
        parallel_for(n_rep, [&](std::size_t r) {
            per_rep[r] = targets_of(sample_matrix(ms, derive_seed(seed, r)), axis);
        });
        for (std::size_t r = 0; r < n_rep; ++r)
            for (std::size_t k = 0; k < K; ++k)
                pooled[k].insert(pooled[k].end(), per_rep[r][k].begin(), per_rep[r][k].end());
    }

    std::vector<KsResult> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        try {
            if (mode == KsMode::TwoSample) {
                out[k] = ks_two_sample(empirical[k], pooled[k], significance);
            } else {
                std::vector<CellMarginal> cells;
                for (std::size_t i = 0; i < ms.rows(); ++i)
                    for (std::size_t t = 0; t < ms.cols(); ++t)
                        if ((axis == StatAxis::Row && i == k) ||
                            (axis == StatAxis::Column && t == k) || axis == StatAxis::Global)
                            cells.push_back(marginal(ms, i, t));
                double w = 0.0;
                for (const auto& c : cells)
                    w += c.p_observed();
                auto cdf = [&](double x) {
                    double s = 0.0;
                    for (const auto& c : cells)
                        if (c.p_observed() > 0.0)
                            s += c.p_observed() * c.observed_cdf(x);
                    return s / w;
                };
                out[k] = ks_one_sample(empirical[k], cdf, significance);
            }
        } catch (const InsufficientSample&) {
            out[k].valid = false;
            out[k].n1 = empirical[k].size();
            out[k].n2 = pooled[k].size();
        }
    }
    return out;
}

// -- anomaly scan ------------------------------------------------------------------

AnomalyReport anomaly_scan(const DataMatrix& data, const MultivariateModel& model,
                           double coverage, double fcr_q)
{
    if (!(coverage > 0.0 && coverage < 1.0) || !(fcr_q > 0.0 && fcr_q < 1.0))
        throw InvalidArgument("coverage and fcr_q must lie in (0, 1)");
    const auto& ms = model.multipliers;
    if (data.rows() != ms.rows() || data.cols() != ms.cols())
        throw ShapeMismatch("data and model shapes differ");

    AnomalyReport rep;
    rep.coverage_level = coverage;
    rep.fcr_q = fcr_q;
    std::vector<std::pair<std::size_t, std::size_t>> selected;
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t t = 0; t < data.cols(); ++t) {
            if (!data.observed(i, t))
                continue;
            ++rep.observed;
            const auto m = marginal(ms, i, t);
            if (!(m.p_observed() > 0.0))
                continue;
            const double lo = m.observed_quantile(0.5 * (1.0 - coverage));
            const double hi = m.observed_quantile(0.5 * (1.0 + coverage));
            const double x = data(i, t);
            if (x < lo || x > hi)
                selected.emplace_back(i, t);
        }
    rep.selected = selected.size();
    if (selected.empty() || rep.observed == 0)
        return rep;

    rep.adjusted_level = 1.0 - static_cast<double>(rep.selected) * fcr_q /
                                   static_cast<double>(rep.observed);
    for (auto [i, t] : selected) {
        const auto m = marginal(ms, i, t);
        const double lo = m.observed_quantile(0.5 * (1.0 - rep.adjusted_level));
        const double hi = m.observed_quantile(0.5 * (1.0 + rep.adjusted_level));
        const double x = data(i, t);
        if (x < lo || x > hi)
            rep.flags.push_back({i, t, x, lo, hi});
    }
    return rep;
}

// -- spectra -------------------------------------------------------------------------

Eigen::MatrixXd correlation_matrix(const DataMatrix& data, std::vector<std::size_t>* used)
{
    const std::size_t N = data.rows(), T = data.cols();
    for (std::size_t i = 0; i < N; ++i) {
        const auto v = data.observed_row(i);
        if (v.size() < 2 || !(numeric::variance(v) > 0.0))
            throw DegenerateRow("row " + std::to_string(i) + " has zero variance", i);
    }
    // drop the row with the most short overlaps until every kept pair shares
    // at least 10 observations
    std::vector<std::vector<std::size_t>> overlap(N, std::vector<std::size_t>(N, 0));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j) {
            std::size_t n = 0;
            for (std::size_t t = 0; t < T; ++t)
                n += data.observed(i, t) && data.observed(j, t);
            overlap[i][j] = overlap[j][i] = n;
        }
    std::vector<bool> kept(N, true);
    for (;;) {
        std::size_t worst = N, worst_short = 0, worst_obs = 0;
        for (std::size_t i = 0; i < N; ++i) {
            if (!kept[i])
                continue;
            std::size_t n_short = 0;
            for (std::size_t j = 0; j < N; ++j)
                n_short += j != i && kept[j] && overlap[i][j] < 10;
            const std::size_t obs = data.observed_row(i).size();
            if (n_short > worst_short || (n_short == worst_short && n_short > 0 && obs < worst_obs)) {
                worst = i, worst_short = n_short, worst_obs = obs;
            }
        }
        if (worst == N)
            break;
        kept[worst] = false;
        spdlog::warn("row {} shares fewer than 10 observations with other rows; excluded", worst);
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < N; ++i)
        if (kept[i])
            keep.push_back(i);
    const std::size_t M = keep.size();
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(M, M);
    if (data.complete()) {
        Eigen::MatrixXd X(M, T);
        for (std::size_t a = 0; a < M; ++a) {
            const auto r = data.row(keep[a]);
            const double mu = numeric::mean(r);
            double ss = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                X(a, t) = r[t] - mu;
                ss += X(a, t) * X(a, t);
            }
            X.row(a) /= std::sqrt(ss);
        }
        C = X * X.transpose();
        C.diagonal().setOnes();
    } else {
        for (std::size_t a = 0; a < M; ++a)
            for (std::size_t b = a + 1; b < M; ++b) {
                const std::size_t i = keep[a], j = keep[b];
                double mi = 0, mj = 0, n = 0;
                for (std::size_t t = 0; t < T; ++t)
                    if (data.observed(i, t) && data.observed(j, t)) {
                        mi += data(i, t);
                        mj += data(j, t);
                        n += 1;
                    }
                mi /= n;
                mj /= n;
                double sij = 0, sii = 0, sjj = 0;
                for (std::size_t t = 0; t < T; ++t)
                    if (data.observed(i, t) && data.observed(j, t)) {
                        const double x = data(i, t) - mi, y = data(j, t) - mj;
                        sij += x * y;
                        sii += x * x;
                        sjj += y * y;
                    }
                const double r = (sii > 0 && sjj > 0) ? sij / std::sqrt(sii * sjj) : 0.0;
                C(a, b) = C(b, a) = r;
            }
    }
    if (used)
        *used = keep;
    return C;
}

Spectrum correlation_spectrum(const DataMatrix& data)
{
    Spectrum s;
    const Eigen::MatrixXd C = correlation_matrix(data, &s.rows_used);
    if (C.rows() == 0)
        return s;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    s.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<>());
    return s;
}

std::pair<double, double> mp_edges(double q)
{
    if (!(q > 0.0 && q < 1.0))
        throw InvalidArgument("Marchenko-Pastur ratio must lie in (0, 1)");
    const double r = std::sqrt(q);
    return {(1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r)};
}

double mp_density(double lambda, double q)
{
    const auto [lo, hi] = mp_edges(q);
    if (lambda <= lo || lambda >= hi)
        return 0.0;
    return std::sqrt((hi - lambda) * (lambda - lo)) / (2.0 * std::numbers::pi * q * lambda);
}

double silverman_bandwidth(std::span<const double> v)
{
    if (v.size() < 2)
        return 1.0;
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const double sd = std::sqrt(numeric::variance(s) * s.size() / (s.size() - 1.0));
    const double iqr = numeric::sorted_quantile(s, 0.75) - numeric::sorted_quantile(s, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0))
        spread = sd > 0.0 ? sd : 1.0;
    return 0.9 * spread * std::pow(static_cast<double>(s.size()), -0.2);
}

std::vector<double> gaussian_kde(std::span<const double> samples, std::span<const double> grid,
                                 double bandwidth)
{
    std::vector<double> out(grid.size(), 0.0);
    if (samples.empty())
        return out;
    const double norm = 1.0 / (samples.size() * bandwidth * std::sqrt(2.0 * std::numbers::pi));
    parallel_for(grid.size(), [&](std::size_t g) {
        double s = 0.0;
        for (double x : samples) {
            const double z = (grid[g] - x) / bandwidth;
            if (std::abs(z) < 40.0)
                s += std::exp(-0.5 * z * z);
        }
        out[g] = s * norm;
    });
    return out;
}

EnsembleSpectrum ensemble_spectrum(const MultivariateModel& model, std::size_t n_rep,
                                   std::uint64_t seed, std::size_t grid_points)
{
    if (n_rep == 0)
        throw InvalidArgument("n_rep must be positive");
    std::vector<std::vector<double>> spectra(n_rep);
    std::vector<char> failed(n_rep, 0);
    parallel_for(n_rep, [&](std::size_t r) {
        try {
            spectra[r] = correlation_spectrum(sample_matrix(model.multipliers, derive_seed(seed, r)))
                             .eigenvalues;
            if (spectra[r].empty())
                failed[r] = 1;
        } catch (const Error&) {
            failed[r] = 1;
        }
    });
    EnsembleSpectrum out;
    std::vector<double> pooled;
    for (std::size_t r = 0; r < n_rep; ++r) {
        if (failed[r]) {
            ++out.failures;
            continue;
        }
        out.lambda_max.push_back(spectra[r].front());
        pooled.insert(pooled.end(), spectra[r].begin(), spectra[r].end());
    }
    if (pooled.empty())
        return out;
    out.bandwidth = silverman_bandwidth(pooled);
    const double top = *std::max_element(pooled.begin(), pooled.end()) + 3.0 * out.bandwidth;
    const double bottom = std::max(0.0, *std::min_element(pooled.begin(), pooled.end()) - 3.0 * out.bandwidth);
    out.grid.resize(grid_points);
    for (std::size_t g = 0; g < grid_points; ++g)
        out.grid[g] = bottom + (top - bottom) * g / std::max<std::size_t>(1, grid_points - 1);
    out.density = gaussian_kde(pooled, out.grid, out.bandwidth);
    return out;
}

namespace {
std::mutex fftw_plan_mutex;
}

std::vector<double> power_spectrum(std::span<const double> series)
{
    const std::size_t T = series.size();
    std::vector<double> x;
    x.reserve(T);
    std::size_t missing = 0;
    double sum = 0.0;
    for (double v : series) {
        if (std::isnan(v)) {
            ++missing;
        } else {
            sum += v;
        }
    }
    if (T == 0 || missing == T)
        throw EmptyInput("series has no observed values");
    if (missing > 0)
        spdlog::warn("{} missing value(s) replaced by the series mean", missing);
    const double mu = sum / static_cast<double>(T - missing);
    for (double v : series)
        x.push_back(std::isnan(v) ? 0.0 : v - mu);

    const std::size_t nc = T / 2 + 1;
    fftw_complex* out = fftw_alloc_complex(nc);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_plan_mutex);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(T), x.data(), out, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::vector<double> p(T);
    for (std::size_t k = 0; k < nc; ++k) {
        const double v = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / static_cast<double>(T);
        p[k] = v;
        if (k > 0)
            p[T - k] = v;
    }
    {
        std::lock_guard lock(fftw_plan_mutex);
        fftw_destroy_plan(plan);
    }
    fftw_free(out);
    return p;
}

std::vector<double> ensemble_power_spectrum(const MultivariateModel& model, std::size_t row,
                                            std::size_t n_rep, std::uint64_t seed)
{
    const auto& ms = model.multipliers;
    if (row >= ms.rows())
        throw InvalidArgument("row index out of range");
    if (n_rep == 0)
        throw InvalidArgument("n_rep must be positive");
    std::vector<std::vector<double>> per(n_rep);
    std::vector<char> failed(n_rep, 0);
    parallel_for(n_rep, [&](std::size_t r) {
        const auto w = sample_matrix(ms, derive_seed(seed, r));
        const auto series = w.row(row);
        try {
            per[r] = power_spectrum(series);
        } catch (const EmptyInput&) {
            failed[r] = 1;
        }
    });
    std::vector<double> mean(ms.cols(), 0.0);
    std::size_t used = 0;
    for (std::size_t r = 0; r < n_rep; ++r) {
        if (failed[r])
            continue;
        ++used;
        for (std::size_t k = 0; k < mean.size(); ++k)
            mean[k] += per[r][k];
    }
    if (used == 0)
        throw EmptyInput("every sampled row was empty");
    for (double& v : mean)
        v /= static_cast<double>(used);
    return mean;
}

} // namespace maxent
