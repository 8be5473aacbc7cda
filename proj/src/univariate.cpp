#include "maxent/univariate.hpp"

#include <algorithm>
#include <cmath>

#include "maxent/error.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

namespace maxent {

using numeric::inf;

std::string to_string(UnivariateFamily f)
{
    switch (f) {
    case UnivariateFamily::H1: return "H1";
    case UnivariateFamily::H2: return "H2";
    case UnivariateFamily::M1: return "M1";
    }
    return "?";
}

UnivariateFamily parse_family(const std::string& s)
{
    if (s == "H1" || s == "h1")
        return UnivariateFamily::H1;
    if (s == "H2" || s == "h2")
        return UnivariateFamily::H2;
    if (s == "M1" || s == "m1")
        return UnivariateFamily::M1;
    throw InvalidArgument("unknown univariate family '" + s + "'");
}

double BinStatistics::total_count() const
{
    double s = 0.0;
    for (double c : count)
        s += c;
    return s;
}

namespace {

std::size_t locate(const std::vector<double>& q, double x)
{
    auto it = std::upper_bound(q.begin(), q.end(), x);
    std::size_t i = static_cast<std::size_t>(it - q.begin());
    if (i == 0)
        return 0;
    return std::min(i - 1, q.size() - 2);
}

} // namespace

BinStatistics bin_statistics(std::span<const double> series, const QuantileGrid& grid)
{
    const std::size_t d = grid.bins();
    if (d == 0)
        throw InvalidGrid("grid needs at least two points");
    BinStatistics st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                     std::vector<double>(d, 0.0)};
    const double lo = grid.q.front(), hi = grid.q.back();
    for (double x : series) {
        if (std::isnan(x))
            continue;
        if (x < lo || x > hi)
            throw OutOfSupport("value " + std::to_string(x) + " outside grid support");
        const std::size_t i = locate(grid.q, x);
        st.count[i] += 1.0;
        st.sum[i] += x;
        st.sum_sq[i] += x * x;
    }
    return st;
}

std::size_t UnivariateSpec::parameter_count() const
{
    const std::size_t d = bins();
    switch (family) {
    case UnivariateFamily::H1: return 2 * d;
    case UnivariateFamily::H2: return d + 2;
    case UnivariateFamily::M1: return d + 1;
    }
    return 0;
}

std::optional<std::size_t> UnivariateSpec::gauge_index() const
{
    if (family == UnivariateFamily::M1)
        return std::nullopt;
    return 0;
}

std::vector<std::string> UnivariateSpec::parameter_names() const
{
    const std::size_t d = bins();
    std::vector<std::string> names;
    auto per_bin = [&](const char* p) {
        for (std::size_t i = 0; i < d; ++i)
            names.push_back(std::string(p) + std::to_string(i + 1));
    };
    switch (family) {
    case UnivariateFamily::H1:
        per_bin("alpha");
        per_bin("beta");
        break;
    case UnivariateFamily::H2:
        per_bin("alpha");
        names.push_back("beta");
        names.push_back("gamma");
        break;
    case UnivariateFamily::M1:
        per_bin("beta");
        names.push_back("gamma");
        break;
    }
    return names;
}

std::vector<std::vector<ParamTerm>> parameter_terms(const UnivariateSpec& spec)
{
    const std::size_t d = spec.bins();
    std::vector<std::vector<ParamTerm>> terms;
    auto per_bin = [&](int power) {
        for (std::size_t i = 0; i < d; ++i)
            terms.push_back({{i, power}});
    };
    auto global = [&](int power) {
        std::vector<ParamTerm> t;
        for (std::size_t i = 0; i < d; ++i)
            t.push_back({i, power});
        terms.push_back(std::move(t));
    };
    switch (spec.family) {
    case UnivariateFamily::H1:
        per_bin(0);
        per_bin(1);
        break;
    case UnivariateFamily::H2:
        per_bin(0);
        global(1);
        global(2);
        break;
    case UnivariateFamily::M1:
        per_bin(1);
        global(2);
        break;
    }
    return terms;
}

std::vector<double> empirical_values(const UnivariateSpec& spec, const BinStatistics& stats)
{
    const auto terms = parameter_terms(spec);
    std::vector<double> out(terms.size(), 0.0);
    for (std::size_t k = 0; k < terms.size(); ++k)
        for (const auto& t : terms[k]) {
            const auto& src = t.power == 0 ? stats.count : t.power == 1 ? stats.sum : stats.sum_sq;
            out[k] += src[t.bin];
        }
    return out;
}

std::vector<BinCoefficients> bin_coefficients(const UnivariateSpec& spec,
                                              std::span<const double> params)
{
    if (params.size() != spec.parameter_count())
        throw InvalidArgument("expected " + std::to_string(spec.parameter_count()) +
                              " parameters, got " + std::to_string(params.size()));
    const auto terms = parameter_terms(spec);
    std::vector<BinCoefficients> coef(spec.bins());
    for (std::size_t k = 0; k < terms.size(); ++k)
        for (const auto& t : terms[k]) {
            auto& c = coef[t.bin];
            (t.power == 0 ? c.a : t.power == 1 ? c.b : c.c) += params[k];
        }
    return coef;
}

namespace {

numeric::BinIntegral integrate_bin(double lo, double hi, const BinCoefficients& c)
{
    if (c.c > 0.0)
        return numeric::gaussian_bin(lo, hi, c.b, c.c);
    if (c.c == 0.0)
        return numeric::exponential_bin(lo, hi, c.b);
    throw DivergentPartition("negative quadratic coefficient");
}

double bin_cdf(double lo, double hi, const BinCoefficients& c, double x)
{
    if (c.c > 0.0)
        return numeric::gaussian_bin_cdf(lo, hi, c.b, c.c, x);
    return numeric::exponential_bin_cdf(lo, hi, c.b, x);
}

double bin_inverse(double lo, double hi, const BinCoefficients& c, double v)
{
    if (c.c > 0.0)
        return numeric::gaussian_bin_inverse(lo, hi, c.b, c.c, v);
    return numeric::exponential_bin_inverse(lo, hi, c.b, v);
}

std::vector<bool> normalize_active(const std::vector<bool>& active, std::size_t d)
{
    if (active.empty())
        return std::vector<bool>(d, true);
    if (active.size() != d)
        throw InvalidArgument("active-bin mask has wrong length");
    return active;
}

} // namespace

UnivariateEvaluation evaluate(const UnivariateSpec& spec, std::span<const double> params,
                              const std::vector<bool>& active_bins, bool with_covariance)
{
    const std::size_t d = spec.bins();
    const auto active = normalize_active(active_bins, d);
    const auto coef = bin_coefficients(spec, params);
    const auto& q = spec.grid.q;

    UnivariateEvaluation ev;
    ev.bin_log_weight.assign(d, -inf);
    ev.bin_moments.assign(d, {});
    for (std::size_t i = 0; i < d; ++i) {
        if (!active[i])
            continue;
        if (!(q[i + 1] > q[i]))
            throw DegenerateQuantiles("zero-width bin " + std::to_string(i));
        const auto bi = integrate_bin(q[i], q[i + 1], coef[i]);
        ev.bin_log_weight[i] = -coef[i].a + bi.log_mass;
        ev.bin_moments[i] = bi.moments;
        if (!std::isfinite(ev.bin_log_weight[i]))
            throw DivergentPartition("bin " + std::to_string(i) + " has non-finite weight");
    }
    const double lse = numeric::log_sum_exp(ev.bin_log_weight);
    if (!std::isfinite(lse))
        throw DivergentPartition("partition function is not finite");
    const double T = static_cast<double>(spec.samples);
    ev.log_partition = T * lse;

    std::vector<double> p(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        if (active[i])
            p[i] = std::exp(ev.bin_log_weight[i] - lse);

    const auto terms = parameter_terms(spec);
    const std::size_t K = terms.size();
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k)
        for (const auto& t : terms[k])
            e1[k] += p[t.bin] * ev.bin_moments[t.bin][t.power];
    ev.expected = T * e1;

    if (with_covariance) {
        Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(K, K);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = k; l < K; ++l) {
                double s = 0.0;
                for (const auto& a : terms[k])
                    for (const auto& b : terms[l])
                        if (a.bin == b.bin)
                            s += p[a.bin] * ev.bin_moments[a.bin][a.power + b.power];
                m2(k, l) = m2(l, k) = s;
            }
        ev.covariance = T * (m2 - e1 * e1.transpose());
    }
    return ev;
}

UnivariateModel::UnivariateModel(UnivariateSpec spec, std::vector<double> params,
                                 std::optional<BinStatistics> constraints,
                                 std::vector<bool> active_bins)
    : spec_(std::move(spec)), params_(std::move(params)), constraints_(std::move(constraints))
{
    if (spec_.grid.degenerate)
        throw DegenerateQuantiles("quantile grid has a zero-width bin");
    const std::size_t d = spec_.bins();
    active_ = normalize_active(active_bins, d);
    coef_ = bin_coefficients(spec_, params_);
    eval_ = evaluate(spec_, params_, active_, false);

    const double lse = eval_.log_partition / static_cast<double>(spec_.samples);
    probs_.assign(d, 0.0);
    cum_.assign(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (active_[i])
            probs_[i] = std::exp(eval_.bin_log_weight[i] - lse);
        cum_[i + 1] = cum_[i] + probs_[i];
    }
}

std::size_t UnivariateModel::find_bin(double x) const
{
    return locate(spec_.grid.q, x);
}

double UnivariateModel::log_density(double x) const
{
    const auto& q = spec_.grid.q;
    if (std::isnan(x) || x < q.front() || x > q.back())
        return -inf;
    const std::size_t i = find_bin(x);
    if (!active_[i])
        return -inf;
    const auto& c = coef_[i];
    const double lse = eval_.log_partition / static_cast<double>(spec_.samples);
    return -(c.a + c.b * x + c.c * x * x) - lse;
}

double UnivariateModel::density(double x) const { return std::exp(log_density(x)); }

double UnivariateModel::cdf(double x) const
{
    const auto& q = spec_.grid.q;
    if (x <= q.front())
        return 0.0;
    if (x >= q.back())
        return 1.0;
    const std::size_t i = find_bin(x);
    double f = cum_[i];
    if (active_[i])
        f += probs_[i] * bin_cdf(q[i], q[i + 1], coef_[i], x);
    return std::min(f, 1.0);
}

double UnivariateModel::quantile(double p) const
{
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidArgument("quantile level must lie in [0, 1]");
    const auto& q = spec_.grid.q;
    const std::size_t d = spec_.bins();
    std::size_t i = 0;
    while (i + 1 < d && (probs_[i] == 0.0 || p > cum_[i + 1]))
        ++i;
    while (probs_[i] == 0.0 && i > 0)
        --i;
    const double v = std::clamp((p - cum_[i]) / probs_[i], 0.0, 1.0);
    return bin_inverse(q[i], q[i + 1], coef_[i], v);
}

double UnivariateModel::mean() const
{
    double m = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i)
        if (probs_[i] > 0.0)
            m += probs_[i] * eval_.bin_moments[i][1];
    return m;
}

double UnivariateModel::variance() const
{
    double m2 = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i)
        if (probs_[i] > 0.0)
            m2 += probs_[i] * eval_.bin_moments[i][2];
    const double m = mean();
    return m2 - m * m;
}

std::vector<double> UnivariateModel::sample(std::size_t n, std::uint64_t seed) const
{
    // Fixed-size chunks with their own streams keep the draws identical for
    // any thread count.
    constexpr std::size_t chunk = 8192;
    std::vector<double> out(n);
    const std::size_t chunks = (n + chunk - 1) / chunk;
    const auto& q = spec_.grid.q;
    const std::size_t d = spec_.bins();
    parallel_for(chunks, [&](std::size_t c) {
        Engine rng = make_engine(seed, c);
        const std::size_t end = std::min(n, (c + 1) * chunk);
        for (std::size_t k = c * chunk; k < end; ++k) {
            const double u = uniform01(rng) * cum_[d];
            auto it = std::upper_bound(cum_.begin() + 1, cum_.end(), u);
            std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()) - 1, d - 1);
            while (probs_[i] == 0.0)
                i = i > 0 ? i - 1 : i + 1;
            out[k] = bin_inverse(q[i], q[i + 1], coef_[i], uniform_open(rng));
        }
    });
    return out;
}

double UnivariateModel::log_likelihood() const
{
    if (!constraints_)
        throw NotCalibrated("model carries no constraints");
    return maxent::log_likelihood(spec_, params_, *constraints_, active_);
}

double log_partition(const UnivariateModel& model, std::span<const double> params)
{
    return evaluate(model.spec(), params, model.active_bins(), false).log_partition;
}

double log_likelihood(const UnivariateSpec& spec, std::span<const double> params,
                      const BinStatistics& stats, const std::vector<bool>& active_bins)
{
    const auto obs = empirical_values(spec, stats);
    const auto ev = evaluate(spec, params, active_bins, false);
    double s = 0.0;
    for (std::size_t k = 0; k < obs.size(); ++k)
        if (obs[k] != 0.0)
            s += params[k] * obs[k];
    return -s - ev.log_partition;
}

double kl_divergence(const std::function<double(double)>& p,
                     const std::function<double(double)>& q,
                     std::vector<double> breakpoints, double tol,
                     const std::function<double(double)>& log_q)
{
    auto integrand = [&](double x) {
        const double pv = p(x);
        if (!(pv > 0.0))
            return 0.0;
        const double lq = log_q ? log_q(x) : std::log(q(x));
        if (!(lq > -inf))
            throw SupportError("reference density vanishes where the model does not");
        return pv * (std::log(pv) - lq);
    };

    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    std::vector<double> finite;
    for (double b : breakpoints)
        if (std::isfinite(b))
            finite.push_back(b);
    const bool left_open = breakpoints.empty() || breakpoints.front() == -inf;
    const bool right_open = breakpoints.empty() || breakpoints.back() == inf;
    if (finite.empty())
        finite.push_back(0.0);

    auto tail_end = [&](double x0, double dir) {
        double h = std::max(1.0, std::abs(x0));
        while (h < 1e8 && (q(x0 + dir * h) >= 1e-12 || p(x0 + dir * h) >= 1e-12))
            h *= 2.0;
        return x0 + dir * h;
    };
    const std::size_t pieces = finite.size() + 1;
    const double piece_tol = tol / static_cast<double>(pieces);

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < finite.size(); ++i)
        total += numeric::adaptive_simpson(integrand, finite[i], finite[i + 1], piece_tol);
    if (left_open)
        total += numeric::adaptive_simpson(integrand, tail_end(finite.front(), -1.0),
                                           finite.front(), piece_tol);
    if (right_open)
        total += numeric::adaptive_simpson(integrand, finite.back(),
                                           tail_end(finite.back(), 1.0), piece_tol);
    return total;
}

double information_criterion(std::size_t k, double log_likelihood, std::size_t n, Criterion which)
{
    const double kk = static_cast<double>(k);
    if (which == Criterion::AIC)
        return 2.0 * kk - 2.0 * log_likelihood;
    return kk * std::log(static_cast<double>(n)) - 2.0 * log_likelihood;
}

double information_criterion(const UnivariateModel& model, Criterion which)
{
    if (!model.calibrated())
        throw NotCalibrated("information criterion needs a calibrated model");
    return information_criterion(model.spec().parameter_count(), model.log_likelihood(),
                                 model.spec().samples, which);
}

} // namespace maxent
