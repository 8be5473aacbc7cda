#include "maxent/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "maxent/error.hpp"

namespace maxent::numeric {

namespace {

constexpr double log_sqrt_2pi = 0.91893853320467274178;

double binomial(int n, int k)
{
    double r = 1.0;
    for (int j = 1; j <= k; ++j)
        r = r * (n - k + j) / j;
    return r;
}

/// Raw moments of a + d u from moments of u.
std::array<double, 5> shift_moments(const std::array<double, 5>& mu, double anchor, double dir)
{
    std::array<double, 5> out{};
    for (int k = 0; k <= 4; ++k) {
        double s = 0.0;
        for (int j = 0; j <= k; ++j)
            s += binomial(k, j) * std::pow(anchor, k - j) * std::pow(dir, j) * mu[j];
        out[k] = s;
    }
    return out;
}

} // namespace

double log_sum_exp(std::span<const double> v)
{
    double m = -inf;
    for (double x : v)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return m;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s);
}

double log_phi(double z)
{
    return -0.5 * z * z - log_sqrt_2pi;
}

double log_upper_tail(double z)
{
    if (z == inf)
        return -inf;
    if (z == -inf)
        return 0.0;
    if (z < -5.0)
        return std::log1p(-0.5 * std::erfc(-z / std::numbers::sqrt2));
    if (z < 35.0)
        return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
    const double r = 1.0 / (z * z);
    const double series = 1.0 - r * (1.0 - r * (3.0 - r * (15.0 - r * 105.0)));
    return -0.5 * z * z - std::log(z) - log_sqrt_2pi + std::log(series);
}

double log_normal_mass(double lo, double hi)
{
    if (!(hi > lo))
        return -inf;
    if (lo > 0.0) {
        const double lq_lo = log_upper_tail(lo);
        const double lq_hi = log_upper_tail(hi);
        return lq_lo + std::log1p(-std::exp(lq_hi - lq_lo));
    }
    if (hi < 0.0)
        return log_normal_mass(-hi, -lo);
    const double right = 0.5 * std::erf(hi / std::numbers::sqrt2);
    const double left = 0.5 * std::erf(-lo / std::numbers::sqrt2);
    return std::log(right + left);
}

double upper_tail_inverse_log(double log_q)
{
    if (log_q >= 0.0)
        return -inf;
    if (log_q == -inf)
        return inf;
    if (log_q > -690.0)
        return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * std::exp(log_q));
    double z = std::sqrt(-2.0 * log_q);
    for (int it = 0; it < 60; ++it) {
        const double f = log_upper_tail(z) - log_q;
        const double fp = -std::exp(log_phi(z) - log_upper_tail(z));
        const double step = f / fp;
        z -= step;
        if (std::abs(step) < 1e-14 * std::abs(z))
            break;
    }
    return z;
}

double truncated_normal_inverse(double lo, double hi, double v)
{
    v = std::clamp(v, 0.0, 1.0);
    if (hi < 0.0)
        return -truncated_normal_inverse(-hi, -lo, 1.0 - v);
    const double log_mass = log_normal_mass(lo, hi);
    double z;
    if (lo > 0.0) {
        const double lq_lo = log_upper_tail(lo);
        const double frac = std::exp(log_mass - lq_lo);
        z = upper_tail_inverse_log(lq_lo + std::log1p(-v * frac));
    } else {
        const double mass = std::exp(log_mass);
        const double below = std::exp(log_upper_tail(-lo));
        const double p = below + v * mass;
        if (p <= 0.5) {
            z = -upper_tail_inverse_log(std::log(p));
        } else {
            const double above = std::exp(log_upper_tail(hi)) + (1.0 - v) * mass;
            z = upper_tail_inverse_log(std::log(above));
        }
    }
    return std::clamp(z, lo, hi);
}

double exp_window(double s, double len)
{
    if (std::isinf(len))
        return 1.0 / s;
    const double x = s * len;
    if (x < 1e-4)
        return len * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
    return -std::expm1(-x) / s;
}

BinIntegral exponential_bin(double lo, double hi, double b)
{
    if ((std::isinf(hi) && b <= 0.0) || (std::isinf(lo) && b >= 0.0))
        throw DivergentPartition("exponential bin integral diverges");
    const double s = std::abs(b);
    const double len = hi - lo;
    const double anchor = b > 0.0 || b == 0.0 ? lo : hi;
    const double dir = b > 0.0 || b == 0.0 ? 1.0 : -1.0;

    BinIntegral out;
    out.log_mass = -b * anchor + std::log(exp_window(s, len));

    std::array<double, 5> mu{1.0, 0.0, 0.0, 0.0, 0.0};
    if (std::isinf(len)) {
        double f = 1.0;
        for (int k = 1; k <= 4; ++k) {
            f *= k / s;
            mu[k] = f;
        }
    } else if (s * len <= 8.0) {
        using gauss = boost::math::quadrature::gauss<double, 30>;
        std::array<double, 5> raw{};
        for (int k = 0; k <= 4; ++k)
            raw[k] = gauss::integrate(
                [&](double u) { return std::pow(u, k) * std::exp(-s * u); }, 0.0, len);
        for (int k = 1; k <= 4; ++k)
            mu[k] = raw[k] / raw[0];
    } else {
        const double denom = std::expm1(s * len);
        for (int k = 1; k <= 4; ++k)
            mu[k] = k / s * mu[k - 1] - std::pow(len, k) / denom;
    }
    out.moments = shift_moments(mu, anchor, dir);
    return out;
}

BinIntegral gaussian_bin(double lo, double hi, double b, double c)
{
    if (!(c > 0.0))
        throw DivergentPartition("quadratic coefficient must be positive");
    const double mu = -b / (2.0 * c);
    const double sigma = 1.0 / std::sqrt(2.0 * c);
    const double zl = (lo - mu) / sigma;
    const double zh = (hi - mu) / sigma;
    const double log_d = log_normal_mass(zl, zh);

    BinIntegral out;
    out.log_mass = b * b / (4.0 * c) + std::log(sigma) + log_sqrt_2pi + log_d;

    auto tail_term = [&](double z, int j) {
        if (std::isinf(z))
            return 0.0;
        return std::pow(z, j) * std::exp(log_phi(z) - log_d);
    };
    std::array<double, 5> n{1.0, 0.0, 0.0, 0.0, 0.0};
    for (int k = 1; k <= 4; ++k) {
        const double prev = k >= 2 ? n[k - 2] : 0.0;
        n[k] = (k - 1) * prev + tail_term(zl, k - 1) - tail_term(zh, k - 1);
    }
    out.moments = shift_moments(n, mu, sigma);
    return out;
}

double exponential_bin_cdf(double lo, double hi, double b, double x)
{
    if (x <= lo)
        return 0.0;
    if (x >= hi)
        return 1.0;
    const double s = std::abs(b);
    const double len = hi - lo;
    auto g = [&](double u) {
        if (s == 0.0)
            return u / len;
        if (std::isinf(len))
            return -std::expm1(-s * u);
        return std::expm1(-s * u) / std::expm1(-s * len);
    };
    if (b >= 0.0)
        return g(x - lo);
    return 1.0 - g(hi - x);
}

double exponential_bin_inverse(double lo, double hi, double b, double v)
{
    v = std::clamp(v, 0.0, 1.0);
    const double s = std::abs(b);
    const double len = hi - lo;
    auto ginv = [&](double w) {
        if (s == 0.0)
            return w * len;
        if (std::isinf(len))
            return -std::log1p(-w) / s;
        return -std::log1p(w * std::expm1(-s * len)) / s;
    };
    double x = b >= 0.0 ? lo + ginv(v) : hi - ginv(1.0 - v);
    return std::clamp(x, lo, hi);
}

double gaussian_bin_cdf(double lo, double hi, double b, double c, double x)
{
    if (x <= lo)
        return 0.0;
    if (x >= hi)
        return 1.0;
    const double mu = -b / (2.0 * c);
    const double sigma = 1.0 / std::sqrt(2.0 * c);
    const double zl = (lo - mu) / sigma;
    const double zh = (hi - mu) / sigma;
    const double z = (x - mu) / sigma;
    return std::exp(log_normal_mass(zl, z) - log_normal_mass(zl, zh));
}

double gaussian_bin_inverse(double lo, double hi, double b, double c, double v)
{
    const double mu = -b / (2.0 * c);
    const double sigma = 1.0 / std::sqrt(2.0 * c);
    const double z = truncated_normal_inverse((lo - mu) / sigma, (hi - mu) / sigma, v);
    return std::clamp(mu + sigma * z, lo, hi);
}

// -- quadrature --------------------------------------------------------------

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
           + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

} // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth)
{
    if (!(b > a))
        return 0.0;
    // seed on a few panels so narrow features are not skipped
    constexpr int panels = 16;
    double total = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double x0 = a + p * h, x1 = p + 1 == panels ? b : a + (p + 1) * h;
        const double fa = f(x0), fb = f(x1), fm = f(0.5 * (x0 + x1));
        const double whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_step(f, x0, x1, fa, fm, fb, whole, tol / panels, max_depth);
    }
    return total;
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol)
{
    if (!(b > a))
        return 0.0;
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol, &err);
}

double simpson(const std::function<double(double)>& f, double a, double b, int n)
{
    if (n % 2)
        ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k)
        s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

// -- sample moments ----------------------------------------------------------

double mean(std::span<const double> v)
{
    if (v.empty())
        return std::nan("");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

namespace {

double central_moment(std::span<const double> v, int k, double m)
{
    double s = 0.0;
    for (double x : v)
        s += std::pow(x - m, k);
    return s / static_cast<double>(v.size());
}

} // namespace

double variance(std::span<const double> v)
{
    if (v.empty())
        return std::nan("");
    return central_moment(v, 2, mean(v));
}

double skewness(std::span<const double> v)
{
    if (v.size() < 2)
        return std::nan("");
    const double m = mean(v);
    const double m2 = central_moment(v, 2, m);
    if (m2 <= 0.0)
        return std::nan("");
    return central_moment(v, 3, m) / std::pow(m2, 1.5);
}

double kurtosis(std::span<const double> v)
{
    if (v.size() < 2)
        return std::nan("");
    const double m = mean(v);
    const double m2 = central_moment(v, 2, m);
    if (m2 <= 0.0)
        return std::nan("");
    return central_moment(v, 4, m) / (m2 * m2);
}

double sorted_quantile(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        return std::nan("");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - std::floor(h);
    if (lo + 1 >= sorted.size())
        return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace maxent::numeric
