#include "maxent/multivariate.hpp"

#include <algorithm>
#include <array>
#include <utility>
#include <cmath>
#include <sstream>

#include "maxent/error.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

namespace maxent {

using numeric::inf;

std::string to_string(Variant v)
{
    return v == Variant::WithMissing ? "with_missing" : "no_missing";
}

Variant parse_variant(const std::string& name)
{
    std::string s = name;
    std::replace(s.begin(), s.end(), '-', '_');
    if (s == "with_missing" || s == "WithMissing")
        return Variant::WithMissing;
    if (s == "no_missing" || s == "NoMissing")
        return Variant::NoMissing;
    throw InvalidArgument("unknown variant '" + s + "'");
}

// -- ConstraintSpec ------------------------------------------------------------

std::size_t ConstraintSpec::parameter_count(std::size_t n, std::size_t t) const
{
    std::size_t k = 0;
    for (int f = 0; f < 4; ++f) {
        if (f == static_cast<int>(Family::Beta) && variant == Variant::NoMissing)
            continue;
        k += (active[f][0] ? n : 0) + (active[f][1] ? t : 0);
    }
    return k;
}

ConstraintSpec ConstraintSpec::with_missing()
{
    return ConstraintSpec{};
}

ConstraintSpec ConstraintSpec::no_missing()
{
    ConstraintSpec c;
    c.variant = Variant::NoMissing;
    c.set(Family::Beta, Axis::Row, false);
    c.set(Family::Beta, Axis::Col, false);
    return c;
}

ConstraintSpec ConstraintSpec::sums_only()
{
    ConstraintSpec c = no_missing();
    c.set(Family::Alpha, Axis::Row, false);
    c.set(Family::Alpha, Axis::Col, false);
    return c;
}

namespace {

constexpr const char* family_letters = "abgs";

std::string letters(const ConstraintSpec& c, Axis a)
{
    std::string out;
    for (int f = 0; f < 4; ++f)
        if (c.active[f][static_cast<int>(a)])
            out += family_letters[f];
    return out;
}

} // namespace

ConstraintSpec ConstraintSpec::parse(const std::string& name)
{
    std::string s = name;
    std::replace(s.begin(), s.end(), '-', '_');
    if (s == "with_missing")
        return with_missing();
    if (s == "no_missing" || s == "M3" || s == "m3")
        return no_missing();
    if (s == "sums_only" || s == "M2" || s == "m2")
        return sums_only();
    if (s.rfind("custom:", 0) == 0) {
        std::vector<std::string> parts;
        std::stringstream ss(s.substr(7));
        std::string item;
        while (std::getline(ss, item, ':'))
            parts.push_back(item);
        while (parts.size() < 3)
            parts.emplace_back();
        ConstraintSpec c;
        c.variant = parse_variant(parts[0]);
        for (int a = 0; a < 2; ++a)
            for (int f = 0; f < 4; ++f)
                c.active[f][a] = parts[1 + a].find(family_letters[f]) != std::string::npos;
        for (int a = 0; a < 2; ++a)
            for (char ch : parts[1 + a])
                if (std::string(family_letters).find(ch) == std::string::npos)
                    throw InvalidArgument("unknown family letter '" + std::string(1, ch) + "'");
        if (c.variant == Variant::NoMissing)
            c.active[1][0] = c.active[1][1] = false;
        return c;
    }
    throw InvalidArgument("unknown constraint spec '" + s + "'");
}

std::string ConstraintSpec::name() const
{
    auto same = [&](const ConstraintSpec& o) {
        if (o.variant != variant)
            return false;
        for (int f = 0; f < 4; ++f)
            for (int a = 0; a < 2; ++a)
                if (o.active[f][a] != active[f][a])
                    return false;
        return true;
    };
    if (same(with_missing()))
        return "with_missing";
    if (same(no_missing()))
        return "no_missing";
    if (same(sums_only()))
        return "sums_only";
    return "custom:" + to_string(variant) + ":" + letters(*this, Axis::Row) + ":" +
           letters(*this, Axis::Col);
}

// -- MultiplierSet ---------------------------------------------------------------

MultiplierSet MultiplierSet::zeros(std::size_t n, std::size_t t, Variant v)
{
    MultiplierSet ms;
    ms.variant = v;
    for (auto* r : {&ms.alpha_row, &ms.beta_row, &ms.gamma_row, &ms.sigma_row})
        r->assign(n, 0.0);
    for (auto* c : {&ms.alpha_col, &ms.beta_col, &ms.gamma_col, &ms.sigma_col})
        c->assign(t, 0.0);
    return ms;
}

std::vector<double>& MultiplierSet::family(Family f, Axis a)
{
    return const_cast<std::vector<double>&>(std::as_const(*this).family(f, a));
}

const std::vector<double>& MultiplierSet::family(Family f, Axis a) const
{
    const bool row = a == Axis::Row;
    switch (f) {
    case Family::Alpha: return row ? alpha_row : alpha_col;
    case Family::Beta: return row ? beta_row : beta_col;
    case Family::Gamma: return row ? gamma_row : gamma_col;
    case Family::Sigma: return row ? sigma_row : sigma_col;
    }
    return alpha_row;
}

unsigned char MultiplierSet::states(std::size_t i, std::size_t t) const
{
    unsigned char s = StateMask::all;
    if (variant == Variant::NoMissing)
        s &= ~StateMask::missing;
    if (!mask.row.empty())
        s &= mask.row[i];
    if (!mask.col.empty())
        s &= mask.col[t];
    return s;
}

void MultiplierSet::canonicalize(const ConstraintSpec& spec)
{
    const std::size_t T = cols();
    for (int f = 0; f < 4; ++f) {
        const auto fam = static_cast<Family>(f);
        if (!spec.on(fam, Axis::Row) || !spec.on(fam, Axis::Col) || T == 0)
            continue;
        const unsigned char need = (fam == Family::Alpha || fam == Family::Gamma)
                                       ? StateMask::plus
                                       : StateMask::minus;
        std::size_t ref = 0;
        if (!mask.col.empty())
            while (ref + 1 < T && !(mask.col[ref] & need))
                ++ref;
        auto& col = family(fam, Axis::Col);
        auto& row = family(fam, Axis::Row);
        const double c = col[ref];
        if (c == 0.0)
            continue;
        for (double& x : col)
            x -= c;
        for (double& x : row)
            x += c;
    }
}

// -- cells -----------------------------------------------------------------------

namespace {

struct CellTerms
{
    double log_plus = -inf, log_minus = -inf, log_missing = -inf;
    double g = 0.0, s = 0.0;
};

CellTerms cell_terms(const MultiplierSet& ms, std::size_t i, std::size_t t)
{
    CellTerms c;
    const unsigned char st = ms.states(i, t);
    c.g = ms.g(i, t);
    c.s = ms.s(i, t);
    if (st & StateMask::plus) {
        if (!(c.g > 0.0))
            throw DivergentPartition("nonpositive positive-side rate at cell (" +
                                         std::to_string(i) + "," + std::to_string(t) + ")",
                                     i, t);
        c.log_plus = -ms.a(i, t) - std::log(c.g);
    }
    if (st & StateMask::minus) {
        if (!(c.s > 0.0))
            throw DivergentPartition("nonpositive negative-side rate at cell (" +
                                         std::to_string(i) + "," + std::to_string(t) + ")",
                                     i, t);
        c.log_minus = -ms.b(i, t) - std::log(c.s);
    }
    if (st & StateMask::missing)
        c.log_missing = 0.0;
    if (st == 0)
        throw DivergentPartition("cell has no enabled state", i, t);
    return c;
}

double lse3(double x, double y, double z)
{
    const double m = std::max({x, y, z});
    if (m == -inf)
        return -inf;
    return m + std::log(std::exp(x - m) + std::exp(y - m) + std::exp(z - m));
}

} // namespace

double log_cell_partition(const MultiplierSet& ms, std::size_t i, std::size_t t)
{
    const auto c = cell_terms(ms, i, t);
    const double lz = lse3(c.log_plus, c.log_minus, c.log_missing);
    if (!std::isfinite(lz))
        throw DivergentPartition("cell partition overflow", i, t);
    return lz;
}

double cell_partition(const MultiplierSet& ms, std::size_t i, std::size_t t)
{
    return std::exp(log_cell_partition(ms, i, t));
}

CellMarginal marginal(const MultiplierSet& ms, std::size_t i, std::size_t t)
{
    const auto c = cell_terms(ms, i, t);
    const double lz = lse3(c.log_plus, c.log_minus, c.log_missing);
    if (!std::isfinite(lz))
        throw DivergentPartition("cell partition overflow", i, t);
    CellMarginal m;
    m.p_plus = std::exp(c.log_plus - lz);
    m.p_minus = std::exp(c.log_minus - lz);
    m.p_missing = std::exp(c.log_missing - lz);
    m.lambda_plus = c.g;
    m.lambda_minus = c.s;
    return m;
}

double CellMarginal::density(double x) const
{
    if (x >= 0.0)
        return p_plus > 0.0 ? p_plus * lambda_plus * std::exp(-lambda_plus * x) : 0.0;
    return p_minus > 0.0 ? p_minus * lambda_minus * std::exp(lambda_minus * x) : 0.0;
}

double CellMarginal::mean() const
{
    double m = 0.0;
    if (p_plus > 0.0)
        m += p_plus / lambda_plus;
    if (p_minus > 0.0)
        m -= p_minus / lambda_minus;
    return m;
}

double CellMarginal::variance() const
{
    double m2 = 0.0;
    if (p_plus > 0.0)
        m2 += 2.0 * p_plus / (lambda_plus * lambda_plus);
    if (p_minus > 0.0)
        m2 += 2.0 * p_minus / (lambda_minus * lambda_minus);
    const double m = mean();
    return m2 - m * m;
}

double CellMarginal::observed_cdf(double x) const
{
    const double po = p_observed();
    if (!(po > 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    const double r = p_minus / po;
    if (x < 0.0)
        return r > 0.0 ? r * std::exp(lambda_minus * x) : 0.0;
    return r + (1.0 - r) * (p_plus > 0.0 ? -std::expm1(-lambda_plus * x) : 1.0);
}

double CellMarginal::observed_quantile(double p) const
{
    const double po = p_observed();
    if (!(po > 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    p = std::clamp(p, 0.0, 1.0);
    const double r = p_minus / po;
    if (p < r)
        return std::log(p / r) / lambda_minus;
    if (r >= 1.0)
        return 0.0;
    return -std::log1p(-(p - r) / (1.0 - r)) / lambda_plus;
}

double log_partition(const MultiplierSet& ms)
{
    std::vector<double> per_row(ms.rows(), 0.0);
    parallel_for(ms.rows(), [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t t = 0; t < ms.cols(); ++t)
            s += log_cell_partition(ms, i, t);
        per_row[i] = s;
    });
    double s = 0.0;
    for (double v : per_row)
        s += v;
    return s;
}

namespace {

void check_shape(const MultiplierSet& ms, std::size_t n, std::size_t t)
{
    if (ms.rows() != n || ms.cols() != t)
        throw ShapeMismatch("multipliers are " + std::to_string(ms.rows()) + "x" +
                            std::to_string(ms.cols()) + ", data is " + std::to_string(n) +
                            "x" + std::to_string(t));
}

} // namespace

double log_likelihood(const DataMatrix& data, const MultiplierSet& ms)
{
    check_shape(ms, data.rows(), data.cols());
    double ll = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t t = 0; t < data.cols(); ++t) {
            const unsigned char st = ms.states(i, t);
            if (!data.observed(i, t)) {
                if (!(st & StateMask::missing))
                    return -inf;
            } else if (const double x = data(i, t); x >= 0.0) {
                if (!(st & StateMask::plus))
                    return -inf;
                ll -= ms.a(i, t) + ms.g(i, t) * x;
            } else {
                if (!(st & StateMask::minus))
                    return -inf;
                ll -= ms.b(i, t) + ms.s(i, t) * (-x);
            }
        }
    return ll - log_partition(ms);
}

double log_likelihood(const MarginConstraints& c, const MultiplierSet& ms)
{
    check_shape(ms, c.rows(), c.cols());
    const bool beta = ms.variant == Variant::WithMissing;
    auto dot = [](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
            if (y[k] != 0.0)
                s += x[k] * y[k];
        return s;
    };
    double h = dot(ms.alpha_row, c.n_plus_row) + dot(ms.gamma_row, c.s_plus_row) +
               dot(ms.sigma_row, c.s_minus_row) + dot(ms.alpha_col, c.m_plus_col) +
               dot(ms.gamma_col, c.r_plus_col) + dot(ms.sigma_col, c.r_minus_col);
    if (beta)
        h += dot(ms.beta_row, c.n_minus_row) + dot(ms.beta_col, c.m_minus_col);
    return -h - log_partition(ms);
}

MarginConstraints expected_constraints(const MultiplierSet& ms)
{
    const std::size_t N = ms.rows(), T = ms.cols();
    auto out = MarginConstraints::zeros(N, T);
    // per-cell (p+, p-, p+/g, p-/s), filled row-parallel then reduced serially
    std::vector<std::array<double, 4>> cells(N * T);
    parallel_for(N, [&](std::size_t i) {
        for (std::size_t t = 0; t < T; ++t) {
            const auto m = marginal(ms, i, t);
            cells[i * T + t] = {m.p_plus, m.p_minus,
                                m.p_plus > 0.0 ? m.p_plus / m.lambda_plus : 0.0,
                                m.p_minus > 0.0 ? m.p_minus / m.lambda_minus : 0.0};
        }
    });
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t t = 0; t < T; ++t) {
            const auto& c = cells[i * T + t];
            out.n_plus_row[i] += c[0];
            out.n_minus_row[i] += c[1];
            out.s_plus_row[i] += c[2];
            out.s_minus_row[i] += c[3];
            out.n_obs_row[i] += c[0] + c[1];
            out.m_plus_col[t] += c[0];
            out.m_minus_col[t] += c[1];
            out.r_plus_col[t] += c[2];
            out.r_minus_col[t] += c[3];
            out.m_obs_col[t] += c[0] + c[1];
        }
    return out;
}

std::variant<PhysicalQuantities, OutOfPhysicalRegion>
physical_quantities(const MultiplierSet& ms, std::size_t i, std::size_t t)
{
    const double g = ms.g(i, t), s = ms.s(i, t);
    if (!(g > 0.0) || !(s > 0.0))
        return OutOfPhysicalRegion{i, t, "nonpositive rate sum"};
    const double denom = std::log(s) + std::log(g);
    if (denom == 0.0 || !std::isfinite(denom))
        return OutOfPhysicalRegion{i, t, "rate product equals one, temperature undefined"};
    PhysicalQuantities q;
    q.temperature = 1.0 / denom;
    const double a = ms.a(i, t), b = ms.b(i, t);
    q.energy = 0.5 + 0.5 * q.temperature * (a + b);
    q.mu2 = 0.5 * q.temperature * (a - b - std::log(s / g));
    q.mu1 = -q.mu2;
    return q;
}

double reconstruct_partition(const PhysicalQuantities& q, Variant v)
{
    const double z = std::exp((q.mu1 - q.energy) / q.temperature) +
                     std::exp((q.mu2 - q.energy) / q.temperature);
    return v == Variant::WithMissing ? 1.0 + z : z;
}

DataMatrix sample_matrix(const MultiplierSet& ms, std::uint64_t seed)
{
    const std::size_t N = ms.rows(), T = ms.cols();
    DataMatrix out(N, T);
    parallel_for(N, [&](std::size_t i) {
        Engine rng = make_engine(seed, i);
        for (std::size_t t = 0; t < T; ++t) {
            const auto m = marginal(ms, i, t);
            const double u = uniform01(rng);
            const double e = -std::log(uniform_open(rng));
            // the trailing conditions absorb rounding when p sums to 1 - ulp
            if (u < m.p_plus || (m.p_minus == 0.0 && m.p_missing == 0.0))
                out.set(i, t, e / m.lambda_plus);
            else if (u < m.p_plus + m.p_minus || m.p_missing == 0.0)
                out.set(i, t, -e / m.lambda_minus);
            else
                out.set_missing(i, t);
        }
    });
    return out;
}

} // namespace maxent
