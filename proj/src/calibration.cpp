#include "maxent/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "maxent/error.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"

namespace maxent {

using numeric::inf;

std::string to_string(Method m)
{
    switch (m) {
    case Method::Newton: return "newton";
    case Method::GradientAscent: return "gradient";
    case Method::FixedPoint: return "fixed_point";
    }
    return "?";
}

Method parse_method(const std::string& s)
{
    if (s == "newton" || s == "Newton")
        return Method::Newton;
    if (s == "gradient" || s == "GradientAscent" || s == "gradient_ascent")
        return Method::GradientAscent;
    if (s == "fixed_point" || s == "FixedPoint" || s == "fixedpoint")
        return Method::FixedPoint;
    throw InvalidArgument("unknown calibration method '" + s + "'");
}

namespace {

constexpr double armijo_c = 1e-4;
constexpr double ridge_min = 1e-12;
constexpr double ridge_max = 1e8;

double rel_err(double expected, double observed)
{
    return std::abs(expected - observed) / std::max(1.0, std::abs(observed));
}

// Ridge-damped solve of F x = g for a small dense system; fixed entries get
// x = 0.
Eigen::VectorXd damped_solve(Eigen::MatrixXd F, const Eigen::VectorXd& g,
                             const std::vector<char>& fixed, double lambda)
{
    const Eigen::Index n = F.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (fixed[k]) {
            F.row(k).setZero();
            F.col(k).setZero();
            F(k, k) = 1.0;
        } else {
            F(k, k) += lambda * (F(k, k) + 1e-12);
        }
    }
    Eigen::VectorXd rhs = g;
    for (Eigen::Index k = 0; k < n; ++k)
        if (fixed[k])
            rhs[k] = 0.0;
    return F.ldlt().solve(rhs);
}

bool finite(const Eigen::VectorXd& v)
{
    return v.allFinite();
}

// =============================================================================
// Multivariate
// =============================================================================

const char* family_name(Family f)
{
    switch (f) {
    case Family::Alpha: return "alpha";
    case Family::Beta: return "beta";
    case Family::Gamma: return "gamma";
    case Family::Sigma: return "sigma";
    }
    return "?";
}

const std::vector<double>& observed_of(const MarginConstraints& c, Family f, Axis a)
{
    const bool row = a == Axis::Row;
    switch (f) {
    case Family::Alpha: return row ? c.n_plus_row : c.m_plus_col;
    case Family::Beta: return row ? c.n_minus_row : c.m_minus_col;
    case Family::Gamma: return row ? c.s_plus_row : c.r_plus_col;
    case Family::Sigma: return row ? c.s_minus_row : c.r_minus_col;
    }
    return c.n_plus_row;
}

const char* margin_name(Family f, Axis a)
{
    const bool row = a == Axis::Row;
    switch (f) {
    case Family::Alpha: return row ? "n_plus_row" : "m_plus_col";
    case Family::Beta: return row ? "n_minus_row" : "m_minus_col";
    case Family::Gamma: return row ? "s_plus_row" : "r_plus_col";
    case Family::Sigma: return row ? "s_minus_row" : "r_minus_col";
    }
    return "?";
}

struct Problem
{
    ConstraintSpec spec;
    const MarginConstraints* O = nullptr;
    std::size_t N = 0, T = 0;
    std::vector<Family> fam[2];
    std::vector<char> fixed[2];    // index * k + j
    std::vector<double> obs[2];
    double mu = 0.0;               // barrier strength

    std::size_t k(int axis) const { return fam[axis].size(); }
    std::size_t len(int axis) const { return axis == 0 ? N : T; }
    std::size_t size(int axis) const { return len(axis) * k(axis); }
};

struct CellStats
{
    std::array<double, 4> e{};
    Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
    std::array<double, 4> barrier{};
};

struct Assembly
{
    Eigen::VectorXd grad[2];      // objective gradient
    Eigen::VectorXd expected[2];
    std::vector<Eigen::MatrixXd> blocks[2];
    Eigen::MatrixXd coupling;     // (N kr) x (T kc)
};

// Objective: ln L plus the optional barrier. -inf outside the admissible set.
double objective(const Problem& P, const MultiplierSet& ms, double mu)
{
    double ll;
    try {
        ll = log_likelihood(*P.O, ms);
    } catch (const DivergentPartition&) {
        return -inf;
    }
    if (!std::isfinite(ll))
        return -inf;
    if (mu > 0.0) {
        double b = 0.0;
        for (std::size_t i = 0; i < P.N; ++i)
            for (std::size_t t = 0; t < P.T; ++t) {
                const unsigned char st = ms.states(i, t);
                if (st & StateMask::plus)
                    b += std::log(ms.g(i, t));
                if (st & StateMask::minus)
                    b += std::log(ms.s(i, t));
            }
        ll += mu * b;
    }
    return ll;
}

Assembly assemble(const Problem& P, const MultiplierSet& ms, bool with_hessian)
{
    const std::size_t N = P.N, T = P.T;
    std::vector<CellStats> cells(N * T);
    parallel_for(N, [&](std::size_t i) {
        for (std::size_t t = 0; t < T; ++t) {
            const auto m = marginal(ms, i, t);
            auto& c = cells[i * T + t];
            const double pp = m.p_plus, pm = m.p_minus;
            const double g = m.lambda_plus, s = m.lambda_minus;
            const double wp = pp > 0.0 ? pp / g : 0.0;
            const double wm = pm > 0.0 ? pm / s : 0.0;
            c.e = {pp, pm, wp, wm};
            const unsigned char st = ms.states(i, t);
            if (P.mu > 0.0) {
                if (st & StateMask::plus)
                    c.barrier[2] = P.mu / g;
                if (st & StateMask::minus)
                    c.barrier[3] = P.mu / s;
            }
            if (!with_hessian)
                continue;
            Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
            M(0, 0) = pp;
            M(0, 2) = M(2, 0) = wp;
            M(2, 2) = pp > 0.0 ? 2.0 * wp / g : 0.0;
            M(1, 1) = pm;
            M(1, 3) = M(3, 1) = wm;
            M(3, 3) = pm > 0.0 ? 2.0 * wm / s : 0.0;
            Eigen::Vector4d e(pp, pm, wp, wm);
            c.C = M - e * e.transpose();
            if (P.mu > 0.0) {
                if (st & StateMask::plus)
                    c.C(2, 2) += P.mu / (g * g);
                if (st & StateMask::minus)
                    c.C(3, 3) += P.mu / (s * s);
            }
        }
    });

    Assembly A;
    for (int ax = 0; ax < 2; ++ax) {
        A.expected[ax] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P.size(ax)));
        A.grad[ax] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P.size(ax)));
        if (with_hessian)
            A.blocks[ax].assign(P.len(ax), Eigen::MatrixXd::Zero(P.k(ax), P.k(ax)));
    }
    const std::size_t kr = P.k(0), kc = P.k(1);
    if (with_hessian)
        A.coupling = Eigen::MatrixXd::Zero(N * kr, T * kc);

    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t t = 0; t < T; ++t) {
            const auto& c = cells[i * T + t];
            for (std::size_t j = 0; j < kr; ++j) {
                const int fj = static_cast<int>(P.fam[0][j]);
                A.expected[0][i * kr + j] += c.e[fj];
                A.grad[0][i * kr + j] += c.barrier[fj];
            }
            for (std::size_t j = 0; j < kc; ++j) {
                const int fj = static_cast<int>(P.fam[1][j]);
                A.expected[1][t * kc + j] += c.e[fj];
                A.grad[1][t * kc + j] += c.barrier[fj];
            }
            if (!with_hessian)
                continue;
            for (std::size_t j = 0; j < kr; ++j) {
                const int fj = static_cast<int>(P.fam[0][j]);
                for (std::size_t l = 0; l < kr; ++l)
                    A.blocks[0][i](j, l) += c.C(fj, static_cast<int>(P.fam[0][l]));
                for (std::size_t l = 0; l < kc; ++l)
                    A.coupling(i * kr + j, t * kc + l) = c.C(fj, static_cast<int>(P.fam[1][l]));
            }
            for (std::size_t j = 0; j < kc; ++j) {
                const int fj = static_cast<int>(P.fam[1][j]);
                for (std::size_t l = 0; l < kc; ++l)
                    A.blocks[1][t](j, l) += c.C(fj, static_cast<int>(P.fam[1][l]));
            }
        }
    for (int ax = 0; ax < 2; ++ax)
        for (std::size_t q = 0; q < P.size(ax); ++q) {
            A.grad[ax][q] += A.expected[ax][q] - P.obs[ax][q];
            if (P.fixed[ax][q])
                A.grad[ax][q] = 0.0;
        }
    return A;
}

double max_constraint_error(const Problem& P, const Assembly& A)
{
    double worst = 0.0;
    for (int ax = 0; ax < 2; ++ax)
        for (std::size_t q = 0; q < P.size(ax); ++q)
            worst = std::max(worst, rel_err(A.expected[ax][q], P.obs[ax][q]));
    return worst;
}

double max_gradient_error(const Problem& P, const Assembly& A)
{
    double worst = 0.0;
    for (int ax = 0; ax < 2; ++ax)
        for (std::size_t q = 0; q < P.size(ax); ++q)
            if (!P.fixed[ax][q])
                worst = std::max(worst, std::abs(A.grad[ax][q]) / std::max(1.0, std::abs(P.obs[ax][q])));
    return worst;
}

void damp_block(Eigen::MatrixXd& B, const char* fixed, double lambda)
{
    for (Eigen::Index k = 0; k < B.rows(); ++k) {
        if (fixed[k]) {
            B.row(k).setZero();
            B.col(k).setZero();
            B(k, k) = 1.0;
        } else {
            B(k, k) += lambda * (B(k, k) + 1e-12);
        }
    }
}

// Newton direction through the Schur complement of the axis with more
// parameters. Its Fisher blocks are k x k and diagonal across indices.
bool newton_direction(const Problem& P, Assembly A, double lambda, Eigen::VectorXd out[2])
{
    const int elim = P.size(0) > P.size(1) ? 0 : 1;
    const int keep = 1 - elim;
    const std::size_t ke = P.k(elim), kk = P.k(keep);

    for (int ax = 0; ax < 2; ++ax)
        for (std::size_t idx = 0; idx < P.len(ax); ++idx)
            damp_block(A.blocks[ax][idx], P.fixed[ax].data() + idx * P.k(ax), lambda);

    Eigen::MatrixXd Bk = elim == 1 ? A.coupling : Eigen::MatrixXd(A.coupling.transpose());
    for (std::size_t q = 0; q < P.size(keep); ++q)
        if (P.fixed[keep][q])
            Bk.row(q).setZero();
    for (std::size_t q = 0; q < P.size(elim); ++q)
        if (P.fixed[elim][q])
            Bk.col(q).setZero();

    const auto nk = static_cast<Eigen::Index>(P.size(keep));
    const auto ne = static_cast<Eigen::Index>(P.size(elim));
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(nk, nk);
    for (std::size_t idx = 0; idx < P.len(keep); ++idx)
        S.block(idx * kk, idx * kk, kk, kk) = A.blocks[keep][idx];
    Eigen::VectorXd rhs = A.grad[keep];
    Eigen::VectorXd De_g(ne);
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> fact(P.len(elim));
    for (std::size_t idx = 0; idx < P.len(elim); ++idx) {
        fact[idx].compute(A.blocks[elim][idx]);
        const auto off = static_cast<Eigen::Index>(idx * ke);
        De_g.segment(off, ke) = fact[idx].solve(A.grad[elim].segment(off, ke));
        if (nk == 0)
            continue;
        const Eigen::MatrixXd Bt = Bk.middleCols(off, ke);
        const Eigen::MatrixXd X = fact[idx].solve(Bt.transpose());
        S.noalias() -= Bt * X;
        rhs.noalias() -= Bt * De_g.segment(off, ke);
    }
    Eigen::VectorXd dk = Eigen::VectorXd::Zero(nk);
    if (nk > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ls(S);
        if (ls.info() != Eigen::Success)
            return false;
        dk = ls.solve(rhs);
    }
    Eigen::VectorXd de(ne);
    const Eigen::VectorXd back = A.grad[elim] - (nk > 0 ? Eigen::VectorXd(Bk.transpose() * dk)
                                                        : Eigen::VectorXd::Zero(ne));
    for (std::size_t idx = 0; idx < P.len(elim); ++idx) {
        const auto off = static_cast<Eigen::Index>(idx * ke);
        de.segment(off, ke) = fact[idx].solve(back.segment(off, ke));
    }
    for (int ax = 0; ax < 2; ++ax)
        for (std::size_t q = 0; q < P.size(ax); ++q)
            if (P.fixed[ax][q])
                (ax == keep ? dk : de)[q] = 0.0;
    out[keep] = dk;
    out[elim] = de;
    return finite(dk) && finite(de);
}

// Block-diagonal direction for a single axis (the other axis held fixed).
void block_direction(const Problem& P, const Assembly& A, int axis, double lambda,
                     Eigen::VectorXd out[2])
{
    const std::size_t k = P.k(axis);
    out[axis] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P.size(axis)));
    out[1 - axis] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P.size(1 - axis)));
    for (std::size_t idx = 0; idx < P.len(axis); ++idx) {
        Eigen::MatrixXd B = A.blocks[axis][idx];
        damp_block(B, P.fixed[axis].data() + idx * k, lambda);
        const auto off = static_cast<Eigen::Index>(idx * k);
        out[axis].segment(off, k) = B.ldlt().solve(A.grad[axis].segment(off, k));
    }
    for (std::size_t q = 0; q < P.size(axis); ++q)
        if (P.fixed[axis][q])
            out[axis][q] = 0.0;
}

void gradient_direction(const Problem& P, const Assembly& A, double lambda,
                        Eigen::VectorXd out[2])
{
    for (int ax = 0; ax < 2; ++ax) {
        const std::size_t k = P.k(ax);
        out[ax] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P.size(ax)));
        for (std::size_t q = 0; q < P.size(ax); ++q) {
            if (P.fixed[ax][q])
                continue;
            double d = 1.0;
            if (!A.blocks[ax].empty())
                d = A.blocks[ax][q / k](q % k, q % k);
            out[ax][q] = A.grad[ax][q] / (d * (1.0 + lambda) + 1e-12);
        }
    }
}

MultiplierSet apply_step(const Problem& P, const MultiplierSet& ms, const Eigen::VectorXd d[2],
                         double step)
{
    MultiplierSet out = ms;
    for (int ax = 0; ax < 2; ++ax) {
        const std::size_t k = P.k(ax);
        for (std::size_t j = 0; j < k; ++j) {
            auto& v = out.family(P.fam[ax][j], static_cast<Axis>(ax));
            for (std::size_t idx = 0; idx < P.len(ax); ++idx)
                v[idx] += step * d[ax][idx * k + j];
        }
    }
    return out;
}

double directional(const Assembly& A, const Eigen::VectorXd d[2])
{
    return A.grad[0].dot(d[0]) + A.grad[1].dot(d[1]);
}

struct LineSearch
{
    bool ok = false;
    double step = 0.0;
    double value = -inf;
    MultiplierSet point;
};

LineSearch line_search(const Problem& P, const MultiplierSet& ms, double f0,
                       const Eigen::VectorXd d[2], double slope)
{
    LineSearch ls;
    if (!(slope > 0.0))
        return ls;
    // rounding slack for flat neighbourhoods of the optimum
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0));
    double step = 1.0;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
        auto trial = apply_step(P, ms, d, step);
        const double f = objective(P, trial, P.mu);
        if (f >= f0 + armijo_c * step * slope - slack && std::isfinite(f)) {
            ls.ok = f >= f0 - slack;
            ls.step = step;
            ls.value = f;
            ls.point = std::move(trial);
            return ls;
        }
    }
    return ls;
}

// ---- problem setup ----------------------------------------------------------

bool counts_constrain_plus(const ConstraintSpec& s, Axis a)
{
    return s.on(Family::Alpha, a);
}

bool counts_constrain_minus(const ConstraintSpec& s, Axis a)
{
    if (s.variant == Variant::NoMissing)
        return s.on(Family::Alpha, a);
    return s.on(Family::Beta, a);
}

struct AxisMargins
{
    const std::vector<double>* n_plus;
    const std::vector<double>* n_minus;
    const std::vector<double>* s_plus;
    const std::vector<double>* s_minus;
    const std::vector<double>* n_obs;
    std::size_t cells; // cells along the other axis
};

AxisMargins axis_margins(const MarginConstraints& c, Axis a)
{
    if (a == Axis::Row)
        return {&c.n_plus_row, &c.n_minus_row, &c.s_plus_row, &c.s_minus_row, &c.n_obs_row,
                c.cols()};
    return {&c.m_plus_col, &c.m_minus_col, &c.r_plus_col, &c.r_minus_col, &c.m_obs_col,
            c.rows()};
}

std::string entry(Family f, Axis a, std::size_t idx)
{
    return std::string(family_name(f)) + (a == Axis::Row ? "_row[" : "_col[") +
           std::to_string(idx) + "]";
}

// Decide which states each row/column can populate, which multipliers drop
// out, and check feasibility.
void setup_masks(Problem& P, MultiplierSet& ms, std::vector<std::string>& dropped)
{
    const auto& spec = P.spec;
    ms.mask.row.assign(P.N, StateMask::all);
    ms.mask.col.assign(P.T, StateMask::all);
    for (int ax = 0; ax < 2; ++ax) {
        const Axis a = static_cast<Axis>(ax);
        const auto m = axis_margins(*P.O, a);
        auto& mask = ax == 0 ? ms.mask.row : ms.mask.col;
        const bool cp = counts_constrain_plus(spec, a), cm = counts_constrain_minus(spec, a);
        const bool sp = spec.on(Family::Gamma, a), sm = spec.on(Family::Sigma, a);
        const bool both_counts = spec.variant == Variant::WithMissing &&
                                 spec.on(Family::Alpha, a) && spec.on(Family::Beta, a);
        for (std::size_t idx = 0; idx < P.len(ax); ++idx) {
            const double np = (*m.n_plus)[idx], nm = (*m.n_minus)[idx];
            const double spv = (*m.s_plus)[idx], smv = (*m.s_minus)[idx];
            const std::string where = (a == Axis::Row ? "row " : "column ") + std::to_string(idx);
            if (np < 0 || nm < 0 || spv < 0 || smv < 0)
                throw InfeasibleConstraints("negative margin at " + where);
            if ((cp || sp) && np == 0.0 && spv > 0.0)
                throw InfeasibleConstraints("positive sum without positive values at " + where);
            if ((cm || sm) && nm == 0.0 && smv > 0.0)
                throw InfeasibleConstraints("negative sum without negative values at " + where);
            if (cp && sp && np > 0.0 && spv == 0.0)
                throw InfeasibleConstraints("positive values summing to zero at " + where);
            if (cm && sm && nm > 0.0 && smv == 0.0)
                throw InfeasibleConstraints("negative values summing to zero at " + where);

            unsigned char st = StateMask::all;
            if ((cp && np == 0.0) || (!cp && sp && spv == 0.0))
                st &= ~StateMask::plus;
            if ((cm && nm == 0.0) || (!cm && sm && smv == 0.0))
                st &= ~StateMask::minus;
            if (both_counts && (*m.n_obs)[idx] >= static_cast<double>(m.cells))
                st &= ~StateMask::missing;
            mask[idx] = st;
        }
    }

    // Empty cells cannot exist: a cell needs at least one enabled state.
    for (std::size_t i = 0; i < P.N; ++i)
        for (std::size_t t = 0; t < P.T; ++t)
            if (ms.states(i, t) == 0)
                throw InfeasibleConstraints("cell (" + std::to_string(i) + "," +
                                            std::to_string(t) +
                                            ") cannot hold any value under the margins");

    for (int ax = 0; ax < 2; ++ax) {
        const Axis a = static_cast<Axis>(ax);
        const auto& mask = ax == 0 ? ms.mask.row : ms.mask.col;
        const std::size_t k = P.k(ax);
        auto fix = [&](std::size_t idx, Family f, const std::string& why) {
            for (std::size_t j = 0; j < k; ++j)
                if (P.fam[ax][j] == f && !P.fixed[ax][idx * k + j]) {
                    P.fixed[ax][idx * k + j] = 1;
                    dropped.push_back(entry(f, a, idx) + " (" + why + ")");
                }
        };
        for (std::size_t idx = 0; idx < P.len(ax); ++idx) {
            const unsigned char st = mask[idx];
            if (!(st & StateMask::plus)) {
                fix(idx, Family::Alpha, "no positive values");
                fix(idx, Family::Gamma, "no positive values");
            }
            if (!(st & StateMask::minus)) {
                fix(idx, Family::Beta, "no negative values");
                fix(idx, Family::Sigma, "no negative values");
            }
            const bool no_missing = spec.variant == Variant::NoMissing || !(st & StateMask::missing);
            if (no_missing) {
                const bool plus = st & StateMask::plus, minus = st & StateMask::minus;
                if (plus != minus) {
                    fix(idx, Family::Alpha, "sign fixed, count redundant");
                    fix(idx, Family::Beta, "sign fixed, count redundant");
                } else if (spec.variant == Variant::WithMissing && spec.on(Family::Alpha, a) &&
                           spec.on(Family::Beta, a)) {
                    fix(idx, Family::Beta, "no missing values, redundant with alpha");
                }
            }
        }
    }
}

// Gauge: the first column that can populate the family's state.
void fix_gauge(Problem& P, const MultiplierSet& ms)
{
    const std::size_t kc = P.k(1);
    for (std::size_t j = 0; j < kc; ++j) {
        const Family f = P.fam[1][j];
        if (!P.spec.on(f, Axis::Row))
            continue;
        const unsigned char need =
            (f == Family::Alpha || f == Family::Gamma) ? StateMask::plus : StateMask::minus;
        std::size_t ref = 0;
        while (ref + 1 < P.T && !(ms.mask.col[ref] & need))
            ++ref;
        P.fixed[1][ref * kc + j] = 1;
    }
}

// Independent-cell starting point: each row and column is fitted as if it
// were alone and the two estimates are averaged on every cell.
MultiplierSet initial_point(const Problem& P, const MultiplierSet& masked, const CalibrationOptions& opts)
{
    MultiplierSet ms = masked;
    struct Est
    {
        double a, b, g, s;
    };
    auto estimate = [&](Axis ax, std::size_t idx) {
        const auto m = axis_margins(*P.O, ax);
        const double cells = static_cast<double>(m.cells);
        const double floor = 0.5 / cells;
        const double np = (*m.n_plus)[idx], nm = (*m.n_minus)[idx];
        const double pp = std::max(np / cells, floor);
        const double pm = std::max(nm / cells, floor);
        const double p0 = std::max((cells - np - nm) / cells, floor);
        const double g = (*m.s_plus)[idx] > 0.0 && np > 0.0 ? np / (*m.s_plus)[idx] : 1.0;
        const double s = (*m.s_minus)[idx] > 0.0 && nm > 0.0 ? nm / (*m.s_minus)[idx] : 1.0;
        Est e{};
        e.g = g;
        e.s = s;
        if (P.spec.variant == Variant::WithMissing) {
            e.a = -std::log(pp / p0) - std::log(g);
            e.b = -std::log(pm / p0) - std::log(s);
        } else {
            e.a = -std::log(pp / pm) + std::log(s / g);
            e.b = 0.0;
        }
        return e;
    };
    std::vector<Est> row(P.N), col(P.T);
    for (std::size_t i = 0; i < P.N; ++i)
        row[i] = estimate(Axis::Row, i);
    for (std::size_t t = 0; t < P.T; ++t)
        col[t] = estimate(Axis::Col, t);

    auto fill = [&](Family f, double Est::*field) {
        const bool r = P.spec.on(f, Axis::Row), c = P.spec.on(f, Axis::Col);
        auto& vr = ms.family(f, Axis::Row);
        auto& vc = ms.family(f, Axis::Col);
        std::fill(vr.begin(), vr.end(), 0.0);
        std::fill(vc.begin(), vc.end(), 0.0);
        const double share = r && c ? 0.5 : 1.0;
        if (r)
            for (std::size_t i = 0; i < P.N; ++i)
                vr[i] = share * row[i].*field;
        if (c)
            for (std::size_t t = 0; t < P.T; ++t)
                vc[t] = share * col[t].*field;
    };
    fill(Family::Alpha, &Est::a);
    if (P.spec.variant == Variant::WithMissing)
        fill(Family::Beta, &Est::b);
    fill(Family::Gamma, &Est::g);
    fill(Family::Sigma, &Est::s);

    if (opts.random_init) {
        Engine rng = make_engine(opts.seed, 0x5eed);
        for (int f = 0; f < 4; ++f)
            for (int ax = 0; ax < 2; ++ax) {
                if (!P.spec.on(static_cast<Family>(f), static_cast<Axis>(ax)))
                    continue;
                for (double& v : ms.family(static_cast<Family>(f), static_cast<Axis>(ax))) {
                    const double z = 0.2 * standard_normal(rng);
                    v = f >= 2 ? v * std::exp(z) : v + z;
                }
            }
    }
    return ms;
}

std::vector<ConstraintResidual> residuals(const Problem& P, const MultiplierSet& ms,
                                          const std::vector<std::string>& dropped)
{
    const auto E = expected_constraints(ms);
    std::vector<ConstraintResidual> out;
    for (int ax = 0; ax < 2; ++ax) {
        const Axis a = static_cast<Axis>(ax);
        for (Family f : P.fam[ax]) {
            const auto& o = observed_of(*P.O, f, a);
            const auto& e = observed_of(E, f, a);
            for (std::size_t idx = 0; idx < o.size(); ++idx) {
                ConstraintResidual r;
                r.name = std::string(margin_name(f, a)) + "[" + std::to_string(idx) + "]";
                r.empirical = o[idx];
                r.expected = e[idx];
                r.rel_err = rel_err(e[idx], o[idx]);
                const std::string tag = entry(f, a, idx) + " (";
                r.dropped = std::any_of(dropped.begin(), dropped.end(), [&](const std::string& d) {
                    return d.rfind(tag, 0) == 0;
                });
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

} // namespace

CalibrationResult calibrate(const ConstraintSpec& spec_in, const MarginConstraints& margins,
                            const CalibrationOptions& opts)
{
    if (!(opts.tol_rel > 0.0))
        throw InvalidArgument("tol_rel must be positive");
    if (opts.max_iter < 1)
        throw InvalidArgument("max_iter must be at least 1");

    Problem P;
    P.spec = spec_in;
    if (P.spec.variant == Variant::NoMissing) {
        P.spec.set(Family::Beta, Axis::Row, false);
        P.spec.set(Family::Beta, Axis::Col, false);
    }
    P.O = &margins;
    P.N = margins.rows();
    P.T = margins.cols();
    if (P.N == 0 || P.T == 0)
        throw EmptyInput("no constraints to calibrate");
    if (!P.spec.on(Family::Gamma, Axis::Row) && !P.spec.on(Family::Gamma, Axis::Col))
        throw InvalidArgument("the positive-side rate family must be constrained on some axis");
    if (!P.spec.on(Family::Sigma, Axis::Row) && !P.spec.on(Family::Sigma, Axis::Col))
        throw InvalidArgument("the negative-side rate family must be constrained on some axis");
    if (margin_totals_mismatch(margins) > 1e-9)
        throw InfeasibleConstraints("row and column margin totals disagree");

    for (int ax = 0; ax < 2; ++ax) {
        for (int f = 0; f < 4; ++f)
            if (P.spec.on(static_cast<Family>(f), static_cast<Axis>(ax)))
                P.fam[ax].push_back(static_cast<Family>(f));
        P.fixed[ax].assign(P.size(ax), 0);
        P.obs[ax].assign(P.size(ax), 0.0);
        const std::size_t k = P.k(ax);
        for (std::size_t j = 0; j < k; ++j) {
            const auto& o = observed_of(margins, P.fam[ax][j], static_cast<Axis>(ax));
            for (std::size_t idx = 0; idx < P.len(ax); ++idx)
                P.obs[ax][idx * k + j] = o[idx];
        }
    }

    CalibrationResult res;
    res.method = opts.method;
    MultiplierSet ms = MultiplierSet::zeros(P.N, P.T, P.spec.variant);
    setup_masks(P, ms, res.dropped_constraints);
    fix_gauge(P, ms);

    if (opts.initial) {
        if (opts.initial->rows() != P.N || opts.initial->cols() != P.T)
            throw ShapeMismatch("warm start has the wrong shape");
        auto mask = ms.mask;
        ms = *opts.initial;
        ms.variant = P.spec.variant;
        ms.mask = std::move(mask);
        for (int f = 0; f < 4; ++f)
            for (int ax = 0; ax < 2; ++ax)
                if (!P.spec.on(static_cast<Family>(f), static_cast<Axis>(ax)))
                    for (double& v : ms.family(static_cast<Family>(f), static_cast<Axis>(ax)))
                        v = 0.0;
        if (!std::isfinite(objective(P, ms, 0.0)))
            ms = initial_point(P, ms, opts);
    } else {
        ms = initial_point(P, ms, opts);
    }
    ms.canonicalize(P.spec);

    P.mu = opts.barrier_strength;
    double f = objective(P, ms, P.mu);
    if (!std::isfinite(f))
        throw DivergentPartition("starting point is not admissible");
    res.log_likelihood_trace.push_back(objective(P, ms, 0.0));

    double lambda = 1e-10;
    std::size_t it = 0;
    bool stalled = false;
    const bool need_hessian = true;
    while (it < opts.max_iter) {
        const Assembly A = assemble(P, ms, need_hessian);
        const double err = max_constraint_error(P, A);
        res.max_rel_constraint_err = err;
        if (P.mu == 0.0) {
            if (err <= opts.tol_rel)
                break;
        } else if (max_gradient_error(P, A) <= opts.tol_rel) {
            P.mu = P.mu * 0.1 < 1e-10 ? 0.0 : P.mu * 0.1;
            f = objective(P, ms, P.mu);
            continue;
        }
        ++it;

        Eigen::VectorXd d[2];
        bool have = false;
        for (int attempt = 0; attempt < 8 && !have; ++attempt) {
            switch (opts.method) {
            case Method::Newton:
                have = newton_direction(P, A, lambda, d);
                break;
            case Method::FixedPoint:
                block_direction(P, A, static_cast<int>(it % 2), lambda, d);
                if (P.size(it % 2) == 0)
                    block_direction(P, A, static_cast<int>((it + 1) % 2), lambda, d);
                have = finite(d[0]) && finite(d[1]);
                break;
            case Method::GradientAscent:
                gradient_direction(P, A, lambda, d);
                have = true;
                break;
            }
            if (!have)
                lambda = std::min(lambda * 100.0, ridge_max);
        }
        LineSearch ls;
        if (have)
            ls = line_search(P, ms, f, d, directional(A, d));
        if (!ls.ok) {
            gradient_direction(P, A, lambda, d);
            ls = line_search(P, ms, f, d, directional(A, d));
            lambda = std::min(lambda * 10.0, ridge_max);
        } else if (ls.step < 1.0) {
            lambda = std::min(lambda * 10.0, ridge_max);
        } else {
            lambda = std::max(lambda * 0.1, ridge_min);
        }
        if (!ls.ok) {
            stalled = true;
            break;
        }
        ms = std::move(ls.point);
        f = ls.value;
        res.log_likelihood_trace.push_back(P.mu == 0.0 ? f : objective(P, ms, 0.0));
    }

    P.mu = 0.0;
    const Assembly A = assemble(P, ms, false);
    res.max_rel_constraint_err = max_constraint_error(P, A);
    res.converged = res.max_rel_constraint_err <= opts.tol_rel;
    res.iterations = it;
    res.final_log_likelihood = objective(P, ms, 0.0);
    res.residuals = residuals(P, ms, res.dropped_constraints);
    if (!res.converged)
        spdlog::warn("calibration stopped after {} iterations{} with max relative error {:.3g}", it,
                     stalled ? " (line search stalled)" : "", res.max_rel_constraint_err);
    res.multipliers = std::move(ms);
    return res;
}

std::pair<MultivariateModel, CalibrationResult>
calibrate_matrix(const DataMatrix& centered, const ConstraintSpec& spec,
                 const CalibrationOptions& opts)
{
    auto margins = compute_margins(centered);
    auto res = calibrate(spec, margins, opts);
    MultivariateModel model;
    model.spec = spec;
    if (spec.variant == Variant::NoMissing) {
        model.spec.set(Family::Beta, Axis::Row, false);
        model.spec.set(Family::Beta, Axis::Col, false);
    }
    model.multipliers = res.multipliers;
    model.constraints = std::move(margins);
    model.row_ids = centered.row_ids;
    model.col_ids = centered.col_ids;
    model.row_means = centered.row_means;
    model.dropped = res.dropped_constraints;
    return {std::move(model), std::move(res)};
}

// =============================================================================
// Univariate
// =============================================================================

namespace {

std::vector<double> univariate_start(const UnivariateSpec& spec, const BinStatistics& st,
                                     const std::vector<bool>& active)
{
    const std::size_t d = spec.bins();
    const auto& q = spec.grid.q;
    const double n = st.total_count();
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        sum += st.sum[i];
        sum_sq += st.sum_sq[i];
    }
    const double mean = sum / n;
    const double var = std::max(sum_sq / n - mean * mean, 1e-12 * (1.0 + mean * mean));
    std::vector<double> p(spec.parameter_count(), 0.0);
    std::vector<BinCoefficients> shape(d);

    switch (spec.family) {
    case UnivariateFamily::H1:
        for (std::size_t i = 0; i < d; ++i) {
            double b = 0.0;
            if (active[i] && std::isinf(q[i + 1])) {
                const double excess = st.sum[i] / st.count[i] - q[i];
                b = 1.0 / std::max(excess, 1e-3 * std::sqrt(var));
            } else if (active[i] && std::isinf(q[i])) {
                const double excess = q[i + 1] - st.sum[i] / st.count[i];
                b = -1.0 / std::max(excess, 1e-3 * std::sqrt(var));
            }
            if (std::isinf(q[i]) && std::isinf(q[i + 1]))
                throw InvalidGrid("H1 needs at least one finite grid point");
            p[d + i] = b;
            shape[i].b = b;
        }
        break;
    case UnivariateFamily::H2:
        p[d] = -mean / var;
        p[d + 1] = 0.5 / var;
        for (auto& s : shape) {
            s.b = p[d];
            s.c = p[d + 1];
        }
        break;
    case UnivariateFamily::M1:
        for (std::size_t i = 0; i < d; ++i) {
            p[i] = -mean / var;
            shape[i].b = p[i];
            shape[i].c = 0.5 / var;
        }
        p[d] = 0.5 / var;
        break;
    }

    if (spec.family != UnivariateFamily::M1) {
        // bin weights reproduce the empirical bin frequencies
        std::optional<double> ref;
        for (std::size_t i = 0; i < d; ++i) {
            if (!active[i])
                continue;
            const numeric::BinIntegral bi =
                shape[i].c > 0.0 ? numeric::gaussian_bin(q[i], q[i + 1], shape[i].b, shape[i].c)
                                 : numeric::exponential_bin(q[i], q[i + 1], shape[i].b);
            p[i] = bi.log_mass - std::log(st.count[i]);
            if (!ref)
                ref = p[i];
        }
        for (std::size_t i = 0; i < d; ++i)
            p[i] = active[i] ? p[i] - *ref : 0.0;
    }
    return p;
}

double univariate_objective(const UnivariateSpec& spec, const std::vector<double>& p,
                            const BinStatistics& st, const std::vector<bool>& active)
{
    try {
        const double ll = log_likelihood(spec, p, st, active);
        return std::isfinite(ll) ? ll : -inf;
    } catch (const DivergentPartition&) {
        return -inf;
    }
}

} // namespace

UnivariateCalibration calibrate(const UnivariateSpec& spec_in, const BinStatistics& stats,
                                const CalibrationOptions& opts)
{
    if (!(opts.tol_rel > 0.0))
        throw InvalidArgument("tol_rel must be positive");
    if (spec_in.grid.degenerate)
        throw DegenerateQuantiles("quantile grid has a zero-width bin");
    UnivariateSpec spec = spec_in;
    const std::size_t d = spec.bins();
    if (stats.count.size() != d)
        throw ShapeMismatch("bin statistics do not match the grid");
    const double n = stats.total_count();
    if (n < 2)
        throw InsufficientSample("need at least two observations");
    spec.samples = static_cast<std::size_t>(std::llround(n));

    std::vector<bool> active(d, true);
    std::vector<std::string> dropped;
    const std::size_t K = spec.parameter_count();
    std::vector<char> fixed(K, 0);
    const auto terms = parameter_terms(spec);
    if (spec.family != UnivariateFamily::M1) {
        for (std::size_t i = 0; i < d; ++i)
            if (stats.count[i] == 0.0) {
                active[i] = false;
                for (std::size_t k = 0; k < K; ++k)
                    if (terms[k].size() == 1 && terms[k][0].bin == i) {
                        fixed[k] = 1;
                        dropped.push_back(spec.parameter_names()[k] + " (empty bin)");
                    }
            }
        std::size_t gauge = 0;
        while (gauge < d && !active[gauge])
            ++gauge;
        if (gauge == d)
            throw InsufficientSample("every bin is empty");
        fixed[gauge] = 1;
    }

    const auto obs_v = empirical_values(spec, stats);
    const Eigen::VectorXd obs = Eigen::Map<const Eigen::VectorXd>(obs_v.data(), obs_v.size());
    std::vector<double> p = univariate_start(spec, stats, active);
    if (opts.random_init) {
        Engine rng = make_engine(opts.seed, 0x5eed);
        for (std::size_t k = 0; k < K; ++k)
            if (!fixed[k])
                p[k] += 0.05 * std::abs(p[k]) * standard_normal(rng);
        if (!std::isfinite(univariate_objective(spec, p, stats, active)))
            p = univariate_start(spec, stats, active);
    }
    double f = univariate_objective(spec, p, stats, active);
    if (!std::isfinite(f))
        throw DivergentPartition("starting point is not admissible");

    std::vector<double> trace{f};
    double lambda = 1e-10;
    std::size_t it = 0;
    double err = inf;
    while (true) {
        const auto ev = evaluate(spec, p, active, true);
        Eigen::VectorXd g = ev.expected - obs;
        err = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (fixed[k])
                g[k] = 0.0;
            err = std::max(err, rel_err(ev.expected[k], obs[k]));
        }
        if (err <= opts.tol_rel || it >= opts.max_iter)
            break;
        ++it;

        Eigen::VectorXd dir;
        if (opts.method == Method::GradientAscent) {
            dir = Eigen::VectorXd::Zero(K);
            for (std::size_t k = 0; k < K; ++k)
                if (!fixed[k])
                    dir[k] = g[k] / (ev.covariance(k, k) * (1.0 + lambda) + 1e-12);
        } else {
            dir = damped_solve(ev.covariance, g, fixed, lambda);
            if (!finite(dir)) {
                lambda = std::min(lambda * 100.0, ridge_max);
                continue;
            }
        }
        auto try_dir = [&](const Eigen::VectorXd& dv, double& step_out) -> bool {
            const double slope = g.dot(dv);
            if (!(slope > 0.0))
                return false;
            const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
            double step = 1.0;
            for (int k = 0; k < 60; ++k, step *= 0.5) {
                std::vector<double> trial = p;
                for (std::size_t j = 0; j < K; ++j)
                    trial[j] += step * dv[j];
                const double ft = univariate_objective(spec, trial, stats, active);
                if (std::isfinite(ft) && ft >= f + armijo_c * step * slope - slack) {
                    if (ft < f - slack)
                        return false;
                    p = std::move(trial);
                    f = ft;
                    step_out = step;
                    return true;
                }
            }
            return false;
        };
        double step = 0.0;
        if (try_dir(dir, step)) {
            lambda = step < 1.0 ? std::min(lambda * 10.0, ridge_max) : std::max(lambda * 0.1, ridge_min);
        } else {
            Eigen::VectorXd gd = Eigen::VectorXd::Zero(K);
            for (std::size_t k = 0; k < K; ++k)
                if (!fixed[k])
                    gd[k] = g[k] / (ev.covariance(k, k) + 1e-12);
            lambda = std::min(lambda * 10.0, ridge_max);
            if (!try_dir(gd, step))
                break;
        }
        trace.push_back(f);
    }

    UnivariateCalibration out{UnivariateModel(spec, p, stats, active), false, 0, 0.0, 0.0, {}, {}};
    out.converged = err <= opts.tol_rel;
    out.iterations = it;
    out.max_rel_constraint_err = err;
    out.final_log_likelihood = f;
    out.dropped_constraints = std::move(dropped);
    out.log_likelihood_trace = std::move(trace);
    if (!out.converged)
        spdlog::warn("univariate calibration stopped after {} iterations, max relative error {:.3g}",
                     it, err);
    return out;
}

UnivariateCalibration calibrate_series(std::span<const double> series,
                                       std::span<const double> xi, UnivariateFamily family,
                                       const CalibrationOptions& opts)
{
    auto grid = empirical_quantiles(series, xi, true);
    if (grid.degenerate)
        throw DegenerateQuantiles("series has repeated quantiles");
    auto stats = bin_statistics(series, grid);
    UnivariateSpec spec{std::move(grid), family, series.size()};
    return calibrate(spec, stats, opts);
}

// =============================================================================
// Oracles and entropy
// =============================================================================

double brute_force_log_partition(const MultiplierSet& ms, int resolution)
{
    const std::size_t N = ms.rows(), T = ms.cols(), cells = N * T;
    if (cells > 6)
        throw OracleTooLarge("brute-force oracle is limited to six cells");
    if (resolution < 2)
        throw InvalidArgument("resolution must be at least 2");
    const int panels = resolution + (resolution % 2);

    // log of the configuration weight for each cell and state (plus, minus, missing)
    std::vector<std::array<double, 3>> lw(cells);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t t = 0; t < T; ++t) {
            auto& w = lw[i * T + t];
            const unsigned char st = ms.states(i, t);
            w = {-inf, -inf, -inf};
            auto magnitude = [&](double energy, double rate) {
                if (!(rate > 0.0))
                    throw DivergentPartition("nonpositive rate", i, t);
                const double integral = numeric::simpson(
                    [&](double x) { return std::exp(-rate * x); }, 0.0, 40.0 / rate, panels);
                return -energy + std::log(integral);
            };
            if (st & StateMask::plus)
                w[0] = magnitude(ms.a(i, t), ms.g(i, t));
            if (st & StateMask::minus)
                w[1] = magnitude(ms.b(i, t), ms.s(i, t));
            if (st & StateMask::missing)
                w[2] = 0.0;
        }

    std::size_t configs = 1;
    for (std::size_t c = 0; c < cells; ++c)
        configs *= 3;
    std::vector<double> terms;
    terms.reserve(configs);
    for (std::size_t code = 0; code < configs; ++code) {
        std::size_t r = code;
        double s = 0.0;
        for (std::size_t c = 0; c < cells; ++c, r /= 3)
            s += lw[c][r % 3];
        if (s > -inf)
            terms.push_back(s);
    }
    return numeric::log_sum_exp(terms);
}

double brute_force_log_partition(const UnivariateSpec& spec, std::span<const double> params,
                                 int resolution)
{
    const auto coef = bin_coefficients(spec, params);
    const auto& q = spec.grid.q;
    const int panels = std::max(2, resolution + (resolution % 2));
    std::vector<double> logs;
    for (std::size_t i = 0; i < spec.bins(); ++i) {
        const auto& c = coef[i];
        auto expo = [&](double x) { return -(c.a + c.b * x + c.c * x * x); };
        double lo = q[i], hi = q[i + 1];
        // a finite reference point inside the bin to measure the cutoff against
        double ref = std::isfinite(lo) ? lo : std::isfinite(hi) ? hi : 0.0;
        if (c.c > 0.0)
            ref = std::clamp(-c.b / (2.0 * c.c), std::isfinite(lo) ? lo : -inf,
                             std::isfinite(hi) ? hi : inf);
        const double peak = expo(ref);
        auto cut = [&](double from, double dir) {
            double h = 1.0;
            while (expo(from + dir * h) > peak - 41.5 && h < 1e12)
                h *= 2.0;
            return from + dir * h;
        };
        if (std::isinf(lo))
            lo = cut(ref, -1.0);
        if (std::isinf(hi))
            hi = cut(ref, 1.0);
        if (std::isinf(q[i]) && std::isinf(q[i + 1]) && c.c <= 0.0)
            throw DivergentPartition("unbounded bin without a quadratic term");
        const double integral = numeric::simpson(
            [&](double x) { return std::exp(expo(x) - peak); }, lo, hi, panels);
        logs.push_back(peak + std::log(integral));
    }
    return static_cast<double>(spec.samples) * numeric::log_sum_exp(logs);
}

double entropy(const UnivariateModel& model)
{
    if (!model.calibrated())
        throw NotCalibrated("entropy needs the calibration constraints");
    const auto obs = empirical_values(model.spec(), *model.constraints());
    double s = model.log_partition();
    for (std::size_t k = 0; k < obs.size(); ++k)
        if (obs[k] != 0.0)
            s += model.params()[k] * obs[k];
    return s;
}

double entropy(const MultivariateModel& model)
{
    if (!model.constraints)
        throw NotCalibrated("entropy needs the calibration constraints");
    return -log_likelihood(*model.constraints, model.multipliers);
}

} // namespace maxent
