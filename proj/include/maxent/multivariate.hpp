#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "maxent/core.hpp"

namespace maxent {

/// WithMissing: each cell is positive, negative or missing.
/// NoMissing: each cell is positive or negative; the beta families drop out
/// because A- = 1 - A+.
enum class Variant { WithMissing, NoMissing };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

enum class Family { Alpha = 0, Beta = 1, Gamma = 2, Sigma = 3 };
enum class Axis { Row = 0, Col = 1 };

/// Which multiplier families are constrained on which axis.
struct ConstraintSpec
{
    Variant variant = Variant::WithMissing;
    /// active[family][axis]
    bool active[4][2] = {{true, true}, {true, true}, {true, true}, {true, true}};

    bool on(Family f, Axis a) const
    {
        return active[static_cast<int>(f)][static_cast<int>(a)];
    }
    void set(Family f, Axis a, bool v) { active[static_cast<int>(f)][static_cast<int>(a)] = v; }

    /// Number of free multipliers before gauge fixing and degeneracy drops.
    std::size_t parameter_count(std::size_t n, std::size_t t) const;

    /// All four families on both axes, missing cells allowed.
    static ConstraintSpec with_missing();
    /// Counts and signed sums on both axes, no missing cells.
    static ConstraintSpec no_missing();
    /// Only the positive and negative cumulative sums on both axes.
    static ConstraintSpec sums_only();
    /// "with_missing", "no_missing" (alias M3), "sums_only" (alias M2), or
    /// "custom:<variant>:<row families>:<col families>" with families drawn
    /// from "abgs", e.g. "custom:with_missing:ags:gs". Dashes read as underscores.
    static ConstraintSpec parse(const std::string& s);
    std::string name() const;
};

/// Per-row or per-column states that are switched off because the data can
/// never populate them (e.g. a row without any negative value).
struct StateMask
{
    std::vector<unsigned char> row; ///< bit 0 plus, bit 1 minus, bit 2 missing
    std::vector<unsigned char> col;

    static constexpr unsigned char plus = 1, minus = 2, missing = 4, all = 7;
};

struct MultiplierSet
{
    Variant variant = Variant::WithMissing;
    std::vector<double> alpha_row, beta_row, gamma_row, sigma_row;
    std::vector<double> alpha_col, beta_col, gamma_col, sigma_col;
    /// Empty means every state is enabled (except "missing" under NoMissing).
    StateMask mask;

    static MultiplierSet zeros(std::size_t n, std::size_t t, Variant v);

    std::size_t rows() const { return alpha_row.size(); }
    std::size_t cols() const { return alpha_col.size(); }

    std::vector<double>& family(Family f, Axis a);
    const std::vector<double>& family(Family f, Axis a) const;

    /// Enabled states of cell (i, t) as StateMask bits.
    unsigned char states(std::size_t i, std::size_t t) const;

    double a(std::size_t i, std::size_t t) const { return alpha_row[i] + alpha_col[t]; }
    double b(std::size_t i, std::size_t t) const
    {
        return variant == Variant::NoMissing ? 0.0 : beta_row[i] + beta_col[t];
    }
    double g(std::size_t i, std::size_t t) const { return gamma_row[i] + gamma_col[t]; }
    double s(std::size_t i, std::size_t t) const { return sigma_row[i] + sigma_col[t]; }

    /// Zero each family's first column multiplier by shifting it into the rows.
    /// Families active on one axis only are left untouched.
    void canonicalize(const ConstraintSpec& spec);
};

/// Distribution of a single cell: positive values ~ Exp(lambda_plus) with
/// probability p_plus, negative values ~ -Exp(lambda_minus) with p_minus.
struct CellMarginal
{
    double p_plus = 0.0, p_minus = 0.0, p_missing = 0.0;
    double lambda_plus = 0.0, lambda_minus = 0.0;

    double p_observed() const { return p_plus + p_minus; }
    /// Signed-value density; integrates to p_observed.
    double density(double x) const;
    double mean() const;
    double variance() const;
    /// CDF of the value conditional on the cell being observed.
    double observed_cdf(double x) const;
    double observed_quantile(double p) const;
};

/// ln Z_it; throws DivergentPartition(i, t) for a nonpositive rate on an
/// enabled state.
double log_cell_partition(const MultiplierSet& ms, std::size_t i, std::size_t t);
double cell_partition(const MultiplierSet& ms, std::size_t i, std::size_t t);
CellMarginal marginal(const MultiplierSet& ms, std::size_t i, std::size_t t);

double log_partition(const MultiplierSet& ms);

/// ln P(W) for a centered data matrix. Exact zeros count as positive.
double log_likelihood(const DataMatrix& data, const MultiplierSet& ms);
/// Same quantity from sufficient statistics.
double log_likelihood(const MarginConstraints& c, const MultiplierSet& ms);

MarginConstraints expected_constraints(const MultiplierSet& ms);

struct PhysicalQuantities
{
    double temperature = 0.0, energy = 0.0, mu1 = 0.0, mu2 = 0.0;
};

struct OutOfPhysicalRegion
{
    std::size_t row = 0, col = 0;
    std::string reason;
};

std::variant<PhysicalQuantities, OutOfPhysicalRegion>
physical_quantities(const MultiplierSet& ms, std::size_t i, std::size_t t);

/// Z_it rebuilt from the physical quantities; the "1 +" term is dropped under
/// NoMissing.
double reconstruct_partition(const PhysicalQuantities& q, Variant v);

/// One ensemble draw. Row i uses its own stream so output does not depend on
/// the thread count.
DataMatrix sample_matrix(const MultiplierSet& ms, std::uint64_t seed);

/// A calibrated (or hand-built) multivariate ensemble.
struct MultivariateModel
{
    ConstraintSpec spec;
    MultiplierSet multipliers;
    std::optional<MarginConstraints> constraints;
    std::vector<std::string> row_ids, col_ids;
    std::vector<double> row_means;
    /// Human-readable list of constraints dropped as degenerate.
    std::vector<std::string> dropped;
};

} // namespace maxent
