#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maxent/error.hpp"

namespace maxent {

/// N x T matrix of observations. Rows are variables, columns are sampling
/// times. Unobserved cells carry mask = false and the sentinel NaN value.
class DataMatrix
{
  public:
    static constexpr double missing = std::numeric_limits<double>::quiet_NaN();

    DataMatrix() = default;
    DataMatrix(std::size_t n_rows, std::size_t n_cols);

    /// Build from dense row-major values; NaN entries are taken as missing.
    static DataMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return n_rows_; }
    std::size_t cols() const { return n_cols_; }

    bool observed(std::size_t i, std::size_t t) const { return mask_[i * n_cols_ + t] != 0; }
    double operator()(std::size_t i, std::size_t t) const { return values_[i * n_cols_ + t]; }

    void set(std::size_t i, std::size_t t, double v);
    void set_missing(std::size_t i, std::size_t t);

    std::span<const double> row(std::size_t i) const
    {
        return {values_.data() + i * n_cols_, n_cols_};
    }
    /// Observed entries of row i, in column order.
    std::vector<double> observed_row(std::size_t i) const;
    std::vector<double> observed_col(std::size_t t) const;

    std::size_t observed_count() const;
    bool complete() const { return observed_count() == n_rows_ * n_cols_; }

    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;

    /// Means removed by center_rows, empty if the matrix was never centered.
    std::vector<double> row_means;

    /// Column sub-range [begin, end) keeping labels; row_means are dropped.
    DataMatrix slice_cols(std::size_t begin, std::size_t end) const;
    DataMatrix select_rows(std::span<const std::size_t> idx) const;

  private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<double> values_;
    std::vector<unsigned char> mask_;
};

struct CsvOptions
{
    enum class Labels { Auto, Yes, No };

    char delimiter = ',';
    std::vector<std::string> missing_tokens = {"", "NaN", "nan", "NA"};
    Labels header = Labels::Auto;
    Labels row_labels = Labels::Auto;
};

DataMatrix load_matrix(const std::filesystem::path& path, const CsvOptions& opts = {});
DataMatrix parse_matrix(const std::string& text, const CsvOptions& opts = {});
void save_matrix_csv(const DataMatrix& m, const std::filesystem::path& path);

/// Subtract each row's observed mean. Throws DegenerateRow for a row with no
/// observations. The removed means are stored in the result's row_means.
DataMatrix center_rows(const DataMatrix& m);

struct QuantileGrid
{
    std::vector<double> xi;
    std::vector<double> q;
    /// true when two adjacent finite grid points coincide (zero-width bin)
    bool degenerate = false;

    std::size_t bins() const { return q.size() - 1; }
};

/// Order-statistic quantiles with linear interpolation, h = (n-1) xi.
/// With unbounded = true, xi == 0 maps to -inf and xi == 1 to +inf.
QuantileGrid empirical_quantiles(std::span<const double> series,
                                 std::span<const double> xi,
                                 bool unbounded = false);

/// Grid built from explicit points, validated for monotonicity.
QuantileGrid make_grid(std::vector<double> q);

/// Per-row and per-column sign counts and cumulative magnitudes of a
/// (centered) matrix. Exact zeros count as positive.
struct MarginConstraints
{
    std::vector<double> n_plus_row, n_minus_row, s_plus_row, s_minus_row, n_obs_row;
    std::vector<double> m_plus_col, m_minus_col, r_plus_col, r_minus_col, m_obs_col;

    std::size_t rows() const { return n_plus_row.size(); }
    std::size_t cols() const { return m_plus_col.size(); }

    static MarginConstraints zeros(std::size_t n, std::size_t t);
};

MarginConstraints compute_margins(const DataMatrix& m);

/// Largest violation of the row/column total identities, relative to the totals.
double margin_totals_mismatch(const MarginConstraints& c);

} // namespace maxent
