#include "maxent/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace maxent {

DataMatrix::DataMatrix(std::size_t n_rows, std::size_t n_cols)
    : n_rows_(n_rows), n_cols_(n_cols),
      values_(n_rows * n_cols, missing), mask_(n_rows * n_cols, 0)
{
    if (n_rows == 0 || n_cols == 0)
        throw EmptyInput("matrix must have at least one row and one column");
    row_ids.resize(n_rows);
    col_ids.resize(n_cols);
    for (std::size_t i = 0; i < n_rows; ++i)
        row_ids[i] = std::to_string(i);
    for (std::size_t t = 0; t < n_cols; ++t)
        col_ids[t] = std::to_string(t);
}

DataMatrix DataMatrix::from_rows(const std::vector<std::vector<double>>& rows)
{
    if (rows.empty() || rows.front().empty())
        throw EmptyInput("no data");
    DataMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols())
            throw ParseError("ragged row " + std::to_string(i), i);
        for (std::size_t t = 0; t < m.cols(); ++t)
            if (!std::isnan(rows[i][t]))
                m.set(i, t, rows[i][t]);
    }
    return m;
}

void DataMatrix::set(std::size_t i, std::size_t t, double v)
{
    values_[i * n_cols_ + t] = v;
    mask_[i * n_cols_ + t] = 1;
}

void DataMatrix::set_missing(std::size_t i, std::size_t t)
{
    values_[i * n_cols_ + t] = missing;
    mask_[i * n_cols_ + t] = 0;
}

std::vector<double> DataMatrix::observed_row(std::size_t i) const
{
    std::vector<double> out;
    out.reserve(n_cols_);
    for (std::size_t t = 0; t < n_cols_; ++t)
        if (observed(i, t))
            out.push_back((*this)(i, t));
    return out;
}

std::vector<double> DataMatrix::observed_col(std::size_t t) const
{
    std::vector<double> out;
    out.reserve(n_rows_);
    for (std::size_t i = 0; i < n_rows_; ++i)
        if (observed(i, t))
            out.push_back((*this)(i, t));
    return out;
}

std::size_t DataMatrix::observed_count() const
{
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1));
}

DataMatrix DataMatrix::slice_cols(std::size_t begin, std::size_t end) const
{
    if (begin >= end || end > n_cols_)
        throw ShapeMismatch("invalid column slice");
    DataMatrix out(n_rows_, end - begin);
    out.row_ids = row_ids;
    for (std::size_t t = begin; t < end; ++t)
        out.col_ids[t - begin] = col_ids[t];
    for (std::size_t i = 0; i < n_rows_; ++i)
        for (std::size_t t = begin; t < end; ++t)
            if (observed(i, t))
                out.set(i, t - begin, (*this)(i, t));
    return out;
}

DataMatrix DataMatrix::select_rows(std::span<const std::size_t> idx) const
{
    if (idx.empty())
        throw EmptyInput("no rows selected");
    DataMatrix out(idx.size(), n_cols_);
    out.col_ids = col_ids;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t i = idx[k];
        if (i >= n_rows_)
            throw ShapeMismatch("row index out of range");
        out.row_ids[k] = row_ids[i];
        for (std::size_t t = 0; t < n_cols_; ++t)
            if (observed(i, t))
                out.set(k, t, (*this)(i, t));
    }
    return out;
}

// -- CSV ingestion -----------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line, char delim)
{
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = (b == std::string::npos) ? std::string{} : c.substr(b, e - b + 1);
        if (c.size() >= 2 && c.front() == '"' && c.back() == '"')
            c = c.substr(1, c.size() - 2);
    }
    return cells;
}

bool is_missing(const std::string& cell, const CsvOptions& opts)
{
    return std::find(opts.missing_tokens.begin(), opts.missing_tokens.end(), cell)
           != opts.missing_tokens.end();
}

std::optional<double> parse_number(const std::string& cell)
{
    if (cell.empty())
        return std::nullopt;
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        return std::nullopt;
    return v;
}

bool is_label(const std::string& cell, const CsvOptions& opts)
{
    return !is_missing(cell, opts) && !parse_number(cell);
}

} // namespace

DataMatrix parse_matrix(const std::string& text, const CsvOptions& opts)
{
    std::vector<std::vector<std::string>> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        lines.push_back(split_line(line, opts.delimiter));
    }
    if (lines.empty())
        throw EmptyInput("empty input");

    bool has_header = opts.header == CsvOptions::Labels::Yes;
    const bool id_corner = lines.front()[0] == "id";
    if (opts.header == CsvOptions::Labels::Auto) {
        const auto& first = lines.front();
        for (std::size_t c = 1; c < first.size(); ++c)
            has_header = has_header || is_label(first[c], opts);
        if (first.size() == 1)
            has_header = is_label(first[0], opts);
        // corner cell written by save_matrix_csv; the column labels may be numeric
        if (id_corner)
            has_header = true;
    }
    const std::size_t data_begin = has_header ? 1 : 0;
    if (data_begin >= lines.size())
        throw EmptyInput("header without data rows");

    bool has_row_labels = opts.row_labels == CsvOptions::Labels::Yes;
    if (opts.row_labels == CsvOptions::Labels::Auto)
        has_row_labels = (has_header && id_corner) || is_label(lines[data_begin].front(), opts);

    const std::size_t offset = has_row_labels ? 1 : 0;
    const std::size_t width = lines[data_begin].size();
    if (width <= offset)
        throw EmptyInput("no data columns");
    const std::size_t n_cols = width - offset;
    const std::size_t n_rows = lines.size() - data_begin;

    DataMatrix m(n_rows, n_cols);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cells = lines[data_begin + r];
        if (cells.size() != width)
            throw ParseError("ragged row " + std::to_string(r) + ": expected " + std::to_string(width)
                                 + " cells, found " + std::to_string(cells.size()),
                             r);
        if (has_row_labels)
            m.row_ids[r] = cells[0];
        for (std::size_t t = 0; t < n_cols; ++t) {
            const auto& cell = cells[t + offset];
            if (is_missing(cell, opts))
                continue;
            auto v = parse_number(cell);
            if (!v || !std::isfinite(*v))
                throw ParseError("non-numeric cell '" + cell + "' at row " + std::to_string(r)
                                     + ", column " + std::to_string(t),
                                 r, t);
            m.set(r, t, *v);
        }
    }
    if (has_header) {
        const auto& h = lines.front();
        if (h.size() == n_cols + offset) {
            for (std::size_t t = 0; t < n_cols; ++t)
                m.col_ids[t] = h[t + offset];
        } else if (h.size() == n_cols) {
            for (std::size_t t = 0; t < n_cols; ++t)
                m.col_ids[t] = h[t];
        } else {
            throw ParseError("header has " + std::to_string(h.size()) + " cells, expected "
                                 + std::to_string(n_cols),
                             0);
        }
    }
    return m;
}

DataMatrix load_matrix(const std::filesystem::path& path, const CsvOptions& opts)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open input file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_matrix(buf.str(), opts);
}

void save_matrix_csv(const DataMatrix& m, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write file: " + path.string());
    out.precision(17);
    out << "id";
    for (const auto& c : m.col_ids)
        out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out << m.row_ids[i];
        for (std::size_t t = 0; t < m.cols(); ++t) {
            out << ',';
            if (m.observed(i, t))
                out << m(i, t);
        }
        out << '\n';
    }
}

// -- centering and quantiles -------------------------------------------------

DataMatrix center_rows(const DataMatrix& m)
{
    DataMatrix out = m;
    out.row_means.assign(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto vals = m.observed_row(i);
        if (vals.empty())
            throw DegenerateRow("row " + std::to_string(i) + " has no observations", i);
        double total = 0.0;
        // two passes: the residual mean of the first pass is removed as well
        for (int pass = 0; pass < 2; ++pass) {
            double s = 0.0;
            for (double v : vals)
                s += v;
            const double mean = s / static_cast<double>(vals.size());
            for (double& v : vals)
                v -= mean;
            total += mean;
        }
        std::size_t k = 0;
        for (std::size_t t = 0; t < m.cols(); ++t)
            if (m.observed(i, t))
                out.set(i, t, vals[k++]);
        out.row_means[i] = total + (m.row_means.empty() ? 0.0 : m.row_means[i]);
    }
    return out;
}

QuantileGrid empirical_quantiles(std::span<const double> series, std::span<const double> xi,
                                 bool unbounded)
{
    if (series.size() < 2)
        throw InsufficientSample("quantiles need at least two observations");
    if (xi.empty())
        throw InvalidGrid("empty probability vector");
    for (std::size_t k = 0; k < xi.size(); ++k) {
        if (!(xi[k] >= 0.0 && xi[k] <= 1.0))
            throw InvalidGrid("probabilities must lie in [0, 1]");
        if (k > 0 && !(xi[k] > xi[k - 1]))
            throw InvalidGrid("probabilities must be strictly increasing");
    }
    std::vector<double> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end());
    const double n1 = static_cast<double>(sorted.size() - 1);

    QuantileGrid g;
    g.xi.assign(xi.begin(), xi.end());
    for (double p : xi) {
        if (unbounded && p == 0.0) {
            g.q.push_back(-std::numeric_limits<double>::infinity());
            continue;
        }
        if (unbounded && p == 1.0) {
            g.q.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        const double h = n1 * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const double frac = h - std::floor(h);
        double q = sorted[lo];
        if (lo + 1 < sorted.size() && frac > 0.0)
            q += frac * (sorted[lo + 1] - sorted[lo]);
        g.q.push_back(q);
    }
    for (std::size_t k = 1; k < g.q.size(); ++k)
        if (std::isfinite(g.q[k]) && g.q[k] == g.q[k - 1])
            g.degenerate = true;
    if (sorted.front() == sorted.back())
        g.degenerate = true;
    return g;
}

QuantileGrid make_grid(std::vector<double> q)
{
    if (q.size() < 2)
        throw InvalidGrid("a grid needs at least two points");
    QuantileGrid g;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (std::isnan(q[k]))
            throw InvalidGrid("NaN grid point");
        if (k > 0 && q[k] < q[k - 1])
            throw InvalidGrid("grid points must be non-decreasing");
        if (k > 0 && q[k] == q[k - 1])
            g.degenerate = true;
        g.xi.push_back(static_cast<double>(k) / static_cast<double>(q.size() - 1));
    }
    g.q = std::move(q);
    return g;
}

// -- margins -----------------------------------------------------------------

MarginConstraints MarginConstraints::zeros(std::size_t n, std::size_t t)
{
    MarginConstraints c;
    for (auto* v : {&c.n_plus_row, &c.n_minus_row, &c.s_plus_row, &c.s_minus_row, &c.n_obs_row})
        v->assign(n, 0.0);
    for (auto* v : {&c.m_plus_col, &c.m_minus_col, &c.r_plus_col, &c.r_minus_col, &c.m_obs_col})
        v->assign(t, 0.0);
    return c;
}

MarginConstraints compute_margins(const DataMatrix& m)
{
    auto c = MarginConstraints::zeros(m.rows(), m.cols());
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t t = 0; t < m.cols(); ++t) {
            if (!m.observed(i, t))
                continue;
            const double v = m(i, t);
            c.n_obs_row[i] += 1;
            c.m_obs_col[t] += 1;
            if (v >= 0.0) {
                zeros += (v == 0.0);
                c.n_plus_row[i] += 1;
                c.m_plus_col[t] += 1;
                c.s_plus_row[i] += v;
                c.r_plus_col[t] += v;
            } else {
                c.n_minus_row[i] += 1;
                c.m_minus_col[t] += 1;
                c.s_minus_row[i] -= v;
                c.r_minus_col[t] -= v;
            }
        }
    }
    if (zeros > 0)
        spdlog::warn("{} exact zero value(s) classified as positive", zeros);
    if (m.row_means.empty()) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double n = c.n_obs_row[i];
            if (n > 0 && std::abs(c.s_plus_row[i] - c.s_minus_row[i]) / n
                             > 1e-8 * (1.0 + (c.s_plus_row[i] + c.s_minus_row[i]) / n)) {
                spdlog::debug("compute_margins: input rows are not centered");
                break;
            }
        }
    }
    return c;
}

double margin_totals_mismatch(const MarginConstraints& c)
{
    auto sum = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s;
    };
    double worst = 0.0;
    auto check = [&](const std::vector<double>& a, const std::vector<double>& b) {
        const double sa = sum(a), sb = sum(b);
        worst = std::max(worst, std::abs(sa - sb) / std::max(1.0, std::abs(sa)));
    };
    check(c.n_plus_row, c.m_plus_col);
    check(c.n_minus_row, c.m_minus_col);
    check(c.s_plus_row, c.r_plus_col);
    check(c.s_minus_row, c.r_minus_col);
    check(c.n_obs_row, c.m_obs_col);
    return worst;
}

} // namespace maxent
