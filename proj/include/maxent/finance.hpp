#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maxent/calibration.hpp"
#include "maxent/core.hpp"
#include "maxent/multivariate.hpp"

namespace maxent {

/// W_it - <W_it> with the ensemble mean p+/l+ - p-/l- of every cell; missing
/// cells stay missing.
DataMatrix detrend(const DataMatrix& data, const MultivariateModel& model);

// -- portfolio selection -------------------------------------------------------

struct PortfolioSolution
{
    std::vector<double> weights;
    double target_return = 0.0;
    double in_sample_variance = 0.0; ///< pi' C pi
    std::size_t window_start = 0, window_end = 0;
};

/// Minimum pi' C pi subject to sum pi = 1 and sum pi mu_i = mu. Equal mu_i
/// give the global minimum-variance portfolio.
PortfolioSolution markowitz_weights(const Eigen::MatrixXd& C, std::span<const double> mu_i,
                                    double mu);

/// Mean-reversion expected returns: minus the last observed return of each row.
std::vector<double> mean_reversion_returns(const DataMatrix& window);

/// Weights from the correlation matrix of a complete window. The target
/// defaults to the average expected return.
PortfolioSolution markowitz_weights(const DataMatrix& window, std::optional<double> target = std::nullopt);

struct OosOptions
{
    std::vector<std::vector<std::size_t>> portfolios; ///< row indices per portfolio
    std::vector<double> q_ratios = {1.0 / 3.0, 0.5, 2.0 / 3.0};
    std::size_t horizon = 30;
    bool detrend = true;
    ConstraintSpec spec = ConstraintSpec::no_missing();
    CalibrationOptions calibration;
};

/// Per-window results for one (portfolio, q) pair and one weighting scheme.
struct OosSeries
{
    std::size_t portfolio = 0;
    double q = 0.0;
    std::size_t in_sample = 0;
    bool detrended = false;
    std::vector<std::size_t> window_starts;
    std::vector<double> variance;
    std::vector<std::optional<double>> sharpe; ///< mean / variance, null when the variance is 0
    std::size_t unconverged = 0;
    /// windows where the weights could not be computed and equal weights were used
    std::size_t fallbacks = 0;

    double mean_variance() const;
    double variance_quantile(double p) const;
    std::optional<double> mean_sharpe() const;
    std::optional<double> sharpe_quantile(double p) const;
};

/// Rolling non-overlapping evaluation: weights on T = N / q in-sample days,
/// realized portfolio variance over the next `horizon` raw returns. Raw
/// weights are always evaluated; detrended ones when requested. Detrending
/// calibrates one ensemble on all rows of each in-sample window.
std::vector<OosSeries> out_of_sample_eval(const DataMatrix& returns, const OosOptions& opts);

/// Random disjoint-free portfolio draws: `count` portfolios per size.
std::vector<std::vector<std::size_t>> random_portfolios(std::size_t n_stocks,
                                                        std::span<const std::size_t> sizes,
                                                        std::size_t count, std::uint64_t seed);

/// Continuous power-law tail fit of |x| with the KS-minimizing lower cutoff.
/// alpha is the density exponent, p(x) ~ x^-alpha.
struct PowerLawFit
{
    double alpha = 0.0;
    double xmin = 0.0;
    double ks = 0.0;
    std::size_t n_tail = 0;
};

PowerLawFit power_law_fit(std::span<const double> values, std::size_t min_tail = 20);

// -- value at risk -------------------------------------------------------------

/// R[k][j] = r_{L1 - k + j} (1-based r), k < L1, j <= L2, with the last slot
/// of the first row holding epsilon. Needs L1 + L2 - 1 returns.
DataMatrix circulant_embed(std::span<const double> r, std::size_t L1, std::size_t L2,
                           double epsilon);

enum class VarModel { M1, M2, M3 };

std::string to_string(VarModel m);
VarModel parse_var_model(const std::string& s);

struct VarModelSpec
{
    VarModel kind = VarModel::M3;
    std::size_t window = 150;
    std::size_t L1 = 25, L2 = 126;
    /// confidence level; the estimate is the (1 - level) return quantile
    double level = 0.95;
    CalibrationOptions calibration;

    void validate() const;
    /// Multipliers the model carries (before degeneracy drops).
    std::size_t parameter_count() const;
};

struct VarEstimate
{
    double value = 0.0;
    bool converged = true;
    /// warm starts for the next window (M2/M3)
    std::optional<MultiplierSet> plus_state, minus_state;
};

/// VaR of one window as a signed return quantile (negative for losses).
/// Throws DegenerateWindow when every return is equal.
VarEstimate var_estimate(std::span<const double> window, const VarModelSpec& spec,
                         const MultiplierSet* warm_plus = nullptr,
                         const MultiplierSet* warm_minus = nullptr);

struct RollingVar
{
    std::vector<double> var;
    std::vector<double> realized;
    std::vector<bool> exceptions;
    std::size_t unconverged = 0;
};

/// Windows start at t0 = 0 .. T - window - 2 and are scored on the return
/// right after the window.
RollingVar rolling_var(std::span<const double> returns, const VarModelSpec& spec);

// -- backtests -----------------------------------------------------------------

enum class Zone { Green, Yellow, Red };
std::string to_string(Zone z);

struct TestOutcome
{
    std::string name;
    std::optional<double> statistic;
    std::optional<double> p_value;
    bool pass = true;
    bool vacuous = false;
    std::optional<Zone> zone;
};

struct BacktestReport
{
    std::vector<TestOutcome> tests;
    std::size_t exception_count = 0;
    std::size_t n_obs = 0;
    double level = 0.95;
    double significance = 0.05;

    std::size_t passed() const;
    const TestOutcome& at(const std::string& name) const;
};

/// p is the exception probability 1 - level throughout.
TestOutcome traffic_light_test(const std::vector<bool>& exc, double p);
TestOutcome binomial_test(const std::vector<bool>& exc, double p, double significance);
TestOutcome pof_test(const std::vector<bool>& exc, double p, double significance);
TestOutcome tuff_test(const std::vector<bool>& exc, double p, double significance);
TestOutcome cci_test(const std::vector<bool>& exc, double significance);
TestOutcome cc_test(const std::vector<bool>& exc, double p, double significance);
TestOutcome tbf_test(const std::vector<bool>& exc, double p, double significance);
TestOutcome tbfi_test(const std::vector<bool>& exc, double p, double significance);

BacktestReport backtest_suite(const std::vector<bool>& exceptions, double level,
                              double significance = 0.05);

} // namespace maxent
