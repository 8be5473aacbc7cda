// maxent command-line front end. Every command writes its artifacts plus a
// manifest.json into the output directory (--out, $MAXENT_OUTPUT_DIR, or ".").
//
// Exit codes: 0 ok, 1 bad input or I/O, 2 calibration did not converge,
// 3 infeasible or degenerate problem, 64 usage error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "maxent/calibration.hpp"
#include "maxent/core.hpp"
#include "maxent/finance.hpp"
#include "maxent/multivariate.hpp"
#include "maxent/numeric.hpp"
#include "maxent/random.hpp"
#include "maxent/serialization.hpp"
#include "maxent/statistics.hpp"
#include "maxent/synthetic.hpp"
#include "maxent/univariate.hpp"

#include "run_context.hpp"

using namespace maxent;
using namespace maxent::cli;
namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_unconverged = 2;
constexpr int exit_infeasible = 3;
constexpr int exit_usage = 64;

struct Global
{
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string log_level = "info";
};

struct CalibFlags
{
    double tol = 1e-6;
    std::size_t max_iter = 10000;
    std::string method = "newton";
    double barrier = 0.0;

    CalibrationOptions options(std::uint64_t seed) const
    {
        CalibrationOptions o;
        o.tol_rel = tol;
        o.max_iter = max_iter;
        o.method = parse_method(method);
        o.barrier_strength = barrier;
        o.seed = seed;
        return o;
    }
};

void add_calib_flags(CLI::App* cmd, CalibFlags& f)
{
    cmd->add_option("--tol", f.tol, "relative constraint tolerance")->capture_default_str();
    cmd->add_option("--max-iter", f.max_iter, "iteration cap")->capture_default_str();
    cmd->add_option("--method", f.method, "newton, gradient or fixed_point")->capture_default_str();
    cmd->add_option("--barrier", f.barrier, "initial barrier strength, 0 = off")->capture_default_str();
}

DataMatrix read_matrix(RunContext& run, const std::string& path)
{
    if (!fs::exists(path))
        throw Error("input file not found: " + path);
    DataMatrix m = load_matrix(path);
    run.add_input(path);
    spdlog::info("read {} x {} matrix from {}", m.rows(), m.cols(), path);
    return m;
}

/// Center with the model's stored row means when they fit, else by row.
DataMatrix center_for(const DataMatrix& data, const MultivariateModel& model)
{
    if (model.row_means.size() != data.rows())
        return center_rows(data);
    DataMatrix out = data;
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t t = 0; t < data.cols(); ++t)
            if (data.observed(i, t))
                out.set(i, t, data(i, t) - model.row_means[i]);
    out.row_means = model.row_means;
    return out;
}

MultivariateModel read_multivariate(RunContext& run, const std::string& path)
{
    if (!fs::exists(path))
        throw Error("model file not found: " + path);
    run.add_input(path);
    AnyModel any = load_model(path);
    if (!std::holds_alternative<MultivariateModel>(any))
        throw InvalidArgument("command needs a multivariate model: " + path);
    return std::get<MultivariateModel>(std::move(any));
}

/// Use the given model, or calibrate one on the data.
MultivariateModel model_or_calibrate(RunContext& run, const std::string& model_path,
                                     const DataMatrix& data, const std::string& variant,
                                     const CalibFlags& cf, bool& unconverged)
{
    if (!model_path.empty())
        return read_multivariate(run, model_path);
    auto [model, res] = calibrate_matrix(center_rows(data), ConstraintSpec::parse(variant),
                                         cf.options(run.seed()));
    spdlog::info("calibrated {} in {} iterations, max rel err {:.3g}", model.spec.name(),
                 res.iterations, res.max_rel_constraint_err);
    if (!res.converged) {
        spdlog::warn("calibration did not converge");
        unconverged = true;
    }
    run.write_json("calibration.json", to_json(res));
    return model;
}

/// One series out of a matrix: the only row or column, or a named/indexed row.
std::vector<double> pick_series(const DataMatrix& m, const std::string& row)
{
    if (!row.empty()) {
        for (std::size_t i = 0; i < m.rows(); ++i)
            if (m.row_ids[i] == row)
                return m.observed_row(i);
        char* end = nullptr;
        const unsigned long i = std::strtoul(row.c_str(), &end, 10);
        if (*end == '\0' && i < m.rows())
            return m.observed_row(i);
        throw InvalidArgument("no row '" + row + "' in input");
    }
    if (m.rows() == 1)
        return m.observed_row(0);
    if (m.cols() == 1)
        return m.observed_col(0);
    throw InvalidArgument("input has several rows and columns; pick one with --row");
}

std::vector<double> parse_xi(const std::vector<double>& xi)
{
    if (xi.size() < 2)
        throw InvalidArgument("--xi needs at least two probabilities");
    return xi;
}

// -- calibrate ----------------------------------------------------------------

struct CalibrateCmd
{
    std::string input;
    std::string variant = "with_missing";
    std::string family;
    std::string row;
    std::vector<double> xi = {0.0, 0.25, 0.5, 0.75, 1.0};
    bool no_center = false;
    CalibFlags cf;
};

int run_calibrate(RunContext& run, const CalibrateCmd& c)
{
    DataMatrix data = read_matrix(run, c.input);

    if (!c.family.empty()) {
        std::vector<double> series = pick_series(data, c.row);
        UnivariateCalibration uc = calibrate_series(series, parse_xi(c.xi),
                                                    parse_family(c.family), c.cf.options(run.seed()));
        run.write_json("model.json", to_json(uc.model));
        run.write_json("calibration.json", to_json(uc));
        spdlog::info("{}: converged {} after {} iterations, max rel err {:.3g}",
                     to_string(uc.model.spec().family), uc.converged, uc.iterations,
                     uc.max_rel_constraint_err);
        return uc.converged ? exit_ok : exit_unconverged;
    }

    const DataMatrix centered = c.no_center ? data : center_rows(data);
    auto [model, res] = calibrate_matrix(centered, ConstraintSpec::parse(c.variant),
                                         c.cf.options(run.seed()));
    run.write_json("model.json", to_json(model));
    run.write_json("calibration.json", to_json(res));

    CsvWriter csv(run.output("residuals.csv"), {"constraint", "empirical", "expected", "rel_err", "dropped"});
    for (const auto& r : res.residuals) {
        csv << r.name << r.empirical << r.expected << r.rel_err
            << std::string(r.dropped ? "true" : "false");
        csv.end_row();
    }
    CsvWriter ll(run.output("log_likelihood_trace.csv"), {"iteration", "log_likelihood"});
    for (std::size_t k = 0; k < res.log_likelihood_trace.size(); ++k) {
        ll << k << res.log_likelihood_trace[k];
        ll.end_row();
    }

    spdlog::info("{}: {} parameters, converged {} after {} iterations, max rel err {:.3g}",
                 model.spec.name(), model.spec.parameter_count(data.rows(), data.cols()),
                 res.converged, res.iterations, res.max_rel_constraint_err);
    for (const auto& d : res.dropped_constraints)
        spdlog::info("dropped: {}", d);
    return res.converged ? exit_ok : exit_unconverged;
}

// -- sample -------------------------------------------------------------------

struct SampleCmd
{
    std::string model;
    std::size_t n = 1;
};

int run_sample(RunContext& run, const SampleCmd& c)
{
    if (!fs::exists(c.model))
        throw Error("model file not found: " + c.model);
    run.add_input(c.model);
    AnyModel any = load_model(c.model);

    if (auto* uni = std::get_if<UnivariateModel>(&any)) {
        const std::vector<double> x = uni->sample(c.n, run.seed());
        CsvWriter csv(run.output("samples.csv"), {"index", "value"});
        for (std::size_t k = 0; k < x.size(); ++k) {
            csv << k << x[k];
            csv.end_row();
        }
        spdlog::info("wrote {} univariate draws", x.size());
        return exit_ok;
    }

    const auto& mv = std::get<MultivariateModel>(any);
    CsvWriter csv(run.output("samples.csv"), {"replicate", "row_id", "col_id", "value"});
    for (std::size_t r = 0; r < c.n; ++r) {
        const DataMatrix m = sample_matrix(mv.multipliers, derive_seed(run.seed(), r));
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t t = 0; t < m.cols(); ++t) {
                csv << r << (i < mv.row_ids.size() ? mv.row_ids[i] : std::to_string(i))
                    << (t < mv.col_ids.size() ? mv.col_ids[t] : std::to_string(t))
                    << (m.observed(i, t) ? m(i, t) : DataMatrix::missing);
                csv.end_row();
            }
    }
    spdlog::info("wrote {} sampled matrices", c.n);
    return exit_ok;
}

// -- validate -----------------------------------------------------------------

struct ValidateCmd
{
    std::string model;
    std::string input;
    std::string row;
    std::size_t n_rep = 1000;
    std::size_t ks_rep = 100;
    double coverage = 0.95;
    double significance = 0.01;
    std::vector<std::string> moments = {"mean", "variance", "skewness", "kurtosis"};
};

int validate_univariate(RunContext& run, const ValidateCmd& c, const UnivariateModel& model,
                        const DataMatrix& data)
{
    const std::vector<double> series = pick_series(data, c.row);
    const double lo = 0.5 * (1.0 - c.coverage), hi = 1.0 - lo;

    Json report;
    CsvWriter csv(run.output("moments.csv"), {"moment", "empirical", "lower", "upper", "inside"});
    std::size_t inside = 0;
    for (std::size_t k = 0; k < c.moments.size(); ++k) {
        const Moment m = parse_moment(c.moments[k]);
        std::vector<double> reps;
        for (std::size_t r = 0; r < c.n_rep; ++r) {
            const auto x = model.sample(series.size(), derive_seed(run.seed(), k * c.n_rep + r));
            const double v = sample_moment(x, m);
            if (!std::isnan(v))
                reps.push_back(v);
        }
        std::sort(reps.begin(), reps.end());
        const double emp = sample_moment(series, m);
        const double a = reps.empty() ? NAN : numeric::sorted_quantile(reps, lo);
        const double b = reps.empty() ? NAN : numeric::sorted_quantile(reps, hi);
        const bool in = emp >= a && emp <= b;
        inside += in;
        csv << to_string(m) << emp << a << b << std::string(in ? "true" : "false");
        csv.end_row();
    }
    const KsResult ks = ks_one_sample(series, [&](double x) { return model.cdf(x); }, c.significance);
    report["moments_inside"] = inside;
    report["moments_tested"] = c.moments.size();
    report["ks"] = to_json(ks);
    report["coverage"] = c.coverage;
    run.write_json("validate.json", report);
    spdlog::info("{}/{} moments inside the {} band, KS p = {:.3g}", inside, c.moments.size(),
                 c.coverage, ks.p_value);
    return exit_ok;
}

int run_validate(RunContext& run, const ValidateCmd& c)
{
    const DataMatrix data = read_matrix(run, c.input);
    if (!fs::exists(c.model))
        throw Error("model file not found: " + c.model);
    run.add_input(c.model);
    AnyModel any = load_model(c.model);
    if (auto* uni = std::get_if<UnivariateModel>(&any))
        return validate_univariate(run, c, *uni, data);

    const auto& model = std::get<MultivariateModel>(any);
    const DataMatrix centered = center_for(data, model);
    if (centered.rows() != model.multipliers.rows() || centered.cols() != model.multipliers.cols())
        throw ShapeMismatch("input shape does not match the model");

    const double lo = 0.5 * (1.0 - c.coverage), hi = 1.0 - lo;
    Json report;
    report["coverage"] = c.coverage;
    report["n_rep"] = c.n_rep;
    Json moments = Json::array();

    CsvWriter csv(run.output("moments.csv"),
                  {"moment", "axis", "target", "empirical", "lower", "upper", "analytic"});
    std::uint64_t stream = 0;
    for (const auto& name : c.moments) {
        const Moment m = parse_moment(name);
        for (StatAxis axis : {StatAxis::Row, StatAxis::Column}) {
            const auto emp = empirical_moments(centered, m, axis);
            const auto dist = moment_distribution(model, m, axis, c.n_rep,
                                                  derive_seed(run.seed(), stream++));
            const double frac = dist.band_fraction(emp, lo, hi);
            for (std::size_t k = 0; k < dist.targets(); ++k) {
                csv << to_string(m) << to_string(axis) << k << emp[k] << dist.quantile(k, lo)
                    << dist.quantile(k, hi)
                    << (dist.analytic.empty() ? NAN : dist.analytic[k]);
                csv.end_row();
            }
            moments.push_back({{"moment", to_string(m)}, {"axis", to_string(axis)},
                               {"compatible_fraction", number(frac)}});
            spdlog::info("{} by {}: {:.1f}% inside the {} band", to_string(m), to_string(axis),
                         100.0 * frac, c.coverage);
        }
    }
    report["moments"] = moments;

    Json ks = Json::object();
    CsvWriter kcsv(run.output("ks.csv"), {"axis", "target", "statistic", "p_value", "reject", "valid"});
    for (StatAxis axis : {StatAxis::Row, StatAxis::Column}) {
        const auto res = ks_compare(centered, model, axis, c.ks_rep,
                                    derive_seed(run.seed(), stream++), c.significance);
        std::size_t valid = 0, accepted = 0;
        for (std::size_t k = 0; k < res.size(); ++k) {
            valid += res[k].valid;
            accepted += res[k].valid && !res[k].reject;
            kcsv << to_string(axis) << k << res[k].statistic << res[k].p_value
                 << std::string(res[k].reject ? "true" : "false")
                 << std::string(res[k].valid ? "true" : "false");
            kcsv.end_row();
        }
        const double frac = valid ? static_cast<double>(accepted) / valid : NAN;
        ks[to_string(axis)] = {{"tested", valid}, {"compatible_fraction", number(frac)}};
        spdlog::info("KS by {}: {}/{} compatible at {}", to_string(axis), accepted, valid,
                     c.significance);
    }
    report["ks"] = ks;
    report["significance"] = c.significance;
    run.write_json("validate.json", report);
    return exit_ok;
}

// -- anomaly ------------------------------------------------------------------

struct AnomalyCmd
{
    std::string input;
    std::string model;
    std::string variant = "with_missing";
    double coverage = 0.95;
    double fcr_q = 0.05;
    CalibFlags cf;
};

int run_anomaly(RunContext& run, const AnomalyCmd& c)
{
    const DataMatrix data = read_matrix(run, c.input);
    bool unconverged = false;
    const MultivariateModel model = model_or_calibrate(run, c.model, data, c.variant, c.cf, unconverged);
    const DataMatrix centered = center_for(data, model);

    const AnomalyReport rep = anomaly_scan(centered, model, c.coverage, c.fcr_q);
    run.write_json("anomaly.json", to_json(rep));
    CsvWriter csv(run.output("anomalies.csv"), {"row_id", "col_id", "value", "lower", "upper"});
    for (const auto& f : rep.flags) {
        csv << data.row_ids[f.row] << data.col_ids[f.col] << f.value << f.lower << f.upper;
        csv.end_row();
    }
    spdlog::info("{} of {} observed cells flagged ({} selected, adjusted level {:.6g})",
                 rep.flags.size(), rep.observed, rep.selected, rep.adjusted_level);
    return unconverged ? exit_unconverged : exit_ok;
}

// -- spectrum -----------------------------------------------------------------

struct SpectrumCmd
{
    std::string input;
    std::string model;
    std::string variant = "with_missing";
    std::size_t n_rep = 100;
    std::size_t grid = 256;
    CalibFlags cf;
};

int run_spectrum(RunContext& run, const SpectrumCmd& c)
{
    const DataMatrix data = read_matrix(run, c.input);
    bool unconverged = false;
    const MultivariateModel model = model_or_calibrate(run, c.model, data, c.variant, c.cf, unconverged);

    const Spectrum emp = correlation_spectrum(data);
    const EnsembleSpectrum ens = ensemble_spectrum(model, c.n_rep, run.seed(), c.grid);
    const double q = static_cast<double>(emp.rows_used.size()) / data.cols();
    const auto emp_density = gaussian_kde(emp.eigenvalues, ens.grid,
                                          silverman_bandwidth(emp.eigenvalues));

    CsvWriter csv(run.output("spectrum.csv"), {"lambda", "empirical", "ensemble", "marchenko_pastur"});
    for (std::size_t k = 0; k < ens.grid.size(); ++k) {
        csv << ens.grid[k] << emp_density[k] << ens.density[k]
            << (q < 1.0 ? mp_density(ens.grid[k], q) : NAN);
        csv.end_row();
    }
    CsvWriter ev(run.output("eigenvalues.csv"), {"rank", "eigenvalue"});
    for (std::size_t k = 0; k < emp.eigenvalues.size(); ++k) {
        ev << k << emp.eigenvalues[k];
        ev.end_row();
    }
    CsvWriter lm(run.output("lambda_max.csv"), {"replicate", "lambda_max"});
    for (std::size_t k = 0; k < ens.lambda_max.size(); ++k) {
        lm << k << ens.lambda_max[k];
        lm.end_row();
    }

    Json rep;
    rep["q"] = q;
    rep["rows_used"] = emp.rows_used.size();
    rep["empirical_lambda_max"] = number(emp.eigenvalues.front());
    if (q < 1.0) {
        const auto [lminus, lplus] = mp_edges(q);
        rep["mp_edges"] = {lminus, lplus};
        const auto above = std::count_if(ens.lambda_max.begin(), ens.lambda_max.end(),
                                         [&](double l) { return l > lplus; });
        rep["ensemble_lambda_max_above_mp"] =
            ens.lambda_max.empty() ? Json(nullptr) : Json(double(above) / ens.lambda_max.size());
    }
    rep["replicates"] = ens.lambda_max.size();
    rep["failures"] = ens.failures;
    rep["bandwidth"] = ens.bandwidth;
    run.write_json("spectrum.json", rep);
    spdlog::info("empirical lambda_max {:.3f}, {} ensemble replicates", emp.eigenvalues.front(),
                 ens.lambda_max.size());
    return unconverged ? exit_unconverged : exit_ok;
}

// -- portfolio ----------------------------------------------------------------

struct PortfolioCmd
{
    std::string input;
    std::vector<std::size_t> sizes = {10, 20};
    std::size_t count = 5;
    std::vector<double> q = {1.0 / 3.0, 0.5, 2.0 / 3.0};
    std::size_t horizon = 30;
    bool raw_only = false;
    std::string variant = "no_missing";
    CalibFlags cf;
};

int run_portfolio(RunContext& run, const PortfolioCmd& c)
{
    const DataMatrix returns = read_matrix(run, c.input);

    OosOptions opts;
    opts.portfolios = random_portfolios(returns.rows(), c.sizes, c.count, run.seed());
    opts.q_ratios = c.q;
    opts.horizon = c.horizon;
    opts.detrend = !c.raw_only;
    opts.spec = ConstraintSpec::parse(c.variant);
    opts.calibration = c.cf.options(run.seed());
    const auto series = out_of_sample_eval(returns, opts);

    CsvWriter members(run.output("portfolios.csv"), {"portfolio", "row_id"});
    for (std::size_t p = 0; p < opts.portfolios.size(); ++p)
        for (std::size_t i : opts.portfolios[p]) {
            members << p << returns.row_ids[i];
            members.end_row();
        }

    CsvWriter table(run.output("portfolio_summary.csv"),
                    {"portfolio", "size", "q", "in_sample", "scheme", "windows", "mean_variance",
                     "variance_q10", "variance_q90", "mean_sharpe", "sharpe_q10", "sharpe_q90",
                     "unconverged", "fallbacks"});
    CsvWriter windows(run.output("oos_windows.csv"),
                      {"portfolio", "q", "scheme", "window_start", "variance", "sharpe"});
    auto opt = [](const std::optional<double>& v) { return v ? *v : NAN; };
    Json js = Json::array();
    std::size_t unconverged = 0, fallbacks = 0;
    for (const auto& s : series) {
        const std::string scheme = s.detrended ? "detrended" : "raw";
        table << s.portfolio << opts.portfolios[s.portfolio].size() << s.q << s.in_sample << scheme
              << s.variance.size() << s.mean_variance() << s.variance_quantile(0.1)
              << s.variance_quantile(0.9) << opt(s.mean_sharpe()) << opt(s.sharpe_quantile(0.1))
              << opt(s.sharpe_quantile(0.9)) << s.unconverged << s.fallbacks;
        table.end_row();
        for (std::size_t w = 0; w < s.variance.size(); ++w) {
            windows << s.portfolio << s.q << scheme << s.window_starts[w] << s.variance[w]
                    << opt(s.sharpe[w]);
            windows.end_row();
        }
        js.push_back(to_json(s));
        unconverged += s.unconverged;
        fallbacks += s.fallbacks;
    }

    // tail exponent of every stock
    CsvWriter tails(run.output("tail_exponents.csv"), {"row_id", "alpha", "xmin", "n_tail", "ks"});
    std::vector<double> alphas;
    for (std::size_t i = 0; i < returns.rows(); ++i) {
        try {
            const PowerLawFit f = power_law_fit(returns.observed_row(i));
            tails << returns.row_ids[i] << f.alpha << f.xmin << f.n_tail << f.ks;
            alphas.push_back(f.alpha);
        } catch (const Error& e) {
            spdlog::warn("tail fit of {} skipped: {}", returns.row_ids[i], e.what());
            tails << returns.row_ids[i] << NAN << NAN << std::size_t{0} << NAN;
        }
        tails.end_row();
    }
    std::sort(alphas.begin(), alphas.end());

    Json rep;
    rep["series"] = js;
    rep["median_tail_exponent"] = alphas.empty() ? Json(nullptr) : number(numeric::sorted_quantile(alphas, 0.5));
    rep["horizon"] = c.horizon;
    rep["unconverged_windows"] = unconverged;
    rep["fallback_windows"] = fallbacks;
    run.write_json("portfolio.json", rep);

    if (!opts.detrend)
        return exit_ok;
    std::size_t wins = 0, pairs = 0;
    for (const auto& d : series) {
        if (!d.detrended)
            continue;
        for (const auto& r : series)
            if (!r.detrended && r.portfolio == d.portfolio && r.q == d.q) {
                ++pairs;
                wins += d.mean_variance() < r.mean_variance();
            }
    }
    spdlog::info("detrended weights have lower mean out-of-sample variance in {}/{} cases", wins, pairs);
    if (fallbacks)
        spdlog::warn("{} windows fell back to equal weights", fallbacks);
    return exit_ok;
}

// -- var ----------------------------------------------------------------------

struct VarCmd
{
    std::string input;
    std::string row;
    std::vector<std::string> models = {"M3"};
    double level = 0.95;
    std::size_t window = 150;
    std::size_t l1 = 25, l2 = 126;
    double significance = 0.05;
    CalibFlags cf;
};

int run_var(RunContext& run, const VarCmd& c)
{
    const DataMatrix data = read_matrix(run, c.input);
    const std::vector<double> series = pick_series(data, c.row);

    std::vector<std::string> names = c.models;
    if (names.size() == 1 && (names[0] == "all" || names[0] == "ALL"))
        names = {"M1", "M2", "M3"};

    CsvWriter table(run.output("backtests.csv"),
                    {"model", "level", "test", "statistic", "p_value", "zone", "pass", "vacuous"});
    Json rep = Json::object();
    auto opt = [](const std::optional<double>& v) { return v ? *v : NAN; };
    for (const auto& name : names) {
        VarModelSpec spec;
        spec.kind = parse_var_model(name);
        spec.window = c.window;
        spec.L1 = c.l1;
        spec.L2 = c.l2;
        spec.level = c.level;
        spec.calibration = c.cf.options(run.seed());
        spec.validate();

        const RollingVar rv = rolling_var(series, spec);
        const BacktestReport bt = backtest_suite(rv.exceptions, c.level, c.significance);
        const std::string tag = to_string(spec.kind);

        CsvWriter csv(run.output("var_" + tag + ".csv"), {"index", "var", "realized", "exception"});
        for (std::size_t k = 0; k < rv.var.size(); ++k) {
            csv << k << rv.var[k] << rv.realized[k] << std::size_t{rv.exceptions[k] ? 1u : 0u};
            csv.end_row();
        }
        for (const auto& t : bt.tests) {
            table << tag << c.level << t.name << opt(t.statistic) << opt(t.p_value)
                  << (t.zone ? to_string(*t.zone) : std::string())
                  << std::string(t.pass ? "true" : "false")
                  << std::string(t.vacuous ? "true" : "false");
            table.end_row();
        }
        Json j = to_json(bt);
        j["parameters"] = spec.parameter_count();
        j["unconverged_windows"] = rv.unconverged;
        rep[tag] = j;
        spdlog::info("{} at {}: {} exceptions in {}, {}/{} tests passed", tag, c.level,
                     bt.exception_count, bt.n_obs, bt.passed(), bt.tests.size());
        if (rv.unconverged)
            spdlog::warn("{}: {} windows did not converge", tag, rv.unconverged);
    }
    run.write_json("backtests.json", rep);
    return exit_ok;
}

// -- oracle -------------------------------------------------------------------

struct OracleCmd
{
    std::string model;
    std::size_t rows = 0, cols = 0;
    std::string variant = "with_missing";
    int resolution = 4000;
};

int run_oracle(RunContext& run, const OracleCmd& c)
{
    Json rep;
    if (!c.model.empty()) {
        if (!fs::exists(c.model))
            throw Error("model file not found: " + c.model);
        run.add_input(c.model);
        AnyModel any = load_model(c.model);
        if (auto* uni = std::get_if<UnivariateModel>(&any)) {
            rep["closed_form"] = number(uni->log_partition());
            rep["brute_force"] = number(brute_force_log_partition(uni->spec(), uni->params(),
                                                                  c.resolution * 5));
        } else {
            const auto& ms = std::get<MultivariateModel>(any).multipliers;
            rep["closed_form"] = number(log_partition(ms));
            rep["brute_force"] = number(brute_force_log_partition(ms, c.resolution));
        }
    } else {
        if (c.rows == 0 || c.cols == 0)
            throw InvalidArgument("oracle needs --model or --rows/--cols");
        // random admissible multipliers: rates stay positive by construction
        const Variant v = parse_variant(c.variant);
        MultiplierSet ms = MultiplierSet::zeros(c.rows, c.cols, v);
        Engine rng = make_engine(run.seed(), 0);
        auto fill = [&](std::vector<double>& x, double lo, double hi) {
            for (double& e : x)
                e = lo + (hi - lo) * uniform01(rng);
        };
        fill(ms.alpha_row, -1, 1), fill(ms.alpha_col, -1, 1);
        fill(ms.beta_row, -1, 1), fill(ms.beta_col, -1, 1);
        fill(ms.gamma_row, 0.2, 2), fill(ms.gamma_col, 0.2, 2);
        fill(ms.sigma_row, 0.2, 2), fill(ms.sigma_col, 0.2, 2);
        rep["multipliers"] = to_json(ms);
        rep["closed_form"] = number(log_partition(ms));
        rep["brute_force"] = number(brute_force_log_partition(ms, c.resolution));
    }
    const double a = read_number(rep["closed_form"]), b = read_number(rep["brute_force"]);
    rep["rel_err"] = number(std::abs(a - b) / std::max(1.0, std::abs(b)));
    run.write_json("oracle.json", rep);
    std::cout << rep["closed_form"] << ' ' << rep["brute_force"] << ' ' << rep["rel_err"] << '\n';
    return exit_ok;
}

// -- generate -----------------------------------------------------------------

struct GenerateCmd
{
    std::string kind = "factor";
    std::size_t rows = 50, cols = 250;
    double sigma = 0.01;
    double tail_nu = 0.0;
    double outlier_prob = 0.0;
    double period = 20.0, amplitude = 1.0;
    std::string name = "data.csv";
};

int run_generate(RunContext& run, const GenerateCmd& c)
{
    DataMatrix m;
    if (c.kind == "factor") {
        FactorMarketOptions o;
        o.tail_nu = c.tail_nu;
        o.outlier_prob = c.outlier_prob;
        m = one_factor_market(c.rows, c.cols, run.seed(), o);
    } else if (c.kind == "gaussian") {
        m = DataMatrix::from_rows({gaussian_stream(c.cols, c.sigma, run.seed())});
    } else if (c.kind == "mixture") {
        m = DataMatrix::from_rows({gaussian_t_mixture(c.cols, run.seed())});
    } else if (c.kind == "seasonal") {
        m = seasonal_matrix(c.rows, c.cols, c.period, c.amplitude, run.seed());
    } else {
        throw InvalidArgument("unknown generator '" + c.kind + "'");
    }
    save_matrix_csv(m, run.output(c.name));
    spdlog::info("wrote {} x {} {} matrix", m.rows(), m.cols(), c.kind);
    return exit_ok;
}

/// Config lines of the global options and the chosen subcommand. The output
/// directory is left out so identical runs give identical manifests.
std::string effective_config(const CLI::App& app, const std::string& sub, std::uint64_t seed)
{
    std::istringstream in(app.config_to_str(true, false));
    std::string line, out = "seed=" + std::to_string(seed) + "\n";
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        const std::string key = line.substr(0, eq);
        if (key == "out" || key == "seed")
            continue;
        const auto dot = key.find('.');
        if (dot == std::string::npos || key.compare(0, dot, sub) == 0)
            out += line + "\n";
    }
    return out;
}

int error_exit(const std::string& what, int code)
{
    spdlog::error("{}", what);
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("maxent"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Maximum-entropy ensembles of time series"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");

    Global g;
    if (const char* env = std::getenv("MAXENT_OUTPUT_DIR"))
        g.out_dir = env;
    else
        g.out_dir = ".";
    app.add_option("-o,--out", g.out_dir, "output directory (default $MAXENT_OUTPUT_DIR or .)");
    app.add_option("--seed", g.seed, "random seed; drawn and reported when absent");
    app.add_option("--threads", g.threads, "worker threads, 0 = all cores")->capture_default_str();
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->capture_default_str();

    CalibrateCmd cal;
    auto* s_cal = app.add_subcommand("calibrate", "fit an ensemble to a data matrix");
    s_cal->add_option("-i,--input", cal.input, "CSV data matrix (rows = series)")->required();
    s_cal->add_option("--variant", cal.variant,
                      "with_missing, no_missing (M3), sums_only (M2) or custom:<variant>:<row>:<col>")
        ->capture_default_str();
    s_cal->add_option("--family", cal.family, "fit a univariate H1, H2 or M1 model instead");
    s_cal->add_option("--row", cal.row, "row label or index for --family");
    s_cal->add_option("--xi", cal.xi, "quantile grid probabilities for --family")->delimiter(',')->capture_default_str();
    s_cal->add_flag("--no-center", cal.no_center, "data are already centered");
    add_calib_flags(s_cal, cal.cf);

    SampleCmd smp;
    auto* s_smp = app.add_subcommand("sample", "draw from a calibrated model");
    s_smp->add_option("-m,--model", smp.model, "model JSON")->required();
    s_smp->add_option("-n,--n", smp.n, "matrices (multivariate) or values (univariate)")
        ->capture_default_str();

    ValidateCmd val;
    auto* s_val = app.add_subcommand("validate", "moment and KS compatibility of data with a model");
    s_val->add_option("-m,--model", val.model, "model JSON")->required();
    s_val->add_option("-i,--input", val.input, "CSV data matrix")->required();
    s_val->add_option("--row", val.row, "row for a univariate model");
    s_val->add_option("--n-rep", val.n_rep, "replicates for the moment bands")->capture_default_str();
    s_val->add_option("--ks-rep", val.ks_rep, "replicates pooled for the KS reference")
        ->capture_default_str();
    s_val->add_option("--coverage", val.coverage, "moment band coverage")->capture_default_str();
    s_val->add_option("--significance", val.significance, "KS significance")->capture_default_str();
    s_val->add_option("--moments", val.moments, "moments to test")->delimiter(',')->capture_default_str();

    AnomalyCmd ano;
    auto* s_ano = app.add_subcommand("anomaly", "flag cells outside their ensemble interval");
    s_ano->add_option("-i,--input", ano.input, "CSV data matrix")->required();
    s_ano->add_option("-m,--model", ano.model, "model JSON (calibrated on the input when absent)");
    s_ano->add_option("--variant", ano.variant, "variant used when calibrating")->capture_default_str();
    s_ano->add_option("--coverage", ano.coverage, "first-stage coverage")->capture_default_str();
    s_ano->add_option("--fcr-q", ano.fcr_q, "false coverage rate")->capture_default_str();
    add_calib_flags(s_ano, ano.cf);

    SpectrumCmd spc;
    auto* s_spc = app.add_subcommand("spectrum", "empirical vs ensemble vs Marchenko-Pastur densities");
    s_spc->add_option("-i,--input", spc.input, "CSV data matrix")->required();
    s_spc->add_option("-m,--model", spc.model, "model JSON (calibrated on the input when absent)");
    s_spc->add_option("--variant", spc.variant, "variant used when calibrating")->capture_default_str();
    s_spc->add_option("--n-rep", spc.n_rep, "ensemble replicates")->capture_default_str();
    s_spc->add_option("--grid", spc.grid, "density grid points")->capture_default_str();
    add_calib_flags(s_spc, spc.cf);

    PortfolioCmd pf;
    auto* s_pf = app.add_subcommand("portfolio", "out-of-sample Markowitz with and without detrending");
    s_pf->add_option("-i,--input", pf.input, "CSV returns (rows = stocks)")->required();
    s_pf->add_option("--sizes", pf.sizes, "portfolio sizes")->delimiter(',')->capture_default_str();
    s_pf->add_option("--count", pf.count, "random portfolios per size")->capture_default_str();
    s_pf->add_option("--q", pf.q, "N / T ratios of the in-sample window")->delimiter(',')->capture_default_str();
    s_pf->add_option("--horizon", pf.horizon, "out-of-sample days")->capture_default_str();
    s_pf->add_flag("--raw-only", pf.raw_only, "skip the detrended weights");
    s_pf->add_option("--variant", pf.variant, "detrending ensemble")->capture_default_str();
    add_calib_flags(s_pf, pf.cf);

    VarCmd var;
    auto* s_var = app.add_subcommand("var", "rolling value at risk and backtests");
    s_var->add_option("-i,--input", var.input, "CSV returns")->required();
    s_var->add_option("--row", var.row, "row label or index when the input has several");
    s_var->add_option("--model", var.models, "M1, M2, M3 or all")->delimiter(',')->capture_default_str();
    s_var->add_option("--alpha,--level", var.level, "VaR confidence level")->capture_default_str();
    s_var->add_option("--window", var.window, "estimation window")->capture_default_str();
    s_var->add_option("--l1", var.l1, "circulant rows")->capture_default_str();
    s_var->add_option("--l2", var.l2, "circulant columns before the epsilon slot")->capture_default_str();
    s_var->add_option("--significance", var.significance, "backtest significance")->capture_default_str();
    add_calib_flags(s_var, var.cf);

    OracleCmd orc;
    auto* s_orc = app.add_subcommand("oracle", "closed-form vs brute-force log partition function");
    s_orc->add_option("-m,--model", orc.model, "model JSON");
    s_orc->add_option("--rows", orc.rows, "random multipliers: rows");
    s_orc->add_option("--cols", orc.cols, "random multipliers: columns");
    s_orc->add_option("--variant", orc.variant, "variant of the random multipliers")->capture_default_str();
    s_orc->add_option("--resolution", orc.resolution, "Simpson panels")->capture_default_str();

    GenerateCmd gen;
    auto* s_gen = app.add_subcommand("generate", "write a synthetic data set");
    s_gen->add_option("--kind", gen.kind, "factor, gaussian, mixture or seasonal")->capture_default_str();
    s_gen->add_option("--rows", gen.rows, "series")->capture_default_str();
    s_gen->add_option("--cols", gen.cols, "observations per series")->capture_default_str();
    s_gen->add_option("--sigma", gen.sigma, "gaussian stream sd")->capture_default_str();
    s_gen->add_option("--tail-nu", gen.tail_nu, "Student-t shocks for factor data")->capture_default_str();
    s_gen->add_option("--outlier-prob", gen.outlier_prob, "spike probability for factor data")
        ->capture_default_str();
    s_gen->add_option("--period", gen.period, "seasonal period")->capture_default_str();
    s_gen->add_option("--amplitude", gen.amplitude, "seasonal amplitude")->capture_default_str();
    s_gen->add_option("--name", gen.name, "output file name")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    spdlog::set_level(spdlog::level::from_str(g.log_level));
    set_thread_count(g.threads);

    std::uint64_t seed;
    if (g.seed) {
        seed = *g.seed;
    } else {
        std::random_device rd;
        seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
        spdlog::info("seed {}", seed);
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        RunContext run(g.out_dir, sub->get_name(), seed);
        int code = exit_ok;
        if (sub == s_cal)
            code = run_calibrate(run, cal);
        else if (sub == s_smp)
            code = run_sample(run, smp);
        else if (sub == s_val)
            code = run_validate(run, val);
        else if (sub == s_ano)
            code = run_anomaly(run, ano);
        else if (sub == s_spc)
            code = run_spectrum(run, spc);
        else if (sub == s_pf)
            code = run_portfolio(run, pf);
        else if (sub == s_var)
            code = run_var(run, var);
        else if (sub == s_orc)
            code = run_oracle(run, orc);
        else if (sub == s_gen)
            code = run_generate(run, gen);
        run.meta()["threads"] = g.threads;
        run.meta()["exit_code"] = code;
        run.write_manifest(effective_config(app, sub->get_name(), seed));
        return code;
    } catch (const InfeasibleConstraints& e) {
        return error_exit(e.what(), exit_infeasible);
    } catch (const DivergentPartition& e) {
        return error_exit(e.what(), exit_infeasible);
    } catch (const SingularCorrelation& e) {
        return error_exit(e.what(), exit_infeasible);
    } catch (const DegenerateFrontier& e) {
        return error_exit(e.what(), exit_infeasible);
    } catch (const DegenerateWindow& e) {
        return error_exit(e.what(), exit_infeasible);
    } catch (const Unconverged& e) {
        return error_exit(e.what(), exit_unconverged);
    } catch (const std::exception& e) {
        return error_exit(e.what(), exit_input);
    }
}
