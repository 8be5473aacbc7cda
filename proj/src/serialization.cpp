#include "maxent/serialization.hpp"

#include <cmath>
#include <fstream>

#include "maxent/numeric.hpp"

namespace maxent {

Json number(double v)
{
    if (std::isnan(v))
        return "NaN";
    if (std::isinf(v))
        return v > 0 ? "Infinity" : "-Infinity";
    return v;
}

double read_number(const Json& j)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "Infinity")
            return numeric::inf;
        if (s == "-Infinity")
            return -numeric::inf;
        if (s == "NaN")
            return std::nan("");
    }
    if (j.is_null())
        return std::nan("");
    throw ParseError("expected a number in JSON", ParseError::npos);
}

namespace {

Json numbers(const std::vector<double>& v)
{
    Json a = Json::array();
    for (double x : v)
        a.push_back(number(x));
    return a;
}

std::vector<double> read_numbers(const Json& j)
{
    std::vector<double> v;
    for (const auto& x : j)
        v.push_back(read_number(x));
    return v;
}

Json optional_number(const std::optional<double>& v)
{
    return v ? number(*v) : Json(nullptr);
}

const Json& field(const Json& j, const char* name)
{
    if (!j.contains(name))
        throw ParseError(std::string("JSON is missing field '") + name + "'", ParseError::npos);
    return j.at(name);
}

} // namespace

Json to_json(const MultiplierSet& ms)
{
    Json j;
    j["variant"] = to_string(ms.variant);
    j["alpha_row"] = numbers(ms.alpha_row);
    j["beta_row"] = numbers(ms.beta_row);
    j["gamma_row"] = numbers(ms.gamma_row);
    j["sigma_row"] = numbers(ms.sigma_row);
    j["alpha_col"] = numbers(ms.alpha_col);
    j["beta_col"] = numbers(ms.beta_col);
    j["gamma_col"] = numbers(ms.gamma_col);
    j["sigma_col"] = numbers(ms.sigma_col);
    if (!ms.mask.row.empty()) {
        j["mask_row"] = ms.mask.row;
        j["mask_col"] = ms.mask.col;
    }
    return j;
}

MultiplierSet multipliers_from_json(const Json& j)
{
    MultiplierSet ms;
    ms.variant = parse_variant(field(j, "variant").get<std::string>());
    ms.alpha_row = read_numbers(field(j, "alpha_row"));
    ms.beta_row = read_numbers(field(j, "beta_row"));
    ms.gamma_row = read_numbers(field(j, "gamma_row"));
    ms.sigma_row = read_numbers(field(j, "sigma_row"));
    ms.alpha_col = read_numbers(field(j, "alpha_col"));
    ms.beta_col = read_numbers(field(j, "beta_col"));
    ms.gamma_col = read_numbers(field(j, "gamma_col"));
    ms.sigma_col = read_numbers(field(j, "sigma_col"));
    const std::size_t n = ms.alpha_row.size(), t = ms.alpha_col.size();
    for (auto* r : {&ms.beta_row, &ms.gamma_row, &ms.sigma_row})
        if (r->size() != n)
            throw ShapeMismatch("row multiplier families differ in length");
    for (auto* c : {&ms.beta_col, &ms.gamma_col, &ms.sigma_col})
        if (c->size() != t)
            throw ShapeMismatch("column multiplier families differ in length");
    if (j.contains("mask_row")) {
        ms.mask.row = j.at("mask_row").get<std::vector<unsigned char>>();
        ms.mask.col = j.at("mask_col").get<std::vector<unsigned char>>();
        if (ms.mask.row.size() != n || ms.mask.col.size() != t)
            throw ShapeMismatch("state mask does not match the multipliers");
    }
    return ms;
}

Json to_json(const MarginConstraints& c)
{
    return {{"n_plus_row", numbers(c.n_plus_row)},   {"n_minus_row", numbers(c.n_minus_row)},
            {"s_plus_row", numbers(c.s_plus_row)},   {"s_minus_row", numbers(c.s_minus_row)},
            {"n_obs_row", numbers(c.n_obs_row)},     {"m_plus_col", numbers(c.m_plus_col)},
            {"m_minus_col", numbers(c.m_minus_col)}, {"r_plus_col", numbers(c.r_plus_col)},
            {"r_minus_col", numbers(c.r_minus_col)}, {"m_obs_col", numbers(c.m_obs_col)}};
}

MarginConstraints margins_from_json(const Json& j)
{
    MarginConstraints c;
    c.n_plus_row = read_numbers(field(j, "n_plus_row"));
    c.n_minus_row = read_numbers(field(j, "n_minus_row"));
    c.s_plus_row = read_numbers(field(j, "s_plus_row"));
    c.s_minus_row = read_numbers(field(j, "s_minus_row"));
    c.n_obs_row = read_numbers(field(j, "n_obs_row"));
    c.m_plus_col = read_numbers(field(j, "m_plus_col"));
    c.m_minus_col = read_numbers(field(j, "m_minus_col"));
    c.r_plus_col = read_numbers(field(j, "r_plus_col"));
    c.r_minus_col = read_numbers(field(j, "r_minus_col"));
    c.m_obs_col = read_numbers(field(j, "m_obs_col"));
    return c;
}

Json to_json(const MultivariateModel& m)
{
    Json j;
    j["kind"] = "multivariate";
    j["spec"] = m.spec.name();
    j["parameter_count"] = m.spec.parameter_count(m.multipliers.rows(), m.multipliers.cols());
    j["multipliers"] = to_json(m.multipliers);
    j["constraints"] = m.constraints ? to_json(*m.constraints) : Json(nullptr);
    j["row_ids"] = m.row_ids;
    j["col_ids"] = m.col_ids;
    j["row_means"] = numbers(m.row_means);
    j["dropped"] = m.dropped;
    return j;
}

MultivariateModel multivariate_from_json(const Json& j)
{
    if (field(j, "kind") != "multivariate")
        throw ParseError("not a multivariate model", ParseError::npos);
    MultivariateModel m;
    m.spec = ConstraintSpec::parse(field(j, "spec").get<std::string>());
    m.multipliers = multipliers_from_json(field(j, "multipliers"));
    if (j.contains("constraints") && !j.at("constraints").is_null())
        m.constraints = margins_from_json(j.at("constraints"));
    m.row_ids = j.value("row_ids", std::vector<std::string>{});
    m.col_ids = j.value("col_ids", std::vector<std::string>{});
    if (j.contains("row_means"))
        m.row_means = read_numbers(j.at("row_means"));
    m.dropped = j.value("dropped", std::vector<std::string>{});
    return m;
}

Json to_json(const UnivariateModel& m)
{
    const auto& s = m.spec();
    Json j;
    j["kind"] = "univariate";
    j["family"] = to_string(s.family);
    j["xi"] = numbers(s.grid.xi);
    j["grid"] = numbers(s.grid.q);
    j["samples"] = s.samples;
    j["parameter_names"] = s.parameter_names();
    j["params"] = numbers(m.params());
    j["active_bins"] = m.active_bins();
    if (m.constraints()) {
        const auto& c = *m.constraints();
        j["constraints"] = {{"count", numbers(c.count)}, {"sum", numbers(c.sum)}, {"sum_sq", numbers(c.sum_sq)}};
    } else {
        j["constraints"] = nullptr;
    }
    j["bin_probabilities"] = numbers(m.bin_probabilities());
    return j;
}

UnivariateModel univariate_from_json(const Json& j)
{
    if (field(j, "kind") != "univariate")
        throw ParseError("not a univariate model", ParseError::npos);
    UnivariateSpec s;
    s.family = parse_family(field(j, "family").get<std::string>());
    s.grid = make_grid(read_numbers(field(j, "grid")));
    if (j.contains("xi"))
        s.grid.xi = read_numbers(j.at("xi"));
    s.samples = j.value("samples", std::size_t{1});
    std::optional<BinStatistics> stats;
    if (j.contains("constraints") && !j.at("constraints").is_null()) {
        const auto& c = j.at("constraints");
        stats = BinStatistics{read_numbers(field(c, "count")), read_numbers(field(c, "sum")),
                              read_numbers(field(c, "sum_sq"))};
    }
    std::vector<bool> active = j.value("active_bins", std::vector<bool>{});
    return UnivariateModel(std::move(s), read_numbers(field(j, "params")), std::move(stats), std::move(active));
}

Json to_json(const CalibrationResult& r)
{
    Json res = Json::array();
    for (const auto& c : r.residuals)
        res.push_back({{"name", c.name},
                       {"empirical", number(c.empirical)},
                       {"expected", number(c.expected)},
                       {"rel_err", number(c.rel_err)},
                       {"dropped", c.dropped}});
    return {{"method", to_string(r.method)},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"max_rel_constraint_err", number(r.max_rel_constraint_err)},
            {"final_log_likelihood", number(r.final_log_likelihood)},
            {"dropped_constraints", r.dropped_constraints},
            {"residuals", res},
            {"log_likelihood_trace", numbers(r.log_likelihood_trace)}};
}

Json to_json(const UnivariateCalibration& r)
{
    return {{"converged", r.converged},
            {"iterations", r.iterations},
            {"max_rel_constraint_err", number(r.max_rel_constraint_err)},
            {"final_log_likelihood", number(r.final_log_likelihood)},
            {"aic", number(information_criterion(r.model, Criterion::AIC))},
            {"bic", number(information_criterion(r.model, Criterion::BIC))},
            {"dropped_constraints", r.dropped_constraints},
            {"log_likelihood_trace", numbers(r.log_likelihood_trace)}};
}

Json to_json(const KsResult& r)
{
    return {{"statistic", number(r.statistic)}, {"p_value", number(r.p_value)},
            {"reject", r.reject},               {"n1", r.n1},
            {"n2", r.n2},                       {"valid", r.valid}};
}

Json to_json(const AnomalyReport& r)
{
    Json flags = Json::array();
    for (const auto& f : r.flags)
        flags.push_back({{"row", f.row},
                         {"col", f.col},
                         {"value", number(f.value)},
                         {"lower", number(f.lower)},
                         {"upper", number(f.upper)}});
    return {{"coverage_level", r.coverage_level},
            {"fcr_q", r.fcr_q},
            {"adjusted_level", number(r.adjusted_level)},
            {"selected", r.selected},
            {"observed", r.observed},
            {"flags", flags}};
}

Json to_json(const BacktestReport& r)
{
    Json tests = Json::array();
    for (const auto& t : r.tests) {
        Json e{{"name", t.name},
               {"statistic", optional_number(t.statistic)},
               {"p_value", optional_number(t.p_value)},
               {"pass", t.pass},
               {"vacuous", t.vacuous}};
        if (t.zone)
            e["zone"] = to_string(*t.zone);
        tests.push_back(std::move(e));
    }
    return {{"level", r.level},
            {"significance", r.significance},
            {"n_obs", r.n_obs},
            {"exception_count", r.exception_count},
            {"passed", r.passed()},
            {"tests", tests}};
}

Json to_json(const OosSeries& s)
{
    Json sharpe = Json::array();
    for (const auto& v : s.sharpe)
        sharpe.push_back(optional_number(v));
    return {{"portfolio", s.portfolio},
            {"q", s.q},
            {"in_sample", s.in_sample},
            {"detrended", s.detrended},
            {"window_starts", s.window_starts},
            {"variance", numbers(s.variance)},
            {"sharpe", sharpe},
            {"mean_variance", number(s.mean_variance())},
            {"variance_q05", number(s.variance_quantile(0.05))},
            {"variance_q95", number(s.variance_quantile(0.95))},
            {"mean_sharpe", optional_number(s.mean_sharpe())},
            {"sharpe_q05", optional_number(s.sharpe_quantile(0.05))},
            {"sharpe_q95", optional_number(s.sharpe_quantile(0.95))},
            {"unconverged", s.unconverged},
            {"fallbacks", s.fallbacks}};
}

void save_json(const Json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidArgument("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Json load_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), ParseError::npos);
    }
}

AnyModel load_model(const std::filesystem::path& path)
{
    const Json j = load_json(path);
    const auto kind = j.value("kind", std::string{});
    if (kind == "multivariate")
        return multivariate_from_json(j);
    if (kind == "univariate")
        return univariate_from_json(j);
    throw ParseError(path.string() + ": unknown model kind '" + kind + "'", ParseError::npos);
}

} // namespace maxent
