#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "maxent/calibration.hpp"
#include "maxent/serialization.hpp"
#include "maxent/synthetic.hpp"

using namespace maxent;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "maxent_serialization_test";
    fs::create_directories(dir);
    return dir / name;
}

void check_same(const MultiplierSet& a, const MultiplierSet& b)
{
    CHECK(a.variant == b.variant);
    for (auto f : {Family::Alpha, Family::Beta, Family::Gamma, Family::Sigma})
        for (auto ax : {Axis::Row, Axis::Col})
            CHECK(a.family(f, ax) == b.family(f, ax));
    CHECK(a.mask.row == b.mask.row);
    CHECK(a.mask.col == b.mask.col);
}

} // namespace

TEST_CASE("non-finite numbers survive a round trip")
{
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(number(inf) == "Infinity");
    CHECK(number(-inf) == "-Infinity");
    CHECK(number(std::nan("")) == "NaN");
    CHECK(read_number(number(-inf)) == -inf);
    CHECK(std::isnan(read_number(number(std::nan("")))));
    const double x = 0.1 + 0.2;
    CHECK(read_number(Json::parse(number(x).dump())) == x);
    CHECK_THROWS(read_number(Json("seven")));
}

TEST_CASE("multivariate model round trip")
{
    const DataMatrix d = center_rows(one_factor_market(4, 9, 3));
    auto [model, res] = calibrate_matrix(d, ConstraintSpec::with_missing());
    REQUIRE(res.converged);
    const fs::path p = scratch("model.json");
    save_json(to_json(model), p);
    const AnyModel any = load_model(p);
    REQUIRE(std::holds_alternative<MultivariateModel>(any));
    const auto& back = std::get<MultivariateModel>(any);
    CHECK(back.spec.name() == model.spec.name());
    check_same(back.multipliers, model.multipliers);
    CHECK(back.row_ids == model.row_ids);
    CHECK(back.col_ids == model.col_ids);
    CHECK(back.row_means == model.row_means);
    REQUIRE(back.constraints.has_value());
    CHECK(back.constraints->s_plus_row == model.constraints->s_plus_row);
    CHECK(back.constraints->m_obs_col == model.constraints->m_obs_col);
    CHECK(log_partition(back.multipliers) == log_partition(model.multipliers));
}

TEST_CASE("custom specs and masks round trip")
{
    const DataMatrix d = DataMatrix::from_rows({{1, 2, 3}, {-1, 2, -3}});
    auto [model, res] = calibrate_matrix(d, ConstraintSpec::parse("custom:no_missing:ags:gs"));
    REQUIRE(res.converged);
    const MultivariateModel back = multivariate_from_json(Json::parse(to_json(model).dump()));
    CHECK(back.spec.name() == model.spec.name());
    check_same(back.multipliers, model.multipliers);
    // row 0 has no negative values, so its minus state stays off
    CHECK((back.multipliers.mask.row[0] & StateMask::minus) == 0);
}

TEST_CASE("univariate model round trip")
{
    const auto x = gaussian_t_mixture(1000, 5);
    const std::vector<double> xi = {0, 0.25, 0.5, 0.75, 1};
    const UnivariateCalibration c = calibrate_series(x, xi, UnivariateFamily::H2);
    REQUIRE(c.converged);
    const fs::path p = scratch("uni.json");
    save_json(to_json(c.model), p);
    const AnyModel any = load_model(p);
    REQUIRE(std::holds_alternative<UnivariateModel>(any));
    const auto& back = std::get<UnivariateModel>(any);
    CHECK(back.spec().family == UnivariateFamily::H2);
    CHECK(back.spec().grid.q == c.model.spec().grid.q);
    CHECK(back.spec().samples == c.model.spec().samples);
    CHECK(back.params() == c.model.params());
    CHECK(back.active_bins() == c.model.active_bins());
    CHECK(back.log_partition() == c.model.log_partition());
    CHECK(back.quantile(0.3) == c.model.quantile(0.3));
}

TEST_CASE("margins round trip")
{
    DataMatrix d = DataMatrix::from_rows({{1, -2, 0.5}, {3, 1, -1}});
    d.set_missing(1, 1);
    const MarginConstraints c = compute_margins(d);
    const MarginConstraints back = margins_from_json(Json::parse(to_json(c).dump()));
    CHECK(back.n_plus_row == c.n_plus_row);
    CHECK(back.s_minus_row == c.s_minus_row);
    CHECK(back.n_obs_row == c.n_obs_row);
    CHECK(back.r_plus_col == c.r_plus_col);
    CHECK(back.m_obs_col == c.m_obs_col);
}

TEST_CASE("unknown or malformed models are rejected")
{
    const fs::path p = scratch("bad.json");
    save_json(Json{{"kind", "spline"}}, p);
    CHECK_THROWS(load_model(p));
    CHECK_THROWS(load_model(scratch("does_not_exist.json")));
    CHECK_THROWS(multivariate_from_json(Json{{"kind", "multivariate"}}));
}

TEST_CASE("reports serialize")
{
    std::vector<bool> e(100, false);
    e[10] = e[50] = true;
    const Json j = to_json(backtest_suite(e, 0.95));
    CHECK(j["exception_count"] == 2);
    CHECK(j["tests"].size() == 8);
}
