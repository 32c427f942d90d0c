#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "ddpm/experiment.hpp"
#include "ddpm/target_json.hpp"
#include "ddpm/verification.hpp"

using namespace ddpm;

TEST_CASE("target JSON round-trip") {
  const std::string doc = R"({
    "kind": "gaussian_mixture", "dim": 2,
    "components": [
      {"weight": 0.25, "mean": [0.5, -1.0], "cov": [[1.0, 0.1], [0.1, 0.7]]},
      {"weight": 0.75, "mean": [-0.3, 0.2], "cov": [[0.6, 0.0], [0.0, 0.9]]}
    ]
  })";
  Target t = parse_target_json(doc);
  const auto& gm = std::get<GaussianMixture>(t);
  CHECK(gm.dim == 2);
  CHECK(gm.weights[1] == 0.75);
  CHECK(gm.covs[0](0, 1) == 0.1);
  Target t2 = parse_target_json(target_to_json(t));
  const auto& gm2 = std::get<GaussianMixture>(t2);
  CHECK((gm2.means[0] - gm.means[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((gm2.covs[1] - gm.covs[1]).cwiseAbs().maxCoeff() == 0.0);

  Target cloud = parse_target_json(
      R"({"kind":"atom_cloud","dim":1,"atoms":[
          {"weight":0.5,"x":[-1.0]},{"weight":0.5,"x":[1.0]}]})");
  CHECK(std::get<AtomCloud>(cloud).atom_count() == 2);
  Target cloud2 = parse_target_json(target_to_json(cloud));
  CHECK(std::get<AtomCloud>(cloud2).atoms[1][0] == 1.0);
}

TEST_CASE("target JSON diagnostics") {
  CHECK_THROWS_AS(parse_target_json("not json"), ContractError);
  CHECK_THROWS_AS(parse_target_json(R"({"kind":"wavelet","dim":1})"),
                  ContractError);
  CHECK_THROWS_AS(
      parse_target_json(
          R"({"kind":"gaussian_mixture","dim":2,"components":[
              {"weight":1.0,"mean":[0.0],"cov":[[1.0]]}]})"),
      ContractError);  // mean length != dim
  CHECK_THROWS_AS(load_target_file("/nonexistent/target.json"), ContractError);
}

TEST_CASE("float formats round-trip") {
  const double values[] = {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23,
                           0.49999999999999994};
  for (double v : values) {
    CHECK(std::strtod(format_float_17(v).c_str(), nullptr) == v);
    CHECK(std::strtod(format_float_shortest(v).c_str(), nullptr) == v);
  }
  // Shortest form is actually short for representable decimals.
  CHECK(format_float_shortest(0.1) == "0.1");
}

TEST_CASE("rates runner is deterministic and ordered") {
  RatesRequest req;
  MatrixXd cov = MatrixXd::Identity(2, 2);
  cov(1, 1) = 0.25;
  req.target = GaussianMixture::make(2, VectorXd::Ones(1),
                                     {VectorXd::Zero(2)}, {cov});
  req.Ts = {64, 128};
  req.seeds = {0, 1};
  auto a = run_rates(req);
  auto b = run_rates(req);
  REQUIRE(a.size() == 4);
  CHECK(a[0].T == 64);
  CHECK(a[1].T == 64);
  CHECK(a[2].T == 128);
  CHECK(a[0].seed == 0);
  CHECK(a[1].seed == 1);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].breakdown.total == b[i].breakdown.total);

  CsvTable csv = rates_csv(req, a);
  CHECK(csv.header.size() == 12);
  CHECK(csv.header[0] == "T");
  CHECK(csv.rows.size() == 4);
  // Byte-identical re-rendering.
  CHECK(csv.to_string() == rates_csv(req, b).to_string());

  req.seeds = {3, 3};
  CHECK_THROWS_AS(run_rates(req), ContractError);
  req.seeds = {0};
  req.Ts = {1};
  CHECK_THROWS_AS(run_rates(req), ContractError);
}

TEST_CASE("summary json shape") {
  CriterionReport rep;
  rep.id = 10;
  rep.name = "li_schedule";
  rep.checks.push_back({"c10.first_step", 0.05, 0.05, "==", true});
  rep.checks.push_back({"c10.max_ratio", 2.5, 1.0, "<=", false});
  const std::string json = summary_json({rep});
  CHECK(json.find("\"c10.first_step\"") != std::string::npos);
  CHECK(json.find("\"pass\": true") != std::string::npos);
  CHECK(json.find("\"pass\": false") != std::string::npos);
  CHECK(json.find("\"threshold\": 1") != std::string::npos);
}

TEST_CASE("svg scatter is self-contained") {
  std::vector<std::pair<double, double>> pts = {
      {64, 1e-2}, {128, 4e-3}, {256, 1.5e-3}, {512, 6e-4}};
  RateFit fit = fit_rate(pts);
  const std::string svg = svg_loglog(pts, fit, "demo");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("circle") != std::string::npos);
  CHECK(svg.find("slope=") != std::string::npos);
  CHECK(svg.find("http://") == svg.find("http://www.w3.org/2000/svg"));
}

TEST_CASE("verification suites enumerate the acceptance list") {
  auto names = suite_names();
  CHECK(std::find(names.begin(), names.end(), "tweedie") != names.end());
  std::vector<int> all = suite_criteria("all");
  CHECK(all.size() == 13);
  CHECK_THROWS_AS(suite_criteria("bogus"), ContractError);
  // The tweedie suite alone yields >= 10 summary entries.
  CHECK(suite_criteria("tweedie") == std::vector<int>{4, 5});
}
