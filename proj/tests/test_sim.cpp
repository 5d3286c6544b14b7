#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "noir/sim.hpp"
#include "support/toy.hpp"

using namespace noir;

namespace {

std::vector<TrajectoryRecord> synthetic(const std::vector<double> &totals)
{
  std::vector<TrajectoryRecord> t;
  for (std::size_t k = 0; k < totals.size(); ++k) {
    TrajectoryRecord r;
    r.step = static_cast<int>(k) + 1;
    r.densities = Vector::Zero(3);
    r.densities[0] = totals[k] / 2;
    r.densities[1] = totals[k] / 2;
    t.push_back(r);
  }
  return t;
}

std::string csv_of(const Scenario &s)
{
  std::ostringstream out;
  write_csv(out, run(s), s.graph);
  return out.str();
}

}  // namespace

TEST_CASE("empty network stays empty without input")
{
  auto s = toy::corridor(2);
  s.control.u0 = 0.0;
  s.disturbance = {DisturbanceKind::uniform, 0.0, 0.0, 0.0, 0.0};
  s.steps = 15;
  REQUIRE(validate(s).ok());
  const auto t = run(s);
  REQUIRE(t.size() == 15);
  for (const auto &r : t) {
    CHECK(r.densities.isZero());
    CHECK(r.inflows.isZero());
    CHECK(r.objective == 0.0);
  }
}

TEST_CASE("runs are deterministic")
{
  std::mt19937_64 rng(2);
  auto s = toy::corridor(3, 3, &rng);
  s.steps = 40;
  CHECK(csv_of(s) == csv_of(s));
  auto other = s;
  other.seed = 2;
  CHECK(csv_of(s) != csv_of(other));
}

TEST_CASE("closed loop invariants on toy corridors")
{
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    auto s = toy::corridor(1 + trial % 4, 2 + trial % 2, &rng);
    s.steps = 60;
    s.control.horizon = 3;
    const auto t = run(s);
    REQUIRE(t.size() == 60);

    Vector previous = Vector::Zero(s.graph.state_size());
    PhaseAssignment phases = initial_assignment(s.graph);
    double injected = 0.0;
    for (const auto &r : t) {
      injected += r.inflows.sum() + r.disturbances.sum();
      CHECK(r.densities.minCoeff() >= -1e-12);
      CHECK(r.densities.head(s.graph.n_roads).maxCoeff() <= s.control.rho_max + 1e-9);
      CHECK(r.densities[s.graph.n_roads] >= previous[s.graph.n_roads]);
      if (!r.qp_relaxed)
        CHECK(std::abs(r.inflows.sum() - s.control.u0) <= 1e-9);
      for (std::size_t j = 0; j < phases.size(); ++j) {
        const auto &junction = s.graph.junctions[j];
        CHECK(r.timers[j] <= junction.max_activation);
        if (r.phases[j] != phases[j])
          CHECK(r.phases[j] == junction.successor(phases[j]));
      }
      phases = r.phases;
      previous = r.densities;
    }
    CHECK(std::abs(t.back().densities.sum() - injected) < 1e-9 * t.size() * (1.0 + injected));
  }
}

TEST_CASE("steady state detector")
{
  SUBCASE("constant")
  {
    const auto m = metrics(synthetic(std::vector<double>(12, 50.0)));
    REQUIRE(m.steady_state_step.has_value());
    CHECK(*m.steady_state_step == 1);
  }
  SUBCASE("strictly growing")
  {
    std::vector<double> r;
    for (int k = 0; k < 30; ++k)
      r.push_back(10.0 * std::pow(1.05, k));
    CHECK_FALSE(metrics(synthetic(r)).steady_state_step.has_value());
  }
  SUBCASE("ramp then plateau")
  {
    const auto m = metrics(synthetic({10, 20, 30, 40, 50, 50, 50.5, 50, 50.2, 50, 50, 50}));
    REQUIRE(m.steady_state_step.has_value());
    CHECK(*m.steady_state_step == 5);
  }
  SUBCASE("window must fit in the trajectory")
  {
    CHECK_FALSE(metrics(synthetic({5, 5, 5, 5, 5})).steady_state_step.has_value());
    CHECK(metrics(synthetic({5, 5, 5, 5, 5, 5})).steady_state_step == 1);
  }
  SUBCASE("small totals use an absolute floor")
  {
    // changes of 0.01 around 0.1 are large relative to r but not to 1
    const auto m = metrics(synthetic({0.1, 0.11, 0.1, 0.11, 0.1, 0.11, 0.1}));
    CHECK(m.steady_state_step == 1);
  }
  CHECK_THROWS_AS(metrics({}), std::invalid_argument);
}

TEST_CASE("peak density and net series")
{
  auto t = synthetic({4, 8, 6});
  t[1].densities[1] = 7.0;
  const auto m = metrics(t);
  CHECK(m.net_density == std::vector<double>{4, 11, 6});
  CHECK(m.peak_density == 7.0);
  CHECK(m.peak_road == 2);
  CHECK(m.peak_step == 2);
}

TEST_CASE("csv layout")
{
  auto s = toy::corridor(2);
  s.steps = 3;
  const auto text = csv_of(s);
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  CHECK(header == "k,rho_1,rho_2,rho_3,rho_4,rho_5,rho_6,rho_7,rho_8,u_1,u_2,u_3,phase_1,phase_2,objective,qp_relaxed");
  std::string row;
  int rows = 0;
  while (std::getline(in, row)) {
    ++rows;
    CHECK(std::count(row.begin(), row.end(), ',') == 15);
  }
  CHECK(rows == 3);
  CHECK(text.find("0.000000") != std::string::npos);
}

TEST_CASE("summary json")
{
  auto s = toy::corridor(2);
  s.steps = 20;
  const auto t = run(s);
  const auto doc = nlohmann::json::parse(summary_json(metrics(t), s));
  CHECK(doc["steps"] == 20);
  CHECK(doc["dt_seconds"] == 30.0);
  CHECK(doc["net_density"].size() == 20);
  if (doc["steady_state_step"].is_null())
    CHECK(doc["steady_state_seconds"].is_null());
  else
    CHECK(doc["steady_state_seconds"] == doc["steady_state_step"].get<int>() * 30.0);
}
