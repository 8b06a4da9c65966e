#include <doctest.h>

#include <sstream>

#include "bdm/error.hpp"
#include "bdm/io.hpp"

using namespace bdm;
using bdm::io::json;

TEST_SUITE("io") {

TEST_CASE("model spec round trip") {
  io::ModelSpec spec;
  spec.params = ModelParams{0.025, 1.5, 0.25, 1.0, 1.0, 50};
  const json j = io::to_json(spec);
  CHECK(j.at("family") == "logit");
  CHECK_FALSE(j.contains("epsilon"));
  const auto back = io::model_from_json(j);
  CHECK(io::to_json(back) == j);

  io::ModelSpec kirman;
  kirman.params.N = 20;
  kirman.family = Kirman{0.01, 0.5};
  const json jk = io::to_json(kirman);
  CHECK(jk.at("epsilon") == 0.01);
  CHECK(io::to_json(io::model_from_json(jk)) == jk);
}

TEST_CASE("model parsing is strict") {
  const json good = {{"F", 0.1}, {"J", 1.0}, {"beta", 1.0}, {"N", 10}};
  CHECK_NOTHROW(io::model_from_json(good));
  auto extra = good;
  extra["temperature"] = 3;
  CHECK_THROWS_AS(io::model_from_json(extra), InvalidArgument);
  auto wrong_type = good;
  wrong_type["N"] = "ten";
  CHECK_THROWS_AS(io::model_from_json(wrong_type), InvalidArgument);
  auto fractional = good;
  fractional["N"] = 10.5;
  CHECK_THROWS_AS(io::model_from_json(fractional), InvalidArgument);
  auto bad_family = good;
  bad_family["family"] = "glauber";
  CHECK_THROWS_AS(io::model_from_json(bad_family), InvalidArgument);
  auto zero_gamma = good;
  zero_gamma["gamma"] = 0.0;
  CHECK_THROWS_AS(io::model_from_json(zero_gamma), InvalidArgument);
  const auto frozen = io::model_from_json(zero_gamma, true);
  for (double r : io::rate_table(frozen).birth) CHECK(r == 0.0);
}

TEST_CASE("run config parsing") {
  const json j = json::parse(R"({
    "model": {"F": 0.0, "J": 10.0, "beta": 1.0, "gamma": 1.0, "N": 100},
    "initial": {"n0": 50},
    "times": [0.1, 1, 10],
    "simulate": {"E": 2500, "dt": 0.1, "t_max": 10},
    "schedule": {"breakpoints": [5, 10], "values": [0.1, -0.1]},
    "calibrate": {"data": "d.csv", "sidecar": "d.json", "bounds": {"F": [-1, 1]}, "truth": {"F": 0.1, "J": 1, "gamma": 1}},
    "seed": 18446744073709551615,
    "out": "o",
    "plot": true
  })");
  const auto c = io::config_from_json(j, "/base");
  CHECK(c.has_model);
  CHECK(c.times == std::vector<double>{0.1, 1, 10});
  CHECK(c.ensemble == 2500);
  CHECK(c.seed == 18446744073709551615ULL);
  CHECK(c.plot);
  CHECK(c.data == "/base/d.csv");
  CHECK(c.bounds.F == std::array<double, 2>{-1, 1});
  REQUIRE(c.truth.has_value());
  CHECK(c.schedule->values.size() == 2);
  CHECK(c.initial_condition().n0 == 50);

  for (const char* bad : {R"({"model": {"F": 0, "J": 1, "beta": 1, "N": 5}, "colour": 1})",
                          R"({"initial": {"n0": 1, "p0": 0.5}})",
                          R"({"simulate": {"E": 1, "dt": 0.3, "t_max": 1}})",
                          R"({"simulate": {"E": 0, "dt": 0.5, "t_max": 1}})",
                          R"({"times": [-1]})",
                          R"({"calibrate": {"data": "x.csv"}})",
                          R"({"seed": -3})"}) {
    CHECK_THROWS_AS(io::config_from_json(json::parse(bad)), InvalidArgument);
  }
}

TEST_CASE("numbers are written in shortest round-trip form") {
  CHECK(io::format_number(0.1) == "0.1");
  CHECK(io::format_number(1e-300) == "1e-300");
  CHECK(io::format_number(2.0) == "2");
  const double x = 0.49870549827969485;
  CHECK(std::stod(io::format_number(x)) == x);
}

TEST_CASE("distribution CSV round trip") {
  std::vector<DistributionVector> series(2);
  series[0].time = 0.5;
  series[0].probs = {0.25, 0.5, 0.25};
  series[1].time = 10;
  series[1].probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::ostringstream out;
  io::write_distributions(out, series);
  CHECK(out.str().rfind("t,n,m,prob\n0.5,0,-1,0.25\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = io::read_distributions(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].probs == series[1].probs);
  std::ostringstream again;
  io::write_distributions(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("trajectory, statistics and histogram CSV headers") {
  Trajectory tr;
  tr.N = 4;
  tr.dt = 0.5;
  tr.states = {2, 3, 4};
  std::vector<Trajectory> trs{tr, tr};
  std::ostringstream a, b, c;
  io::write_trajectories(a, trs);
  CHECK(a.str().rfind("traj_id,t,n,m\n0,0,2,0\n0,0.5,3,0.5\n", 0) == 0);
  const auto stats = summarize(trs);
  io::write_ensemble_stats(b, stats);
  CHECK(b.str().rfind("t,mean_n,var_n,mean_m,var_m\n0,2,0,0,0\n", 0) == 0);
  io::write_histogram(c, stats);
  CHECK(c.str().rfind("t,n,m,freq\n0,0,-1,0\n", 0) == 0);
}

TEST_CASE("dataset reader") {
  const json side = io::dataset_sidecar(4);
  SUBCASE("extra columns are ignored and trajectories keep their order") {
    std::istringstream in("traj_id,t,n,m\nb,0,2,0\nb,1,3,0.5\na,0,0,-1\na,2,4,1\n");
    const auto d = io::read_dataset(in, side);
    REQUIRE(d.trajectories.size() == 2);
    CHECK(d.trajectories[0].states == std::vector<int>{2, 3});
    CHECK(d.trajectories[1].times == std::vector<double>{0, 2});
  }
  SUBCASE("simulate output feeds calibration") {
    Trajectory tr;
    tr.N = 4;
    tr.dt = 1;
    tr.states = {2, 1, 0};
    std::ostringstream out;
    io::write_trajectories(out, std::vector<Trajectory>{tr});
    std::istringstream in(out.str());
    CHECK(io::read_dataset(in, side).trajectories[0].states == tr.states);
  }
  SUBCASE("errors name the line") {
    std::istringstream bad_m("traj_id,t,m\n0,0,0\n0,1,0.3\n");
    try {
      io::read_dataset(bad_m, side);
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::istringstream bad_t("traj_id,t,m\n0,1,0\n0,0,0\n");
    CHECK_THROWS_AS(io::read_dataset(bad_t, side), InvalidArgument);
    std::istringstream bad_num("traj_id,t,m\n0,x,0\n0,1,0\n");
    CHECK_THROWS_AS(io::read_dataset(bad_num, side), InvalidArgument);
    std::istringstream lonely("traj_id,t,m\n0,0,0\n");
    CHECK_THROWS_AS(io::read_dataset(lonely, side), InvalidArgument);
    std::istringstream no_col("id,t,m\n0,0,0\n");
    CHECK_THROWS_AS(io::read_dataset(no_col, side), InvalidArgument);
  }
  SUBCASE("sidecar must fix beta and alpha") {
    std::istringstream in("traj_id,t,m\n0,0,0\n0,1,0\n");
    CHECK_THROWS_AS(io::read_dataset(in, json{{"N", 4}, {"beta", 2.0}, {"alpha", 0.0}}), InvalidArgument);
  }
}

TEST_CASE("result JSON") {
  CalibrationResult r;
  r.theta_star = {0.05, 1.5, 1.0};
  r.nll = 12.5;
  r.evaluations = 7;
  r.seed = 3;
  const json without = io::to_json(r, std::nullopt);
  CHECK_FALSE(without.contains("E_tot"));
  CHECK_FALSE(without.contains("f"));
  const json with = io::to_json(r, Theta{0.025, 1.5, 1.0});
  CHECK(with.at("E_tot").get<double>() == doctest::Approx(1.0));
  CHECK(with.at("f").get<double>() == doctest::Approx(1.0));
  CHECK(json::parse(with.dump(2)) == with);
}

}  // TEST_SUITE
