// bdm: solve, simulate, analyze and calibrate the mean-field binary decision
// model from a JSON run config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bdm/calibrate.hpp"
#include "bdm/error.hpp"
#include "bdm/io.hpp"
#include "bdm/metastability.hpp"
#include "bdm/simulate.hpp"
#include "bdm/spectral.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace bdm;
using bdm::io::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool plot = false;
};

struct Context {
  io::RunConfig cfg;
  fs::path out;

  std::ofstream open(const std::string& name) const {
    std::ofstream f(out / name);
    if (!f) throw InvalidArgument("cannot write " + (out / name).string());
    return f;
  }
  std::string path(const std::string& name) const { return (out / name).string(); }
};

Context load(const Options& opt) {
  Context ctx;
  ctx.cfg = io::load_config(opt.config);
  if (!opt.out.empty()) ctx.cfg.out = opt.out;
  if (opt.seed_given) ctx.cfg.seed = opt.seed;
  if (opt.plot) ctx.cfg.plot = true;
  ctx.out = fs::path(ctx.cfg.out);
  if (ctx.out.is_relative() && opt.out.empty()) ctx.out = fs::path(opt.config).parent_path() / ctx.out;
  fs::create_directories(ctx.out);
  return ctx;
}

const ModelParams& need_model(const io::RunConfig& cfg) {
  if (!cfg.has_model) throw InvalidArgument("config: missing key 'model'");
  return cfg.model.params;
}

std::vector<double> m_axis(int N) {
  std::vector<double> m(N + 1);
  for (int n = 0; n <= N; ++n) m[n] = order_parameter(n, N);
  return m;
}

DistributionVector initial_distribution(const io::RunConfig& cfg) {
  const int N = cfg.model.params.N;
  if (cfg.p0) return binomial_distribution(N, *cfg.p0);
  return point_mass(N, cfg.n0.value_or(N / 2));
}

void write_steady(const Context& ctx, const DistributionVector& steady) {
  auto f = ctx.open("steady.csv");
  f << "n,m,prob\n";
  for (int n = 0; n <= steady.N(); ++n) {
    f << n << ',' << io::format_number(order_parameter(n, steady.N())) << ',' << io::format_number(steady.probs[n])
      << '\n';
  }
}

int cmd_solve(const Options& opt) {
  const auto ctx = load(opt);
  const auto& cfg = ctx.cfg;
  const auto& params = need_model(cfg);
  if (cfg.times.empty()) throw InvalidArgument("config: solve needs a non-empty 'times' list");
  const auto q0 = initial_distribution(cfg);
  std::vector<DistributionVector> series;
  if (cfg.schedule) {
    for (double t : cfg.times) series.push_back(evolve_piecewise(*cfg.schedule, params, cfg.model.family, q0, t));
  } else {
    const auto rates = build_rate_table(params, cfg.model.family);
    const TransitionKernel kernel(rates);
    for (double t : cfg.times) series.push_back(kernel.evolve(q0, t));
  }
  {
    auto f = ctx.open("distribution.csv");
    io::write_distributions(f, series);
  }
  if (cfg.write_steady) {
    if (cfg.schedule) throw InvalidArgument("config: 'steady' is undefined under a zeitgeist schedule");
    write_steady(ctx, steady_state(build_rate_table(params, cfg.model.family)));
  }
  if (cfg.plot) {
    tools::Chart chart{"P(m, t)", "m", "probability", false, {}};
    const auto m = m_axis(params.N);
    for (const auto& d : series) chart.series.push_back({"t = " + io::format_number(d.time), m, d.probs, true});
    tools::write_svg(ctx.path("evolution.svg"), chart);
  }
  return 0;
}

int cmd_steady(const Options& opt) {
  const auto ctx = load(opt);
  const auto& params = need_model(ctx.cfg);
  const auto steady = steady_state(build_rate_table(params, ctx.cfg.model.family));
  write_steady(ctx, steady);
  if (ctx.cfg.plot) {
    tools::write_svg(ctx.path("steady.svg"),
                     {"steady state", "m", "probability", false, {{"P_s", m_axis(params.N), steady.probs, true}}});
  }
  return 0;
}

int cmd_simulate(const Options& opt) {
  const auto ctx = load(opt);
  const auto& cfg = ctx.cfg;
  const auto& params = need_model(cfg);
  if (!(cfg.t_max > 0.0)) throw InvalidArgument("config: simulate needs a 'simulate' block with t_max > 0");
  const auto init = cfg.initial_condition();
  std::vector<Trajectory> runs;
  runs.reserve(cfg.ensemble);
  if (cfg.schedule) {
    if (params.gamma == 0.0) throw InvalidArgument("config: gamma = 0 is not supported with a schedule");
    for (int i = 0; i < cfg.ensemble; ++i) {
      runs.push_back(simulate_piecewise(*cfg.schedule, params, cfg.model.family, init, cfg.t_max, cfg.dt,
                                        trajectory_seed(cfg.seed, i)));
    }
  } else {
    const auto rates = io::rate_table(cfg.model);
    for (int i = 0; i < cfg.ensemble; ++i) {
      runs.push_back(simulate(rates, init, cfg.t_max, cfg.dt, trajectory_seed(cfg.seed, i)));
    }
  }
  const auto stats = summarize(runs);
  {
    auto f = ctx.open("trajectories.csv");
    io::write_trajectories(f, runs);
  }
  {
    auto f = ctx.open("ensemble_stats.csv");
    io::write_ensemble_stats(f, stats);
  }
  {
    auto f = ctx.open("histogram.csv");
    io::write_histogram(f, stats);
  }
  io::write_json(ctx.path("dataset.json"), {{"N", params.N}, {"beta", params.beta}, {"alpha", params.alpha}});
  if (cfg.plot) {
    tools::Chart chart{"SSA trajectories", "t", "m", false, {}};
    std::vector<double> t(stats.mean.size());
    for (size_t k = 0; k < t.size(); ++k) t[k] = stats.time(static_cast<int>(k));
    for (size_t i = 0; i < runs.size() && i < 8; ++i) {
      std::vector<double> m(runs[i].states.size());
      for (size_t k = 0; k < m.size(); ++k) m[k] = order_parameter(runs[i].states[k], params.N);
      chart.series.push_back({"run " + std::to_string(i), t, m, false});
    }
    std::vector<double> mean_m(t.size());
    for (size_t k = 0; k < t.size(); ++k) mean_m[k] = (2.0 * stats.mean[k] - params.N) / params.N;
    chart.series.push_back({"ensemble mean", t, mean_m, false});
    tools::write_svg(ctx.path("trajectories.svg"), chart);
  }
  return 0;
}

int cmd_metastability(const Options& opt) {
  const auto ctx = load(opt);
  const auto& params = need_model(ctx.cfg);
  const auto rates = build_rate_table(params, ctx.cfg.model.family);
  MetastabilityReport report;
  try {
    report = analyze_metastability(rates);
  } catch (const PreconditionError& e) {
    throw PreconditionError(std::string("no metastability: ") + e.what());
  }
  const auto spectrum = compute_spectrum(rates);
  io::write_json(ctx.path("fpt.json"), io::to_json(report, spectrum.lambda2()));
  {
    auto f = ctx.open("tau_curve.csv");
    io::write_tau_curve(f, report.passage);
  }
  {
    auto f = ctx.open("fixation_curve.csv");
    io::write_fixation_curve(f, report);
  }
  if (ctx.cfg.plot) {
    tools::write_svg(ctx.path("tau_curve.svg"),
                     {"mean first passage time to m_u", "m", "tau", true,
                      {{"tau", m_axis(params.N), report.passage.tau, false}}});
  }
  return 0;
}

int cmd_calibrate(const Options& opt) {
  const auto ctx = load(opt);
  const auto& cfg = ctx.cfg;
  if (cfg.data.empty()) throw InvalidArgument("config: calibrate needs a 'calibrate' block");
  const auto data = io::load_dataset(cfg.data, cfg.sidecar);
  DEConfig de;
  de.pop_size = cfg.pop_size;
  de.steps = cfg.steps;
  de.seed = cfg.seed;
  de.threads = cfg.threads;
  const auto result = calibrate(data, cfg.bounds, de);
  io::write_json(ctx.path("calibration.json"), io::to_json(result, cfg.truth));
  if (cfg.plot) {
    std::vector<double> step(result.best_history.size());
    for (size_t k = 0; k < step.size(); ++k) step[k] = static_cast<double>(k);
    tools::write_svg(ctx.path("convergence.svg"),
                     {"best negative log-likelihood", "generation", "NLL", false,
                      {{"best", step, result.best_history, false}}});
  }
  return 0;
}

int cmd_equilibria(const Options& opt) {
  const auto ctx = load(opt);
  const auto& params = need_model(ctx.cfg);
  json roots = json::array();
  for (const auto& r : mean_field_equilibria(params).roots) roots.push_back({{"m", r.m}, {"stable", r.stable}});
  json out = {{"mean_field", roots}};
  try {
    out["beta_c"] = critical_rationality(params);
  } catch (const PreconditionError&) {
    out["beta_c"] = nullptr;
  }
  const auto steady = steady_state(build_rate_table(params, ctx.cfg.model.family));
  out["steady_modes"] = count_modes(steady);
  try {
    const auto e = find_equilibria(steady);
    out["steady_equilibria"] = {{"n_minus", e.n_minus}, {"n_u", e.n_u}, {"n_plus", e.n_plus}};
  } catch (const PreconditionError&) {
    out["steady_equilibria"] = nullptr;
  }
  io::write_json(ctx.path("equilibria.json"), out);
  return 0;
}

int cmd_spectrum(const Options& opt) {
  const auto ctx = load(opt);
  const auto& params = need_model(ctx.cfg);
  const auto spectrum = compute_spectrum(build_rate_table(params, ctx.cfg.model.family));
  {
    auto f = ctx.open("spectrum.csv");
    f << "k,lambda\n";
    for (size_t k = 0; k < spectrum.eigenvalues.size(); ++k) {
      f << k + 1 << ',' << io::format_number(spectrum.eigenvalues[k]) << '\n';
    }
  }
  json out = {{"lambda2", spectrum.lambda2()}, {"spread", spectrum.spread()}};
  out["relaxation_time"] = spectrum.lambda2() < 0.0 ? json(-1.0 / spectrum.lambda2()) : json(nullptr);
  io::write_json(ctx.path("spectrum.json"), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field binary decision model: exact distributions, simulation, metastability and calibration"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"solve", "time-dependent distributions at the configured times", cmd_solve},
      {"steady", "steady-state distribution", cmd_steady},
      {"simulate", "SSA trajectories and ensemble statistics", cmd_simulate},
      {"metastability", "first passage times, fixation and relaxation estimates", cmd_metastability},
      {"calibrate", "maximum-likelihood parameters from a trajectory dataset", cmd_calibrate},
      {"equilibria", "mean-field and steady-state equilibria", cmd_equilibria},
      {"spectrum", "eigenvalues of the master operator", cmd_spectrum},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "JSON run config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
    sub->add_option("--seed", opt.seed, "random seed (overrides the config)");
    sub->add_flag("--plot", opt.plot, "also write SVG plots");
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      opt.seed_given = sub->count("--seed") > 0;
      return cmd->run(opt);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const io::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
