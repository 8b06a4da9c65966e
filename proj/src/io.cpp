#include "bdm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bdm/error.hpp"

namespace bdm::io {

namespace {

// Typed access to a JSON object that rejects keys nobody asked about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidArgument(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const std::string& key) {
    if (!has(key)) throw InvalidArgument(where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }
  double number(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number()) throw InvalidArgument(where_ + ": '" + key + "' must be a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }
  long long integer(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number_integer()) throw InvalidArgument(where_ + ": '" + key + "' must be an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw InvalidArgument(where_ + ": '" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw InvalidArgument(where_ + ": '" + key + "' must be true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw InvalidArgument(where_ + ": '" + key + "' must be a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_array()) throw InvalidArgument(where_ + ": '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw InvalidArgument(where_ + ": '" + key + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::array<double, 2> range(const std::string& key, std::array<double, 2> fallback) {
    if (!has(key)) return fallback;
    const auto v = numbers(key);
    if (v.size() != 2) throw InvalidArgument(where_ + ": '" + key + "' must be [lo, hi]");
    return {v[0], v[1]};
  }

  // Call after all reads.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidArgument(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

int to_int(long long v, const std::string& what) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw InvalidArgument(what + " out of range");
  }
  return static_cast<int>(v);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& cell, const std::string& where) {
  const std::string s = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw InvalidArgument(where + ": '" + s + "' is not a number");
  }
  return v;
}

std::map<std::string, size_t> header_index(const std::string& line) {
  std::map<std::string, size_t> idx;
  const auto cells = split_csv(line);
  for (size_t i = 0; i < cells.size(); ++i) idx[trim(cells[i])] = i;
  return idx;
}

}  // namespace

json to_json(const ModelSpec& spec) {
  const auto& p = spec.params;
  json j = {{"F", p.F}, {"J", p.J}, {"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"N", p.N}};
  if (std::holds_alternative<Logit>(spec.family)) {
    j["family"] = "logit";
  } else if (std::holds_alternative<Arrhenius>(spec.family)) {
    j["family"] = "arrhenius";
  } else {
    const auto& k = std::get<Kirman>(spec.family);
    j["family"] = "kirman";
    j["epsilon"] = k.epsilon;
    j["mu"] = k.mu;
  }
  return j;
}

ModelSpec model_from_json(const json& j, bool allow_zero_gamma) {
  StrictObject o(j, "model");
  ModelSpec spec;
  auto& p = spec.params;
  const std::string family = o.string("family", "logit");
  p.N = to_int(o.integer("N"), "N");
  if (family == "kirman") {
    Kirman k;
    k.epsilon = o.number("epsilon");
    k.mu = o.number("mu");
    if (!(k.epsilon > 0.0)) throw InvalidArgument("model: epsilon must be > 0");
    if (!(k.mu >= 0.0)) throw InvalidArgument("model: mu must be >= 0");
    spec.family = k;
    p.F = o.number("F", 0.0);
    p.J = o.number("J", 0.0);
    p.alpha = o.number("alpha", 0.0);
    p.beta = o.number("beta", 0.0);
    p.gamma = o.number("gamma", 1.0);
  } else if (family == "logit" || family == "arrhenius") {
    spec.family = family == "logit" ? RateFamily{Logit{}} : RateFamily{Arrhenius{}};
    p.F = o.number("F");
    p.J = o.number("J");
    p.alpha = o.number("alpha", 0.0);
    p.beta = o.number("beta");
    p.gamma = o.number("gamma", 1.0);
  } else {
    throw InvalidArgument("model: family must be logit, arrhenius or kirman");
  }
  o.finish();
  if (allow_zero_gamma && p.gamma == 0.0) {
    ModelParams q = p;
    q.gamma = 1.0;
    q.validate();
  } else {
    p.validate();
  }
  return spec;
}

RateTable rate_table(const ModelSpec& spec) {
  if (spec.params.gamma != 0.0) return build_rate_table(spec.params, spec.family);
  ModelParams q = spec.params;
  q.gamma = 1.0;
  RateTable r = build_rate_table(q, spec.family);
  std::fill(r.birth.begin(), r.birth.end(), 0.0);
  std::fill(r.death.begin(), r.death.end(), 0.0);
  return r;
}

json to_json(const ZeitgeistSchedule& schedule) {
  return {{"breakpoints", schedule.breakpoints}, {"values", schedule.values}};
}

ZeitgeistSchedule schedule_from_json(const json& j) {
  StrictObject o(j, "schedule");
  ZeitgeistSchedule s;
  s.breakpoints = o.numbers("breakpoints");
  s.values = o.numbers("values");
  o.finish();
  s.validate();
  return s;
}

InitialCondition RunConfig::initial_condition() const {
  if (p0) return InitialCondition::bernoulli(*p0);
  return InitialCondition::fixed(n0.value_or(model.params.N / 2));
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  StrictObject o(j, "config");
  RunConfig c;
  if (o.has("model")) {
    c.model = model_from_json(o.at("model"), true);
    c.has_model = true;
  }
  if (o.has("schedule")) c.schedule = schedule_from_json(o.at("schedule"));
  if (o.has("times")) {
    c.times = o.numbers("times");
    for (double t : c.times) {
      if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("config: times must be finite and >= 0");
    }
  }
  if (o.has("initial")) {
    StrictObject init(o.at("initial"), "initial");
    if (init.has("n0")) c.n0 = to_int(init.integer("n0"), "n0");
    if (init.has("p0")) c.p0 = init.number("p0");
    init.finish();
    if (c.n0 && c.p0) throw InvalidArgument("initial: give n0 or p0, not both");
    if (c.n0 && c.has_model && (*c.n0 < 0 || *c.n0 > c.model.params.N)) throw InvalidArgument("initial: n0 outside [0, N]");
    if (c.p0 && !(*c.p0 >= 0.0 && *c.p0 <= 1.0)) throw InvalidArgument("initial: p0 must lie in [0, 1]");
  }
  c.write_steady = o.boolean("steady", false);
  if (o.has("simulate")) {
    StrictObject s(o.at("simulate"), "simulate");
    c.ensemble = to_int(s.integer("E"), "E");
    c.dt = s.number("dt");
    c.t_max = s.number("t_max");
    s.finish();
    if (c.ensemble < 1) throw InvalidArgument("simulate: E must be >= 1");
    grid_steps(c.t_max, c.dt);
  }
  if (o.has("calibrate")) {
    StrictObject s(o.at("calibrate"), "calibrate");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
    };
    c.data = resolve(s.string("data", ""));
    c.sidecar = resolve(s.string("sidecar", ""));
    if (s.string("data", "").empty() || s.string("sidecar", "").empty()) {
      throw InvalidArgument("calibrate: 'data' and 'sidecar' paths are required");
    }
    c.pop_size = to_int(s.integer("pop_size", c.pop_size), "pop_size");
    c.steps = to_int(s.integer("steps", c.steps), "steps");
    c.threads = to_int(s.integer("threads", c.threads), "threads");
    if (s.has("bounds")) {
      StrictObject b(s.at("bounds"), "bounds");
      c.bounds.F = b.range("F", c.bounds.F);
      c.bounds.J = b.range("J", c.bounds.J);
      c.bounds.gamma = b.range("gamma", c.bounds.gamma);
      b.finish();
      c.bounds.validate();
    }
    if (s.has("truth")) {
      StrictObject t(s.at("truth"), "truth");
      c.truth = Theta{t.number("F"), t.number("J"), t.number("gamma")};
      t.finish();
    }
    s.finish();
    if (c.pop_size < 8) throw InvalidArgument("calibrate: pop_size must be >= 8");
    if (c.steps < 1) throw InvalidArgument("calibrate: steps must be >= 1");
    if (c.threads < 1) throw InvalidArgument("calibrate: threads must be >= 1");
  }
  c.seed = o.unsigned_integer("seed", 0);
  c.out = o.string("out", ".");
  c.plot = o.boolean("plot", false);
  o.finish();
  return c;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path), path.parent_path());
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string format_number(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

void write_distributions(std::ostream& os, std::span<const DistributionVector> series) {
  os << "t,n,m,prob\n";
  for (const auto& d : series) {
    const int N = d.N();
    for (int n = 0; n <= N; ++n) {
      os << format_number(d.time) << ',' << n << ',' << format_number(order_parameter(n, N)) << ','
         << format_number(d.probs[n]) << '\n';
    }
  }
}

std::vector<DistributionVector> read_distributions(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "t,n,m,prob") throw InvalidArgument("expected header t,n,m,prob");
  std::vector<DistributionVector> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw InvalidArgument(where + ": expected 4 columns");
    const double t = parse_double(cells[0], where);
    const double n = parse_double(cells[1], where);
    const double p = parse_double(cells[3], where);
    if (out.empty() || out.back().time != t) {
      out.emplace_back();
      out.back().time = t;
    }
    if (n != static_cast<double>(out.back().probs.size())) throw InvalidArgument(where + ": states out of order");
    out.back().probs.push_back(p);
  }
  return out;
}

void write_trajectories(std::ostream& os, std::span<const Trajectory> trajectories) {
  os << "traj_id,t,n,m\n";
  for (size_t j = 0; j < trajectories.size(); ++j) {
    const auto& tr = trajectories[j];
    for (int k = 0; k <= tr.M(); ++k) {
      os << j << ',' << format_number(tr.time(k)) << ',' << tr.states[k] << ','
         << format_number(order_parameter(tr.states[k], tr.N)) << '\n';
    }
  }
}

void write_ensemble_stats(std::ostream& os, const EnsembleStats& stats) {
  os << "t,mean_n,var_n,mean_m,var_m\n";
  const double N = stats.N;
  for (size_t k = 0; k < stats.mean.size(); ++k) {
    const double mn = stats.mean[k];
    const double vn = stats.variance[k];
    os << format_number(stats.time(static_cast<int>(k))) << ',' << format_number(mn) << ',' << format_number(vn)
       << ',' << format_number((2.0 * mn - N) / N) << ',' << format_number(4.0 * vn / (N * N)) << '\n';
  }
}

void write_histogram(std::ostream& os, const EnsembleStats& stats) {
  os << "t,n,m,freq\n";
  for (size_t k = 0; k < stats.distributions.size(); ++k) {
    const auto& d = stats.distributions[k];
    for (int n = 0; n <= stats.N; ++n) {
      os << format_number(d.time) << ',' << n << ',' << format_number(order_parameter(n, stats.N)) << ','
         << format_number(d.probs[n]) << '\n';
    }
  }
}

json to_json(const MetastabilityReport& report, double lambda2_spectral) {
  const auto& p = report.passage;
  const auto& e = report.equilibria;
  json tau = json::array();
  for (double v : p.tau) tau.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return {{"equilibria", {{"n_minus", e.n_minus}, {"n_u", e.n_u}, {"n_plus", e.n_plus}}},
          {"tau", tau},
          {"tau_lr", p.tau_lr},
          {"tau_rl", p.tau_rl},
          {"phi_R", p.phi_R},
          {"lambda2_approx", p.lambda2_approx},
          {"lambda2_spectral", -lambda2_spectral},
          {"lambda2_inv_approx", 1.0 / p.lambda2_approx},
          {"lambda2_inv_spectral", -1.0 / lambda2_spectral}};
}

void write_tau_curve(std::ostream& os, const FirstPassageResult& passage) {
  os << "n,m,tau,log_tau\n";
  const int N = static_cast<int>(passage.tau.size()) - 1;
  for (int n = 0; n <= N; ++n) {
    os << n << ',' << format_number(order_parameter(n, N)) << ',' << format_number(passage.tau[n]) << ','
       << format_number(passage.log_tau[n]) << '\n';
  }
}

void write_fixation_curve(std::ostream& os, const MetastabilityReport& report) {
  os << "n,m,phi\n";
  const int N = static_cast<int>(report.passage.tau.size()) - 1;
  for (size_t k = 0; k < report.fixation.size(); ++k) {
    const int n = report.equilibria.n_minus + static_cast<int>(k);
    os << n << ',' << format_number(order_parameter(n, N)) << ',' << format_number(report.fixation[k]) << '\n';
  }
}

json to_json(const CalibrationResult& result, const std::optional<Theta>& truth) {
  json j = {{"F", result.theta_star.F},   {"J", result.theta_star.J}, {"gamma", result.theta_star.gamma},
            {"nll", result.nll},          {"seed", result.seed},      {"evaluations", result.evaluations}};
  if (truth) {
    const auto m = error_metrics(*truth, result.theta_star);
    j["E_tot"] = m.E_tot;
    j["f"] = m.f;
  }
  return j;
}

Dataset read_dataset(std::istream& csv, const json& sidecar) {
  StrictObject o(sidecar, "dataset sidecar");
  const int N = to_int(o.integer("N"), "N");
  const double beta = o.number("beta", 1.0);
  const double alpha = o.number("alpha", 0.0);
  o.finish();
  if (beta != 1.0 || alpha != 0.0) {
    throw InvalidArgument("dataset sidecar: calibration fixes beta = 1 and alpha = 0");
  }

  std::string line;
  if (!std::getline(csv, line)) throw InvalidArgument("dataset: empty file");
  const auto idx = header_index(line);
  for (const char* col : {"traj_id", "t", "m"}) {
    if (!idx.count(col)) throw InvalidArgument(std::string("dataset: header lacks column '") + col + "'");
  }
  const size_t c_id = idx.at("traj_id"), c_t = idx.at("t"), c_m = idx.at("m");
  const size_t width = std::max({c_id, c_t, c_m}) + 1;

  std::map<std::string, size_t> slot;
  std::vector<std::vector<double>> times, ms;
  int lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "dataset line " + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() < width) throw InvalidArgument(where + ": too few columns");
    const std::string id = trim(cells[c_id]);
    if (id.empty()) throw InvalidArgument(where + ": empty traj_id");
    auto [it, fresh] = slot.emplace(id, times.size());
    if (fresh) {
      times.emplace_back();
      ms.emplace_back();
    }
    const double t = parse_double(cells[c_t], where);
    const double m = parse_double(cells[c_m], where);
    auto& tv = times[it->second];
    if (!tv.empty() && t < tv.back()) throw InvalidArgument(where + ": time decreases within trajectory " + id);
    const double x = N * (m + 1.0) / 2.0;
    if (!std::isfinite(x) || std::fabs(x - std::round(x)) > 1e-9 || x < -0.5 || x > N + 0.5) {
      throw InvalidArgument(where + ": m = " + trim(cells[c_m]) + " does not map to an integer n in [0, N]");
    }
    tv.push_back(t);
    ms[it->second].push_back(m);
  }
  if (times.empty()) throw InvalidArgument("dataset: no rows");
  for (size_t k = 0; k < times.size(); ++k) {
    if (times[k].size() < 2) throw InvalidArgument("dataset: a trajectory has fewer than two points");
  }
  return Dataset::from_readings(N, times, ms);
}

Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
  std::ifstream in(csv);
  if (!in) throw InvalidArgument("cannot open " + csv.string());
  return read_dataset(in, read_json(sidecar));
}

json dataset_sidecar(int N) { return {{"N", N}, {"beta", 1.0}, {"alpha", 0.0}}; }

}  // namespace bdm::io
