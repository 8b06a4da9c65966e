#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bdm/calibrate.hpp"
#include "bdm/error.hpp"
#include "bdm/metastability.hpp"
#include "bdm/model.hpp"
#include "bdm/simulate.hpp"
#include "bdm/spectral.hpp"

namespace py = pybind11;
using namespace bdm;

namespace {

RateFamily family_from(const std::string& name, double epsilon, double mu) {
  if (name == "logit") return Logit{};
  if (name == "arrhenius") return Arrhenius{};
  if (name == "kirman") return Kirman{epsilon, mu};
  throw InvalidArgument("unknown rate family: " + name);
}

ModelParams make_params(double F, double J, double alpha, double beta, double gamma, int N) {
  ModelParams p;
  p.F = F;
  p.J = J;
  p.alpha = alpha;
  p.beta = beta;
  p.gamma = gamma;
  p.N = N;
  p.validate();
  return p;
}

InitialCondition initial_from(py::object n0, py::object p0) {
  if (!n0.is_none() && !p0.is_none()) throw InvalidArgument("give n0 or p0, not both");
  if (!p0.is_none()) return InitialCondition::bernoulli(p0.cast<double>());
  if (n0.is_none()) throw InvalidArgument("an initial condition (n0 or p0) is required");
  return InitialCondition::fixed(n0.cast<int>());
}

py::dict stats_dict(const EnsembleStats& s) {
  std::vector<std::vector<double>> hist;
  hist.reserve(s.distributions.size());
  for (const auto& d : s.distributions) hist.push_back(d.probs);
  py::dict out;
  out["N"] = s.N;
  out["E"] = s.E;
  out["dt"] = s.dt;
  out["mean"] = s.mean;
  out["variance"] = s.variance;
  out["histograms"] = hist;
  return out;
}

}  // namespace

PYBIND11_MODULE(_bdm, m) {
  m.doc() = "Mean-field binary decision model: exact master equation solution, SSA and calibration.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init(&make_params), py::arg("F") = 0.0, py::arg("J") = 0.0, py::arg("alpha") = 0.0,
           py::arg("beta") = 0.0, py::arg("gamma") = 1.0, py::arg("N") = 1)
      .def_readwrite("F", &ModelParams::F)
      .def_readwrite("J", &ModelParams::J)
      .def_readwrite("alpha", &ModelParams::alpha)
      .def_readwrite("beta", &ModelParams::beta)
      .def_readwrite("gamma", &ModelParams::gamma)
      .def_readwrite("N", &ModelParams::N)
      .def("__repr__", [](const ModelParams& p) {
        return py::str("ModelParams(F={}, J={}, alpha={}, beta={}, gamma={}, N={})")
            .format(p.F, p.J, p.alpha, p.beta, p.gamma, p.N);
      });

  py::class_<RateTable>(m, "RateTable")
      .def_readonly("N", &RateTable::N)
      .def_readonly("birth", &RateTable::birth)
      .def_readonly("death", &RateTable::death);

  m.def("order_parameter", &order_parameter, py::arg("n"), py::arg("N"));
  m.def("gain", &gain, py::arg("params"), py::arg("s"), py::arg("n"));
  m.def(
      "rate_table",
      [](const ModelParams& p, const std::string& family, double epsilon, double mu) {
        return build_rate_table(p, family_from(family, epsilon, mu));
      },
      py::arg("params"), py::arg("family") = "logit", py::arg("epsilon") = 0.0, py::arg("mu") = 0.0);
  m.def("critical_rationality", &critical_rationality, py::arg("params"));
  m.def(
      "mean_field_equilibria",
      [](const ModelParams& p) {
        std::vector<std::pair<double, bool>> out;
        for (const auto& r : mean_field_equilibria(p).roots) out.emplace_back(r.m, r.stable);
        return out;
      },
      py::arg("params"), "Roots m of the deterministic rate equation as (m, stable) pairs.");

  m.def(
      "steady_state", [](const RateTable& r) { return steady_state(r).probs; }, py::arg("rates"));
  m.def(
      "spectrum", [](const RateTable& r) { return compute_spectrum(r).eigenvalues; }, py::arg("rates"),
      "Eigenvalues of the generator, descending, the first pinned to 0.");

  py::class_<TransitionKernel>(m, "TransitionKernel")
      .def(py::init([](const RateTable& r) { return TransitionKernel(r, compute_spectrum(r)); }), py::arg("rates"))
      .def_property_readonly("precision_bits", &TransitionKernel::precision_bits)
      .def(
          "from_state", [](const TransitionKernel& k, int n0, double t) { return k.from_state(n0, t).probs; },
          py::arg("n0"), py::arg("t"))
      .def(
          "evolve",
          [](const TransitionKernel& k, std::vector<double> q0, double t) {
            DistributionVector d;
            d.probs = std::move(q0);
            return k.evolve(d, t).probs;
          },
          py::arg("q0"), py::arg("t"))
      .def("probability", &TransitionKernel::probability, py::arg("n"), py::arg("n0"), py::arg("t"));

  m.def(
      "evolve_piecewise",
      [](const std::vector<double>& breakpoints, const std::vector<double>& values, const ModelParams& base,
         std::vector<double> q0, double t) {
        DistributionVector d;
        d.probs = std::move(q0);
        return evolve_piecewise(ZeitgeistSchedule{breakpoints, values}, base, Logit{}, d, t).probs;
      },
      py::arg("breakpoints"), py::arg("values"), py::arg("base"), py::arg("q0"), py::arg("t"));
  m.def("total_variation", [](const std::vector<double>& p, const std::vector<double>& q) {
    return total_variation(p, q);
  });

  m.def(
      "simulate",
      [](const RateTable& r, double t_max, double dt, std::uint64_t seed, py::object n0, py::object p0) {
        return simulate(r, initial_from(n0, p0), t_max, dt, seed).states;
      },
      py::arg("rates"), py::arg("t_max"), py::arg("dt"), py::arg("seed") = 0, py::kw_only(),
      py::arg("n0") = py::none(), py::arg("p0") = py::none(), "One SSA path sampled on the grid k dt.");
  m.def(
      "simulate_ensemble",
      [](const RateTable& r, double t_max, double dt, int E, std::uint64_t seed, py::object n0, py::object p0) {
        const auto init = initial_from(n0, p0);
        EnsembleStats s;
        {
          py::gil_scoped_release release;
          s = simulate_ensemble(r, init, t_max, dt, E, seed);
        }
        return stats_dict(s);
      },
      py::arg("rates"), py::arg("t_max"), py::arg("dt"), py::arg("E"), py::arg("seed") = 0, py::kw_only(),
      py::arg("n0") = py::none(), py::arg("p0") = py::none());

  m.def(
      "find_equilibria",
      [](const std::vector<double>& steady) {
        DistributionVector d;
        d.probs = steady;
        const auto e = find_equilibria(d);
        return py::make_tuple(e.n_minus, e.n_u, e.n_plus);
      },
      py::arg("steady"));
  m.def(
      "count_modes",
      [](const std::vector<double>& dist, double prominence) {
        DistributionVector d;
        d.probs = dist;
        return count_modes(d, prominence);
      },
      py::arg("dist"), py::arg("min_relative_prominence") = 0.0);
  m.def("mfpt_to_unstable", &mfpt_to_unstable, py::arg("rates"), py::arg("n_u"));
  m.def("fixation_curve", &fixation_curve, py::arg("rates"), py::arg("n_minus"), py::arg("n_plus"));
  m.def("relaxation_rate", &relaxation_rate, py::arg("tau_lr"), py::arg("tau_rl"), py::arg("phi_R"));
  m.def(
      "analyze_metastability",
      [](const RateTable& r) {
        const auto rep = analyze_metastability(r);
        py::dict out;
        out["n_minus"] = rep.equilibria.n_minus;
        out["n_u"] = rep.equilibria.n_u;
        out["n_plus"] = rep.equilibria.n_plus;
        out["tau"] = rep.passage.tau;
        out["tau_lr"] = rep.passage.tau_lr;
        out["tau_rl"] = rep.passage.tau_rl;
        out["phi_R"] = rep.passage.phi_R;
        out["lambda2_approx"] = rep.passage.lambda2_approx;
        out["fixation"] = rep.fixation;
        return out;
      },
      py::arg("rates"));

  py::class_<Theta>(m, "Theta")
      .def(py::init([](double F, double J, double gamma) { return Theta{F, J, gamma}; }), py::arg("F"), py::arg("J"),
           py::arg("gamma"))
      .def_readwrite("F", &Theta::F)
      .def_readwrite("J", &Theta::J)
      .def_readwrite("gamma", &Theta::gamma)
      .def("__repr__",
           [](const Theta& t) { return py::str("Theta(F={}, J={}, gamma={})").format(t.F, t.J, t.gamma); });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](int N, const std::vector<std::vector<double>>& times,
                       const std::vector<std::vector<double>>& m_values) {
             return Dataset::from_readings(N, times, m_values);
           }),
           py::arg("N"), py::arg("times"), py::arg("m_values"))
      .def_readonly("N", &Dataset::N)
      .def_property_readonly("trajectories",
                             [](const Dataset& d) {
                               std::vector<std::pair<std::vector<double>, std::vector<int>>> out;
                               for (const auto& p : d.trajectories) out.emplace_back(p.times, p.states);
                               return out;
                             })
      .def("points", &Dataset::points);

  m.def(
      "synthetic_dataset",
      [](const ModelParams& p, int trajectories, int points, double t_max, std::uint64_t seed, py::object n0,
         py::object p0) {
        return synthetic_dataset(p, initial_from(n0, p0), trajectories, points, t_max, seed);
      },
      py::arg("params"), py::arg("trajectories"), py::arg("points"), py::arg("t_max"), py::arg("seed") = 0,
      py::kw_only(), py::arg("n0") = py::none(), py::arg("p0") = py::none());
  m.def("neg_log_likelihood", &neg_log_likelihood, py::arg("theta"), py::arg("data"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "calibrate",
      [](const Dataset& data, std::pair<double, double> F, std::pair<double, double> J,
         std::pair<double, double> gamma, int pop_size, int steps, std::uint64_t seed, int threads) {
        ParamBounds b;
        b.F = {F.first, F.second};
        b.J = {J.first, J.second};
        b.gamma = {gamma.first, gamma.second};
        DEConfig c;
        c.pop_size = pop_size;
        c.steps = steps;
        c.seed = seed;
        c.threads = threads;
        CalibrationResult r;
        {
          py::gil_scoped_release release;
          r = calibrate(data, b, c);
        }
        py::dict out;
        out["theta"] = r.theta_star;
        out["nll"] = r.nll;
        out["evaluations"] = r.evaluations;
        out["history"] = r.best_history;
        return out;
      },
      py::arg("data"), py::arg("F") = std::make_pair(-2.0, 2.0),
      py::arg("J") = std::make_pair(0.1353352832366127, 7.38905609893065),
      py::arg("gamma") = std::make_pair(0.36787944117144233, 2.718281828459045), py::arg("pop_size") = 50,
      py::arg("steps") = 100, py::arg("seed") = 0, py::arg("threads") = 1);
  m.def(
      "error_metrics",
      [](const Theta& truth, const Theta& estimate) {
        const auto e = error_metrics(truth, estimate);
        return py::make_tuple(e.E_tot, e.f);
      },
      py::arg("truth"), py::arg("estimate"), "(E_tot, f) relative errors.");
}
