#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "risn/cli.hpp"
#include "risn/fractional.hpp"
#include "risn/quadrature.hpp"
#include "risn/solver.hpp"

namespace py = pybind11;
using namespace risn;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(py::ssize_t(v.size()), v.data()); }

prob::ProblemSpec resolve_problem(const std::string& id_or_json) {
  if (!id_or_json.empty() && id_or_json.front() == '{')
    return prob::problem_from_json(nlohmann::json::parse(id_or_json));
  return prob::get_problem(id_or_json);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Residual integral solver networks: registry, quadrature, Caputo matrices and training.";

  m.def("problem_ids", &prob::problem_ids, "Registry ids in table order.");
  m.def(
      "problem_json", [](const std::string& id) { return prob::to_json(prob::get_problem(id)).dump(); }, py::arg("id"));

  m.def(
      "gauss_legendre",
      [](std::size_t n) {
        const auto r = quad::gauss_legendre(n);
        return py::make_tuple(to_array(r.nodes), to_array(r.weights));
      },
      py::arg("n"), "Nodes and weights on [-1, 1].");
  m.def("gamma", &quad::gamma, py::arg("x"));

  m.def(
      "caputo_matrix",
      [](double alpha, const std::vector<double>& points, std::optional<std::size_t> degree) {
        const auto op = frac::build_caputo(alpha, points, degree);
        const std::size_t n = op.points.size();
        py::array_t<double> a({py::ssize_t(n), py::ssize_t(n)});
        auto w = a.mutable_unchecked<2>();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) w(py::ssize_t(i), py::ssize_t(j)) = op.matrix(i, j);
        return a;
      },
      py::arg("alpha"), py::arg("points"), py::arg("degree") = py::none(),
      "Operational matrix mapping samples at `points` to Caputo derivatives there.");

  m.def(
      "self_check",
      [](const std::string& problem) {
        const auto c = solve::self_check(resolve_problem(problem));
        return py::make_tuple(c.max_residual, c.tolerance);
      },
      py::arg("problem"), "Largest exact-solution residual and its tolerance.");

  m.def(
      "train",
      [](const std::string& problem, const std::string& model, std::uint64_t seed, const std::string& config) {
        const auto spec = resolve_problem(problem);
        auto c = config.empty() ? solve::TrainConfig{} : solve::train_config_from_json(nlohmann::json::parse(config));
        c.seed = seed;
        solve::TrainOutput out;
        {
          py::gil_scoped_release release;
          out = solve::train(spec, c, solve::model_from_string(model));
        }
        nlohmann::json params = nlohmann::json::array();
        for (const auto& p : out.params) params.push_back(net::to_json(p));
        return py::make_tuple(solve::to_json(out.result, true).dump(), params.dump());
      },
      py::arg("problem"), py::arg("model") = "risn", py::arg("seed") = 0, py::arg("config") = "",
      "Trains one model; returns (result JSON, parameter JSON).");

  m.def(
      "predict",
      [](const std::string& params_json, const std::vector<std::vector<double>>& x) {
        const auto p = net::params_from_json(nlohmann::json::parse(params_json));
        const std::size_t d = x.empty() ? 0 : x[0].size();
        ad::Tensor t(x.size(), d);
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i].size() != d) throw std::invalid_argument("ragged input rows");
          for (std::size_t a = 0; a < d; ++a) t(i, a) = x[i][a];
        }
        return to_array(net::forward(p, t).values());
      },
      py::arg("params"), py::arg("x"), "Network output at the rows of x.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"risn"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run_cli(int(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");

  m.attr("__version__") = cli::tool_version();
}
