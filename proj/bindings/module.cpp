#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <memory>
#include <string>

#include "apde/experiments.hpp"
#include "apde/fd.hpp"
#include "apde/mlp.hpp"
#include "apde/sparse.hpp"
#include "apde/tape.hpp"

namespace py = pybind11;
using namespace apde;

namespace {

SparseMatrix matrix_from_triplets(std::size_t n,
                                  const std::vector<std::tuple<std::size_t, std::size_t, double>>& t) {
    std::vector<Triplet> trips;
    trips.reserve(t.size());
    for (const auto& [r, c, v] : t) trips.push_back({r, c, v});
    return SparseMatrix::from_triplets(n, std::move(trips));
}

Config config_from_dict(const std::map<std::string, std::string>& kv) {
    Config cfg;
    for (const auto& [k, v] : kv) cfg.set(k, v);
    return cfg;
}

py::dict record_to_dict(const RunRecord& record) {
    py::dict d;
    d["loss_history"] = record.loss_history;
    d["final_params"] = record.final_params;
    d["iterations"] = record.iterations;
    d["stop_reason"] = record.stop_reason;
    d["failed"] = record.failed;
    d["wall_seconds"] = record.wall_seconds;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Differentiable sparse PDE solvers with reverse-mode AD";

    py::register_exception<SingularMatrixError>(m, "SingularMatrixError");
    py::register_exception<NewtonDivergenceError>(m, "NewtonDivergenceError");
    py::register_exception<ConfigError>(m, "ConfigError");

    py::class_<SparseMatrix>(m, "SparseMatrix")
        .def_static("from_triplets", &matrix_from_triplets, py::arg("n"), py::arg("triplets"))
        .def_static("identity", &SparseMatrix::identity)
        .def_property_readonly("n_rows", &SparseMatrix::n_rows)
        .def_property_readonly("n_cols", &SparseMatrix::n_cols)
        .def_property_readonly("nnz", &SparseMatrix::nnz)
        .def("at", &SparseMatrix::at)
        .def("to_dense", &SparseMatrix::to_dense)
        .def("multiply",
             [](const SparseMatrix& a, const std::vector<double>& x) { return a.multiply(x); })
        .def("__repr__", [](const SparseMatrix& a) {
            return "<SparseMatrix " + std::to_string(a.n_rows()) + "x" +
                   std::to_string(a.n_cols()) + ", nnz=" + std::to_string(a.nnz()) + ">";
        });

    m.def("kron", &kron);
    m.def("shift_matrix", &shift_matrix);
    m.def("to_matrix_market", &to_matrix_market);

    py::class_<LuFactorization, std::shared_ptr<LuFactorization>>(m, "LuFactorization")
        .def(py::init<const SparseMatrix&>())
        .def_property_readonly("dim", &LuFactorization::dim)
        .def("solve",
             [](const LuFactorization& lu, const std::vector<double>& b) { return lu.solve(b); })
        .def("solve_transpose", [](const LuFactorization& lu, const std::vector<double>& b) {
            return lu.solve_transpose(b);
        });

    py::class_<VarId>(m, "VarId").def_property_readonly("index",
                                                        [](VarId v) { return v.index; });

    py::class_<GradientMap>(m, "GradientMap")
        .def("get", [](const GradientMap& g, VarId v) { return g.get_vector(v); });

    py::class_<Tape>(m, "Tape")
        .def(py::init<>())
        .def("variable",
             [](Tape& t, const std::vector<double>& v, bool requires_grad) {
                 return t.variable(v, requires_grad);
             },
             py::arg("value"), py::arg("requires_grad") = false)
        .def("value",
             [](const Tape& t, VarId v) {
                 auto s = t.value(v);
                 return std::vector<double>(s.begin(), s.end());
             })
        .def("add", &Tape::add)
        .def("sub", &Tape::sub)
        .def("mul", &Tape::mul)
        .def("scale", &Tape::scale)
        .def("square", &Tape::square)
        .def("dot", &Tape::dot)
        .def("norm2", &Tape::norm2)
        .def("sum", &Tape::sum)
        .def("mean", &Tape::mean)
        .def("abs", &Tape::abs)
        .def("sigmoid", &Tape::sigmoid)
        .def("slice", &Tape::slice)
        .def("concat",
             [](Tape& t, const std::vector<VarId>& parts) { return t.concat(parts); })
        .def("linear_solve",
             [](Tape& t, const SparseMatrix& a, VarId b) { return t.linear_solve(a, b); })
        .def("linear_solve",
             [](Tape& t, std::shared_ptr<LuFactorization> lu, VarId b) {
                 return t.linear_solve(std::move(lu), b);
             })
        .def("backward", &Tape::backward)
        .def("__len__", &Tape::size);

    m.def("poisson1d_stiffness",
          [](std::size_t n_h) { return poisson1d_stiffness(Grid1D(n_h)); });
    m.def("poisson1d_solution", [](std::size_t n_h, double f) {
        return poisson1d_solution(Grid1D(n_h), f);
    });
    m.def("heat_spacetime_matrix", [](std::size_t n_h, std::size_t n_k, double t_final) {
        return heat_spacetime_matrix(Grid1D(n_h), TimeGrid(n_k, t_final));
    });

    py::class_<Mlp>(m, "Mlp")
        .def_static("create", &Mlp::create, py::arg("layers"), py::arg("seed"))
        .def_readonly("layers", &Mlp::layers)
        .def_readwrite("params", &Mlp::params)
        .def_property_readonly("n_params",
                               [](const Mlp& mlp) { return mlp.parameter_count(); })
        .def("eval", [](const Mlp& mlp, const std::vector<std::array<double, 2>>& pts) {
            return mlp.eval_values(pts);
        });
    m.def("mlp_parameter_count", [](const std::vector<std::size_t>& layers) {
        return Mlp::parameter_count(layers);
    });

    m.def("known_examples", [] { return known_examples(); });
    m.def(
        "generate_observations",
        [](const std::string& id, const std::map<std::string, std::string>& cfg) {
            generate_observations(id, config_from_dict(cfg));
        },
        py::arg("example_id"), py::arg("config") = std::map<std::string, std::string>{});
    m.def(
        "run_example",
        [](const std::string& id, const std::map<std::string, std::string>& cfg) {
            ExperimentResult result = run_example(id, config_from_dict(cfg));
            py::dict d = record_to_dict(result.record);
            d["scalars"] = result.scalars;
            d["out_dir"] = result.out_dir.string();
            return d;
        },
        py::arg("example_id"), py::arg("config") = std::map<std::string, std::string>{});
    m.def("gradcheck_example", &gradcheck_example, py::arg("example_id"), py::arg("seed") = 0);
}
