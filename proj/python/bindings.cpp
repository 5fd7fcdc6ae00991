#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hyperinf/estimators.hpp"
#include "hyperinf/fisher.hpp"
#include "hyperinf/harness.hpp"
#include "hyperinf/hyperpower.hpp"
#include "hyperinf/io.hpp"

namespace py = pybind11;
using namespace hyperinf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array, got " + std::to_string(a.ndim()) + "-d");
  return DenseMatrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d array, got " + std::to_string(a.ndim()) + "-d");
  return Vector(a.data(), a.data() + a.size());
}

py::array_t<double> from_matrix(const DenseMatrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_vector(const Vector& v) {
  py::array_t<double> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// (n, d, r) array -> n gradient blocks.
std::vector<GradientBlock> to_blocks(const Array& a, const std::string& name = "b") {
  if (a.ndim() != 3) throw ShapeError("expected an (n, d, r) array, got " + std::to_string(a.ndim()) + "-d");
  const std::size_t n = a.shape(0), d = a.shape(1), r = a.shape(2);
  std::vector<GradientBlock> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double* p = a.data() + k * d * r;
    out.push_back({name, DenseMatrix(d, r, std::vector<double>(p, p + d * r)), false});
  }
  return out;
}

py::dict trace_dict(const ConvergenceTrace& t) {
  py::dict d;
  d["method"] = t.method;
  d["errors"] = t.per_iteration_error;
  d["error_metric"] = t.error_metric;
  d["reference_norm"] = t.reference_norm;
  d["residuals"] = t.residuals;
  d["converged"] = t.converged;
  d["diverged"] = t.diverged;
  d["iters_used"] = t.iters_used;
  return d;
}

IterationConfig iteration(std::size_t iters, double init_scale, int order) {
  IterationConfig cfg;
  cfg.max_iters = iters;
  cfg.init_scale = init_scale;
  cfg.order_p = order;
  return cfg;
}

Damping damping_from(const py::object& spec) {
  if (spec.is_none()) return Damping::per_block();
  if (py::isinstance<py::str>(spec)) {
    if (spec.cast<std::string>() == "per-block") return Damping::per_block();
    throw InvalidArgument("damping must be 'per-block' or a positive float");
  }
  return Damping::fixed(spec.cast<double>());
}

Inverter inverter_from(const std::string& s) {
  if (s == "schulz") return Inverter::Schulz;
  if (s == "exact") return Inverter::Exact;
  throw InvalidArgument("inverter must be 'schulz' or 'exact', got '" + s + "'");
}

py::dict report_dict(const InfluenceReport& r) {
  py::dict d;
  d["estimator"] = r.estimator;
  d["example_ids"] = r.example_ids;
  d["scores"] = from_vector(r.scores);
  d["per_block_scores"] = r.per_block_scores.empty() ? py::array_t<double>() : from_matrix(r.per_block_scores);
  d["ranking"] = r.ranking_ascending;
  d["block_damping"] = r.block_damping;
  d["warnings"] = r.warnings;
  d["diverged"] = r.diverged;
  d["peak_curvature_elements"] = r.peak_curvature_elements;
  return d;
}

GradientDump make_dump(const std::vector<Array>& train, const std::vector<Array>& val,
                       std::optional<std::vector<std::string>> names, std::optional<std::vector<std::string>> ids) {
  if (train.size() != val.size()) throw InvalidArgument("train and val must list the same number of blocks");
  GradientDump dump;
  for (std::size_t l = 0; l < train.size(); ++l) {
    const std::string name = names ? names->at(l) : "block" + std::to_string(l);
    auto grads = to_blocks(train[l], name);
    const DenseMatrix v = to_matrix(val[l]);
    dump.blocks.push_back({name, v.rows(), v.cols()});
    dump.train_grads.push_back(std::move(grads));
    dump.val_grads.push_back({name, v, false});
  }
  const std::size_t n = train.empty() ? 0 : dump.train_grads[0].size();
  if (ids) {
    dump.example_ids = *ids;
  } else {
    for (std::size_t k = 0; k < n; ++k) dump.example_ids.push_back(std::to_string(k));
  }
  dump.validate();
  return dump;
}

}  // namespace

PYBIND11_MODULE(_hyperinf, m) {
  m.doc() = "Influence scores with hyperpower-iteration inverses of the generalized Fisher matrix";

  static py::exception<Error> base(m, "HyperinfError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("gaussian_inverse", [](const Array& a) { return from_matrix(gaussian_inverse(to_matrix(a))); }, py::arg("a"));

  m.def(
      "schulz_inverse",
      [](const Array& a, std::size_t iters, double init_scale, std::optional<Array> oracle) {
        const DenseMatrix am = to_matrix(a);
        std::optional<DenseMatrix> om;
        if (oracle) om = to_matrix(*oracle);
        const InverseResult r = schulz_inverse(am, iteration(iters, init_scale, 2), om ? &*om : nullptr);
        return py::make_tuple(from_matrix(r.inverse), trace_dict(r.trace));
      },
      py::arg("a"), py::arg("iters") = 25, py::arg("init_scale") = 5e-4, py::arg("oracle") = py::none());

  m.def(
      "hyperpower_inverse",
      [](const Array& a, int order, std::size_t iters, double init_scale) {
        const InverseResult r = hyperpower_inverse(to_matrix(a), iteration(iters, init_scale, order));
        return py::make_tuple(from_matrix(r.inverse), trace_dict(r.trace));
      },
      py::arg("a"), py::arg("order") = 2, py::arg("iters") = 25, py::arg("init_scale") = 5e-4);

  m.def(
      "cg_solve",
      [](const Array& a, const Array& b, std::size_t max_iters, double tol) {
        const SolveResult r = cg_solve(SpdMatrix(to_matrix(a)), to_vector(b), max_iters, tol);
        py::dict d;
        d["residual"] = r.residual;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        return py::make_tuple(from_vector(r.x), d);
      },
      py::arg("a"), py::arg("b"), py::arg("max_iters") = 1000, py::arg("tol") = 1e-10);

  m.def(
      "lissa_hvp",
      [](const Array& a, const Array& v, std::size_t iters) {
        const LissaResult r = lissa_hvp(to_matrix(a), to_vector(v), iters);
        return py::make_tuple(from_vector(r.estimate), trace_dict(r.trace));
      },
      py::arg("a"), py::arg("v"), py::arg("iters") = kLissaDefaultIters);

  m.def("build_fim", [](const Array& g) { return from_matrix(build_fim(to_blocks(g)).matrix.matrix()); }, py::arg("grads"),
        "(1/n) sum vec(g) vec(g)^T over an (n, d, r) stack, column-stacking vec.");
  m.def("build_gfim", [](const Array& g) { return from_matrix(build_gfim(to_blocks(g)).matrix.matrix()); },
        py::arg("grads"), "(1/n) sum g g^T over an (n, d, r) stack.");
  m.def("damping_factor", [](const Array& g, double c) { return damping_factor(to_blocks(g), c); }, py::arg("grads"),
        py::arg("coefficient") = kDampingCoefficient);
  m.def("lemma1_gap", &lemma1_gap, py::arg("d"), py::arg("r"), py::arg("samples"), py::arg("seed") = 0);

  py::class_<GradientDump>(m, "GradientDump")
      .def(py::init(&make_dump), py::arg("train"), py::arg("val"), py::arg("names") = py::none(),
           py::arg("example_ids") = py::none(),
           "train: one (n, d, r) array per block; val: one (d, r) array per block.")
      .def_property_readonly("n_examples", &GradientDump::n_examples)
      .def_property_readonly("n_blocks", &GradientDump::n_blocks)
      .def_readonly("example_ids", &GradientDump::example_ids)
      .def_property_readonly("block_names",
                             [](const GradientDump& d) {
                               std::vector<std::string> out;
                               for (const auto& b : d.blocks) out.push_back(b.name);
                               return out;
                             })
      .def("train", [](const GradientDump& d, std::size_t l, std::size_t k) {
        return from_matrix(d.train_grads.at(l).at(k).values);
      })
      .def("val", [](const GradientDump& d, std::size_t l) { return from_matrix(d.val_grads.at(l).values); });

  m.def("read_dump", &io::read_dump, py::arg("manifest"));
  m.def("write_dump", &io::write_dump, py::arg("dump"), py::arg("directory"));

  m.def("estimator_names", &estimator_names);
  m.def(
      "score",
      [](const GradientDump& dump, const std::string& estimator, const py::object& damping, std::size_t iters,
         double init_scale, std::size_t lissa_iters, const std::string& inverter) {
        EstimatorSettings s;
        s.iteration = iteration(iters, init_scale, 2);
        s.damping = damping_from(damping);
        s.lissa_iters = lissa_iters;
        s.inverter = inverter_from(inverter);
        return report_dict(run_estimator(estimator, dump, s));
      },
      py::arg("dump"), py::arg("estimator") = "hyperinf", py::arg("damping") = "per-block", py::arg("iters") = 25,
      py::arg("init_scale") = 5e-4, py::arg("lissa_iters") = kLissaDefaultIters, py::arg("inverter") = "schulz");

  m.def(
      "rank_examples",
      [](const Array& scores, const std::string& mode, double k_percent) {
        InfluenceReport r;
        r.scores = to_vector(scores);
        if (mode != "helpful" && mode != "harmful") throw InvalidArgument("mode must be 'helpful' or 'harmful'");
        return rank_examples(r, mode == "helpful" ? RankMode::MostHelpful : RankMode::MostHarmful, k_percent);
      },
      py::arg("scores"), py::arg("mode") = "helpful", py::arg("k_percent") = 100.0);

  m.def(
      "run_detection",
      [](std::vector<std::string> estimators, std::size_t n_train, std::size_t dim, std::size_t classes, double flip,
         std::size_t seeds, std::uint64_t seed, std::optional<std::vector<double>> p_grid) {
        ToyTask task;
        task.n_train = n_train;
        task.dim = dim;
        task.classes = classes;
        task.flip_fraction = flip;
        task.seed = seed;
        const DetectionReport r = run_detection(task, estimators, p_grid ? *p_grid : default_p_grid(), seeds);
        py::dict d;
        d["p"] = r.p_grid;
        d["seeds"] = r.seeds;
        d["oracle"] = r.oracle;
        d["random"] = r.random;
        py::dict curves;
        for (const auto& c : r.curves) {
          py::dict cd;
          cd["recall"] = c.recall;
          cd["mean"] = c.mean;
          cd["ci_low"] = c.ci_low;
          cd["ci_high"] = c.ci_high;
          curves[py::str(c.estimator)] = cd;
        }
        d["curves"] = curves;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("estimators") = std::vector<std::string>{"hyperinf", "datainf", "lissa", "tracin"},
      py::arg("n_train") = 500, py::arg("dim") = 20, py::arg("classes") = 2, py::arg("flip") = 0.2,
      py::arg("seeds") = 3, py::arg("seed") = 0, py::arg("p_grid") = py::none());
}
