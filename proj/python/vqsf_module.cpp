// Python bindings. Point clouds cross the boundary as float64 arrays of
// shape (N, 3).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vqsf/ad/grad_check.hpp"
#include "vqsf/cli/config.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/error.hpp"
#include "vqsf/geo/mesh.hpp"
#include "vqsf/geo/sampling.hpp"
#include "vqsf/geo/voxel.hpp"
#include "vqsf/metrics/metrics.hpp"
#include "vqsf/sf/model.hpp"
#include "vqsf/vqdif/model.hpp"

namespace py = pybind11;
using namespace vqsf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

geo::PointCloud to_cloud(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (N, 3) array");
  auto r = a.unchecked<2>();
  geo::PointCloud out(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) out[i] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

Array to_array(const std::vector<geo::Vec3>& cloud) {
  Array out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a) w(i, a) = cloud[i][a];
  return out;
}

py::tuple mesh_arrays(const geo::Mesh& mesh) {
  py::array_t<std::uint32_t> tris({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t{3}});
  auto w = tris.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = mesh.triangles[i][k];
  return py::make_tuple(to_array(mesh.vertices), tris);
}

cli::RunConfig config_or_default(const cli::RunConfig* c) { return c ? *c : cli::RunConfig(); }

}  // namespace

PYBIND11_MODULE(vqsf, m) {
  m.doc() = "Sparse-sequence shape completion: VQDIF encoder/decoder, ShapeFormer sampler, metrics";
  m.attr("__version__") = cli::kToolVersion;

  static py::exception<UsageError> usage_error(m, "UsageError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_RuntimeError);
  static py::exception<DivergenceError> divergence_error(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      usage_error(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const DivergenceError& e) {
      divergence_error(e.what());
    }
  });

  // ---- configuration
  py::class_<cli::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_file", &cli::RunConfig::from_file, py::arg("path"))
      .def("set", &cli::RunConfig::set, py::arg("key"), py::arg("value"))
      .def("get", &cli::RunConfig::get, py::arg("key"))
      .def("validate", &cli::RunConfig::validate)
      .def("resolved", &cli::RunConfig::resolved)
      .def_static("keys", &cli::RunConfig::keys);

  // ---- geometry
  py::class_<geo::ImplicitShape>(m, "Shape")
      .def_property_readonly("kind", [](const geo::ImplicitShape& s) { return geo::to_string(s.kind()); })
      .def_property_readonly("params", &geo::ImplicitShape::params)
      .def("sdf",
           [](const geo::ImplicitShape& s, const Array& pts) {
             const auto cloud = to_cloud(pts);
             std::vector<double> out;
             out.reserve(cloud.size());
             for (const auto& p : cloud) out.push_back(s.sdf(p));
             return py::array_t<double>(static_cast<py::ssize_t>(out.size()), out.data());
           },
           py::arg("points"));

  m.def("shape_kinds", [] {
    std::vector<std::string> out;
    for (auto k : geo::all_shape_kinds()) out.push_back(geo::to_string(k));
    return out;
  });
  m.def("make_shape",
        [](const std::string& kind, const std::vector<double>& params, std::uint64_t seed) {
          return geo::make_shape(kind, params, seed);
        },
        py::arg("kind"), py::arg("params") = std::vector<double>{}, py::arg("seed") = 0);
  m.def("sample_surface",
        [](const geo::ImplicitShape& s, std::size_t n, std::uint64_t seed) {
          return to_array(geo::sample_surface(s, n, seed));
        },
        py::arg("shape"), py::arg("n"), py::arg("seed") = 0);
  m.def("virtual_scan",
        [](const geo::ImplicitShape& s, std::array<double, 3> view, std::size_t n, std::uint64_t seed) {
          return to_array(geo::virtual_scan(s, geo::normalized({view[0], view[1], view[2]}), n, seed));
        },
        py::arg("shape"), py::arg("viewpoint"), py::arg("n") = 2048, py::arg("seed") = 0);
  m.def("fibonacci_viewpoints", [](std::size_t n) { return to_array(geo::fibonacci_viewpoints(n)); },
        py::arg("n") = 70);
  m.def("voxelize", [](const Array& pts, std::uint32_t r) { return geo::voxelize(to_cloud(pts), r); },
        py::arg("points"), py::arg("R"));

  // ---- metrics
  m.def("chamfer_l2", [](const Array& a, const Array& b) { return metrics::chamfer_l2(to_cloud(a), to_cloud(b)); });
  m.def("fscore",
        [](const Array& pred, const Array& gt, std::optional<double> tau) {
          return tau ? metrics::fscore(to_cloud(pred), to_cloud(gt), *tau)
                     : metrics::fscore(to_cloud(pred), to_cloud(gt));
        },
        py::arg("pred"), py::arg("gt"), py::arg("tau") = py::none());
  m.def("uhd", [](const Array& partial, const Array& c) { return metrics::uhd(to_cloud(partial), to_cloud(c)); },
        py::arg("partial"), py::arg("completion"));
  m.def("tmd", [](const std::vector<Array>& clouds) {
    std::vector<geo::PointCloud> cs;
    for (const auto& c : clouds) cs.push_back(to_cloud(c));
    return metrics::tmd(cs);
  });
  m.def("ambiguity",
        [](const Array& complete, const Array& partial) {
          return metrics::ambiguity(to_cloud(complete), to_cloud(partial));
        },
        py::arg("complete"), py::arg("partial"));

  // ---- sequences and models
  py::class_<vqdif::SparseSeq>(m, "SparseSeq")
      .def(py::init([](std::uint32_t R, std::uint32_t V, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& t) {
             vqdif::SparseSeq s{R, V, {}};
             for (auto [c, v] : t) s.entries.push_back({c, v});
             s.validate();
             return s;
           }),
           py::arg("R"), py::arg("V"), py::arg("tuples"))
      .def_readonly("R", &vqdif::SparseSeq::R)
      .def_readonly("V", &vqdif::SparseSeq::V)
      .def_property_readonly("tuples",
                             [](const vqdif::SparseSeq& s) {
                               std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
                               for (const auto& t : s.entries) out.emplace_back(t.c, t.v);
                               return out;
                             })
      .def("__len__", &vqdif::SparseSeq::size)
      .def("__eq__", [](const vqdif::SparseSeq& a, const vqdif::SparseSeq& b) { return a == b; })
      .def("byte_size", &vqdif::SparseSeq::byte_size)
      .def("save", [](const vqdif::SparseSeq& s, const std::filesystem::path& p) { vqdif::write_sparse_seq(p, s); })
      .def_static("load", &vqdif::read_sparse_seq);

  py::class_<vqdif::VqdifModel>(m, "Vqdif")
      .def(py::init([](const cli::RunConfig* c) { return vqdif::VqdifModel(config_or_default(c).vqdif()); }),
           py::arg("config") = nullptr, "untrained model")
      .def_static("load",
                  [](const std::filesystem::path& ckpt, const cli::RunConfig* c) {
                    vqdif::VqdifModel model(config_or_default(c).vqdif());
                    model.load(read_checkpoint(ckpt));
                    return model;
                  },
                  py::arg("checkpoint"), py::arg("config") = nullptr)
      .def("encode", [](const vqdif::VqdifModel& v, const Array& pts) { return v.encode(to_cloud(pts)).first; },
           py::arg("points"))
      .def("reconstruct",
           [](const vqdif::VqdifModel& v, const vqdif::SparseSeq& s, std::size_t res) {
             return mesh_arrays(v.reconstruct(s, res));
           },
           py::arg("sequence"), py::arg("resolution") = 64)
      .def("occupancy",
           [](const vqdif::VqdifModel& v, const vqdif::SparseSeq& s, const Array& pts) {
             const auto cloud = to_cloud(pts);
             const auto occ = v.occupancy(s, cloud);
             return py::array_t<double>(static_cast<py::ssize_t>(occ.size()), occ.data());
           },
           py::arg("sequence"), py::arg("points"));

  py::class_<sf::ShapeFormer>(m, "ShapeFormer")
      .def(py::init([](const cli::RunConfig* c) { return sf::ShapeFormer(config_or_default(c).transformer()); }),
           py::arg("config") = nullptr, "untrained model")
      .def_static("load",
                  [](const std::filesystem::path& ckpt, const cli::RunConfig* c) {
                    sf::ShapeFormer model(config_or_default(c).transformer());
                    model.load(read_checkpoint(ckpt));
                    return model;
                  },
                  py::arg("checkpoint"), py::arg("config") = nullptr)
      .def("sample",
           [](const sf::ShapeFormer& f, const vqdif::SparseSeq& partial, double top_p, std::uint64_t seed,
              std::uint64_t index, std::size_t max_len) {
             sf::SampleOptions o;
             o.top_p = top_p;
             o.seed = seed;
             o.index = index;
             o.max_len = max_len;
             const auto r = sf::sample_completion(f, partial, o);
             return py::make_tuple(r.sequence, r.ended);
           },
           py::arg("partial"), py::arg("top_p") = 0.4, py::arg("seed") = 0, py::arg("index") = 0,
           py::arg("max_len") = 0, "returns (sequence, ended)")
      .def("score", &sf::score_completion, py::arg("partial"), py::arg("complete"));

  m.def("top_p_filter", [](const std::vector<double>& p, double top_p) { return sf::top_p_filter(p, top_p); });

  m.def("grad_check",
        [](std::size_t cases, std::uint64_t seed) {
          ad::GradCheckOptions o;
          o.cases = cases;
          o.seed = seed;
          const auto report = ad::grad_check_all(o);
          py::dict worst;
          for (const auto& [op, err] : report.per_op()) worst[py::str(op)] = err;
          return py::make_tuple(report.passed(), worst);
        },
        py::arg("cases") = 10, py::arg("seed") = 0, "returns (passed, {op: worst relative error})");
}
