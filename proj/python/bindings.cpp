#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rstd/experiment.hpp"
#include "rstd/nn.hpp"
#include "rstd/shuffle.hpp"
#include "rstd/tdmodel.hpp"

namespace py = pybind11;
using namespace rstd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseTensor<double> to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return DenseTensor<double>(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const DenseTensor<double>& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

CoreSet<double> to_cores(const std::vector<Array>& arrays) {
  CoreSet<double> cores;
  for (const auto& a : arrays) cores.push_back(to_tensor(a));
  return cores;
}

std::vector<Array> to_arrays(const CoreSet<double>& cores) {
  std::vector<Array> out;
  for (const auto& c : cores) out.push_back(to_array(c));
  return out;
}

KernelDims kernel_dims(const std::vector<std::size_t>& d) {
  if (d.size() != 4) throw ShapeError("kernel dims must be (I, H, W, O)");
  return {d[0], d[1], d[2], d[3]};
}

}  // namespace

PYBIND11_MODULE(_rstd, m) {
  m.doc() = "Tensor-decomposed and randomly shuffled tensor-decomposed convolution kernels.";

  static py::exception<Error> error(m, "RstdError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<TDTopology>(m, "Topology")
      .def_property_readonly("kind", [](const TDTopology& t) { return std::string(to_string(t.kind())); })
      .def_property_readonly("n_cores", &TDTopology::n_cores)
      .def_property_readonly("adjacency", &TDTopology::adjacency)
      .def_property_readonly("mode_dims", &TDTopology::mode_dims)
      .def_property_readonly("core_shapes", &TDTopology::core_shapes)
      .def_property_readonly("param_count", [](const TDTopology& t) { return param_count(t); })
      .def("__repr__", [](const TDTopology& t) {
        return "<Topology " + std::string(to_string(t.kind())) + " cores=" + std::to_string(t.n_cores()) +
               " params=" + std::to_string(param_count(t)) + ">";
      });

  m.def(
      "build_topology",
      [](const std::string& kind, const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks,
         std::optional<ModeGrouping> grouping) {
        return build_topology(parse_topology_kind(kind), kernel_dims(dims), ranks,
                              grouping.value_or(default_tt_matrix_grouping()));
      },
      py::arg("kind"), py::arg("dims"), py::arg("ranks"), py::arg("grouping") = py::none(),
      "TT, TT-matrix or TR topology over an (I, H, W, O) kernel.");

  m.def(
      "reconstruct", [](const TDTopology& t, const std::vector<Array>& cores) {
        return to_array(reconstruct(t, to_cores(cores)));
      },
      py::arg("topology"), py::arg("cores"));

  m.def(
      "reconstruct_gradient",
      [](const TDTopology& t, const std::vector<Array>& cores, const Array& upstream) {
        return to_arrays(reconstruct_gradient(t, to_cores(cores), to_tensor(upstream)));
      },
      py::arg("topology"), py::arg("cores"), py::arg("upstream"));

  m.def(
      "init_cores",
      [](const TDTopology& t, double variance, std::uint64_t seed) {
        Rng rng(seed);
        return to_arrays(init_cores<double>(t, variance, rng));
      },
      py::arg("topology"), py::arg("variance"), py::arg("seed"));

  m.def(
      "tt_svd",
      [](const Array& kernel, std::size_t max_rank) {
        auto f = tt_svd(to_tensor(kernel), max_rank);
        return py::make_tuple(f.topology, to_arrays(f.cores));
      },
      py::arg("kernel"), py::arg("max_rank") = 0);

  m.def(
      "contract",
      [](const Array& a, const Array& b, const std::vector<std::size_t>& modes_a,
         const std::vector<std::size_t>& modes_b) {
        return to_array(contract(to_tensor(a), to_tensor(b), modes_a, modes_b));
      },
      py::arg("a"), py::arg("b"), py::arg("modes_a"), py::arg("modes_b"),
      "Sums over paired modes; a full contraction returns shape (1,).");

  py::class_<Permutation>(m, "Permutation")
      .def(py::init([](std::vector<std::uint64_t> forward) { return Permutation(std::move(forward)); }),
           py::arg("forward"))
      .def_static("from_seed", &Permutation::from_seed, py::arg("n"), py::arg("seed"))
      .def_static("load", &load_permutation, py::arg("path"))
      .def("save", [](const Permutation& p, const std::string& path) { save_permutation(p, path); })
      .def_property_readonly("forward", [](const Permutation& p) {
        return std::vector<std::uint64_t>(p.forward().begin(), p.forward().end());
      })
      .def_property_readonly("inverse", [](const Permutation& p) {
        return std::vector<std::uint64_t>(p.inverse().begin(), p.inverse().end());
      })
      .def_property_readonly("seed", &Permutation::seed)
      .def("__len__", &Permutation::size)
      .def("__eq__", &Permutation::operator==);

  m.def(
      "shuffle", [](const Permutation& p, const Array& a) { return to_array(apply_shuffle(p, to_tensor(a))); },
      py::arg("permutation"), py::arg("tensor"), "Moves flat element k to flat index forward[k].");
  m.def(
      "unshuffle",
      [](const Permutation& p, const Array& a) { return to_array(apply_inverse_shuffle(p, to_tensor(a))); },
      py::arg("permutation"), py::arg("tensor"));

  m.def(
      "conv2d",
      [](const Array& x, const Array& kernel, std::optional<Array> bias, std::size_t stride, std::size_t padding) {
        std::vector<double> b;
        if (bias) b.assign(bias->data(), bias->data() + bias->size());
        return to_array(conv2d_forward(to_tensor(x), to_tensor(kernel), std::span<const double>(b),
                                       ConvGeometry{stride, padding}));
      },
      py::arg("x"), py::arg("kernel"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("padding") = 0, "x (N, C, H, W), kernel (I, H, W, O).");

  m.def(
      "rank1_tr_split_forward",
      [](const TDTopology& t, const std::vector<Array>& cores, const Array& x, std::size_t stride,
         std::size_t padding) {
        return to_array(rank1_tr_split_forward(t, to_cores(cores), to_tensor(x), ConvGeometry{stride, padding}));
      },
      py::arg("topology"), py::arg("cores"), py::arg("x"), py::arg("stride") = 1, py::arg("padding") = 0);

  m.def("compression_ratio", &compression_ratio, py::arg("n_compressed"), py::arg("n_uncompressed"));

  m.def(
      "table1_param_counts",
      [](std::size_t channels, std::optional<std::string> kind, std::size_t rank, bool shuffled) {
        Table1Options o;
        o.channels = channels;
        if (kind) {
          const auto k = parse_topology_kind(*kind);
          auto spec = LayerCompression::td(k, uniform_ranks(k, rank));
          spec.shuffled = shuffled;
          o.layers.assign(kTable1ConvLayers, spec);
          o.layers[0] = LayerCompression::none();
        }
        const auto acc = account_parameters(o);
        return py::make_tuple(acc.compressed, acc.uncompressed, acc.ratio());
      },
      py::arg("channels") = 256, py::arg("kind") = py::none(), py::arg("rank") = 1, py::arg("shuffled") = false,
      "(N_c, N_u, r_c) of the reference network with conv layers 2..7 compressed at a uniform rank.");
}
