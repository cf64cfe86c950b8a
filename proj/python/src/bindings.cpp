#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "mpo/landscape.hpp"
#include "mpo/snapshot.hpp"
#include "mpo/train.hpp"

namespace py = pybind11;
using namespace mpo;

namespace {

py::array_t<double> to_array(const Vec& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::memcpy(a.mutable_data(), v.data(), v.size() * sizeof(double));
    return a;
}

Vec to_vec(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return Vec(a.data(), a.data() + a.size());
}

Dataset dataset_from_arrays(const py::array_t<double, py::array::c_style | py::array::forcecast>& images,
                            const std::vector<int>& labels, int num_classes) {
    if (images.ndim() != 4) throw InputError("images must have shape (N, C, H, W)");
    Dataset ds;
    ds.images = Tensor(static_cast<int>(images.shape(0)),
                       {static_cast<int>(images.shape(1)), static_cast<int>(images.shape(2)),
                        static_cast<int>(images.shape(3))});
    std::memcpy(ds.images.data.data(), images.data(), ds.images.data.size() * sizeof(double));
    ds.labels = labels;
    ds.num_classes = num_classes;
    ds.validate();
    return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pattern-fitting loss-landscape planes";

    py::register_exception<Error>(m, "MpoError");

    py::class_<nn::ModelSpec>(m, "ModelSpec")
        .def_property_readonly("param_count", &nn::ModelSpec::param_count)
        .def_property_readonly("num_classes", &nn::ModelSpec::num_classes)
        .def_property_readonly("input_shape",
                               [](const nn::ModelSpec& s) {
                                   const Shape3 i = s.input_shape();
                                   return py::make_tuple(i.c, i.h, i.w);
                               })
        .def("to_json", &nn::ModelSpec::to_json)
        .def_static("from_json", &nn::ModelSpec::from_json);

    m.def(
        "make_mlp",
        [](std::tuple<int, int, int> in, int classes, std::vector<int> hidden) {
            return nn::make_mlp({std::get<0>(in), std::get<1>(in), std::get<2>(in)}, classes, {hidden});
        },
        py::arg("input_shape"), py::arg("num_classes"), py::arg("hidden") = std::vector<int>{32});
    m.def(
        "make_conv_net",
        [](std::tuple<int, int, int> in, int classes, std::vector<int> channels, bool batchnorm, int pooled,
           int hidden) {
            return nn::make_conv_net({std::get<0>(in), std::get<1>(in), std::get<2>(in)}, classes,
                                     {channels, batchnorm, pooled, hidden});
        },
        py::arg("input_shape"), py::arg("num_classes"), py::arg("channels") = std::vector<int>{8, 32, 64},
        py::arg("batchnorm") = false, py::arg("pooled") = 4, py::arg("hidden") = 128);
    m.def(
        "reference_net",
        [](std::tuple<int, int, int> in, int classes, bool bn) {
            return nn::reference_net({std::get<0>(in), std::get<1>(in), std::get<2>(in)}, classes, bn);
        },
        py::arg("input_shape"), py::arg("num_classes"), py::arg("batchnorm") = false);

    py::class_<Mask>(m, "Mask")
        .def_readonly("width", &Mask::width)
        .def_readonly("height", &Mask::height)
        .def("count_black", &Mask::count_black)
        .def("to_array", [](const Mask& mk) {
            py::array_t<std::uint8_t> a({mk.height, mk.width});
            std::memcpy(a.mutable_data(), mk.pixels.data(), mk.pixels.size());
            return a;
        });
    m.def("checkerboard", &checkerboard, py::arg("width"), py::arg("height"), py::arg("tile") = 1);
    m.def("checkerboard_with_border", &checkerboard_with_border, py::arg("width"), py::arg("height"),
          py::arg("tile") = 1);
    m.def("random_mask", &gen_random_mask, py::arg("width"), py::arg("height"), py::arg("p"), py::arg("seed"));

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&dataset_from_arrays), py::arg("images"), py::arg("labels"), py::arg("num_classes"))
        .def("__len__", &Dataset::size)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("warnings", &Dataset::warnings)
        .def_property_readonly("images", [](const Dataset& d) {
            const Shape3 s = d.shape();
            py::array_t<double> a({d.size(), s.c, s.h, s.w});
            std::memcpy(a.mutable_data(), d.images.data.data(), d.images.data.size() * sizeof(double));
            return a;
        });
    m.def(
        "make_synthetic",
        [](int n, int size, std::uint64_t seed, bool test) {
            return make_synthetic(n, size, seed, test ? Split::test : Split::train);
        },
        py::arg("n_per_class"), py::arg("image_size"), py::arg("seed"), py::arg("test") = false);
    m.def(
        "load_idx", [](const std::string& i, const std::string& l) { return load_idx(i, l); }, py::arg("images"),
        py::arg("labels"));
    m.def(
        "load_cifar10", [](const std::vector<std::string>& paths) { return load_cifar10(paths); }, py::arg("paths"));

    py::class_<PlaneParams>(m, "PlaneParams")
        .def_property_readonly("w_origin", [](const PlaneParams& p) { return to_array(p.w_origin); })
        .def_property_readonly("w_up", [](const PlaneParams& p) { return to_array(p.w_up); })
        .def_property_readonly("phi_right", [](const PlaneParams& p) { return to_array(p.phi_right); })
        .def_readwrite("scale", &PlaneParams::scale)
        .def_property_readonly("w_right", [](const PlaneParams& p) { return to_array(orthogonalize(p.w_up, p.phi_right)); })
        .def("trainable_count", &PlaneParams::trainable_count);
    m.def("init_plane", &init_plane, py::arg("spec"), py::arg("seed"), py::arg("scale") = 0.1);
    m.def(
        "orthogonalize", [](const py::array_t<double>& up, const py::array_t<double>& phi) {
            return to_array(orthogonalize(to_vec(up), to_vec(phi)));
        },
        py::arg("w_up"), py::arg("phi_right"));
    m.def(
        "materialize",
        [](const PlaneParams& p, double alpha, double beta) { return to_array(materialize(p, {alpha, beta})); },
        py::arg("plane"), py::arg("alpha"), py::arg("beta"));

    m.def(
        "evaluate",
        [](const nn::ModelSpec& spec, const py::array_t<double>& w, const Dataset& ds) {
            const auto r = nn::evaluate(spec, to_vec(w), ds.all(), nn::Mode::train);
            return py::make_tuple(r.loss, r.accuracy);
        },
        py::arg("spec"), py::arg("weights"), py::arg("dataset"),
        "Mean cross-entropy and accuracy; BN uses the dataset's own statistics.");

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("lr_final_fraction", &TrainConfig::lr_final_fraction)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("cells_per_update", &TrainConfig::cells_per_update)
        .def_readwrite("white_ce_clamp", &TrainConfig::white_ce_clamp)
        .def_readwrite("s_init", &TrainConfig::s_init)
        .def_readwrite("iterations", &TrainConfig::iterations)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("log_every", &TrainConfig::log_every)
        .def_readwrite("threads", &TrainConfig::threads);

    m.def(
        "train",
        [](const nn::ModelSpec& spec, const Dataset& ds, const Mask& mask, const TrainConfig& cfg) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(spec, ds, mask, cfg);
            }
            py::list log;
            for (const auto& rec : r.report.records)
                log.append(py::dict(py::arg("iteration") = rec.iteration, py::arg("objective") = rec.objective,
                                    py::arg("black_ce") = rec.black_ce, py::arg("white_ce") = rec.white_ce,
                                    py::arg("scale") = rec.scale, py::arg("ortho_residual") = rec.ortho_residual));
            return py::make_tuple(r.plane, log);
        },
        py::arg("spec"), py::arg("dataset"), py::arg("mask"), py::arg("config"),
        "Fit a plane to the mask. Returns (plane, log records).");

    py::class_<GridResult>(m, "GridResult")
        .def_readonly("rows", &GridResult::rows)
        .def_readonly("cols", &GridResult::cols)
        .def_property_readonly("loss",
                               [](const GridResult& g) {
                                   return to_array(g.loss).attr("reshape")(g.rows, g.cols);
                               })
        .def_property_readonly("accuracy", [](const GridResult& g) {
            return to_array(g.accuracy).attr("reshape")(g.rows, g.cols);
        });
    m.def(
        "eval_grid",
        [](const PlaneParams& plane, const nn::ModelSpec& spec, const Dataset& ds, int width, int height,
           bool render, int max_examples, std::uint64_t seed) {
            const Extent e = render ? Extent::render_default(width, height) : Extent::integer_grid(width, height);
            py::gil_scoped_release release;
            return eval_grid(plane, spec, ds, e, {max_examples, seed});
        },
        py::arg("plane"), py::arg("spec"), py::arg("dataset"), py::arg("width"), py::arg("height"),
        py::arg("render") = false, py::arg("max_examples") = 2048, py::arg("subsample_seed") = 0);
    m.def(
        "black_white_means",
        [](const GridResult& g, const Mask& mask) {
            const auto r = black_white_means(g, mask);
            return py::make_tuple(r.mean_acc_black, r.mean_acc_white,
                                  r.diff ? py::object(py::float_(*r.diff)) : py::object(py::none()));
        },
        py::arg("grid"), py::arg("mask"), "(mean black accuracy, mean white accuracy, difference or None)");
    m.def("pearson", &pearson, py::arg("a"), py::arg("b"));
    m.def("save_plane", &save_plane, py::arg("plane"), py::arg("path"));
    m.def("load_plane", &load_plane, py::arg("path"));
}
