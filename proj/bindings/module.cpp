// Python bindings for the bgrid core: tensors cross the boundary as
// numpy arrays (copied), reports as plain dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bgrid/deform.hpp"
#include "bgrid/field_solver.hpp"
#include "bgrid/io.hpp"
#include "bgrid/metrics.hpp"
#include "bgrid/parallel.hpp"
#include "bgrid/pipeline.hpp"

namespace py = pybind11;
using namespace bgrid;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
        shape[i] = static_cast<std::size_t>(arr.shape(i));
    }
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy_n(t.data(), t.size(), arr.mutable_data());
    return arr;
}

// Rank-D arrays are a single channel; rank-(D+1) arrays are channels-first.
Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr,
                       std::optional<std::vector<double>> spacing) {
    Tensor t = tensor_from_array(arr);
    if (t.rank() <= 3) {
        auto shape = t.shape();
        shape.insert(shape.begin(), 1);
        t = Tensor(shape, std::move(t.values()));
    }
    Image img(std::move(t));
    if (spacing) img.set_spacing(std::move(*spacing));
    return img;
}

py::array_t<double> array_from_image(const Image& img) {
    if (img.channels() == 1) {
        Tensor t(img.spatial_shape(), img.tensor.values());
        return array_from_tensor(t);
    }
    return array_from_tensor(img.tensor);
}

Kernel kernel_from_name(const std::string& name) {
    if (name == "nearest") return Kernel::Nearest;
    if (name == "linear") return Kernel::Linear;
    throw std::invalid_argument("kernel must be 'nearest' or 'linear'");
}

GuidanceMode guidance_mode_from_name(const std::string& name) {
    if (name == "intensity") return GuidanceMode::Intensity;
    if (name == "luminance") return GuidanceMode::Luminance;
    if (name == "external") return GuidanceMode::External;
    throw std::invalid_argument("mode must be 'intensity', 'luminance', or 'external'");
}

GridParams params_from_kwargs(double ss, double sr, double sigma,
                              const std::string& splat_kernel,
                              const std::string& slice_kernel, long range_bins) {
    GridParams p;
    p.spatial_rate = ss;
    p.range_rate = sr;
    p.blur_sigma = sigma;
    p.splat_kernel = kernel_from_name(splat_kernel);
    p.slice_kernel = kernel_from_name(slice_kernel);
    if (range_bins > 0) p.range_extent = static_cast<std::size_t>(range_bins);
    p.validate();
    return p;
}

KeypointSet keypoints_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& fixed,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& moving) {
    if (fixed.ndim() != 2 || moving.ndim() != 2 || fixed.shape(0) != moving.shape(0) ||
        fixed.shape(1) != moving.shape(1)) {
        throw std::invalid_argument("keypoints must be matching (N, D) arrays");
    }
    KeypointSet kps;
    const std::size_t d = static_cast<std::size_t>(fixed.shape(1));
    for (py::ssize_t i = 0; i < fixed.shape(0); ++i) {
        kps.add({fixed.data() + i * fixed.shape(1), d},
                {moving.data() + i * moving.shape(1), d});
    }
    return kps;
}

DisplacementField field_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr,
    std::optional<std::vector<double>> spacing) {
    DisplacementField f(tensor_from_array(arr));
    if (spacing) {
        if (spacing->size() != f.spatial_rank()) {
            throw std::invalid_argument("spacing rank does not match field");
        }
        f.spacing = std::move(*spacing);
    }
    return f;
}

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Differentiable bilateral grid filtering and keypoint registration";

    py::register_exception<IoError>(m, "IoError");
    py::register_exception<DegenerateGuidanceError>(m, "DegenerateGuidanceError");
    py::register_exception<NoConstraintsError>(m, "NoConstraintsError");

    py::class_<GridParams>(m, "GridParams")
        .def(py::init([](double ss, double sr, double sigma, const std::string& splat_kernel,
                         const std::string& slice_kernel, long range_bins) {
                 return params_from_kwargs(ss, sr, sigma, splat_kernel, slice_kernel,
                                           range_bins);
             }),
             py::arg("ss") = 8.0, py::arg("sr") = 0.125, py::arg("sigma") = 1.0,
             py::arg("splat_kernel") = "linear", py::arg("slice_kernel") = "linear",
             py::arg("range_bins") = 0)
        .def_readwrite("ss", &GridParams::spatial_rate)
        .def_readwrite("sr", &GridParams::range_rate)
        .def_readwrite("sigma", &GridParams::blur_sigma)
        .def("__repr__", [](const GridParams& p) {
            return "GridParams(ss=" + std::to_string(p.spatial_rate) +
                   ", sr=" + std::to_string(p.range_rate) +
                   ", sigma=" + std::to_string(p.blur_sigma) + ")";
        });

    py::class_<SamplingGrid>(m, "SamplingGrid")
        .def_property_readonly("grid_shape",
                               [](const SamplingGrid& g) { return g.grid_shape; })
        .def_property_readonly("coords", [](const SamplingGrid& g) {
            py::list out;
            for (const Tensor& c : g.coords) out.append(array_from_tensor(c));
            return out;
        });

    m.def("set_threads", &set_thread_count, py::arg("n"));

    m.def(
        "make_guidance",
        [](const DoubleArray& image, const std::string& mode) {
            return array_from_tensor(
                make_guidance(image_from_array(image, {}), guidance_mode_from_name(mode)));
        },
        py::arg("image"), py::arg("mode") = "intensity");

    m.def(
        "build_sampling_grid",
        [](const DoubleArray& guidance, const GridParams& p) {
            const Tensor g = tensor_from_array(guidance);
            return build_sampling_grid(g.shape(), p, g);
        },
        py::arg("guidance"), py::arg("params"));

    m.def(
        "splat",
        [](const DoubleArray& input, const SamplingGrid& grid, const std::string& kernel,
           bool homogeneous) {
            Tensor t = tensor_from_array(input);
            if (t.rank() == grid.spatial_rank()) {
                auto shape = t.shape();
                shape.insert(shape.begin(), 1);
                t = Tensor(shape, std::move(t.values()));
            }
            const Kernel k = kernel_from_name(kernel);
            const BilateralGrid g =
                homogeneous ? splat_homogeneous(t, grid, k) : splat(t, grid, k);
            return array_from_tensor(g.data);
        },
        py::arg("input"), py::arg("grid"), py::arg("kernel") = "linear",
        py::arg("homogeneous") = false);

    m.def(
        "slice",
        [](const DoubleArray& grid_data, const SamplingGrid& grid,
           const std::string& kernel) {
            return array_from_tensor(
                slice({tensor_from_array(grid_data), false}, grid,
                      kernel_from_name(kernel)));
        },
        py::arg("grid_data"), py::arg("grid"), py::arg("kernel") = "linear");

    m.def(
        "splat_backward",
        [](const DoubleArray& grid_cotangent, const DoubleArray& input,
           const SamplingGrid& grid, const std::string& kernel) {
            const SplatBackward b =
                splat_backward(tensor_from_array(grid_cotangent), tensor_from_array(input),
                               grid, kernel_from_name(kernel));
            py::list coords;
            for (const Tensor& g : b.coord_grads) coords.append(array_from_tensor(g));
            return py::make_tuple(array_from_tensor(b.input_grad), coords);
        },
        py::arg("grid_cotangent"), py::arg("input"), py::arg("grid"),
        py::arg("kernel") = "linear");

    m.def(
        "slice_backward",
        [](const DoubleArray& output_cotangent, const DoubleArray& grid_data,
           const SamplingGrid& grid, const std::string& kernel) {
            const SliceBackward b = slice_backward(
                tensor_from_array(output_cotangent), {tensor_from_array(grid_data), false},
                grid, kernel_from_name(kernel));
            py::list coords;
            for (const Tensor& g : b.coord_grads) coords.append(array_from_tensor(g));
            return py::make_tuple(array_from_tensor(b.grid_grad), coords);
        },
        py::arg("output_cotangent"), py::arg("grid_data"), py::arg("grid"),
        py::arg("kernel") = "linear");

    m.def(
        "normalize_by_weight",
        [](const DoubleArray& data, const DoubleArray& weight, double epsilon) {
            return array_from_tensor(normalize_by_weight(
                tensor_from_array(data), tensor_from_array(weight), epsilon));
        },
        py::arg("data"), py::arg("weight"), py::arg("epsilon") = kWeightEpsilonF64);

    m.def(
        "gaussian_blur_grid",
        [](const DoubleArray& grid_data, double sigma) {
            return array_from_tensor(
                gaussian_blur_grid({tensor_from_array(grid_data), false}, sigma).data);
        },
        py::arg("grid_data"), py::arg("sigma"));

    m.def(
        "bilateral_filter",
        [](const DoubleArray& image, const std::optional<DoubleArray>& guidance,
           const GridParams& p) {
            const Image img = image_from_array(image, {});
            const Tensor g = guidance ? tensor_from_array(*guidance)
                                      : make_guidance(img, GuidanceMode::Intensity);
            return array_from_image(bilateral_filter(img, g, p));
        },
        py::arg("image"), py::arg("guidance") = py::none(), py::arg("params") = GridParams{});

    m.def(
        "joint_bilateral_upsample",
        [](const DoubleArray& low, const DoubleArray& guidance, const GridParams& p,
           std::size_t scale) {
            Tensor t = tensor_from_array(low);
            const Tensor g = tensor_from_array(guidance);
            bool had_channels = true;
            if (t.rank() == g.rank()) {
                auto shape = t.shape();
                shape.insert(shape.begin(), 1);
                t = Tensor(shape, std::move(t.values()));
                had_channels = false;
            }
            Tensor up = joint_bilateral_upsample(t, g, p, scale);
            if (!had_channels) {
                std::vector<std::size_t> shape(up.shape().begin() + 1, up.shape().end());
                up = Tensor(shape, std::move(up.values()));
            }
            return array_from_tensor(up);
        },
        py::arg("low"), py::arg("guidance"), py::arg("params"), py::arg("scale"));

    m.def(
        "brute_force_bilateral",
        [](const DoubleArray& image, const DoubleArray& guidance, double sigma_s,
           double sigma_r) {
            return array_from_image(brute_force_bilateral(
                image_from_array(image, {}), tensor_from_array(guidance), sigma_s, sigma_r));
        },
        py::arg("image"), py::arg("guidance"), py::arg("sigma_s"), py::arg("sigma_r"));

    m.def(
        "keypoint_field",
        [](const DoubleArray& fixed_kps, const DoubleArray& moving_kps,
           const DoubleArray& fixed_image, const GridParams& p, double tol, int max_iter,
           double weight_threshold, double range_coupling,
           std::optional<std::vector<double>> spacing) {
            InpaintConfig cfg;
            cfg.tol = tol;
            cfg.max_iter = max_iter;
            cfg.weight_threshold = weight_threshold;
            cfg.range_coupling = range_coupling;
            const KeypointFieldResult res =
                keypoint_field(keypoints_from_arrays(fixed_kps, moving_kps),
                               image_from_array(fixed_image, std::move(spacing)), p, cfg);
            const InpaintReport rep = field_residual_report(res.inpaint, cfg);
            py::dict report;
            report["iterations"] = rep.iterations;
            report["converged"] = rep.converged;
            report["residual"] = rep.max_residual;
            report["max_constraint_violation"] = rep.max_constraint_violation;
            report["grid_shape"] = res.grid_shape;
            return py::make_tuple(array_from_tensor(res.field.vectors), report);
        },
        py::arg("fixed_kps"), py::arg("moving_kps"), py::arg("fixed_image"),
        py::arg("params") = GridParams{}, py::arg("tol") = 1e-5,
        py::arg("max_iter") = 5000, py::arg("weight_threshold") = 1e-6,
        py::arg("range_coupling") = 1.0, py::arg("spacing") = py::none());

    m.def(
        "warp",
        [](const DoubleArray& image, const DoubleArray& field) {
            return array_from_image(
                warp(image_from_array(image, {}), field_from_array(field, {})));
        },
        py::arg("image"), py::arg("field"));

    m.def(
        "compose",
        [](const DoubleArray& outer, const DoubleArray& inner) {
            return array_from_tensor(
                compose(field_from_array(outer, {}), field_from_array(inner, {})).vectors);
        },
        py::arg("outer"), py::arg("inner"));

    m.def(
        "integrate_velocity",
        [](const DoubleArray& velocity, int steps) {
            return array_from_tensor(
                integrate_velocity(field_from_array(velocity, {}), steps).vectors);
        },
        py::arg("velocity"), py::arg("steps") = 7);

    m.def(
        "jacobian_determinant",
        [](const DoubleArray& field) {
            return array_from_tensor(jacobian_determinant(field_from_array(field, {})));
        },
        py::arg("field"));

    m.def(
        "dice",
        [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& b,
           const std::vector<std::int32_t>& labels) {
            auto mask = [](const auto& arr) {
                std::vector<std::size_t> shape(arr.ndim());
                for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = arr.shape(i);
                return LabelMask(
                    std::vector<std::int32_t>(arr.data(), arr.data() + arr.size()), shape);
            };
            const DiceResult d = dice(mask(a), mask(b), labels);
            py::dict per;
            for (const auto& [label, value] : d.per_label) {
                per[py::int_(label)] = value;
            }
            return py::make_tuple(d.mean, per);
        },
        py::arg("a"), py::arg("b"), py::arg("labels") = std::vector<std::int32_t>{});

    m.def(
        "hd95",
        [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& b,
           std::int32_t label, std::optional<std::vector<double>> spacing) {
            auto mask = [&](const auto& arr) {
                std::vector<std::size_t> shape(arr.ndim());
                for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = arr.shape(i);
                return LabelMask(
                    std::vector<std::int32_t>(arr.data(), arr.data() + arr.size()), shape,
                    spacing.value_or(std::vector<double>{}));
            };
            return hd95(mask(a), mask(b), label);
        },
        py::arg("a"), py::arg("b"), py::arg("label") = 1, py::arg("spacing") = py::none());

    m.def(
        "sdlogj",
        [](const DoubleArray& field) {
            const auto r = sdlogj(field_from_array(field, {}));
            return py::make_tuple(r.sdlogj, r.folds);
        },
        py::arg("field"));

    m.def(
        "tre",
        [](const DoubleArray& field, const DoubleArray& fixed_kps,
           const DoubleArray& moving_kps, std::optional<std::vector<double>> spacing) {
            const TreResult r = tre(field_from_array(field, std::move(spacing)),
                                    keypoints_from_arrays(fixed_kps, moving_kps));
            return py::make_tuple(r.mean_mm, r.per_landmark_mm);
        },
        py::arg("field"), py::arg("fixed_kps"), py::arg("moving_kps"),
        py::arg("spacing") = py::none());

    m.def(
        "mse",
        [](const DoubleArray& a, const DoubleArray& b) {
            return mse(image_from_array(a, {}), image_from_array(b, {}));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "smoothness",
        [](const DoubleArray& field) { return smoothness(field_from_array(field, {})); },
        py::arg("field"));

    m.def("read_tensor",
          [](const std::string& path) { return array_from_tensor(read_tensor(path)); },
          py::arg("path"));
    m.def("write_tensor",
          [](const DoubleArray& t, const std::string& path) {
              write_tensor(tensor_from_array(t), path);
          },
          py::arg("tensor"), py::arg("path"));
    m.def("read_image",
          [](const std::string& path) {
              const Image img = read_image(path);
              return py::make_tuple(array_from_image(img), img.spacing);
          },
          py::arg("path"));
    m.def("write_image",
          [](const DoubleArray& image, const std::string& path) {
              write_image(image_from_array(image, {}), path);
          },
          py::arg("image"), py::arg("path"));
    m.def("read_keypoints",
          [](const std::string& path) {
              const KeypointSet kps = read_keypoints(path);
              const py::ssize_t n = static_cast<py::ssize_t>(kps.count());
              const py::ssize_t d = static_cast<py::ssize_t>(kps.dim);
              py::array_t<double> fixed({n, d}), moving({n, d});
              std::copy(kps.fixed.begin(), kps.fixed.end(), fixed.mutable_data());
              std::copy(kps.moving.begin(), kps.moving.end(), moving.mutable_data());
              return py::make_tuple(fixed, moving);
          },
          py::arg("path"));

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
