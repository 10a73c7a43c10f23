#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <iostream>

#include "zigan/cli.hpp"
#include "zigan/errors.hpp"
#include "zigan/evaluation.hpp"
#include "zigan/glyph_data.hpp"
#include "zigan/losses.hpp"
#include "zigan/networks.hpp"
#include "zigan/training.hpp"

namespace py = pybind11;
using namespace zigan;

namespace {

template <typename T>
torch::Tensor to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& arr, torch::Dtype dtype) {
  std::vector<int64_t> shape(arr.shape(), arr.shape() + arr.ndim());
  return torch::from_blob(const_cast<T*>(arr.data()), shape, dtype).clone();
}

torch::Tensor f64(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  return to_tensor<double>(arr, torch::kFloat64);
}
torch::Tensor f32(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  return to_tensor<float>(arr, torch::kFloat32);
}

template <typename T>
py::array copy_out(const torch::Tensor& t) {
  const auto c = t.contiguous();
  py::array_t<T> out(c.sizes().vec());
  std::memcpy(out.mutable_data(), c.data_ptr<T>(), static_cast<std::size_t>(c.numel()) * sizeof(T));
  return out;
}

py::array to_numpy(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return copy_out<float>(t);
    case torch::kFloat64: return copy_out<double>(t);
    case torch::kUInt8: return copy_out<std::uint8_t>(t);
    case torch::kBool: return copy_out<bool>(t);
    case torch::kInt64: return copy_out<int64_t>(t);
    default: return copy_out<double>(t.to(torch::kFloat64));
  }
}

LossWeights weights_from(double l1, double l2, double l3, double l4, double alpha) {
  LossWeights w;
  w.lambda1 = l1;
  w.lambda2 = l2;
  w.lambda3 = l3;
  w.lambda4 = l4;
  w.alpha = alpha;
  w.validate();
  return w;
}

ObjectiveTerms<double> terms_from(const std::map<std::string, double>& d) {
  ObjectiveTerms<double> t;
  for (const auto& [k, v] : d) {
    if (k == "gan") t.gan = v;
    else if (k == "consistency") t.consistency = v;
    else if (k == "alignment") t.alignment = v;
    else if (k == "style") t.style = v;
    else throw Error(ErrorCode::Config, "unknown objective term '" + k + "'");
  }
  return t;
}

MmdEstimator estimator_from(const std::string& s) {
  if (s == "biased") return MmdEstimator::Biased;
  if (s == "unbiased") return MmdEstimator::Unbiased;
  throw Error(ErrorCode::Config, "estimator must be 'biased' or 'unbiased'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

py::list specs_to_list(const std::vector<LayerSpec>& specs) {
  py::list out;
  for (const auto& s : specs) {
    py::dict d;
    d["in_channels"] = s.in_channels;
    d["out_channels"] = s.out_channels;
    d["kernel"] = s.kernel;
    d["stride"] = s.stride;
    d["batch_norm"] = s.batch_norm;
    d["activation"] = activation_name(s.activation);
    d["dropout"] = s.dropout_rate;
    d["output_size"] = s.output_size;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of zigan-forge: glyph preprocessing, losses, metrics and the command-line tool.";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::object(py::exception<Error>(m, "ZiganError", PyExc_ValueError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto& cls = error_type.get_stored();
      py::object instance = cls(e.what());
      instance.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(cls.ptr(), instance.ptr());
    }
  });

  // ------------------------------------------------------------ glyph data
  m.def(
      "normalize_image", [](py::array_t<double, py::array::c_style | py::array::forcecast> raw) {
        return to_numpy(normalize_image(f64(raw)));
      },
      py::arg("raw"), "H×W or H×W×C values in [0,255] → H×W×3 float32 in [-1,1].");
  m.def(
      "denormalize_image", [](py::array_t<float, py::array::c_style | py::array::forcecast> pixels) {
        return to_numpy(denormalize_image(f32(pixels)));
      },
      py::arg("pixels"));
  m.def(
      "binarize", [](py::array_t<float, py::array::c_style | py::array::forcecast> pixels, double threshold) {
        return to_numpy(binarize(f32(pixels), threshold));
      },
      py::arg("pixels"), py::arg("threshold") = 0.0);
  m.def(
      "render_glyph", [](const std::filesystem::path& font, std::uint32_t cp, int canvas) {
        return to_numpy(render_source_glyph(font, static_cast<char32_t>(cp), canvas).pixels);
      },
      py::arg("font"), py::arg("codepoint"), py::arg("canvas"));
  m.def(
      "has_glyph", [](const std::filesystem::path& font, std::uint32_t cp) {
        return FontFace::open(font).has_glyph(static_cast<char32_t>(cp));
      },
      py::arg("font"), py::arg("codepoint"));
  m.def(
      "split_codepoints",
      [](const std::vector<std::uint32_t>& corpus, int shots, std::uint64_t seed) {
        const auto split = split_codepoints(std::vector<char32_t>(corpus.begin(), corpus.end()), shots, seed);
        return py::make_tuple(std::vector<std::uint32_t>(split.train.begin(), split.train.end()),
                              std::vector<std::uint32_t>(split.test.begin(), split.test.end()));
      },
      py::arg("corpus"), py::arg("shots"), py::arg("seed"));

  // ------------------------------------------------------------ losses
  m.def(
      "gaussian_kernel",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
         py::array_t<double, py::array::c_style | py::array::forcecast> b,
         double sigma) { return gaussian_kernel(f64(a), f64(b), sigma).item<double>(); },
      py::arg("a"), py::arg("b"), py::arg("sigma"));
  m.def(
      "mk_mmd_sq",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
         py::array_t<double, py::array::c_style | py::array::forcecast> b, std::vector<double> sigmas,
         const std::string& estimator) {
        return mk_mmd_sq(f64(a), f64(b), KernelBank{std::move(sigmas)}, estimator_from(estimator)).item<double>();
      },
      py::arg("a"), py::arg("b"), py::arg("sigmas"), py::arg("estimator") = "biased");
  m.def(
      "median_heuristic_bank",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> joint) {
        return median_heuristic_bank(f64(joint)).sigmas;
      },
      py::arg("joint"));
  m.def(
      "weighted_total",
      [](const std::map<std::string, double>& terms, double l1, double l2, double l3, double l4, double alpha) {
        return weighted_total(terms_from(terms), weights_from(l1, l2, l3, l4, alpha));
      },
      py::arg("terms"), py::arg("lambda1") = 5.0, py::arg("lambda2") = 10.0, py::arg("lambda3") = 10.0,
      py::arg("lambda4") = 10.0, py::arg("alpha") = 5.0,
      "One direction's objective from its grouped terms (gan, consistency, alignment, style).");
  m.def(
      "total_losses",
      [](const std::map<std::string, double>& x2y, const std::map<std::string, double>& y2x, double l1, double l2,
         double l3, double l4, double alpha) {
        return total_losses(terms_from(x2y), terms_from(y2x), weights_from(l1, l2, l3, l4, alpha));
      },
      py::arg("x2y"), py::arg("y2x"), py::arg("lambda1") = 5.0, py::arg("lambda2") = 10.0,
      py::arg("lambda3") = 10.0, py::arg("lambda4") = 10.0, py::arg("alpha") = 5.0);
  m.def(
      "lr_at",
      [](int epoch, double lr0, int halve_every) {
        TrainConfig c;
        c.lr0 = lr0;
        c.halve_every = halve_every;
        return lr_at(c, epoch);
      },
      py::arg("epoch"), py::arg("lr0") = 3e-4, py::arg("halve_every") = 500);

  // ------------------------------------------------------------ networks
  m.def(
      "encoder_specs",
      [](int resolution, int width_divisor) {
        return specs_to_list(encoder_specs(GeneratorOptions{resolution, width_divisor, true}));
      },
      py::arg("resolution") = 256, py::arg("width_divisor") = 1);
  m.def(
      "decoder_specs",
      [](int resolution, int width_divisor, bool skip_connections) {
        return specs_to_list(decoder_specs(GeneratorOptions{resolution, width_divisor, skip_connections}));
      },
      py::arg("resolution") = 256, py::arg("width_divisor") = 1, py::arg("skip_connections") = true);
  m.def(
      "cam_attention",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> features,
         py::array_t<double, py::array::c_style | py::array::forcecast> w_avg,
         py::array_t<double, py::array::c_style | py::array::forcecast> w_max) {
        const auto r = cam_attention(f64(features), f64(w_avg), f64(w_max));
        return py::make_tuple(to_numpy(r.cam_logit), to_numpy(r.attention.per_map));
      },
      py::arg("features"), py::arg("w_avg"), py::arg("w_max"), "Returns (cam_logit, per_map).");

  // ------------------------------------------------------------ metrics
  m.def(
      "iou",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> generated,
         py::array_t<float, py::array::c_style | py::array::forcecast> truth,
         double threshold) { return iou(f32(generated), f32(truth), threshold); },
      py::arg("generated"), py::arg("truth"), py::arg("threshold") = 0.0);
  m.def(
      "frechet_distance",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> mu1,
         py::array_t<double, py::array::c_style | py::array::forcecast> cov1,
         py::array_t<double, py::array::c_style | py::array::forcecast> mu2,
         py::array_t<double, py::array::c_style | py::array::forcecast> cov2) {
        return frechet_distance(f64(mu1), f64(cov1), f64(mu2), f64(cov2));
      },
      py::arg("mu1"), py::arg("cov1"), py::arg("mu2"), py::arg("cov2"));
  m.def(
      "fid_from_features",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> real,
         py::array_t<double, py::array::c_style | py::array::forcecast> fake) {
        const auto r = fid_from_features(f64(real), f64(fake));
        return py::make_tuple(r.value, r.too_few_samples);
      },
      py::arg("real"), py::arg("fake"), "Returns (fid, too_few_samples).");

  // ------------------------------------------------------------ CLI
  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        std::vector<std::string> argv = {"zigan-forge"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::vector<char*> ptrs;
        for (auto& a : argv) ptrs.push_back(a.data());
        const int code = cli_main(static_cast<int>(ptrs.size()), ptrs.data());
        std::cout.flush();
        std::cerr.flush();
        return code;
      },
      py::arg("args"), "Runs the command-line tool in-process; returns its exit status.");
}
