#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.h"
#include "noisylab/checkpoint.h"
#include "noisylab/data.h"
#include "noisylab/denoise.h"
#include "noisylab/errors.h"
#include "noisylab/metrics.h"
#include "noisylab/noise_model.h"
#include "noisylab/parallel.h"
#include "noisylab/train.h"

namespace py = pybind11;
using namespace noisylab;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<Real>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

// Stacks [C, H, W] patches into one [N, C, H, W] array.
Array stack(const Dataset& data, const std::function<const Tensor*(const NoisyPair&)>& pick) {
  const auto& h = data.header;
  Array out({static_cast<py::ssize_t>(data.size()), py::ssize_t(h.channels), py::ssize_t(h.patch_h),
             py::ssize_t(h.patch_w)});
  float* dst = out.mutable_data();
  for (const auto& p : data.pairs) {
    const auto* t = pick(p);
    dst = std::copy(t->values().begin(), t->values().end(), dst);
  }
  return out;
}

py::dict dataset_dict(const Dataset& data) {
  py::dict d;
  d["a"] = stack(data, [](const NoisyPair& p) { return &p.a.data; });
  d["b"] = stack(data, [](const NoisyPair& p) { return &p.b.data; });
  d["clean"] = data.has_clean() ? py::object(stack(data, [](const NoisyPair& p) { return &p.clean->data; }))
                                : py::object(py::none());
  std::vector<std::string> cameras;
  std::vector<std::uint32_t> isos, scenes;
  for (const auto& p : data.pairs) {
    cameras.push_back(p.a.meta.camera_id);
    isos.push_back(p.a.meta.iso);
    scenes.push_back(p.a.meta.scene_id);
  }
  d["camera"] = cameras;
  d["iso"] = isos;
  d["scene"] = scenes;
  return d;
}

Conditioning condition_batch(const NoiseModel& model, std::size_t n, const std::string& camera, std::uint32_t iso) {
  std::vector<SceneMeta> metas(n, SceneMeta{camera, iso, 0, Illumination::kNormal});
  return model.conditions().encode(metas);
}

struct PyNoiseModel {
  std::shared_ptr<NoiseModel> model;

  double nll_per_dim(const Array& noisy, const Array& clean, const std::string& camera, std::uint32_t iso) const {
    const auto n = to_tensor(noisy);
    return noisylab::nll_per_dim(*model, n, to_tensor(clean),
                                 condition_batch(*model, static_cast<std::size_t>(n.shape()[0]), camera, iso));
  }
  Array sample(const Array& clean, const std::string& camera, std::uint32_t iso, std::uint64_t seed) const {
    const auto c = to_tensor(clean);
    Rng rng(seed);
    return to_array(model->sample(c, condition_batch(*model, static_cast<std::size_t>(c.shape()[0]), camera, iso), rng));
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the noisylab noise-model and denoiser library";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConditionError>(m, "ConditionError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def(
      "run",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "noisylab");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command line; returns (exit_code, stdout, stderr).");

  m.def(
      "synth",
      [](double beta1, double beta2, int pairs, int size, int channels, std::uint64_t seed, double ramp,
         const std::string& camera, std::uint32_t iso, int pairs_per_scene) {
        SmoothCleanSource source(channels, size, size, ramp);
        SynthOptions options;
        options.camera = camera;
        options.iso = iso;
        options.n_pairs = pairs;
        options.pairs_per_scene = pairs_per_scene;
        options.seed = seed;
        return dataset_dict(synth_hgn_dataset(source, {beta1, beta2}, options));
      },
      py::arg("beta1") = 1e-2, py::arg("beta2") = 1e-4, py::arg("pairs") = 100, py::arg("size") = 32,
      py::arg("channels") = 1, py::arg("seed") = 0, py::arg("ramp") = 1.0, py::arg("camera") = "SYN",
      py::arg("iso") = 800, py::arg("pairs_per_scene") = 50);

  m.def(
      "read_dataset", [](const std::string& path) { return dataset_dict(read_dataset(path).data); },
      py::arg("path"));

  m.def(
      "read_checkpoint",
      [](const std::string& path) {
        const auto ckpt = Checkpoint::load(path);
        py::dict d;
        for (const auto& name : ckpt.names()) d[py::str(name)] = to_array(ckpt.get(name));
        return d;
      },
      py::arg("path"), "All named tensors of an NLAB file.");

  m.def(
      "psnr", [](const Array& est, const Array& clean) { return psnr(to_tensor(est), to_tensor(clean)); },
      py::arg("estimate"), py::arg("clean"));
  m.def(
      "ssim", [](const Array& est, const Array& clean) { return ssim(to_tensor(est), to_tensor(clean)); },
      py::arg("estimate"), py::arg("clean"));
  m.def(
      "noise_kl",
      [](const Array& real, const Array& sampled, const Array& clean, int bins, double range) {
        const HistogramSpec spec{bins, range};
        const auto c = to_tensor(clean);
        return kl_divergence(noise_histogram(to_tensor(real), c, spec), noise_histogram(to_tensor(sampled), c, spec));
      },
      py::arg("real"), py::arg("sampled"), py::arg("clean"), py::arg("bins") = 256, py::arg("range") = 0.2,
      "KL between the histograms of real - clean and sampled - clean.");

  m.def(
      "r2r_corrupt",
      [](const Array& noisy, double alpha, std::uint64_t seed) {
        Rng rng(seed);
        const auto r = r2r_corrupt(to_tensor(noisy), alpha, rng);
        return py::make_tuple(to_array(r.input), to_array(r.target));
      },
      py::arg("noisy"), py::arg("alpha") = 0.5, py::arg("seed") = 0);

  m.def("threads", &worker_count);
  m.def("set_threads", &set_worker_count, py::arg("workers"));

  py::class_<PyNoiseModel>(m, "NoiseModel")
      .def("nll_per_dim", &PyNoiseModel::nll_per_dim, py::arg("noisy"), py::arg("clean"), py::arg("camera"),
           py::arg("iso"))
      .def("sample", &PyNoiseModel::sample, py::arg("clean"), py::arg("camera"), py::arg("iso"), py::arg("seed") = 0)
      .def_property_readonly("descriptor", [](const PyNoiseModel& p) { return p.model->descriptor(); });

  m.def(
      "nlf_model",
      [](double beta1, double beta2, const std::string& camera, std::uint32_t iso) {
        NoiseModelSpec spec;
        spec.kind = NoiseModelKind::kNlf;
        spec.channels = 1;
        auto model = std::make_shared<NlfModel>(spec, ConditionSpace({camera}, {iso}));
        model->set_betas(beta1, beta2);
        return PyNoiseModel{model};
      },
      py::arg("beta1"), py::arg("beta2"), py::arg("camera") = "SYN", py::arg("iso") = 800,
      "Single-channel NLF model for one (camera, ISO) condition.");

  m.def(
      "load_noise_model",
      [](const std::string& path) { return PyNoiseModel{std::shared_ptr<NoiseModel>(load_noise_model(Checkpoint::load(path)))}; },
      py::arg("path"));

  m.def(
      "denoise",
      [](const std::string& ckpt_path, const Array& noisy) {
        const auto model = load_denoiser(Checkpoint::load(ckpt_path));
        return to_array(denoise(*model, to_tensor(noisy)));
      },
      py::arg("ckpt"), py::arg("noisy"), "Runs the denoiser stored in a checkpoint on [N, C, H, W] input.");
}
