#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "avc/cli/cli.hpp"
#include "avc/cli/pipeline.hpp"
#include "avc/core/error.hpp"
#include "avc/feat/mel.hpp"
#include "avc/loss/losses.hpp"
#include "avc/model/checkpoint.hpp"
#include "avc/synth/synth.hpp"
#include "avc/train/trainer.hpp"

namespace py = pybind11;
using namespace avc;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vector(const F32Array& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<float> rows_to_array(const std::vector<std::vector<float>>& rows, std::size_t dim) {
  py::array_t<float> out({rows.size(), dim});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = rows[i][j];
  }
  return out;
}

py::list recommendations(const RecommendationList& recs) {
  py::list out;
  for (const auto& r : recs) out.append(py::make_tuple(r.sample_label, r.category_label, r.distance));
  return out;
}

// Model loaded from a checkpoint, used for inference only.
class Model {
 public:
  explicit Model(const std::filesystem::path& path)
      : ckpt_(load_checkpoint(path)), model_(model_from_checkpoint<float>(ckpt_)) {}

  std::size_t visual_size() const { return model_->config().encoder.visual_size; }

  py::dict meta() const {
    py::dict d;
    for (const auto& [k, v] : ckpt_.meta.entries()) d[py::str(k)] = v;
    return d;
  }

  py::array_t<float> embed_frames(const F32Array& frames) {
    const std::size_t s = visual_size();
    if (frames.ndim() != 4 || std::size_t(frames.shape(1)) != 3 || std::size_t(frames.shape(2)) != s ||
        std::size_t(frames.shape(3)) != s) {
      throw ShapeError("embed_frames: expected an array of shape (N, 3, " + std::to_string(s) + ", " +
                       std::to_string(s) + ")");
    }
    const std::size_t n = frames.shape(0);
    NoGradGuard guard;
    const auto e = model_->embed_visual(Tensor<float>::from({n, 3, s, s}, to_vector(frames)), Mode::eval);
    return to_array(e);
  }

  py::array_t<float> embed_audio(const F32Array& mels) {
    const auto& c = model_->config().encoder;
    if (mels.ndim() != 3 || std::size_t(mels.shape(1)) != c.audio_mels ||
        std::size_t(mels.shape(2)) != c.audio_frames) {
      throw ShapeError("embed_audio: expected an array of shape (N, " + std::to_string(c.audio_mels) + ", " +
                       std::to_string(c.audio_frames) + ")");
    }
    const std::size_t n = mels.shape(0);
    NoGradGuard guard;
    const auto e = model_->embed_audio(Tensor<float>::from({n, 1, c.audio_mels, c.audio_frames}, to_vector(mels)),
                                       Mode::eval);
    return to_array(e);
  }

  py::array_t<float> correlation_probability(const F32Array& ev, const F32Array& ea) {
    if (ev.ndim() != 2 || ea.ndim() != 2 || ev.shape(0) != ea.shape(0) || ev.shape(1) != ea.shape(1)) {
      throw ShapeError("correlation_probability: embeddings must share shape (N, D)");
    }
    const std::size_t n = ev.shape(0), d = ev.shape(1);
    NoGradGuard guard;
    const auto out = model_->correlate(Tensor<float>::from({n, d}, to_vector(ev)),
                                       Tensor<float>::from({n, d}, to_vector(ea)));
    py::array_t<float> p(n);
    std::copy(out.prob.data().begin(), out.prob.data().end(), p.mutable_data());
    return p;
  }

 private:
  static py::array_t<float> to_array(const Tensor<float>& e) {
    py::array_t<float> out({e.dim(0), e.dim(1)});
    std::copy(e.data().begin(), e.data().end(), out.mutable_data());
    return out;
  }

  Checkpoint ckpt_;
  std::unique_ptr<AvModel<float>> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Audio-visual correlation models, features and sound recommendation";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "log_mel",
      [](const F32Array& samples) {
        if (samples.ndim() != 1 || samples.size() != 48000) {
          throw ShapeError("log_mel: expected 48000 mono samples at 48 kHz");
        }
        const MelSpec spec = log_mel(AudioClip{to_vector(samples), 48000});
        py::array_t<double> out({MelSpec::kMels, MelSpec::kFrames});
        std::copy(spec.values.begin(), spec.values.end(), out.mutable_data());
        return out;
      },
      py::arg("samples"), "64 x 100 natural-log mel spectrogram of one second of 48 kHz audio.");

  m.def(
      "load_frame",
      [](const std::filesystem::path& path, std::size_t size) {
        const auto px = load_frame_features(path, size);
        py::array_t<float> out({std::size_t(3), size, size});
        std::copy(px.begin(), px.end(), out.mutable_data());
        return out;
      },
      py::arg("path"), py::arg("size") = 224, "Decoded frame as a (3, size, size) array in [-1, 1].");

  m.def(
      "info_nce",
      [](const F64Array& zv, const F64Array& za, double tau) {
        if (zv.ndim() != 2 || za.ndim() != 2) throw ShapeError("info_nce: expected (N, D) arrays");
        const Shape s{std::size_t(zv.shape(0)), std::size_t(zv.shape(1))};
        return info_nce_batch(Tensor64::from(s, {zv.data(), zv.data() + zv.size()}),
                              Tensor64::from({std::size_t(za.shape(0)), std::size_t(za.shape(1))},
                                             {za.data(), za.data() + za.size()}),
                              tau)
            .item();
      },
      py::arg("z_v"), py::arg("z_a"), py::arg("tau") = 0.5);
  m.def(
      "nt_xent",
      [](const F64Array& zv, const F64Array& za, double tau) {
        if (zv.ndim() != 2 || za.ndim() != 2) throw ShapeError("nt_xent: expected (N, D) arrays");
        const Shape s{std::size_t(zv.shape(0)), std::size_t(zv.shape(1))};
        return nt_xent_batch(Tensor64::from(s, {zv.data(), zv.data() + zv.size()}),
                             Tensor64::from({std::size_t(za.shape(0)), std::size_t(za.shape(1))},
                                            {za.data(), za.data() + za.size()}),
                             tau)
            .item();
      },
      py::arg("z_v"), py::arg("z_a"), py::arg("tau") = 0.5);

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, std::size_t n_classes, std::size_t clips_per_class,
         std::size_t seconds_per_clip, std::uint64_t seed, double snr_db, std::size_t image_size,
         std::size_t threads) {
        SynthSpec spec;
        spec.n_classes = n_classes;
        spec.clips_per_class = clips_per_class;
        spec.seconds_per_clip = seconds_per_clip;
        spec.seed = seed;
        spec.audio_snr_db = snr_db;
        spec.image_size = image_size;
        const Manifest m = generate(spec, out_dir, threads);
        return m.videos.size();
      },
      py::arg("out_dir"), py::arg("n_classes") = 8, py::arg("clips_per_class") = 10, py::arg("seconds_per_clip") = 5,
      py::arg("seed") = 0, py::arg("snr_db") = 25.0, py::arg("image_size") = 224, py::arg("threads") = 0,
      "Writes the synthetic dataset and its manifest.jsonl; returns the number of clips.");

  m.def("class_tone_hz", &class_tone_hz, py::arg("k"));

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def(py::init<>())
      .def_static("load", &EmbeddingStore::load, py::arg("path"))
      .def("save", &EmbeddingStore::save, py::arg("path"))
      .def(
          "add",
          [](EmbeddingStore& s, const std::string& sample, const std::string& category, const F32Array& e) {
            s.add({sample, category, to_vector(e)});
          },
          py::arg("sample"), py::arg("category"), py::arg("embedding"))
      .def("__len__", &EmbeddingStore::size)
      .def("labels",
           [](const EmbeddingStore& s) {
             std::vector<std::pair<std::string, std::string>> out;
             for (const auto& e : s.entries()) out.emplace_back(e.sample_label, e.category_label);
             return out;
           })
      .def("embeddings",
           [](const EmbeddingStore& s) {
             std::vector<std::vector<float>> rows;
             for (const auto& e : s.entries()) rows.push_back(e.embedding);
             return rows_to_array(rows, kStoreDim);
           })
      .def(
          "topk",
          [](const EmbeddingStore& s, const F32Array& q, std::size_t k) { return recommendations(topk(to_vector(q), s, k)); },
          py::arg("query"), py::arg("k"),
          "k nearest entries as (sample, category, distance) tuples, nearest first.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("visual_size", &Model::visual_size)
      .def_property_readonly("meta", &Model::meta)
      .def("embed_frames", &Model::embed_frames, py::arg("frames"))
      .def("embed_audio", &Model::embed_audio, py::arg("mels"))
      .def("correlation_probability", &Model::correlation_probability, py::arg("e_v"), py::arg("e_a"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs an avc command; returns (exit code, stdout, stderr).");
}
