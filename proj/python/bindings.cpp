// Python bindings. Structured values cross the boundary as JSON text and are
// turned into dicts by the pure-Python wrapper in avatarcraft/__init__.py;
// images cross as (128, 128, 3) uint8 arrays.

#include <memory>
#include <stdexcept>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "avatarcraft/corpus.hpp"
#include "avatarcraft/encoder.hpp"
#include "avatarcraft/engine.hpp"
#include "avatarcraft/evalkit.hpp"
#include "avatarcraft/io.hpp"
#include "avatarcraft/service.hpp"
#include "avatarcraft/translator.hpp"

namespace py = pybind11;
using namespace avatarcraft;
using json = nlohmann::json;
using Pixels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

namespace {

Pixels to_array(const ImageBuffer& img) {
  Pixels out({img.height(), img.width(), ImageBuffer::kChannels});
  std::copy(img.bytes().begin(), img.bytes().end(), out.mutable_data());
  return out;
}

ImageBuffer from_array(const Pixels& a) {
  if (a.ndim() != 3 || a.shape(2) != ImageBuffer::kChannels)
    throw std::invalid_argument("image must be an (H, W, 3) uint8 array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return ImageBuffer(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

engine::CraftingParams params_of(const std::string& text) {
  return engine::params_from_json(json::parse(text));
}

std::string dump(const json& j) { return j.dump(); }

translator::HeadOutputs outputs_of(const std::string& text) {
  const auto j = json::parse(text);
  translator::HeadOutputs out;
  const auto s = j.at("s_hat").get<std::vector<double>>();
  const auto t = j.at("t_logits").get<std::vector<double>>();
  const auto a = j.at("a_hat").get<std::vector<double>>();
  if (s.size() != out.s_hat.size() || t.size() != out.t_logits.size() || a.size() != out.a_hat.size())
    throw std::invalid_argument("head outputs have the wrong length");
  std::copy(s.begin(), s.end(), out.s_hat.begin());
  std::copy(t.begin(), t.end(), out.t_logits.begin());
  std::copy(a.begin(), a.end(), out.a_hat.begin());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<engine::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<translator::SchemaMismatch>(m, "SchemaMismatch", PyExc_RuntimeError);
  py::register_exception<evalkit::InsufficientSamples>(m, "InsufficientSamples", PyExc_ValueError);

  m.def("schema_json", [] { return dump(engine::schema_json(engine::schema())); });
  m.def("sample_params", [](std::uint64_t seed) { return dump(engine::params_to_json(engine::sample_params(seed))); });
  m.def("neutral_params", [] { return dump(engine::params_to_json(engine::CraftingParams::neutral())); });
  m.def("validate", [](const std::string& params) {
    json issues = json::array();
    for (const auto& i : engine::validate(params_of(params))) issues.push_back({{"field", i.field}, {"message", i.message}});
    return dump(issues);
  });
  m.def("condition_mask", [](std::array<int, engine::kNumGroups> t) {
    const auto mask = engine::condition_mask(t);
    return std::vector<bool>(mask.begin(), mask.end());
  });
  m.def("render", [](const std::string& params) {
    const auto p = params_of(params);
    ImageBuffer img;
    {
      py::gil_scoped_release release;
      img = engine::render(p);
    }
    return to_array(img);
  });
  m.def("pixel_sha256", [](const Pixels& img) { return from_array(img).sha256(); });
  m.def("encode_png", [](const Pixels& img) {
    const auto bytes = io::encode_png(from_array(img));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_png", [](const py::bytes& data) {
    const std::string s = data;
    return to_array(io::decode_png(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
  });
  m.def("stylize", [](const Pixels& img, const std::string& style, std::uint64_t seed) {
    return to_array(corpus::stylize(from_array(img), corpus::style_from_name(style), seed));
  });

  m.def("composite_loss", [](const std::string& outputs, const std::string& truth, double alpha, double gamma,
                             double lambda) {
    const auto gt = params_of(truth);
    const auto l = translator::composite_loss(outputs_of(outputs), gt, engine::condition_mask(gt.t),
                                              translator::LossWeights{alpha, gamma, lambda});
    return dump({{"total", l.total}, {"structure", l.structure}, {"attribute", l.attribute}, {"texture", l.texture}});
  });
  m.def("frechet_surrogate", &evalkit::frechet_surrogate, py::arg("a"), py::arg("b"));

  m.def("generate_pairs", [](std::size_t n, std::uint64_t seed, const std::string& out_dir) {
    py::gil_scoped_release release;
    return corpus::generate_pairs(n, seed, out_dir).dataset_hash;
  });

  py::class_<encoder::EncoderModel>(m, "Encoder")
      .def_static("load", [](const std::string& path) { return encoder::EncoderModel::load(path); })
      .def("embed", [](const encoder::EncoderModel& e, const Pixels& img) {
        const auto im = from_array(img);
        im.require_canvas();
        return Eigen::VectorXd(e.encode(im).cls.cast<double>().transpose());
      })
      .def("tokens", [](const encoder::EncoderModel& e, const Pixels& img) {
        const auto im = from_array(img);
        im.require_canvas();
        return Eigen::MatrixXd(e.encode(im).tokens.cast<double>());
      })
      .def("checksum", &encoder::EncoderModel::encoder_checksum);

  py::class_<translator::TranslatorModel, std::shared_ptr<translator::TranslatorModel>>(m, "Translator")
      .def_static("load", [](const std::string& path) {
        return std::make_shared<translator::TranslatorModel>(translator::TranslatorModel::load(path));
      })
      .def("predict", [](const translator::TranslatorModel& t, const Pixels& img) {
        const auto im = from_array(img);
        py::gil_scoped_release release;
        return dump(engine::params_to_json(t.predict(im)));
      })
      .def("craft", [](const translator::TranslatorModel& t, const Pixels& img) {
        const auto im = from_array(img);
        service::CraftResult r;
        {
          py::gil_scoped_release release;
          r = service::craft(t, im);
        }
        return py::make_tuple(dump(service::craft_json(r, false)), to_array(r.avatar));
      })
      .def_property_readonly("schema_hash", &translator::TranslatorModel::schema_hash)
      .def_property_readonly("encoder_frozen", &translator::TranslatorModel::encoder_frozen);

  py::class_<service::Api, std::shared_ptr<service::Api>>(m, "Api")
      .def(py::init([](std::shared_ptr<translator::TranslatorModel> model) {
             return std::make_shared<service::Api>(std::move(model));
           }),
           py::arg("model") = nullptr)
      .def("handle", [](const service::Api& api, const std::string& method, const std::string& path,
                        const std::string& body) {
        service::HttpResponse r;
        {
          py::gil_scoped_release release;
          r = api.handle(method, path, body);
        }
        return py::make_tuple(r.status, r.content_type, py::bytes(r.body));
      });
}
