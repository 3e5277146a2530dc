#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctirb/experiment.hpp"
#include "ctirb/report.hpp"
#include "ctirb/tokenize.hpp"

namespace py = pybind11;
using namespace ctirb;

namespace {

py::object to_python(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

nlohmann::json from_python(const py::object& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

TextRecord text_record(const std::string& text) {
  TextRecord r;
  r.id = "py";
  r.raw_text = text;
  r.clean_text = text;
  return r;
}

RunConfig config_from(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return RunConfig::load(obj.cast<std::string>());
  return RunConfig::from_json(from_python(obj));
}

// Trained classifier and saliency model built from a run config.
class PyDesk {
 public:
  explicit PyDesk(const py::object& config) : desk_(prepare_desk(config_from(config))) {}

  double probability(const std::string& text) const { return desk_.model().predict(text_record(text)).probability; }

  py::object attention(const std::string& text) const {
    return to_python(desk_.saliency_model().attention_weights(text_record(text)).to_json());
  }

  py::dict evaluate_test() const {
    const auto e = evaluate(desk_.model(), desk_.split.test);
    py::dict out;
    out["tp"] = e.confusion.tp;
    out["fp"] = e.confusion.fp;
    out["tn"] = e.confusion.tn;
    out["fn"] = e.confusion.fn;
    out["f1"] = e.rates.f1;
    return out;
  }

  std::size_t corpus_size() const { return desk_.corpus.size(); }

 private:
  Desk desk_;
};

py::list synthetic_corpus(std::size_t n, double positive_fraction, std::uint64_t seed) {
  auto spec = SyntheticCorpusSpec::defaults();
  spec.n_records = n;
  spec.positive_fraction = positive_fraction;
  spec.seed = seed;
  const Corpus corpus = generate_synthetic_corpus(spec);
  py::list out;
  for (const auto& r : corpus.records()) {
    out.append(to_python(nlohmann::json::parse(to_jsonl(r))));
  }
  return out;
}

py::dict density(const std::vector<double>& samples, std::optional<double> bandwidth) {
  const auto d = kde(samples, bandwidth);
  py::dict out;
  out["grid"] = d.grid;
  out["density"] = d.density;
  out["bandwidth"] = d.bandwidth;
  return out;
}

}  // namespace

PYBIND11_MODULE(ctirb, m) {
  m.doc() = "Threat-intelligence classifier robustness toolkit";

  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  static py::exception<RuntimeFailure> runtime_failure(m, "RuntimeFailure", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation_error, e.what());
    } catch (const RuntimeFailure& e) {
      py::set_error(runtime_failure, e.what());
    }
  });

  m.def("tokenize", [](const std::string& text) { return tokenize(text); });
  m.def("normalize_token", [](const std::string& token) { return normalize_token(token); });
  m.def("format_rate", &format_rate, py::arg("value"), py::arg("decimals"));
  m.def("format_f1", &format_f1);

  m.def("cosine_similarity", &cosine_similarity);
  m.def("wasserstein_1d", &wasserstein_1d);
  m.def("kde", &density, py::arg("samples"), py::arg("bandwidth") = py::none());
  m.def("kl_divergence", [](const std::vector<double>& p, const std::vector<double>& q) {
    return kl_divergence(kde(p), kde(q));
  });

  m.def("reference_poison_schedule", &reference_poison_schedule);
  m.def("scale_schedule", &scale_schedule);

  m.def("synthetic_corpus", &synthetic_corpus, py::arg("n") = 2000, py::arg("positive_fraction") = 0.5,
        py::arg("seed") = 1);
  m.def("default_config", [] { return to_python(RunConfig{}.to_json()); });

  py::class_<PyDesk>(m, "Desk")
      .def(py::init<const py::object&>(), py::arg("config"),
           "Trains the classifier and saliency model from a config dict or a path to a JSON config.")
      .def("probability", &PyDesk::probability)
      .def("attention", &PyDesk::attention)
      .def("evaluate_test", &PyDesk::evaluate_test)
      .def_property_readonly("corpus_size", &PyDesk::corpus_size);
}
