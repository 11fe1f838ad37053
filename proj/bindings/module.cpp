#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "poisonbench/common.hpp"
#include "poisonbench/expman.hpp"
#include "poisonbench/kernel_theory.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/poisoning.hpp"
#include "poisonbench/training.hpp"
#include "poisonbench/triggers.hpp"

namespace py = pybind11;
using namespace poisonbench;

namespace {

// --- json <-> python -------------------------------------------------------

nlohmann::json to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) {
    // seeds use the full uint64 range, which overflows a signed cast
    try {
      return obj.cast<int64_t>();
    } catch (const py::cast_error&) {
      return obj.cast<uint64_t>();
    }
  }
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& item : obj.cast<py::dict>())
      j[py::str(item.first).cast<std::string>()] = to_json(item.second);
    return j;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& item : obj) j.push_back(to_json(item));
    return j;
  }
  throw ParameterError("cannot convert python object to json: " +
                       py::str(obj.get_type()).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<int64_t>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<uint64_t>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(to_py(item));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items())
        out[py::str(key)] = to_py(value);
      return out;
    }
    default:
      return py::none();
  }
}

// --- numpy <-> images ------------------------------------------------------

using U8Array = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

py::array_t<uint8_t> image_to_np(const Image& img) {
  py::array_t<uint8_t> arr({img.c, img.h, img.w});
  std::copy(img.pixels.begin(), img.pixels.end(), arr.mutable_data());
  return arr;
}

Image np_to_image(const U8Array& arr) {
  if (arr.ndim() != 3) throw DimensionError("expected a (C, H, W) uint8 array");
  Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
            static_cast<int>(arr.shape(2)));
  std::copy(arr.data(), arr.data() + arr.size(), img.pixels.begin());
  return img;
}

py::array_t<uint8_t> stack_images(const std::vector<LabeledImage>& items) {
  if (items.empty())
    return py::array_t<uint8_t>(std::vector<py::ssize_t>{0, 0, 0, 0});
  const Image& first = items[0].pixels;
  py::array_t<uint8_t> arr(
      {static_cast<int>(items.size()), first.c, first.h, first.w});
  uint8_t* dst = arr.mutable_data();
  for (const auto& item : items) {
    std::copy(item.pixels.pixels.begin(), item.pixels.pixels.end(), dst);
    dst += item.pixels.pixels.size();
  }
  return arr;
}

py::array_t<int32_t> stack_labels(const std::vector<LabeledImage>& items) {
  // explicit shape vector: the scalar-count array_t constructor produces a
  // zero-stride array with this pybind11 release
  py::array_t<int32_t> arr(
      std::vector<py::ssize_t>{static_cast<py::ssize_t>(items.size())});
  int32_t* dst = arr.mutable_data();
  for (size_t i = 0; i < items.size(); ++i) dst[i] = items[i].label;
  return arr;
}

// Net is move-only; give python a stable holder.
struct PyModel {
  Net net;
  explicit PyModel(Net n) : net(std::move(n)) {}
};

}  // namespace

PYBIND11_MODULE(_poisonbench, m) {
  m.doc() = "poison-only backdoor attack benchmark (C++ core)";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ParameterError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const DimensionError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("name", &Dataset::name)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly(
          "train_size", [](const Dataset& d) { return d.train.size(); })
      .def_property_readonly("test_size",
                             [](const Dataset& d) { return d.test.size(); })
      .def("train_images",
           [](const Dataset& d) { return stack_images(d.train); })
      .def("train_labels",
           [](const Dataset& d) { return stack_labels(d.train); })
      .def("test_images", [](const Dataset& d) { return stack_images(d.test); })
      .def("test_labels", [](const Dataset& d) { return stack_labels(d.test); });

  py::class_<PoisonedDataset>(m, "PoisonedDataset")
      .def_property_readonly(
          "dataset", [](const PoisonedDataset& pd) -> const Dataset& {
            return pd.data;
          }, py::return_value_policy::reference_internal)
      .def_readonly("modified", &PoisonedDataset::modified)
      .def_readonly("original_labels", &PoisonedDataset::original_labels)
      .def("rate", [](const PoisonedDataset& pd) { return poisoning_rate(pd); })
      .def("save", [](const PoisonedDataset& pd, const std::string& dir) {
        save_poisoned(pd, dir);
      });

  py::class_<PyModel>(m, "Model")
      .def("predict",
           [](PyModel& self, const U8Array& images) {
             if (images.ndim() != 4)
               throw DimensionError("expected a (N, C, H, W) uint8 array");
             std::vector<Image> owned;
             owned.reserve(static_cast<size_t>(images.shape(0)));
             const size_t stride = static_cast<size_t>(
                 images.shape(1) * images.shape(2) * images.shape(3));
             for (py::ssize_t i = 0; i < images.shape(0); ++i) {
               Image img(static_cast<int>(images.shape(1)),
                         static_cast<int>(images.shape(2)),
                         static_cast<int>(images.shape(3)));
               std::copy(images.data() + i * stride,
                         images.data() + (i + 1) * stride, img.pixels.begin());
               owned.push_back(std::move(img));
             }
             std::vector<const Image*> ptrs;
             for (const auto& img : owned) ptrs.push_back(&img);
             const std::vector<int> pred = predict(self.net, ptrs);
             py::array_t<int32_t> out(
                 std::vector<py::ssize_t>{static_cast<py::ssize_t>(pred.size())});
             std::copy(pred.begin(), pred.end(), out.mutable_data());
             return out;
           })
      .def("gradcam",
           [](PyModel& self, const U8Array& image, int class_index) {
             const FloatImage cam =
                 gradcam(self.net, np_to_image(image), class_index);
             py::array_t<float> out({cam.h, cam.w});
             std::copy(cam.v.begin(), cam.v.end(), out.mutable_data());
             return out;
           })
      .def("save", [](PyModel& self, const std::string& path_base) {
        save_model(self.net, path_base);
      });

  m.def("generate_synthetic", [](const py::dict& spec) {
    return generate_synthetic(SyntheticSpec::from_json(to_json(spec)));
  });
  m.def("load_cifar10", &load_cifar10);
  m.def("load_dataset", &load_dataset);
  m.def("save_dataset", &save_dataset);

  m.def("apply_trigger", [](const U8Array& image, const py::dict& trigger) {
    return image_to_np(
        apply_trigger(np_to_image(image), TriggerSpec::from_json(to_json(trigger))));
  });

  m.def("assemble_poisoned", [](const Dataset& ds, const py::dict& plan) {
    return assemble_poisoned_dataset(ds, PoisonPlan::from_json(to_json(plan)));
  });

  m.def("train_model",
        [](const py::dict& arch, const Dataset& ds, const py::dict& config) {
          TrainedModel tm = train(ModelArch::from_json(to_json(arch)), ds,
                                  TrainConfig::from_json(to_json(config)));
          return PyModel(std::move(tm.net));
        });
  m.def("load_model", [](const std::string& path_base) {
    return PyModel(load_model(path_base));
  });

  m.def("evaluate",
        [](PyModel& model, const Dataset& ds, const py::dict& trigger,
           int target_class) {
          return to_py(evaluate_attack(model.net, ds,
                                       TriggerSpec::from_json(to_json(trigger)),
                                       target_class)
                           .to_json());
        });

  m.def("verify_theorem", [](const py::dict& params, uint64_t seed) {
    return to_py(
        verify_theorem(TheoremParams::from_json(to_json(params)), seed)
            .to_json());
  });

  m.def("run_experiment", [](const py::dict& config) {
    return to_py(
        run_experiment(ExperimentConfig::from_json(to_json(config))).to_json());
  });
  m.def("sweep", [](const py::dict& config, const std::string& path,
                    const py::list& values) {
    std::vector<nlohmann::json> vals;
    for (const auto& v : values) vals.push_back(to_json(v));
    py::list out;
    for (const auto& r :
         sweep(ExperimentConfig::from_json(to_json(config)), path, vals))
      out.append(to_py(r.to_json()));
    return out;
  });
  m.def("run_preset",
        [](const std::string& name, uint64_t seed, const std::string& out_dir) {
          py::list out;
          for (const auto& r : run_preset(name, seed, out_dir))
            out.append(to_py(r.to_json()));
          return out;
        });
  m.def("list_presets", [] {
    py::list out;
    for (const auto& p : list_presets())
      out.append(py::make_tuple(p.name, p.description));
    return out;
  });
  m.def("desk_config", [](uint64_t seed, const std::string& out_dir) {
    return to_py(desk_config(seed, out_dir).to_json());
  });
  m.def("configure_attack", [](const py::dict& config, const std::string& attack) {
    ExperimentConfig c = ExperimentConfig::from_json(to_json(config));
    configure_attack(c, attack);
    return to_py(c.to_json());
  });
}
