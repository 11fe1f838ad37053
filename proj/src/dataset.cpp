#include "poisonbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "poisonbench/common.hpp"
#include "poisonbench/png_io.hpp"
#include "poisonbench/rng.hpp"

namespace fs = std::filesystem;

namespace poisonbench {

int Dataset::channels() const {
  if (!train.empty()) return train[0].pixels.c;
  if (!test.empty()) return test[0].pixels.c;
  return 0;
}
int Dataset::height() const {
  if (!train.empty()) return train[0].pixels.h;
  if (!test.empty()) return test[0].pixels.h;
  return 0;
}
int Dataset::width() const {
  if (!train.empty()) return train[0].pixels.w;
  if (!test.empty()) return test[0].pixels.w;
  return 0;
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_classes", num_classes}, {"per_class_train", per_class_train},
          {"per_class_test", per_class_test}, {"image_size", image_size},
          {"seed", seed}, {"jitter", jitter}, {"noise", noise}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_classes = j.value("num_classes", s.num_classes);
  s.per_class_train = j.value("per_class_train", s.per_class_train);
  s.per_class_test = j.value("per_class_test", s.per_class_test);
  s.image_size = j.value("image_size", s.image_size);
  s.seed = j.value("seed", s.seed);
  s.jitter = j.value("jitter", s.jitter);
  s.noise = j.value("noise", s.noise);
  return s;
}

// ---------------------------------------------------------------------------
// CIFAR-10
// ---------------------------------------------------------------------------

namespace {

constexpr int kCifarDim = 32;
constexpr size_t kCifarRecord = 1 + 3 * 32 * 32;

std::vector<LabeledImage> read_cifar_batch(const std::string& path,
                                           size_t expected_records) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cifar10: missing batch file: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() != expected_records * kCifarRecord) {
    size_t complete = buf.size() / kCifarRecord;
    throw FormatError("cifar10: truncated batch file " + path + " at byte offset " +
                      std::to_string(complete * kCifarRecord) + " (got " +
                      std::to_string(buf.size()) + " bytes, expected " +
                      std::to_string(expected_records * kCifarRecord) + ")");
  }
  std::vector<LabeledImage> out;
  out.reserve(expected_records);
  for (size_t r = 0; r < expected_records; ++r) {
    const uint8_t* rec = buf.data() + r * kCifarRecord;
    LabeledImage li;
    li.label = rec[0];
    if (li.label > 9)
      throw FormatError("cifar10: label out of range in " + path + " record " +
                        std::to_string(r));
    li.pixels = Image(3, kCifarDim, kCifarDim);
    // Record layout is already planar R,G,B row-major, same as our CHW.
    std::copy(rec + 1, rec + kCifarRecord, li.pixels.pixels.begin());
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace

Dataset load_cifar10(const std::string& directory) {
  fs::path dir(directory);
  if (!fs::exists(dir / "data_batch_1.bin") &&
      fs::exists(dir / "cifar-10-batches-bin" / "data_batch_1.bin"))
    dir /= "cifar-10-batches-bin";

  Dataset ds;
  ds.name = "cifar10";
  ds.num_classes = 10;
  for (int b = 1; b <= 5; ++b) {
    auto batch = read_cifar_batch((dir / ("data_batch_" + std::to_string(b) + ".bin")).string(), 10000);
    ds.train.insert(ds.train.end(), std::make_move_iterator(batch.begin()),
                    std::make_move_iterator(batch.end()));
  }
  ds.test = read_cifar_batch((dir / "test_batch.bin").string(), 10000);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

namespace {

struct Palette {
  float fg[3];
  float bg[3];
};

// Fixed pattern families; only jitter is seeded so class semantics stay
// stable across versions. Family index = class % 10.
void render_family(FloatImage& img, int family, Rng& rng, double jitter) {
  const int S = img.h;
  const double j = jitter;
  auto set_px = [&](int y, int x, const float* col) {
    if (y < 0 || y >= S || x < 0 || x >= S) return;
    for (int c = 0; c < img.c; ++c) img.at(c, y, x) = col[c];
  };

  Palette p;
  for (int c = 0; c < 3; ++c) {
    p.bg[c] = static_cast<float>(rng.uniform(30, 110));
    p.fg[c] = static_cast<float>(rng.uniform(140, 245));
  }
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) set_px(y, x, p.bg);

  double cx = S / 2.0 + rng.uniform(-1, 1) * (S / 8.0) * j;
  double cy = S / 2.0 + rng.uniform(-1, 1) * (S / 8.0) * j;

  switch (family) {
    case 0: {  // filled disk
      double r = S / 4.0 * (1.0 + rng.uniform(-0.3, 0.3) * j);
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) set_px(y, x, p.fg);
      break;
    }
    case 1: {  // square outline
      int half = static_cast<int>(S / 4.0 * (1.0 + rng.uniform(-0.25, 0.25) * j));
      int t = 1 + static_cast<int>(rng.uniform_int(2));
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          int dx = std::abs(x - static_cast<int>(cx));
          int dy = std::abs(y - static_cast<int>(cy));
          int d = std::max(dx, dy);
          if (d <= half && d >= half - t) set_px(y, x, p.fg);
        }
      break;
    }
    case 2: {  // horizontal stripes
      int period = S / 8 + static_cast<int>(rng.uniform_int(S / 8 + 1));
      int phase = static_cast<int>(rng.uniform_int(period));
      for (int y = 0; y < S; ++y)
        if (((y + phase) / std::max(1, period / 2)) % 2 == 0)
          for (int x = 0; x < S; ++x) set_px(y, x, p.fg);
      break;
    }
    case 3: {  // vertical stripes
      int period = S / 8 + static_cast<int>(rng.uniform_int(S / 8 + 1));
      int phase = static_cast<int>(rng.uniform_int(period));
      for (int x = 0; x < S; ++x)
        if (((x + phase) / std::max(1, period / 2)) % 2 == 0)
          for (int y = 0; y < S; ++y) set_px(y, x, p.fg);
      break;
    }
    case 4: {  // diagonal stripes
      int period = S / 6 + static_cast<int>(rng.uniform_int(S / 6 + 1));
      int phase = static_cast<int>(rng.uniform_int(period));
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if (((x + y + phase) / std::max(1, period / 2)) % 2 == 0) set_px(y, x, p.fg);
      break;
    }
    case 5: {  // checkerboard
      int cell = S / 8 + static_cast<int>(rng.uniform_int(S / 8 + 1));
      int phase = static_cast<int>(rng.uniform_int(cell));
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if ((((y + phase) / cell) + ((x + phase) / cell)) % 2 == 0) set_px(y, x, p.fg);
      break;
    }
    case 6: {  // radial gradient blob
      double r = S / 2.2 * (1.0 + rng.uniform(-0.2, 0.2) * j);
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
          double t = std::clamp(1.0 - d / r, 0.0, 1.0);
          float col[3];
          for (int c = 0; c < 3; ++c)
            col[c] = static_cast<float>(p.bg[c] + (p.fg[c] - p.bg[c]) * t);
          set_px(y, x, col);
        }
      break;
    }
    case 7: {  // polka dots
      int step = S / 4 + static_cast<int>(rng.uniform_int(S / 8 + 1));
      double r = S / 10.0 * (1.0 + rng.uniform(-0.3, 0.3) * j);
      int off = static_cast<int>(rng.uniform_int(step));
      for (int gy = off; gy < S + step; gy += step)
        for (int gx = off; gx < S + step; gx += step)
          for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
              if ((x - gx) * (x - gx) + (y - gy) * (y - gy) <= r * r) set_px(y, x, p.fg);
      break;
    }
    case 8: {  // filled triangle
      double half = S / 3.0 * (1.0 + rng.uniform(-0.25, 0.25) * j);
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          double dy = y - (cy - half / 2);
          if (dy < 0 || dy > half * 1.5) continue;
          double width = dy / 1.5;
          if (std::abs(x - cx) <= width / 2 + 0.5) set_px(y, x, p.fg);
        }
      break;
    }
    default: {  // cross / plus
      int t = std::max(2, static_cast<int>(S / 10.0 * (1.0 + rng.uniform(-0.3, 0.3) * j)));
      int half = static_cast<int>(S / 3.0);
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          bool in_v = std::abs(x - static_cast<int>(cx)) < t && std::abs(y - static_cast<int>(cy)) <= half;
          bool in_h = std::abs(y - static_cast<int>(cy)) < t && std::abs(x - static_cast<int>(cx)) <= half;
          if (in_v || in_h) set_px(y, x, p.fg);
        }
      break;
    }
  }
}

LabeledImage make_synthetic_image(const SyntheticSpec& spec, int cls,
                                  uint64_t index) {
  Rng rng(hash64_combine(spec.seed, hash64_combine(0x5e7a11, index)));
  FloatImage img(3, spec.image_size, spec.image_size);
  render_family(img, cls % 10, rng, spec.jitter);

  double brightness = rng.uniform(-16, 16) * spec.jitter;
  for (auto& v : img.v) v += static_cast<float>(brightness);
  if (spec.noise > 0)
    for (auto& v : img.v) v += static_cast<float>(rng.normal(0, spec.noise));

  LabeledImage li;
  li.pixels = quantize(img);
  li.label = cls;
  return li;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ParameterError("synthetic: num_classes must be >= 2");
  if (spec.image_size < 16) throw ParameterError("synthetic: image_size must be >= 16");

  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = spec.num_classes;
  uint64_t index = 0;
  for (int cls = 0; cls < spec.num_classes; ++cls)
    for (int i = 0; i < spec.per_class_train; ++i)
      ds.train.push_back(make_synthetic_image(spec, cls, index++));
  for (int cls = 0; cls < spec.num_classes; ++cls)
    for (int i = 0; i < spec.per_class_test; ++i)
      ds.test.push_back(make_synthetic_image(spec, cls, index++));
  ds.provenance = {{"generator", "synthetic"}, {"spec", spec.to_json()}};
  return ds;
}

// ---------------------------------------------------------------------------
// Subsetting
// ---------------------------------------------------------------------------

namespace {

std::vector<LabeledImage> subset_split(const std::vector<LabeledImage>& images,
                                       const std::vector<int>& classes,
                                       int per_class, Rng& rng,
                                       const char* split_name) {
  std::vector<int> keep;  // original indices
  for (size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<int> idx;
    for (size_t i = 0; i < images.size(); ++i)
      if (images[i].label == classes[ci]) idx.push_back(static_cast<int>(i));
    if (static_cast<int>(idx.size()) < per_class)
      throw CapacityError(std::string("subset: class ") + std::to_string(classes[ci]) +
                          " has only " + std::to_string(idx.size()) + " " + split_name +
                          " samples, requested " + std::to_string(per_class));
    Rng class_rng = rng.fork(hash64_combine(classes[ci], hash64(split_name, std::strlen(split_name))));
    class_rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + per_class);
  }
  std::sort(keep.begin(), keep.end());  // preserve relative order

  std::vector<int> relabel(1 + *std::max_element(classes.begin(), classes.end()), -1);
  for (size_t ci = 0; ci < classes.size(); ++ci) relabel[classes[ci]] = static_cast<int>(ci);

  std::vector<LabeledImage> out;
  out.reserve(keep.size());
  for (int i : keep) {
    LabeledImage li = images[i];
    li.label = relabel[li.label];
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace

Dataset subset(const Dataset& ds, const std::vector<int>& classes,
               int per_class_train, int per_class_test, uint64_t seed) {
  if (classes.empty()) throw ParameterError("subset: empty class list");
  for (int c : classes)
    if (c < 0 || c >= ds.num_classes)
      throw ParameterError("subset: class index out of range: " + std::to_string(c));

  Rng rng(seed);
  Dataset out;
  out.name = ds.name + "-subset";
  out.num_classes = static_cast<int>(classes.size());
  out.train = subset_split(ds.train, classes, per_class_train, rng, "train");
  out.test = subset_split(ds.test, classes, per_class_test, rng, "test");
  out.provenance = {{"parent", ds.name},
                    {"classes", classes},
                    {"per_class_train", per_class_train},
                    {"per_class_test", per_class_test},
                    {"seed", seed}};
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

nlohmann::json split_manifest(const std::vector<LabeledImage>& images,
                              const std::string& dir_prefix,
                              const std::string& root) {
  nlohmann::json arr = nlohmann::json::array();
  char name[32];
  for (size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    std::string rel = dir_prefix + "/" + name;
    write_png(root + "/" + rel, images[i].pixels);
    arr.push_back({{"file", rel}, {"label", images[i].label}});
  }
  return arr;
}

std::vector<LabeledImage> load_split(const nlohmann::json& arr,
                                     const std::string& root, int num_classes) {
  std::vector<LabeledImage> out;
  out.reserve(arr.size());
  for (const auto& e : arr) {
    std::string rel = e.at("file").get<std::string>();
    int label = e.at("label").get<int>();
    if (label < 0 || label >= num_classes)
      throw IntegrityError("dataset manifest: label " + std::to_string(label) +
                           " outside [0," + std::to_string(num_classes) + ") for " + rel);
    fs::path p = fs::path(root) / rel;
    if (!fs::exists(p))
      throw IntegrityError("dataset manifest lists missing file: " + rel);
    LabeledImage li;
    li.pixels = read_png(p.string());
    li.label = label;
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& directory) {
  fs::create_directories(fs::path(directory) / "train");
  fs::create_directories(fs::path(directory) / "test");
  nlohmann::json manifest;
  manifest["name"] = ds.name;
  manifest["num_classes"] = ds.num_classes;
  manifest["train"] = split_manifest(ds.train, "train", directory);
  manifest["test"] = split_manifest(ds.test, "test", directory);
  if (!ds.provenance.is_null()) manifest["provenance"] = ds.provenance;
  std::ofstream f(fs::path(directory) / "manifest.json");
  if (!f) throw IntegrityError("save_dataset: cannot write manifest in " + directory);
  f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& directory) {
  std::ifstream f(fs::path(directory) / "manifest.json");
  if (!f) throw IntegrityError("load_dataset: no manifest.json in " + directory);
  nlohmann::json manifest = nlohmann::json::parse(f, nullptr, true);
  Dataset ds;
  ds.name = manifest.value("name", "dataset");
  ds.num_classes = manifest.at("num_classes").get<int>();
  if (ds.num_classes <= 0) throw IntegrityError("load_dataset: bad num_classes");
  ds.train = load_split(manifest.at("train"), directory, ds.num_classes);
  ds.test = load_split(manifest.at("test"), directory, ds.num_classes);
  if (manifest.contains("provenance")) ds.provenance = manifest["provenance"];

  auto check_shape = [&](const std::vector<LabeledImage>& v) {
    for (const auto& li : v)
      if (!li.pixels.same_shape(ds.train.empty() ? ds.test[0].pixels : ds.train[0].pixels))
        throw IntegrityError("load_dataset: image shape mismatch");
  };
  if (!ds.train.empty() || !ds.test.empty()) {
    check_shape(ds.train);
    check_shape(ds.test);
  }
  return ds;
}

uint64_t dataset_hash(const Dataset& ds) {
  Hasher h;
  h.update(ds.name.data(), ds.name.size());
  h.update_u64(static_cast<uint64_t>(ds.num_classes));
  for (const auto* split : {&ds.train, &ds.test}) {
    h.update_u64(split->size());
    for (const auto& li : *split) {
      h.update_u64(static_cast<uint64_t>(li.label));
      h.update(li.pixels.pixels.data(), li.pixels.pixels.size());
    }
  }
  return h.digest();
}

std::vector<int> class_counts(const std::vector<LabeledImage>& images,
                              int num_classes) {
  std::vector<int> counts(num_classes, 0);
  for (const auto& li : images)
    if (li.label >= 0 && li.label < num_classes) ++counts[li.label];
  return counts;
}

}  // namespace poisonbench
