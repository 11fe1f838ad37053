#include "poisonbench/models.hpp"

#include <fstream>

#include "poisonbench/common.hpp"

namespace poisonbench {

nlohmann::json ModelArch::to_json() const {
  return {{"name", name},
          {"num_classes", num_classes},
          {"width", width},
          {"in_channels", in_channels},
          {"image_size", image_size}};
}

ModelArch ModelArch::from_json(const nlohmann::json& j) {
  ModelArch a;
  try {
    a.name = j.at("name").get<std::string>();
    a.num_classes = j.value("num_classes", a.num_classes);
    a.width = j.value("width", a.width);
    a.in_channels = j.value("in_channels", a.in_channels);
    a.image_size = j.value("image_size", a.image_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model arch: ") + e.what());
  }
  return a;
}

namespace {

void check_arch(const ModelArch& a) {
  if (a.num_classes < 2) throw ConfigError("need at least 2 classes");
  if (a.width < 1) throw ConfigError("width must be >= 1");
  if (a.image_size % 8 != 0 || a.image_size < 8)
    throw ConfigError("image_size must be a positive multiple of 8");
}

Net build_conv_small(const ModelArch& a, Rng& rng) {
  Net net;
  const int w = a.width;
  const int final_side = a.image_size / 8;
  auto add = [&](Layer* l) { net.layers.emplace_back(l); };
  add(new Conv2d("conv0", a.in_channels, w, 3, 1, rng));
  add(new ReLU("relu0"));
  add(new MaxPool2("pool0"));
  add(new Conv2d("conv1", w, 2 * w, 3, 1, rng));
  add(new ReLU("relu1"));
  add(new MaxPool2("pool1"));
  add(new Conv2d("conv2", 2 * w, 4 * w, 3, 1, rng));
  add(new ReLU("relu2"));
  add(new MaxPool2("pool2"));
  add(new Conv2d("conv3", 4 * w, 4 * w, 3, 1, rng));
  add(new ReLU("relu3"));
  net.cam_layer = static_cast<int>(net.layers.size()) - 1;
  add(new ChannelMask("mask", 4 * w));
  add(new Flatten("flatten"));
  add(new Linear("fc0", 4 * w * final_side * final_side, 8 * w, rng));
  add(new ReLU("relu_fc"));
  add(new Linear("fc1", 8 * w, a.num_classes, rng));
  return net;
}

Net build_conv_deeper(const ModelArch& a, Rng& rng) {
  Net net;
  const int w = a.width;
  auto add = [&](Layer* l) { net.layers.emplace_back(l); };
  auto res_block = [&](const std::string& name, int ch, int convs) {
    std::vector<std::unique_ptr<Layer>> body;
    for (int i = 0; i < convs; ++i) {
      if (i > 0) body.emplace_back(new ReLU(name + ".relu" + std::to_string(i)));
      body.emplace_back(
          new Conv2d(name + ".conv" + std::to_string(i), ch, ch, 3, 1, rng));
    }
    return new Residual(name, std::move(body));
  };
  add(new Conv2d("conv0", a.in_channels, w, 3, 1, rng));
  add(new ReLU("relu0"));
  add(new MaxPool2("pool0"));
  add(res_block("res1", w, 2));
  add(new ReLU("relu1"));
  add(new Conv2d("conv3", w, 2 * w, 3, 1, rng));
  add(new ReLU("relu3"));
  add(new MaxPool2("pool1"));
  add(res_block("res2", 2 * w, 2));
  add(new ReLU("relu2"));
  add(new Conv2d("conv6", 2 * w, 4 * w, 3, 1, rng));
  add(new ReLU("relu6"));
  add(new MaxPool2("pool2"));
  add(res_block("res3", 4 * w, 1));
  add(new ReLU("relu7"));
  net.cam_layer = static_cast<int>(net.layers.size()) - 1;
  add(new ChannelMask("mask", 4 * w));
  add(new GlobalAvgPool("gap"));
  add(new Flatten("flatten"));
  add(new Linear("fc0", 4 * w, a.num_classes, rng));
  return net;
}

Net build_mlp(const ModelArch& a, Rng& rng) {
  Net net;
  const int in = a.in_channels * a.image_size * a.image_size;
  auto add = [&](Layer* l) { net.layers.emplace_back(l); };
  add(new Flatten("flatten"));
  add(new Linear("fc0", in, 16 * a.width, rng));
  add(new ReLU("relu0"));
  add(new Linear("fc1", 16 * a.width, a.num_classes, rng));
  net.cam_layer = -1;  // no spatial feature map
  return net;
}

}  // namespace

Net build_model(const ModelArch& arch, uint64_t seed) {
  check_arch(arch);
  Rng rng(hash64_combine(seed, hash64(arch.name.data(), arch.name.size(), 0x90de1u)));
  Net net;
  if (arch.name == "conv_small") net = build_conv_small(arch, rng);
  else if (arch.name == "conv_deeper") net = build_conv_deeper(arch, rng);
  else if (arch.name == "mlp") net = build_mlp(arch, rng);
  else throw ConfigError("unknown model arch: " + arch.name);
  net.arch = arch.to_json();
  return net;
}

Net clone_model(Net& net) {
  Net copy = build_model(ModelArch::from_json(net.arch), 0);
  auto src = net.named_params();
  auto dst = copy.named_params();
  if (src.size() != dst.size())
    throw IntegrityError("clone parameter count mismatch");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name ||
        src[i].value->size() != dst[i].value->size())
      throw IntegrityError("clone parameter layout mismatch");
    *dst[i].value = *src[i].value;
  }
  if (auto* src_mask = net.channel_mask())
    copy.channel_mask()->mask() = src_mask->mask();
  return copy;
}

uint64_t model_hash(Net& net) {
  Hasher h;
  for (auto& p : net.named_params()) {
    h.update(p.name.data(), p.name.size());
    h.update(p.value->data(), p.value->size() * sizeof(float));
  }
  return h.digest();
}

void save_model(Net& net, const std::string& path_base) {
  nlohmann::json manifest;
  manifest["arch"] = net.arch;
  auto& plist = manifest["params"] = nlohmann::json::array();
  for (auto& p : net.named_params())
    plist.push_back({{"name", p.name}, {"size", p.value->size()}});
  manifest["param_hash"] = hash_hex(model_hash(net));

  std::ofstream jout(path_base + ".json");
  jout << manifest.dump(2) << "\n";
  if (!jout) throw IntegrityError("cannot write model manifest: " + path_base);

  std::ofstream bout(path_base + ".bin", std::ios::binary);
  for (auto& p : net.named_params())
    bout.write(reinterpret_cast<const char*>(p.value->data()),
               static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  if (!bout) throw IntegrityError("cannot write model weights: " + path_base);
}

Net load_model(const std::string& path_base) {
  std::ifstream jin(path_base + ".json");
  if (!jin) throw IntegrityError("missing model manifest: " + path_base);
  nlohmann::json manifest = nlohmann::json::parse(jin);

  Net net = build_model(ModelArch::from_json(manifest.at("arch")), 0);
  auto params = net.named_params();
  const auto& plist = manifest.at("params");
  if (plist.size() != params.size())
    throw IntegrityError("model manifest parameter count mismatch");

  std::ifstream bin(path_base + ".bin", std::ios::binary);
  if (!bin) throw IntegrityError("missing model weights: " + path_base);
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& entry = plist[i];
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("size").get<size_t>() != params[i].value->size())
      throw IntegrityError("model manifest disagrees with architecture at " +
                           params[i].name);
    bin.read(reinterpret_cast<char*>(params[i].value->data()),
             static_cast<std::streamsize>(params[i].value->size() * sizeof(float)));
    if (!bin) throw IntegrityError("truncated model weights at " + params[i].name);
  }
  const std::string expect = manifest.value("param_hash", std::string());
  if (!expect.empty() && expect != hash_hex(model_hash(net)))
    throw IntegrityError("model weight hash mismatch: " + path_base);
  return net;
}

}  // namespace poisonbench
