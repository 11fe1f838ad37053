#pragma once

#include <string>

#include "poisonbench/nn.hpp"

namespace poisonbench {

// Architecture recipe. width is the stem channel count; stages widen by
// 2x and 4x. mlp ignores width scaling beyond its single hidden layer.
struct ModelArch {
  std::string name = "conv_small";  // conv_small | conv_deeper | mlp
  int num_classes = 10;
  int width = 16;
  int in_channels = 3;
  int image_size = 32;

  nlohmann::json to_json() const;
  static ModelArch from_json(const nlohmann::json& j);
};

// Fresh network with He-initialized weights; deterministic in (arch, seed).
Net build_model(const ModelArch& arch, uint64_t seed);

// Deep copy via rebuild + weight transfer (defenses mutate private copies).
Net clone_model(Net& net);

// <base>.json (arch + parameter manifest + content hash) and <base>.bin
// (concatenated float32 blobs in manifest order).
void save_model(Net& net, const std::string& path_base);
Net load_model(const std::string& path_base);

uint64_t model_hash(Net& net);

}  // namespace poisonbench
