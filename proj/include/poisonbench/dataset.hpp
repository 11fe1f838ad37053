#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonbench/image.hpp"

namespace poisonbench {

struct LabeledImage {
  Image pixels;
  int label = 0;
};

// One image-classification dataset with its train/test splits. Images are
// immutable once loaded; ordering is stable and index-addressable.
struct Dataset {
  std::string name;
  int num_classes = 0;
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  // Free-form metadata carried through save/load (poisoning provenance etc).
  nlohmann::json provenance;

  int channels() const;
  int height() const;
  int width() const;
};

struct SyntheticSpec {
  int num_classes = 4;
  int per_class_train = 50;
  int per_class_test = 10;
  int image_size = 32;
  uint64_t seed = 0;
  // Difficulty knobs; defaults keep the CI contract (linear probe > 95%).
  double jitter = 1.0;      // geometric/palette variation scale
  double noise = 8.0;       // per-pixel gaussian noise stddev, in levels

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Standard CIFAR-10 binary batches (3073-byte records, R/G/B planes).
// `directory` holds data_batch_1..5.bin and test_batch.bin, either directly
// or under cifar-10-batches-bin/.
Dataset load_cifar10(const std::string& directory);

// Deterministic procedural dataset: one pattern family per class, seeded
// jitter only. Identical spec => bit-identical dataset.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Seeded per-class subsample with dense label re-indexing. Keeps the
// relative order of retained images.
Dataset subset(const Dataset& ds, const std::vector<int>& classes,
               int per_class_train, int per_class_test, uint64_t seed);

// PNG-per-image plus JSON manifest; round-trip is bit-exact.
void save_dataset(const Dataset& ds, const std::string& directory);
Dataset load_dataset(const std::string& directory);

uint64_t dataset_hash(const Dataset& ds);

std::vector<int> class_counts(const std::vector<LabeledImage>& images,
                              int num_classes);

}  // namespace poisonbench
