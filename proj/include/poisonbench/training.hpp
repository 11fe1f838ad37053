#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poisonbench/dataset.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/nn.hpp"
#include "poisonbench/triggers.hpp"

namespace poisonbench {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr = 0.05;
  std::vector<int> lr_decay_epochs = {20, 26};  // lr *= decay at these epochs
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string augmentation = "horizontal_flip";  // none | horizontal_flip
  uint64_t seed = 0;
  // When set, every batch is PGD-perturbed against the current weights
  // before the gradient step (adversarial training).
  std::optional<PerturbationSpec> adversarial_training;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainedModel {
  Net net;
  std::vector<double> loss_curve;  // one mean loss per epoch
  TrainConfig config;
};

TrainedModel train(const ModelArch& arch, const Dataset& dataset,
                   const TrainConfig& config);

// Batched inference: argmax predictions for a set of images.
std::vector<int> predict(Net& net, const std::vector<const Image*>& images,
                         int batch_size = 256);

double benign_accuracy(Net& net, const std::vector<LabeledImage>& test_set);
std::vector<double> per_class_accuracy(Net& net,
                                       const std::vector<LabeledImage>& test_set,
                                       int num_classes);

// Triggers every test image whose ground-truth label != y_t and reports
// the percentage classified as y_t. Target-class images are excluded so
// the rate measures induced misclassification only.
double attack_success_rate(Net& net, const std::vector<LabeledImage>& test_set,
                           const TriggerSpec& trigger, int target_class);

struct AttackReport {
  double benign_accuracy = 0.0;   // percent
  double attack_success_rate = 0.0;
  std::vector<double> per_class;  // percent per class
  nlohmann::json provenance;

  nlohmann::json to_json() const;
};

AttackReport evaluate_attack(Net& net, const Dataset& dataset,
                             const TriggerSpec& trigger, int target_class);

// Class-activation saliency at the last conv stage, bilinearly upsampled
// to input size and max-normalized to [0,1].
FloatImage gradcam(Net& net, const Image& image, int class_index);

Image flip_horizontal(const Image& image);

}  // namespace poisonbench
