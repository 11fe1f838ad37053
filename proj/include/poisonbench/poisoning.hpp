#pragma once

#include <functional>
#include <string>
#include <vector>

#include "poisonbench/dataset.hpp"
#include "poisonbench/triggers.hpp"

namespace poisonbench {

enum class LabelPolicy { clean, poisoned };

std::string label_policy_name(LabelPolicy p);
LabelPolicy label_policy_from_name(const std::string& name);

// Which training samples get the trigger and what happens to their labels.
// Exactly one selection basis must be set: global_rate picks
// floor(rate * |train|) victims, target_fraction picks
// floor(fraction * |class y_t|). Clean policy draws victims from class y_t
// only (labels stay untouched); poisoned policy draws from every other
// class and relabels to y_t.
struct PoisonPlan {
  int target_class = 0;
  LabelPolicy policy = LabelPolicy::clean;
  double global_rate = -1.0;
  double target_fraction = -1.0;
  uint64_t seed = 0;
  TriggerSpec trigger;

  nlohmann::json to_json() const;
  static PoisonPlan from_json(const nlohmann::json& j);
};

struct PoisonedDataset {
  Dataset data;  // train split carries the modifications; test stays benign
  PoisonPlan plan;
  std::vector<int> modified;         // ascending train indices
  std::vector<int> original_labels;  // parallel to modified
};

// Deterministic victim draw: seeded shuffle of the policy's candidate pool,
// first n kept, returned ascending.
std::vector<int> select_victims(const Dataset& dataset, const PoisonPlan& plan);

// Replaces selected images with generator output; non-selected images are
// byte-identical to the base. The default generator applies plan.trigger;
// attacks whose generator needs a model (pgd, uap synthesis) pass their own.
using ImageGenerator = std::function<Image(const Image& image, int index)>;
PoisonedDataset assemble_poisoned_dataset(const Dataset& dataset,
                                          const PoisonPlan& plan,
                                          const ImageGenerator& generator = {});

// Exact |D_m| / |D| over the train split.
double poisoning_rate(const PoisonedDataset& pd);

// PNG+manifest persistence, manifest extended with the plan and provenance.
void save_poisoned(const PoisonedDataset& pd, const std::string& directory);
PoisonedDataset load_poisoned(const std::string& directory);

}  // namespace poisonbench
