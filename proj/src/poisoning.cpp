#include "poisonbench/poisoning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "poisonbench/common.hpp"
#include "poisonbench/rng.hpp"

namespace poisonbench {

std::string label_policy_name(LabelPolicy p) {
  return p == LabelPolicy::clean ? "clean" : "poisoned";
}

LabelPolicy label_policy_from_name(const std::string& name) {
  if (name == "clean") return LabelPolicy::clean;
  if (name == "poisoned") return LabelPolicy::poisoned;
  throw ParameterError("unknown label policy: " + name);
}

nlohmann::json PoisonPlan::to_json() const {
  nlohmann::json j;
  j["target_class"] = target_class;
  j["policy"] = label_policy_name(policy);
  if (global_rate >= 0) j["global_rate"] = global_rate;
  if (target_fraction >= 0) j["target_fraction"] = target_fraction;
  j["seed"] = seed;
  j["trigger"] = trigger.to_json();
  return j;
}

PoisonPlan PoisonPlan::from_json(const nlohmann::json& j) {
  PoisonPlan p;
  try {
    p.target_class = j.at("target_class").get<int>();
    p.policy = label_policy_from_name(j.value("policy", std::string("clean")));
    p.global_rate = j.value("global_rate", -1.0);
    p.target_fraction = j.value("target_fraction", -1.0);
    p.seed = j.value("seed", 0ull);
    p.trigger = TriggerSpec::from_json(j.at("trigger"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad poison plan: ") + e.what());
  }
  return p;
}

namespace {

size_t victim_count(const Dataset& ds, const PoisonPlan& plan,
                    size_t target_class_size) {
  const bool has_rate = plan.global_rate >= 0;
  const bool has_frac = plan.target_fraction >= 0;
  if (has_rate == has_frac)
    throw ConfigError(
        "poison plan needs exactly one of global_rate / target_fraction");
  if (has_rate) {
    if (plan.global_rate > 1.0)
      throw CapacityError("global_rate exceeds 1");
    return static_cast<size_t>(
        std::floor(plan.global_rate * static_cast<double>(ds.train.size())));
  }
  if (plan.target_fraction > 1.0)
    throw CapacityError("target_fraction exceeds 1");
  return static_cast<size_t>(std::floor(
      plan.target_fraction * static_cast<double>(target_class_size)));
}

}  // namespace

std::vector<int> select_victims(const Dataset& dataset, const PoisonPlan& plan) {
  if (plan.target_class < 0 || plan.target_class >= dataset.num_classes)
    throw ConfigError("target class out of range");

  std::vector<int> pool;
  for (size_t i = 0; i < dataset.train.size(); ++i) {
    const bool is_target = dataset.train[i].label == plan.target_class;
    if (plan.policy == LabelPolicy::clean ? is_target : !is_target)
      pool.push_back(static_cast<int>(i));
  }
  const size_t target_size =
      plan.policy == LabelPolicy::clean
          ? pool.size()
          : dataset.train.size() - pool.size();

  const size_t n = victim_count(dataset, plan, target_size);
  if (n > pool.size())
    throw CapacityError("requested " + std::to_string(n) +
                        " victims but candidate pool has " +
                        std::to_string(pool.size()));

  Rng rng(hash64_combine(plan.seed, 0x5e1ec7u));
  rng.shuffle(pool);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

PoisonedDataset assemble_poisoned_dataset(const Dataset& dataset,
                                          const PoisonPlan& plan,
                                          const ImageGenerator& generator) {
  if (!dataset.train.empty())
    plan.trigger.validate(dataset.channels(), dataset.height(),
                          dataset.width());

  PoisonedDataset pd;
  pd.data = dataset;
  pd.plan = plan;
  pd.modified = select_victims(dataset, plan);
  pd.original_labels.reserve(pd.modified.size());

  for (int idx : pd.modified) {
    LabeledImage& item = pd.data.train[static_cast<size_t>(idx)];
    pd.original_labels.push_back(item.label);
    try {
      item.pixels = generator ? generator(item.pixels, idx)
                              : apply_trigger(item.pixels, plan.trigger);
    } catch (const std::exception& e) {
      throw IntegrityError("generator failed on train index " +
                           std::to_string(idx) + ": " + e.what());
    }
    if (plan.policy == LabelPolicy::poisoned) item.label = plan.target_class;
  }
  pd.data.provenance["poison_plan"] = plan.to_json();
  return pd;
}

double poisoning_rate(const PoisonedDataset& pd) {
  if (pd.data.train.empty()) return 0.0;
  return static_cast<double>(pd.modified.size()) /
         static_cast<double>(pd.data.train.size());
}

void save_poisoned(const PoisonedDataset& pd, const std::string& directory) {
  save_dataset(pd.data, directory);
  // Extend the manifest in place with the poisoning provenance.
  const std::string manifest_path = directory + "/manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IntegrityError("manifest missing after save: " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();
  manifest["poison"] = {{"plan", pd.plan.to_json()},
                        {"modified", pd.modified},
                        {"original_labels", pd.original_labels}};
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  if (!out) throw IntegrityError("cannot rewrite manifest: " + manifest_path);
}

PoisonedDataset load_poisoned(const std::string& directory) {
  PoisonedDataset pd;
  pd.data = load_dataset(directory);
  std::ifstream in(directory + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (!manifest.contains("poison"))
    throw IntegrityError("manifest has no poisoning section: " + directory);
  const auto& p = manifest.at("poison");
  pd.plan = PoisonPlan::from_json(p.at("plan"));
  pd.modified = p.at("modified").get<std::vector<int>>();
  pd.original_labels = p.at("original_labels").get<std::vector<int>>();
  if (pd.modified.size() != pd.original_labels.size())
    throw IntegrityError("poison provenance arrays disagree in length");
  for (int idx : pd.modified)
    if (idx < 0 || static_cast<size_t>(idx) >= pd.data.train.size())
      throw IntegrityError("modified index out of range: " +
                           std::to_string(idx));
  return pd;
}

}  // namespace poisonbench
