#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonbench/dataset.hpp"
#include "poisonbench/defenses.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/poisoning.hpp"
#include "poisonbench/training.hpp"

namespace poisonbench {

// Where the images come from. "synthetic" runs the procedural generator;
// "cifar10" reads the binary batches under `path`; "directory" reads a
// PNG+manifest dataset previously written by save_dataset.
struct DatasetSpec {
  std::string source = "synthetic";
  std::string path;
  SyntheticSpec synthetic;
  // Optional per-class subsampling applied after loading (-1 keeps all).
  int per_class_train = -1;
  int per_class_test = -1;
  uint64_t subset_seed = 0;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

Dataset realize_dataset(const DatasetSpec& spec);

// One defense invocation: a registered name plus its parameter overrides.
// Known names: fine_tune, prune, shrink_pad, strip, scale_up, neural_cleanse.
struct DefenseSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const;
  static DefenseSpec from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PoisonPlan plan;
  ModelArch arch;
  TrainConfig train;
  std::vector<std::string> evaluation = {"ba", "asr"};
  std::vector<DefenseSpec> defenses;
  // Trigger-synthesis surrogate for pgd/uap plans; defaults to the main
  // arch/train when unset.
  std::optional<ModelArch> surrogate_arch;
  std::optional<TrainConfig> surrogate_train;
  std::string out_dir = "runs";
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Stable content hash of the config (independent of JSON field order).
std::string config_hash(const ExperimentConfig& config);

struct RunReport {
  std::string config_hash;
  std::string label;  // preset-assigned row name, e.g. "badnets/conv_small"
  AttackReport attack;
  std::vector<DefenseReport> defense_reports;
  // Filled in by sweep(): which scalar was varied and its value here.
  std::string swept_path;
  nlohmann::json swept_value;
  double wall_seconds = 0.0;
  nlohmann::json environment;
  // Empty on success; otherwise the stage that failed and why. The report
  // still carries everything completed before the failure.
  std::string failure_stage;
  std::string failure_message;

  bool ok() const { return failure_stage.empty(); }
  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

// poison -> train -> evaluate -> defend, every stage checkpointed in
// out_dir/cache by content hash; re-running an unchanged config is a cache
// hit end to end. Stage failures are captured in the report, not thrown.
RunReport run_experiment(const ExperimentConfig& config);

// Partial pipelines for the poison/train CLI verbs: run (or load from
// cache) everything up to the named product and hand it back. Unlike
// run_experiment these throw on failure.
PoisonedDataset materialize_poison(const ExperimentConfig& config);
Net materialize_model(const ExperimentConfig& config);

// One run per value with shared seeds. parameter_path addresses a scalar
// config field by dots, e.g. "plan.trigger.intensity" or "train.epochs".
std::vector<RunReport> sweep(const ExperimentConfig& config,
                             const std::string& parameter_path,
                             const std::vector<nlohmann::json>& values);

// Long-form CSV plus a BA/ASR line plot (when the reports carry a numeric
// swept value); every figure footnotes the config hashes it draws from.
void render_report(const std::vector<RunReport>& reports,
                   const std::string& out_dir);

struct Preset {
  std::string name;
  std::string description;
};

const std::vector<Preset>& list_presets();

// The shared desk-scale base config (synthetic 10x500/50, conv_small) and
// the named attack recipes layered on top of it. Presets are built from
// these; they are exported so harnesses can assemble variants directly.
ExperimentConfig desk_config(uint64_t seed, const std::string& out_dir);
void configure_attack(ExperimentConfig& config, const std::string& attack);

// Runs a named preset end to end, writing artifacts under
// out_dir/<preset>/. Reproducible from (name, seed) alone.
std::vector<RunReport> run_preset(const std::string& name, uint64_t seed,
                                  const std::string& out_dir);

nlohmann::json environment_fingerprint();

}  // namespace poisonbench
