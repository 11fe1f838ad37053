#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "poisonbench/common.hpp"
#include "poisonbench/expman.hpp"
#include "poisonbench/kernel_theory.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/poisoning.hpp"
#include "poisonbench/rng.hpp"

namespace fs = std::filesystem;
using namespace poisonbench;

namespace {

nlohmann::json read_file_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + " is not valid json: " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  return ExperimentConfig::from_json(read_file_json(path));
}

void emit(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw IntegrityError("cannot write " + out_path);
  out << j.dump(2) << "\n";
}

// Each token is parsed as json when possible so "0.5", "3" and "true" keep
// their types; anything unparsable is passed through as a string.
std::vector<nlohmann::json> parse_values(const std::vector<std::string>& raw) {
  std::vector<nlohmann::json> out;
  for (const auto& tok : raw) {
    try {
      out.push_back(nlohmann::json::parse(tok));
    } catch (const nlohmann::json::exception&) {
      out.push_back(tok);
    }
  }
  return out;
}

std::vector<RunReport> collect_reports(const std::string& in_path) {
  std::vector<RunReport> reports;
  const fs::path root(in_path);
  if (fs::is_regular_file(root)) {
    reports.push_back(RunReport::from_json(read_file_json(root.string())));
    return reports;
  }
  if (!fs::is_directory(root))
    throw ConfigError("no such file or directory: " + in_path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "report.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    reports.push_back(RunReport::from_json(read_file_json(f.string())));
  if (reports.empty())
    throw ConfigError("no report.json files under " + in_path);
  return reports;
}

int summarize(const std::vector<RunReport>& reports) {
  bool any_failed = false;
  for (const auto& r : reports) {
    std::cout << (r.label.empty() ? r.config_hash.substr(0, 8) : r.label)
              << ": ";
    if (r.ok()) {
      std::cout << "ba=" << r.attack.benign_accuracy
                << " asr=" << r.attack.attack_success_rate << "\n";
    } else {
      std::cout << "FAILED at " << r.failure_stage << ": "
                << r.failure_message << "\n";
      any_failed = true;
    }
  }
  return any_failed ? kExitStageFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poison-only backdoor attack benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_path, json_path, param_path, in_path;
  std::vector<std::string> raw_values;
  std::string preset_name;
  uint64_t seed = 0;
  int queries = 0;

  auto* poison_cmd = app.add_subcommand("poison", "build a poisoned dataset");
  poison_cmd->add_option("--config", config_path, "experiment config json")
      ->required();
  poison_cmd->add_option("--out", out_path, "output dataset directory")
      ->required();

  auto* train_cmd = app.add_subcommand("train", "train on the poisoned data");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", out_path, "model file base (json+bin)");

  auto* eval_cmd = app.add_subcommand("evaluate", "BA/ASR of the trained model");
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--json", json_path, "write the report here");

  auto* defend_cmd =
      app.add_subcommand("defend", "run the config's defense list");
  defend_cmd->add_option("--config", config_path)->required();
  defend_cmd->add_option("--json", json_path);

  auto* theory_cmd =
      app.add_subcommand("theory", "verify the kernel confidence gap");
  theory_cmd->add_option("--params", config_path, "TheoremParams json file");
  theory_cmd->add_option("--seed", seed);
  theory_cmd->add_option("--queries", queries, "override query count");
  theory_cmd->add_option("--json", json_path);

  auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter sweep");
  sweep_cmd->add_option("--config", config_path)->required();
  sweep_cmd->add_option("--path", param_path, "dotted config field")
      ->required();
  sweep_cmd->add_option("--values", raw_values, "one run per value")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out", out_path, "render csv/plot here");

  auto* report_cmd =
      app.add_subcommand("report", "re-render reports into csv/plots");
  report_cmd->add_option("--in", in_path, "report.json file or directory")
      ->required();
  report_cmd->add_option("--out", out_path)->required();

  auto* preset_cmd = app.add_subcommand("preset", "paper-analog presets");
  preset_cmd->require_subcommand(1);
  auto* preset_list = preset_cmd->add_subcommand("list", "available presets");
  auto* preset_run = preset_cmd->add_subcommand("run", "execute one preset");
  preset_run->add_option("name", preset_name)->required();
  preset_run->add_option("--seed", seed);
  preset_run->add_option("--out", out_path, "artifact directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (poison_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const PoisonedDataset pd = materialize_poison(cfg);
      save_poisoned(pd, out_path);
      std::cout << "poisoned " << pd.modified.size() << " of "
                << pd.data.train.size() << " train images -> " << out_path
                << "\n";
      return kExitOk;
    }
    if (train_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      Net net = materialize_model(cfg);
      if (!out_path.empty()) save_model(net, out_path);
      std::cout << "trained model " << hash_hex(model_hash(net))
                << (out_path.empty() ? " (cached)" : " -> " + out_path) << "\n";
      return kExitOk;
    }
    if (eval_cmd->parsed() || defend_cmd->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (eval_cmd->parsed()) cfg.defenses.clear();
      const RunReport report = run_experiment(cfg);
      emit(report.to_json(), json_path);
      if (!report.ok()) {
        std::cerr << "stage " << report.failure_stage
                  << " failed: " << report.failure_message << "\n";
        return kExitStageFailure;
      }
      return kExitOk;
    }
    if (theory_cmd->parsed()) {
      TheoremParams params;
      if (!config_path.empty())
        params = TheoremParams::from_json(read_file_json(config_path));
      if (queries > 0) params.num_queries = queries;
      const TheoremReport report = verify_theorem(params, seed);
      emit({{"params", params.to_json()}, {"report", report.to_json()}},
           json_path);
      return kExitOk;
    }
    if (sweep_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const std::vector<RunReport> reports =
          sweep(cfg, param_path, parse_values(raw_values));
      if (!out_path.empty()) render_report(reports, out_path);
      return summarize(reports);
    }
    if (report_cmd->parsed()) {
      render_report(collect_reports(in_path), out_path);
      std::cout << "rendered into " << out_path << "\n";
      return kExitOk;
    }
    if (preset_list->parsed()) {
      for (const auto& p : list_presets())
        std::cout << p.name << "\t" << p.description << "\n";
      return kExitOk;
    }
    if (preset_run->parsed()) {
      if (out_path.empty()) out_path = "runs";
      return summarize(run_preset(preset_name, seed, out_path));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitOk;
}
