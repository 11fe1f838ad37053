#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "poisonbench/common.hpp"
#include "poisonbench/expman.hpp"
#include "test_util.hpp"

using namespace poisonbench;
using poisonbench::testutil::TempDir;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig c;
  c.dataset.source = "synthetic";
  c.dataset.synthetic.num_classes = 4;
  c.dataset.synthetic.per_class_train = 25;
  c.dataset.synthetic.per_class_test = 10;
  c.dataset.synthetic.image_size = 16;
  c.dataset.synthetic.seed = 42;
  c.arch.name = "conv_small";
  c.arch.num_classes = 4;
  c.arch.width = 2;
  c.arch.image_size = 16;
  c.train.epochs = 2;
  c.train.batch_size = 32;
  c.train.lr = 0.05;
  c.train.lr_decay_epochs = {};
  c.train.seed = 7;
  c.plan.policy = LabelPolicy::poisoned;
  c.plan.target_class = 0;
  c.plan.global_rate = 0.05;
  c.plan.target_fraction = -1.0;
  c.plan.trigger.kind = TriggerKind::patch;
  c.plan.trigger.patch.pattern = "white";
  c.plan.trigger.patch.size = 3;
  c.plan.trigger.intensity = 1.0;
  c.plan.seed = 11;
  c.out_dir = out_dir;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("dataset spec round-trips and realizes with subsetting") {
  DatasetSpec spec;
  spec.source = "synthetic";
  spec.synthetic.num_classes = 4;
  spec.synthetic.per_class_train = 20;
  spec.synthetic.per_class_test = 8;
  spec.synthetic.image_size = 16;
  spec.synthetic.seed = 3;
  spec.per_class_train = 10;
  spec.per_class_test = 4;
  spec.subset_seed = 9;

  DatasetSpec b = DatasetSpec::from_json(spec.to_json());
  CHECK(b.source == "synthetic");
  CHECK(b.per_class_train == 10);
  CHECK(b.per_class_test == 4);
  CHECK(b.subset_seed == 9);

  Dataset ds = realize_dataset(spec);
  CHECK(ds.num_classes == 4);
  CHECK(ds.train.size() == 40);
  CHECK(ds.test.size() == 16);

  DatasetSpec bad;
  bad.source = "imagenet";
  CHECK_THROWS_AS(realize_dataset(bad), ConfigError);
  bad.source = "cifar10";
  bad.path = "";
  CHECK_THROWS_AS(realize_dataset(bad), ConfigError);
}

TEST_CASE("experiment config validation rejects contradictions") {
  ExperimentConfig c = tiny_config("unused");
  c.validate();

  ExperimentConfig both = c;
  both.plan.target_fraction = 0.5;  // rate is already set
  CHECK_THROWS_AS(both.validate(), ConfigError);

  ExperimentConfig neither = c;
  neither.plan.global_rate = -1.0;
  neither.plan.target_fraction = -1.0;
  CHECK_THROWS_AS(neither.validate(), ConfigError);

  ExperimentConfig bad_eval = c;
  bad_eval.evaluation = {"ba", "f1"};
  CHECK_THROWS_AS(bad_eval.validate(), ConfigError);

  ExperimentConfig bad_defense = c;
  bad_defense.defenses = {DefenseSpec{"distillation", {}}};
  CHECK_THROWS_AS(bad_defense.validate(), ConfigError);

  ExperimentConfig bad_train = c;
  bad_train.train.epochs = 0;
  CHECK_THROWS_AS(bad_train.validate(), ConfigError);

  ExperimentConfig bad_source = c;
  bad_source.dataset.source = "webcam";
  CHECK_THROWS_AS(bad_source.validate(), ConfigError);
}

TEST_CASE("config hash ignores the output directory only") {
  ExperimentConfig a = tiny_config("here");
  ExperimentConfig b = tiny_config("there");
  CHECK(config_hash(a) == config_hash(b));

  ExperimentConfig c = tiny_config("here");
  c.seed = 6;
  CHECK(config_hash(c) != config_hash(a));
  c = tiny_config("here");
  c.plan.trigger.intensity = 0.5;
  CHECK(config_hash(c) != config_hash(a));
}

TEST_CASE("experiment config json round-trip") {
  ExperimentConfig c = tiny_config("out");
  c.defenses = {DefenseSpec{"prune", {{"beta", 0.25}}}};
  c.surrogate_arch = c.arch;
  c.surrogate_arch->width = 4;

  ExperimentConfig b = ExperimentConfig::from_json(c.to_json());
  CHECK(b.dataset.synthetic.num_classes == 4);
  CHECK(b.arch.width == 2);
  CHECK(b.train.epochs == 2);
  CHECK(b.plan.global_rate == doctest::Approx(0.05));
  REQUIRE(b.defenses.size() == 1);
  CHECK(b.defenses[0].name == "prune");
  REQUIRE(b.surrogate_arch.has_value());
  CHECK(b.surrogate_arch->width == 4);
  CHECK(b.out_dir == "out");
  CHECK(b.seed == 5);
  CHECK(config_hash(b) == config_hash(c));
}

TEST_CASE("run report serialization keeps failures and sweep metadata") {
  RunReport r;
  r.config_hash = "abc123";
  r.label = "badnets";
  r.attack.benign_accuracy = 88.0;
  r.attack.attack_success_rate = 97.5;
  r.attack.per_class = {90.0, 86.0};
  r.swept_path = "plan.global_rate";
  r.swept_value = 0.05;
  r.wall_seconds = 1.5;
  r.failure_stage = "train";
  r.failure_message = "diverged";
  DefenseReport d;
  d.name = "strip";
  d.auroc = 0.8;
  r.defense_reports.push_back(d);

  RunReport b = RunReport::from_json(r.to_json());
  CHECK(b.config_hash == "abc123");
  CHECK(b.label == "badnets");
  CHECK(b.attack.benign_accuracy == doctest::Approx(88.0));
  CHECK(b.attack.attack_success_rate == doctest::Approx(97.5));
  CHECK(b.attack.per_class == std::vector<double>{90.0, 86.0});
  CHECK(b.swept_path == "plan.global_rate");
  CHECK(b.swept_value.get<double>() == doctest::Approx(0.05));
  REQUIRE(b.defense_reports.size() == 1);
  CHECK(*b.defense_reports[0].auroc == doctest::Approx(0.8));
  CHECK(b.failure_stage == "train");
  CHECK_FALSE(b.ok());
}

TEST_CASE("sweep rejects unknown or non-scalar parameter paths") {
  ExperimentConfig c = tiny_config("unused");
  CHECK_THROWS_WITH_AS(sweep(c, "plan.no_such_knob", {nlohmann::json(1)}),
                       doctest::Contains("no such config field"), ConfigError);
  CHECK_THROWS_WITH_AS(sweep(c, "plan.trigger", {nlohmann::json(1)}),
                       doctest::Contains("must address a scalar"), ConfigError);
  CHECK_THROWS_AS(sweep(c, "plan.trigger.intensity", {}), ConfigError);
}

TEST_CASE("experiment pipeline runs, caches, and reports") {
  TempDir tmp;
  ExperimentConfig c = tiny_config(tmp.str("exp"));

  RunReport r1 = run_experiment(c);
  INFO(r1.failure_stage, ": ", r1.failure_message);
  REQUIRE(r1.ok());
  CHECK(r1.attack.benign_accuracy > 0.0);
  CHECK(r1.attack.benign_accuracy <= 100.0);
  CHECK(r1.attack.attack_success_rate >= 0.0);
  CHECK(r1.attack.per_class.size() == 4);
  CHECK(r1.wall_seconds > 0.0);
  CHECK(r1.environment.contains("compiler"));

  const fs::path run_dir = fs::path(c.out_dir) / "runs" / r1.config_hash;
  CHECK(fs::exists(run_dir / "report.json"));
  CHECK(fs::exists(run_dir / "config.json"));
  CHECK(fs::exists(fs::path(c.out_dir) / "cache"));

  // identical config: full cache hit with identical numbers
  RunReport r2 = run_experiment(c);
  REQUIRE(r2.ok());
  CHECK(r2.config_hash == r1.config_hash);
  CHECK(r2.attack.benign_accuracy == r1.attack.benign_accuracy);
  CHECK(r2.attack.attack_success_rate == r1.attack.attack_success_rate);

  // partial products come straight from the same cache
  PoisonedDataset pd = materialize_poison(c);
  CHECK(pd.modified.size() == 5);  // floor(0.05 * 100)
  Net net = materialize_model(c);
  CHECK(net.param_count() > 0);

  // a defense runs on top of the cached pipeline
  ExperimentConfig with_defense = c;
  with_defense.defenses = {DefenseSpec{"prune", {{"beta", 0.25}}}};
  RunReport r3 = run_experiment(with_defense);
  REQUIRE(r3.ok());
  REQUIRE(r3.defense_reports.size() == 1);
  CHECK(r3.defense_reports[0].name == "prune");
  CHECK(r3.defense_reports[0].ba_after.has_value());
  CHECK(r3.defense_reports[0].asr_after.has_value());

  // stage failures are captured, not thrown
  ExperimentConfig bad = c;
  bad.plan.target_class = 99;
  RunReport rf = run_experiment(bad);
  CHECK_FALSE(rf.ok());
  CHECK(rf.failure_stage == "poison");
  CHECK_FALSE(rf.failure_message.empty());
}

TEST_CASE("sweep shares the pipeline and tags each report") {
  TempDir tmp;
  ExperimentConfig c = tiny_config(tmp.str("sweep"));
  auto reports = sweep(c, "plan.trigger.intensity",
                       {nlohmann::json(0.0), nlohmann::json(1.0)});
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    INFO(r.failure_stage, ": ", r.failure_message);
    CHECK(r.ok());
    CHECK(r.swept_path == "plan.trigger.intensity");
  }
  CHECK(reports[0].swept_value.get<double>() == 0.0);
  CHECK(reports[1].swept_value.get<double>() == 1.0);
  CHECK(reports[0].config_hash != reports[1].config_hash);

  render_report(reports, tmp.str("render"));
  CHECK(fs::exists(tmp.str("render") + "/report.csv"));
  CHECK(fs::exists(tmp.str("render") + "/report.png"));
  std::ifstream csv(tmp.str("render") + "/report.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "label,config_hash,swept_path,swept_value,ba,asr,failure_stage");
}

TEST_CASE("render_report lists defense metric columns") {
  RunReport r;
  r.config_hash = "deadbeef";
  r.label = "x";
  r.attack.benign_accuracy = 80.0;
  r.attack.attack_success_rate = 10.0;
  DefenseReport d;
  d.name = "prune";
  d.ba_after = 78.0;
  d.asr_after = 5.0;
  r.defense_reports.push_back(d);

  TempDir tmp;
  render_report({r}, tmp.str("out"));
  std::ifstream csv(tmp.str("out") + "/report.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header.find("prune.ba_after") != std::string::npos);
  CHECK(header.find("prune.asr_after") != std::string::npos);
  CHECK(row.find("x,deadbeef") == 0);
}

TEST_CASE("desk config pins the benchmark identity") {
  ExperimentConfig c = desk_config(7, "out");
  CHECK(c.dataset.source == "synthetic");
  CHECK(c.dataset.synthetic.num_classes == 10);
  CHECK(c.dataset.synthetic.per_class_train == 500);
  CHECK(c.dataset.synthetic.per_class_test == 50);
  CHECK(c.dataset.synthetic.image_size == 32);
  CHECK(c.dataset.synthetic.seed == 1923u);
  CHECK(c.arch.name == "conv_small");
  CHECK(c.arch.width == 16);
  CHECK(c.train.epochs == 10);
  CHECK(c.train.lr == doctest::Approx(0.05));
  CHECK(c.train.lr_decay_epochs == std::vector<int>{7, 9});
  CHECK(c.train.seed == hash64_combine(7, 0x7121u));
  CHECK(c.plan.target_class == 0);
  CHECK(c.plan.seed == hash64_combine(7, 0x9015u));
  CHECK(c.seed == 7);

  // seed maps into the training/poisoning streams, not the dataset
  ExperimentConfig other = desk_config(8, "out");
  CHECK(other.dataset.synthetic.seed == 1923u);
  CHECK(other.train.seed != c.train.seed);
}

TEST_CASE("attack recipes configure the documented trigger families") {
  auto make = [](const std::string& name) {
    ExperimentConfig c = desk_config(3, "out");
    configure_attack(c, name);
    return c;
  };

  ExperimentConfig clean = make("clean_baseline");
  CHECK(clean.plan.global_rate == 0.0);
  CHECK(clean.plan.policy == LabelPolicy::poisoned);

  ExperimentConfig badnets = make("badnets");
  CHECK(badnets.plan.trigger.kind == TriggerKind::patch);
  CHECK(badnets.plan.policy == LabelPolicy::poisoned);
  CHECK(badnets.plan.global_rate == doctest::Approx(0.05));

  ExperimentConfig warp = make("warp_clean");
  CHECK(warp.plan.trigger.kind == TriggerKind::warp);
  CHECK(warp.plan.policy == LabelPolicy::clean);

  ExperimentConfig specific = make("specific_clean");
  CHECK(specific.plan.trigger.kind == TriggerKind::additive_specific);
  ExperimentConfig agnostic = make("agnostic_clean");
  CHECK(agnostic.plan.trigger.kind == TriggerKind::additive_agnostic);
  CHECK(specific.plan.trigger.additive.master_seed ==
        agnostic.plan.trigger.additive.master_seed);
  CHECK(specific.plan.trigger.intensity == doctest::Approx(4.0));

  ExperimentConfig lc = make("lc");
  CHECK(lc.plan.trigger.kind == TriggerKind::pgd);
  CHECK(lc.plan.trigger.then_patch.has_value());
  CHECK(lc.plan.policy == LabelPolicy::clean);

  ExperimentConfig tuap = make("tuap");
  CHECK(tuap.plan.trigger.kind == TriggerKind::uap);
  CHECK(tuap.plan.trigger.perturb.targeted);

  ExperimentConfig baat = make("baat");
  CHECK(baat.plan.trigger.kind == TriggerKind::stylize);
  CHECK(baat.plan.trigger.style.style == StyleSpec::hue_grade);
  CHECK(baat.plan.policy == LabelPolicy::clean);

  ExperimentConfig junk = desk_config(3, "out");
  CHECK_THROWS_AS(configure_attack(junk, "dropout"), ConfigError);
}

TEST_CASE("preset registry names are stable") {
  const auto& presets = list_presets();
  auto has = [&](const std::string& name) {
    for (const auto& p : presets)
      if (p.name == name) return true;
    return false;
  };
  for (const char* name :
       {"table1", "table2", "fig2", "table3", "table4", "table5", "table6",
        "table8", "table9", "fig8", "fig3", "fig6", "fig7", "table11",
        "strip_scaleup", "theory"}) {
    CHECK(has(name));
  }
  for (const auto& p : presets) CHECK_FALSE(p.description.empty());

  CHECK_THROWS_AS(run_preset("table99", 1, "out"), ConfigError);
}

TEST_CASE("environment fingerprint names the toolchain") {
  nlohmann::json j = environment_fingerprint();
  CHECK(j.contains("compiler"));
  CHECK(j.contains("platform"));
  CHECK(j.contains("build"));
}
