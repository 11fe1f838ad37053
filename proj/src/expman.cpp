#include "poisonbench/expman.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "poisonbench/adversarial.hpp"
#include "poisonbench/common.hpp"
#include "poisonbench/kernel_theory.hpp"
#include "poisonbench/plot.hpp"
#include "poisonbench/png_io.hpp"
#include "poisonbench/rng.hpp"

namespace poisonbench {

namespace fs = std::filesystem;

namespace {

uint64_t hash_str(const std::string& s, uint64_t seed = 0) {
  return hash64(s.data(), s.size(), seed);
}

uint64_t json_key(const nlohmann::json& j) { return hash_str(j.dump()); }

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IntegrityError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IntegrityError("short write: " + path.string());
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad json in " + path.string() + ": " + e.what());
  }
}

}  // namespace

// --- config types ----------------------------------------------------------

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j;
  j["source"] = source;
  if (!path.empty()) j["path"] = path;
  if (source == "synthetic") j["synthetic"] = synthetic.to_json();
  j["per_class_train"] = per_class_train;
  j["per_class_test"] = per_class_test;
  j["subset_seed"] = subset_seed;
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    s.source = j.value("source", s.source);
    s.path = j.value("path", s.path);
    if (j.contains("synthetic"))
      s.synthetic = SyntheticSpec::from_json(j.at("synthetic"));
    s.per_class_train = j.value("per_class_train", s.per_class_train);
    s.per_class_test = j.value("per_class_test", s.per_class_test);
    s.subset_seed = j.value("subset_seed", s.subset_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad dataset spec: ") + e.what());
  }
  return s;
}

Dataset realize_dataset(const DatasetSpec& spec) {
  Dataset ds;
  if (spec.source == "synthetic") {
    ds = generate_synthetic(spec.synthetic);
  } else if (spec.source == "cifar10") {
    if (spec.path.empty()) throw ConfigError("cifar10 source needs a path");
    ds = load_cifar10(spec.path);
  } else if (spec.source == "directory") {
    if (spec.path.empty()) throw ConfigError("directory source needs a path");
    ds = load_dataset(spec.path);
  } else {
    throw ConfigError("unknown dataset source: " + spec.source);
  }
  if (spec.per_class_train >= 0 || spec.per_class_test >= 0) {
    std::vector<int> classes(ds.num_classes);
    for (int i = 0; i < ds.num_classes; ++i) classes[i] = i;
    const int tr = spec.per_class_train >= 0
                       ? spec.per_class_train
                       : static_cast<int>(ds.train.size());
    const int te = spec.per_class_test >= 0 ? spec.per_class_test
                                            : static_cast<int>(ds.test.size());
    ds = subset(ds, classes, tr, te, spec.subset_seed);
  }
  return ds;
}

nlohmann::json DefenseSpec::to_json() const {
  return {{"name", name}, {"params", params}};
}

DefenseSpec DefenseSpec::from_json(const nlohmann::json& j) {
  DefenseSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.params = j.value("params", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad defense spec: ") + e.what());
  }
  return s;
}

namespace {

const char* const kKnownDefenses[] = {"fine_tune",    "prune",
                                      "shrink_pad",   "strip",
                                      "scale_up",     "neural_cleanse"};

bool known_defense(const std::string& name) {
  for (const char* d : kKnownDefenses)
    if (name == d) return true;
  return false;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "cifar10" &&
      dataset.source != "directory")
    throw ConfigError("unknown dataset source: " + dataset.source);
  if ((plan.global_rate >= 0) == (plan.target_fraction >= 0))
    throw ConfigError(
        "exactly one of global_rate / target_fraction must be set");
  if (train.epochs < 1 || train.batch_size < 1)
    throw ConfigError("train epochs and batch_size must be positive");
  for (const auto& e : evaluation)
    if (e != "ba" && e != "asr")
      throw ConfigError("unknown evaluation metric: " + e);
  for (const auto& d : defenses)
    if (!known_defense(d.name)) throw ConfigError("unknown defense: " + d.name);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset.to_json();
  j["plan"] = plan.to_json();
  j["arch"] = arch.to_json();
  j["train"] = train.to_json();
  j["evaluation"] = evaluation;
  auto& defs = j["defenses"] = nlohmann::json::array();
  for (const auto& d : defenses) defs.push_back(d.to_json());
  if (surrogate_arch) j["surrogate_arch"] = surrogate_arch->to_json();
  if (surrogate_train) j["surrogate_train"] = surrogate_train->to_json();
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j.at("dataset"));
    if (j.contains("plan")) c.plan = PoisonPlan::from_json(j.at("plan"));
    if (j.contains("arch")) c.arch = ModelArch::from_json(j.at("arch"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("evaluation"))
      c.evaluation = j.at("evaluation").get<std::vector<std::string>>();
    if (j.contains("defenses")) {
      c.defenses.clear();
      for (const auto& d : j.at("defenses"))
        c.defenses.push_back(DefenseSpec::from_json(d));
    }
    if (j.contains("surrogate_arch"))
      c.surrogate_arch = ModelArch::from_json(j.at("surrogate_arch"));
    if (j.contains("surrogate_train"))
      c.surrogate_train = TrainConfig::from_json(j.at("surrogate_train"));
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  // out_dir is where results land, not what they are.
  nlohmann::json j = config.to_json();
  j.erase("out_dir");
  return hash_hex(json_key(j));
}

nlohmann::json environment_fingerprint() {
  nlohmann::json j;
  j["compiler"] = __VERSION__;
  j["pointer_bits"] = static_cast<int>(8 * sizeof(void*));
#if defined(__linux__)
  j["platform"] = "linux";
#elif defined(__APPLE__)
  j["platform"] = "darwin";
#else
  j["platform"] = "other";
#endif
#if defined(NDEBUG)
  j["build"] = "release";
#else
  j["build"] = "debug";
#endif
  return j;
}

// --- run report ------------------------------------------------------------

namespace {

AttackReport attack_report_from_json(const nlohmann::json& j) {
  AttackReport r;
  r.benign_accuracy = j.value("benign_accuracy", 0.0);
  r.attack_success_rate = j.value("attack_success_rate", 0.0);
  if (j.contains("per_class_accuracy"))
    r.per_class = j.at("per_class_accuracy").get<std::vector<double>>();
  if (j.contains("provenance")) r.provenance = j.at("provenance");
  return r;
}

}  // namespace

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  if (!label.empty()) j["label"] = label;
  j["attack"] = attack.to_json();
  auto& defs = j["defenses"] = nlohmann::json::array();
  for (const auto& d : defense_reports) defs.push_back(d.to_json());
  if (!swept_path.empty()) {
    j["swept_path"] = swept_path;
    j["swept_value"] = swept_value;
  }
  j["wall_seconds"] = wall_seconds;
  j["environment"] = environment;
  if (!failure_stage.empty()) {
    j["failure_stage"] = failure_stage;
    j["failure_message"] = failure_message;
  }
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    r.config_hash = j.value("config_hash", std::string());
    r.label = j.value("label", std::string());
    if (j.contains("attack")) r.attack = attack_report_from_json(j.at("attack"));
    if (j.contains("defenses"))
      for (const auto& d : j.at("defenses"))
        r.defense_reports.push_back(DefenseReport::from_json(d));
    r.swept_path = j.value("swept_path", std::string());
    if (j.contains("swept_value")) r.swept_value = j.at("swept_value");
    r.wall_seconds = j.value("wall_seconds", 0.0);
    if (j.contains("environment")) r.environment = j.at("environment");
    r.failure_stage = j.value("failure_stage", std::string());
    r.failure_message = j.value("failure_message", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run report: ") + e.what());
  }
  return r;
}

// --- staged pipeline with content-hash checkpoints -------------------------

namespace {

fs::path cache_root(const ExperimentConfig& c) {
  return fs::path(c.out_dir) / "cache";
}

bool stage_done(const fs::path& dir) { return fs::exists(dir / "done.json"); }

void mark_done(const fs::path& dir, uint64_t key) {
  write_json_file(dir / "done.json", {{"key", hash_hex(key)}});
}

Dataset stage_dataset(const ExperimentConfig& cfg, uint64_t& key_out) {
  Dataset base = realize_dataset(cfg.dataset);
  key_out = hash64_combine(json_key(cfg.dataset.to_json()), dataset_hash(base));
  return base;
}

bool plan_needs_surrogate(const PoisonPlan& plan) {
  return plan.trigger.kind == TriggerKind::pgd ||
         plan.trigger.kind == TriggerKind::uap;
}

// Trains (or loads) a model for `arch`/`tc` on the given data, checkpointed
// under cache/model_<key>.
Net cached_train(const ExperimentConfig& cfg, const ModelArch& arch,
                 const TrainConfig& tc, const Dataset& data, uint64_t data_key,
                 uint64_t& key_out, std::vector<double>* loss_curve) {
  key_out = hash64_combine(hash64_combine(data_key, json_key(arch.to_json())),
                           json_key(tc.to_json()));
  const fs::path dir = cache_root(cfg) / ("model_" + hash_hex(key_out));
  const std::string base = (dir / "model").string();
  if (stage_done(dir)) {
    if (loss_curve) {
      const nlohmann::json meta = read_json_file(dir / "meta.json");
      *loss_curve = meta.value("loss_curve", std::vector<double>{});
    }
    return load_model(base);
  }
  TrainedModel tm = train(arch, data, tc);
  fs::create_directories(dir);
  save_model(tm.net, base);
  write_json_file(dir / "meta.json", {{"loss_curve", tm.loss_curve},
                                      {"arch", arch.to_json()},
                                      {"train", tc.to_json()}});
  mark_done(dir, key_out);
  if (loss_curve) *loss_curve = tm.loss_curve;
  return std::move(tm.net);
}

Net stage_surrogate(const ExperimentConfig& cfg, const Dataset& base,
                    uint64_t ds_key, uint64_t& key_out) {
  const ModelArch arch = cfg.surrogate_arch.value_or(cfg.arch);
  TrainConfig tc = cfg.surrogate_train.value_or(cfg.train);
  if (!cfg.surrogate_train)
    tc.seed = hash64_combine(cfg.seed, 0x5ee0u);  // decouple from the victim
  return cached_train(cfg, arch, tc, base, hash64_combine(ds_key, 0x50f7u),
                      key_out, nullptr);
}

PoisonedDataset stage_poison(const ExperimentConfig& cfg, const Dataset& base,
                             uint64_t ds_key, uint64_t& key_out) {
  PoisonPlan plan = cfg.plan;
  uint64_t surrogate_key = 0;
  std::optional<Net> surrogate;
  if (plan_needs_surrogate(plan))
    surrogate.emplace(stage_surrogate(cfg, base, ds_key, surrogate_key));

  key_out = hash64_combine(hash64_combine(ds_key, json_key(plan.to_json())),
                           surrogate_key);
  const fs::path dir = cache_root(cfg) / ("poison_" + hash_hex(key_out));
  if (stage_done(dir)) {
    PoisonedDataset pd = load_poisoned((dir / "data").string());
    if (pd.plan.trigger.kind == TriggerKind::uap)
      pd.plan.trigger.resolved_pattern = load_pattern((dir / "pattern").string());
    return pd;
  }

  ImageGenerator generator;
  nlohmann::json extra_meta;
  if (plan.trigger.kind == TriggerKind::uap) {
    // Synthesize the shared pattern on a seeded pool slice.
    Rng rng(hash64_combine(cfg.seed, 0xa7111u));
    std::vector<int> idx(base.train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    std::vector<LabeledImage> pool;
    for (size_t i = 0; i < std::min<size_t>(idx.size(), 256); ++i)
      pool.push_back(base.train[static_cast<size_t>(idx[i])]);
    UapResult uap = universal_perturbation(*surrogate, pool, plan.target_class,
                                           plan.trigger.perturb,
                                           hash64_combine(cfg.seed, 0x0a9u));
    plan.trigger.resolved_pattern = uap.pattern;
    extra_meta = {{"uap_fooling_rate", uap.fooling_rate},
                  {"uap_epochs", uap.epochs_run},
                  {"uap_converged", uap.converged}};
  } else if (plan.trigger.kind == TriggerKind::pgd) {
    plan.trigger.perturb.targeted = false;
    plan.trigger.perturb.target_class = plan.target_class;
    generator = lc_generator(*surrogate, plan.trigger,
                             hash64_combine(cfg.seed, 0x1c9eu));
  }

  PoisonedDataset pd = assemble_poisoned_dataset(base, plan, generator);
  fs::create_directories(dir);
  save_poisoned(pd, (dir / "data").string());
  if (plan.trigger.resolved_pattern)
    save_pattern((dir / "pattern").string(), *plan.trigger.resolved_pattern);
  if (!extra_meta.is_null()) write_json_file(dir / "meta.json", extra_meta);
  mark_done(dir, key_out);
  return pd;
}

uint64_t trigger_content_key(const TriggerSpec& trig) {
  uint64_t k = json_key(trig.to_json());
  if (trig.resolved_pattern)
    k = hash64_combine(
        k, hash64(trig.resolved_pattern->v.data(),
                  trig.resolved_pattern->v.size() * sizeof(float), 0x9a77u));
  return k;
}

AttackReport stage_evaluate(const ExperimentConfig& cfg, Net& net,
                            const PoisonedDataset& pd, uint64_t train_key) {
  const TriggerSpec& trig = pd.plan.trigger;
  const uint64_t key = hash64_combine(train_key, trigger_content_key(trig));
  const fs::path file = cache_root(cfg) / ("eval_" + hash_hex(key) + ".json");
  if (fs::exists(file)) return attack_report_from_json(read_json_file(file));

  AttackReport report = evaluate_attack(net, pd.data, trig, pd.plan.target_class);
  report.provenance["config_hash"] = config_hash(cfg);
  report.provenance["poisoning_rate"] = poisoning_rate(pd);
  report.provenance["modified_count"] = pd.modified.size();
  write_json_file(file, report.to_json());
  return report;
}

DefenseReport run_defense(const ExperimentConfig& cfg, const DefenseSpec& spec,
                          Net& net, const Dataset& base,
                          const PoisonedDataset& pd,
                          const AttackReport& attack, uint64_t train_key) {
  const uint64_t key = hash64_combine(train_key, json_key(spec.to_json()));
  const fs::path file =
      cache_root(cfg) / ("defense_" + hash_hex(key) + ".json");
  if (fs::exists(file)) return DefenseReport::from_json(read_json_file(file));

  const TriggerSpec& trig = pd.plan.trigger;
  const int target = pd.plan.target_class;
  const uint64_t seed = hash64_combine(cfg.seed, hash_str(spec.name, 0xdefu));
  const nlohmann::json p =
      spec.params.is_object() ? spec.params : nlohmann::json::object();
  DefenseReport report;

  if (spec.name == "fine_tune") {
    const double fraction = p.value("benign_fraction", 0.05);
    const int epochs = p.value("epochs", 10);
    const double lr = p.value("lr", 0.01);
    FineTuneResult ft =
        fine_tune(net, base, fraction, epochs, lr, trig, target, seed);
    report.name = spec.name;
    report.parameters = {{"benign_fraction", fraction}, {"epochs", epochs},
                         {"lr", lr}};
    report.ba_before = attack.benign_accuracy;
    report.asr_before = attack.attack_success_rate;
    report.ba_after = ft.ba_curve.back();
    report.asr_after = ft.asr_curve.back();
    report.extra = {{"ba_curve", ft.ba_curve}, {"asr_curve", ft.asr_curve}};
  } else if (spec.name == "prune") {
    const double beta = p.value("beta", 0.2);
    const int pool_n = p.value("pool", 512);
    std::vector<LabeledImage> pool(
        base.train.begin(),
        base.train.begin() + std::min<size_t>(base.train.size(),
                                              static_cast<size_t>(pool_n)));
    Net pruned = prune_channels(net, pool, beta);
    report.name = spec.name;
    report.parameters = {{"beta", beta}, {"pool", pool_n}};
    report.ba_before = attack.benign_accuracy;
    report.asr_before = attack.attack_success_rate;
    report.ba_after = benign_accuracy(pruned, base.test);
    report.asr_after = attack_success_rate(pruned, base.test, trig, target);
  } else if (spec.name == "shrink_pad") {
    const int pixels = p.value("shrink_pixels", 4);
    report = evaluate_shrink_pad(net, base, trig, target, pixels, seed);
  } else if (spec.name == "strip") {
    const int n = p.value("n", 64);
    const double alpha = p.value("alpha", 0.5);
    const int max_images = p.value("max_images", 100);
    Dataset capped;
    capped.num_classes = base.num_classes;
    capped.train.assign(base.train.begin(),
                        base.train.begin() +
                            std::min<size_t>(base.train.size(), 256));
    capped.test.assign(base.test.begin(),
                       base.test.begin() +
                           std::min<size_t>(base.test.size(),
                                            static_cast<size_t>(max_images)));
    const std::string csv =
        (cache_root(cfg) / ("defense_" + hash_hex(key) + "_scores.csv"))
            .string();
    report = strip_report(net, capped, trig, target, n, alpha, seed, csv);
    report.parameters["max_images"] = max_images;
  } else if (spec.name == "scale_up") {
    std::vector<double> scales = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    if (p.contains("scales")) scales = p.at("scales").get<std::vector<double>>();
    const int max_images = p.value("max_images", 200);
    Dataset capped;
    capped.num_classes = base.num_classes;
    capped.test.assign(base.test.begin(),
                       base.test.begin() +
                           std::min<size_t>(base.test.size(),
                                            static_cast<size_t>(max_images)));
    const std::string csv =
        (cache_root(cfg) / ("defense_" + hash_hex(key) + "_scores.csv"))
            .string();
    report = scale_up_report(net, capped, trig, target, scales, csv);
    report.parameters["max_images"] = max_images;
  } else if (spec.name == "neural_cleanse") {
    NeuralCleanseConfig nc;
    nc.steps = p.value("steps", nc.steps);
    nc.lr = p.value("lr", nc.lr);
    nc.lambda_init = p.value("lambda_init", nc.lambda_init);
    nc.asr_threshold = p.value("asr_threshold", nc.asr_threshold);
    nc.batch = p.value("batch", nc.batch);
    nc.eval_pool = p.value("eval_pool", nc.eval_pool);
    nc.seed = seed;
    const int pool_n = p.value("pool", 128);
    std::vector<LabeledImage> pool(
        base.train.begin(),
        base.train.begin() + std::min<size_t>(base.train.size(),
                                              static_cast<size_t>(pool_n)));
    CleanseReport cr = neural_cleanse(net, pool, base.num_classes, nc);
    report.name = spec.name;
    report.parameters = {{"steps", nc.steps},   {"lr", nc.lr},
                         {"lambda_init", nc.lambda_init},
                         {"batch", nc.batch},   {"pool", pool_n}};
    report.extra = cr.to_json();
  } else {
    throw ConfigError("unknown defense: " + spec.name);
  }
  write_json_file(file, report.to_json());
  return report;
}

}  // namespace

PoisonedDataset materialize_poison(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(cache_root(config));
  uint64_t ds_key = 0, poison_key = 0;
  const Dataset base = stage_dataset(config, ds_key);
  return stage_poison(config, base, ds_key, poison_key);
}

Net materialize_model(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(cache_root(config));
  uint64_t ds_key = 0, poison_key = 0, train_key = 0;
  const Dataset base = stage_dataset(config, ds_key);
  const PoisonedDataset pd = stage_poison(config, base, ds_key, poison_key);
  return cached_train(config, config.arch, config.train, pd.data, poison_key,
                      train_key, nullptr);
}

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunReport report;
  report.config_hash = config_hash(config);
  report.environment = environment_fingerprint();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cache_root(config));

  std::string stage = "dataset";
  try {
    uint64_t ds_key = 0;
    const Dataset base = stage_dataset(config, ds_key);
    stage = "poison";
    uint64_t poison_key = 0;
    const PoisonedDataset pd = stage_poison(config, base, ds_key, poison_key);
    stage = "train";
    uint64_t train_key = 0;
    std::vector<double> loss_curve;
    Net net = cached_train(config, config.arch, config.train, pd.data,
                           poison_key, train_key, &loss_curve);
    stage = "evaluate";
    report.attack = stage_evaluate(config, net, pd, train_key);
    stage = "defend";
    for (const auto& spec : config.defenses)
      report.defense_reports.push_back(
          run_defense(config, spec, net, base, pd, report.attack, train_key));
  } catch (const std::exception& e) {
    report.failure_stage = stage;
    report.failure_message = e.what();
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  const fs::path run_dir = fs::path(config.out_dir) / "runs" / report.config_hash;
  fs::create_directories(run_dir);
  write_json_file(run_dir / "report.json", report.to_json());
  write_json_file(run_dir / "config.json", config.to_json());
  return report;
}

std::vector<RunReport> sweep(const ExperimentConfig& config,
                             const std::string& parameter_path,
                             const std::vector<nlohmann::json>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<std::string> segments;
  std::stringstream ss(parameter_path);
  std::string seg;
  while (std::getline(ss, seg, '.')) segments.push_back(seg);
  if (segments.empty()) throw ConfigError("empty parameter path");

  const nlohmann::json base = config.to_json();
  std::vector<RunReport> reports;
  for (const auto& value : values) {
    nlohmann::json j = base;
    nlohmann::json* node = &j;
    for (size_t i = 0; i + 1 < segments.size(); ++i) {
      if (!node->is_object() || !node->contains(segments[i]))
        throw ConfigError("no such config field: " + parameter_path);
      node = &(*node)[segments[i]];
    }
    const std::string& leaf = segments.back();
    if (!node->is_object() || !node->contains(leaf))
      throw ConfigError("no such config field: " + parameter_path);
    if ((*node)[leaf].is_object() || (*node)[leaf].is_array())
      throw ConfigError("parameter path must address a scalar: " +
                        parameter_path);
    (*node)[leaf] = value;

    RunReport r = run_experiment(ExperimentConfig::from_json(j));
    r.swept_path = parameter_path;
    r.swept_value = value;
    reports.push_back(std::move(r));
  }
  return reports;
}

// --- rendering -------------------------------------------------------------

namespace {

std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

}  // namespace

void render_report(const std::vector<RunReport>& reports,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);

  // Union of per-defense metric columns, in first-seen order.
  std::vector<std::string> defense_cols;
  auto add_col = [&](const std::string& c) {
    if (std::find(defense_cols.begin(), defense_cols.end(), c) ==
        defense_cols.end())
      defense_cols.push_back(c);
  };
  for (const auto& r : reports)
    for (const auto& d : r.defense_reports) {
      if (d.ba_after) add_col(d.name + ".ba_after");
      if (d.asr_after) add_col(d.name + ".asr_after");
      if (d.auroc) add_col(d.name + ".auroc");
    }

  std::ofstream csv(fs::path(out_dir) / "report.csv");
  if (!csv) throw IntegrityError("cannot write report.csv in " + out_dir);
  csv << "label,config_hash,swept_path,swept_value,ba,asr,failure_stage";
  for (const auto& c : defense_cols) csv << "," << c;
  csv << "\n";
  for (const auto& r : reports) {
    csv << r.label << "," << r.config_hash << "," << r.swept_path << ","
        << (r.swept_value.is_null() ? std::string() : r.swept_value.dump())
        << "," << csv_number(r.attack.benign_accuracy) << ","
        << csv_number(r.attack.attack_success_rate) << "," << r.failure_stage;
    for (const auto& col : defense_cols) {
      csv << ",";
      const auto dot = col.find('.');
      for (const auto& d : r.defense_reports) {
        if (d.name != col.substr(0, dot)) continue;
        const std::string metric = col.substr(dot + 1);
        std::optional<double> v;
        if (metric == "ba_after") v = d.ba_after;
        else if (metric == "asr_after") v = d.asr_after;
        else v = d.auroc;
        if (v) csv << csv_number(*v);
        break;
      }
    }
    csv << "\n";
  }
  csv.close();

  // Generic BA/ASR plot over a numeric swept parameter. Skipped for grids
  // that mix several run labels; those presets draw their own figures.
  std::vector<const RunReport*> points;
  for (const auto& r : reports)
    if (r.ok() && r.swept_value.is_number() && r.label == reports[0].label)
      points.push_back(&r);
  if (points.size() >= 2 && points.size() == reports.size()) {
    Series ba{"BA", {}, {}, 0}, asr{"ASR", {}, {}, 1};
    std::string hashes;
    for (const auto* r : points) {
      ba.x.push_back(r->swept_value.get<double>());
      ba.y.push_back(r->attack.benign_accuracy);
      asr.x.push_back(r->swept_value.get<double>());
      asr.y.push_back(r->attack.attack_success_rate);
      if (!hashes.empty()) hashes += " ";
      hashes += r->config_hash.substr(0, 8);
    }
    PlotSpec spec;
    spec.x_label = points[0]->swept_path;
    spec.y_label = "BA %";
    spec.y2_label = "ASR %";
    spec.footnote = "configs: " + hashes;
    render_line_plot((fs::path(out_dir) / "report.png").string(), spec,
                     {ba, asr});
  }
}

// --- desk presets ----------------------------------------------------------

ExperimentConfig desk_config(uint64_t seed, const std::string& out_dir) {
  ExperimentConfig c;
  c.dataset.source = "synthetic";
  c.dataset.synthetic.num_classes = 10;
  c.dataset.synthetic.per_class_train = 500;
  c.dataset.synthetic.per_class_test = 50;
  c.dataset.synthetic.image_size = 32;
  c.dataset.synthetic.seed = 1923u;  // the fixed desk dataset identity
  c.arch.name = "conv_small";
  c.arch.num_classes = 10;
  c.arch.width = 16;
  c.arch.image_size = 32;
  c.train.epochs = 10;
  c.train.batch_size = 128;
  c.train.lr = 0.05;
  c.train.lr_decay_epochs = {7, 9};
  c.train.seed = hash64_combine(seed, 0x7121u);
  c.plan.target_class = 0;
  c.plan.seed = hash64_combine(seed, 0x9015u);
  c.seed = seed;
  c.out_dir = out_dir;
  return c;
}

void configure_attack(ExperimentConfig& c, const std::string& attack) {
  TriggerSpec& t = c.plan.trigger;
  t = TriggerSpec{};
  c.plan.policy = LabelPolicy::clean;
  c.plan.global_rate = 0.05;
  c.plan.target_fraction = -1.0;

  if (attack == "clean_baseline") {
    t.kind = TriggerKind::patch;
    t.patch.pattern = "white";
    t.patch.size = 4;
    t.intensity = 1.0;
    c.plan.policy = LabelPolicy::poisoned;
    c.plan.global_rate = 0.0;
  } else if (attack == "badnets") {
    t.kind = TriggerKind::patch;
    t.patch.pattern = "white";
    t.patch.size = 4;
    t.intensity = 1.0;
    c.plan.policy = LabelPolicy::poisoned;
  } else if (attack == "warp_clean") {
    t.kind = TriggerKind::warp;
    t.warp.grid = 4;
    t.warp.seed = hash64_combine(c.seed, 0x3a9fu);
    t.intensity = 1.0;
  } else if (attack == "specific_clean" || attack == "agnostic_clean") {
    t.kind = attack == "specific_clean" ? TriggerKind::additive_specific
                                        : TriggerKind::additive_agnostic;
    t.additive.master_seed = hash64_combine(c.seed, 0xadd5u);
    t.additive.base_scale = 2.0;
    t.intensity = 4.0;
  } else if (attack == "lc") {
    t.kind = TriggerKind::pgd;
    t.perturb.epsilon = 16.0 / 255.0;
    t.perturb.steps = 10;
    t.perturb.targeted = false;
    t.perturb.target_class = c.plan.target_class;
    PatchSpec overlay;
    overlay.pattern = "checker_bw";
    overlay.size = 4;
    overlay.alpha = 1.0;
    t.then_patch = overlay;
    t.intensity = 1.0;
  } else if (attack == "tuap") {
    t.kind = TriggerKind::uap;
    t.perturb.epsilon = 16.0 / 255.0;
    t.perturb.steps = 10;
    t.perturb.targeted = true;
    t.perturb.target_class = c.plan.target_class;
    t.intensity = 1.0;
  } else if (attack == "baat") {
    t.kind = TriggerKind::stylize;
    t.style.style = StyleSpec::hue_grade;
    t.style.hue_degrees = 90.0;
    t.intensity = 1.0;
  } else {
    throw ConfigError("unknown attack recipe: " + attack);
  }
}

namespace {

fs::path preset_out(const std::string& root, const std::string& name) {
  const fs::path dir = fs::path(root) / name;
  fs::create_directories(dir);
  return dir;
}

RunReport labeled_run(ExperimentConfig c, const std::string& label) {
  RunReport r = run_experiment(c);
  r.label = label;
  return r;
}

std::vector<RunReport> preset_table1(uint64_t seed, const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string arch : {"conv_small", "conv_deeper"})
    for (const std::string attack : {"warp_clean", "specific_clean"}) {
      ExperimentConfig c = desk_config(seed, root);
      configure_attack(c, attack);
      c.arch.name = arch;
      reports.push_back(labeled_run(c, attack + "/" + arch));
    }
  render_report(reports, preset_out(root, "table1").string());
  return reports;
}

std::vector<RunReport> preset_table2(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "clean_baseline");
  c.dataset.synthetic.per_class_train = 200;
  c.dataset.synthetic.per_class_test = 40;

  uint64_t ds_key = 0;
  const Dataset base = stage_dataset(c, ds_key);
  uint64_t ref_key = 0;
  Net reference = cached_train(c, c.arch, c.train, base,
                               hash64_combine(ds_key, 0x4ef0u), ref_key,
                               nullptr);

  const std::vector<double> eps_grid = {0.0, 4.0 / 255, 8.0 / 255, 16.0 / 255};
  std::vector<RunReport> reports;
  Series acc{"accuracy", {}, {}, 0};
  for (double eps : eps_grid) {
    PerturbationSpec spec;
    spec.epsilon = eps;
    spec.steps = 7;
    spec.targeted = false;

    uint64_t model_key = ref_key;
    double ba = 0.0;
    if (eps == 0.0) {
      // The reference model *is* the eps = 0 point.
      ba = benign_accuracy(reference, base.test);
    } else {
      const uint64_t data_key =
          hash64_combine(ref_key, json_key(spec.to_json()));
      const fs::path dir = cache_root(c) / ("advdata_" + hash_hex(data_key));
      Dataset perturbed;
      if (stage_done(dir)) {
        perturbed = load_dataset((dir / "data").string());
      } else {
        perturbed = perturb_dataset(reference, base, spec,
                                    hash64_combine(seed, 0xadu));
        fs::create_directories(dir);
        save_dataset(perturbed, (dir / "data").string());
        mark_done(dir, data_key);
      }
      Net net = cached_train(c, c.arch, c.train, perturbed, data_key,
                             model_key, nullptr);
      ba = benign_accuracy(net, base.test);
    }
    RunReport r;
    r.config_hash = hash_hex(model_key);
    r.label = "adv_data";
    r.swept_path = "epsilon";
    r.swept_value = eps;
    r.attack.benign_accuracy = ba;
    r.environment = environment_fingerprint();
    acc.x.push_back(eps * 255.0);
    acc.y.push_back(ba);
    reports.push_back(std::move(r));
  }

  const fs::path dir = preset_out(root, "table2");
  std::ofstream csv(dir / "table2.csv");
  csv << "epsilon_255,accuracy\n";
  for (size_t i = 0; i < acc.x.size(); ++i)
    csv << acc.x[i] << "," << csv_number(acc.y[i]) << "\n";
  PlotSpec spec;
  spec.x_label = "epsilon (levels)";
  spec.y_label = "accuracy %";
  spec.title = "training on perturbed data";
  render_line_plot((dir / "table2.png").string(), spec, {acc});
  return reports;
}

std::vector<RunReport> preset_fig2(uint64_t seed, const std::string& root) {
  const std::vector<nlohmann::json> rates = {0.01, 0.02, 0.05};
  std::vector<RunReport> all;
  Series ag{"agnostic", {}, {}, 0}, sp{"specific", {}, {}, 0};
  for (const std::string attack : {"agnostic_clean", "specific_clean"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    std::vector<RunReport> part = sweep(c, "plan.global_rate", rates);
    for (auto& r : part) {
      r.label = attack;
      Series& s = attack == "agnostic_clean" ? ag : sp;
      if (r.ok()) {
        s.x.push_back(100.0 * r.swept_value.get<double>());
        s.y.push_back(r.attack.attack_success_rate);
      }
      all.push_back(std::move(r));
    }
  }
  const fs::path dir = preset_out(root, "fig2");
  render_report(all, dir.string());
  PlotSpec spec;
  spec.x_label = "poisoning rate %";
  spec.y_label = "ASR %";
  spec.title = "frozen vs per-sample additive trigger";
  render_line_plot((dir / "fig2.png").string(), spec, {ag, sp});
  return all;
}

std::vector<RunReport> preset_table3(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "warp_clean");
  std::vector<RunReport> reports =
      sweep(c, "plan.trigger.intensity", {0.0, 0.5, 1.0, 1.5, 2.0});
  render_report(reports, preset_out(root, "table3").string());
  return reports;
}

std::vector<RunReport> preset_table4(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "specific_clean");
  std::vector<RunReport> reports =
      sweep(c, "plan.trigger.intensity", {0.0, 2.0, 4.0, 6.0, 8.0});
  render_report(reports, preset_out(root, "table4").string());
  return reports;
}

std::vector<RunReport> preset_table5(uint64_t seed, const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string arch : {"conv_small", "conv_deeper"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, "lc");
    c.surrogate_arch = desk_config(seed, root).arch;  // always conv_small
    c.arch.name = arch;
    reports.push_back(labeled_run(
        c, arch == "conv_small" ? "lc/same_arch" : "lc/cross_arch"));
  }
  render_report(reports, preset_out(root, "table5").string());
  return reports;
}

std::vector<RunReport> preset_table6(uint64_t seed, const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string attack :
       {"clean_baseline", "badnets", "warp_clean", "specific_clean", "lc",
        "tuap", "baat"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    reports.push_back(labeled_run(c, attack));
  }
  render_report(reports, preset_out(root, "table6").string());
  return reports;
}

std::vector<RunReport> preset_table8(uint64_t seed, const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string pattern : {"white", "black", "checker_bw", "noise"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, "badnets");
    c.plan.trigger.patch.pattern = pattern;
    c.plan.trigger.patch.noise_seed = hash64_combine(seed, 0xb0153u);
    reports.push_back(labeled_run(c, "badnets/" + pattern));
  }
  render_report(reports, preset_out(root, "table8").string());
  return reports;
}

std::vector<RunReport> preset_table9(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "baat");
  std::vector<RunReport> reports = sweep(c, "plan.target_class", {1, 2, 3, 4});
  render_report(reports, preset_out(root, "table9").string());
  return reports;
}

std::vector<RunReport> preset_fig8(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "baat");
  std::vector<RunReport> reports =
      sweep(c, "plan.global_rate", {0.01, 0.02, 0.05, 0.1});
  render_report(reports, preset_out(root, "fig8").string());
  return reports;
}

// Trains (or loads) the full pipeline for one attack and hands back the
// pieces custom presets need.
struct PipelineOut {
  Dataset base;
  PoisonedDataset pd;
  Net net;
  uint64_t train_key = 0;
};

PipelineOut run_pipeline(const ExperimentConfig& c) {
  PipelineOut out;
  uint64_t ds_key = 0, poison_key = 0;
  out.base = stage_dataset(c, ds_key);
  out.pd = stage_poison(c, out.base, ds_key, poison_key);
  out.net = cached_train(c, c.arch, c.train, out.pd.data, poison_key,
                         out.train_key, nullptr);
  return out;
}

std::vector<RunReport> preset_fig3(uint64_t seed, const std::string& root) {
  const fs::path dir = preset_out(root, "fig3");
  std::ofstream csv(dir / "fig3.csv");
  csv << "attack,class,mask_l1,anomaly_index,final_asr,converged,iou,"
         "concentration\n";
  std::vector<RunReport> reports;
  for (const std::string attack : {"badnets", "baat"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    PipelineOut pipe = run_pipeline(c);

    NeuralCleanseConfig nc;
    nc.seed = hash64_combine(seed, 0xc1ea3u);
    std::vector<LabeledImage> pool(
        pipe.base.train.begin(),
        pipe.base.train.begin() + std::min<size_t>(pipe.base.train.size(), 128));
    const CleanseReport cr =
        neural_cleanse(pipe.net, pool, pipe.base.num_classes, nc);

    const int target = c.plan.target_class;
    for (size_t cls = 0; cls < cr.per_class.size(); ++cls) {
      const auto& item = cr.per_class[cls];
      const int h = item.mask.h, w = item.mask.w;
      double iou = 0.0;
      if (attack == "badnets" && static_cast<int>(cls) == target)
        iou = mask_patch_iou(item.mask, h - 4, w - 4, 4, 4);
      csv << attack << "," << cls << "," << csv_number(item.mask_l1) << ","
          << csv_number(cr.anomaly_index[cls]) << ","
          << csv_number(item.final_asr) << "," << (item.converged ? 1 : 0)
          << "," << csv_number(iou) << ","
          << csv_number(mask_concentration(item.mask)) << "\n";

      FloatImage scaled = item.mask;
      for (auto& v : scaled.v) v *= 255.f;
      write_png((dir / ("mask_" + attack + "_" + std::to_string(cls) + ".png"))
                    .string(),
                upscale_nearest(quantize(scaled), 4));
    }

    RunReport r;
    r.config_hash = config_hash(c);
    r.label = attack;
    r.attack = stage_evaluate(c, pipe.net, pipe.pd, pipe.train_key);
    r.environment = environment_fingerprint();
    DefenseReport d;
    d.name = "neural_cleanse";
    d.parameters = {{"steps", nc.steps}, {"pool", pool.size()}};
    d.extra = cr.to_json();
    r.defense_reports.push_back(std::move(d));
    reports.push_back(std::move(r));
  }
  render_report(reports, dir.string());
  return reports;
}

std::vector<RunReport> preset_fig6(uint64_t seed, const std::string& root) {
  const fs::path dir = preset_out(root, "fig6");
  std::vector<RunReport> reports;
  for (const std::string attack : {"badnets", "baat"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    PipelineOut pipe = run_pipeline(c);
    const TriggerSpec eval = evaluation_trigger(pipe.pd.plan.trigger);

    std::vector<Image> tiles;
    int shown = 0;
    for (const auto& item : pipe.base.test) {
      if (item.label == c.plan.target_class) continue;
      const Image triggered = apply_trigger(item.pixels, eval);
      const std::vector<const Image*> one = {&triggered};
      const int pred = predict(pipe.net, one)[0];
      const FloatImage cam = gradcam(pipe.net, triggered, pred);
      tiles.push_back(upscale_nearest(item.pixels, 3));
      tiles.push_back(upscale_nearest(triggered, 3));
      tiles.push_back(upscale_nearest(overlay_heatmap(triggered, cam), 3));
      if (++shown == 4) break;
    }
    write_png((dir / ("cam_" + attack + ".png")).string(),
              image_grid(tiles, 3));

    RunReport r;
    r.config_hash = config_hash(c);
    r.label = attack;
    r.attack = stage_evaluate(c, pipe.net, pipe.pd, pipe.train_key);
    r.environment = environment_fingerprint();
    reports.push_back(std::move(r));
  }
  render_report(reports, dir.string());
  return reports;
}

std::vector<RunReport> preset_fig7(uint64_t seed, const std::string& root) {
  ExperimentConfig c = desk_config(seed, root);
  configure_attack(c, "baat");
  PipelineOut pipe = run_pipeline(c);

  FineTuneResult ft =
      fine_tune(pipe.net, pipe.base, 0.05, 10, 0.01, pipe.pd.plan.trigger,
                c.plan.target_class, hash64_combine(seed, 0xf7u));

  const fs::path dir = preset_out(root, "fig7");
  Series ba{"BA", {}, {}, 0}, asr{"ASR", {}, {}, 1};
  std::ofstream csv(dir / "fig7.csv");
  csv << "epoch,ba,asr\n";
  for (size_t i = 0; i < ft.ba_curve.size(); ++i) {
    ba.x.push_back(static_cast<double>(i + 1));
    ba.y.push_back(ft.ba_curve[i]);
    asr.x.push_back(static_cast<double>(i + 1));
    asr.y.push_back(ft.asr_curve[i]);
    csv << (i + 1) << "," << csv_number(ft.ba_curve[i]) << ","
        << csv_number(ft.asr_curve[i]) << "\n";
  }
  PlotSpec spec;
  spec.x_label = "epoch";
  spec.y_label = "BA %";
  spec.y2_label = "ASR %";
  spec.title = "fine-tuning the poisoned model";
  spec.footnote = "config: " + config_hash(c).substr(0, 8);
  render_line_plot((dir / "fig7.png").string(), spec, {ba, asr});

  RunReport r;
  r.config_hash = config_hash(c);
  r.label = "baat";
  r.attack = stage_evaluate(c, pipe.net, pipe.pd, pipe.train_key);
  r.environment = environment_fingerprint();
  DefenseReport d;
  d.name = "fine_tune";
  d.parameters = {{"benign_fraction", 0.05}, {"epochs", 10}, {"lr", 0.01}};
  d.ba_before = r.attack.benign_accuracy;
  d.asr_before = r.attack.attack_success_rate;
  d.ba_after = ft.ba_curve.back();
  d.asr_after = ft.asr_curve.back();
  d.extra = {{"ba_curve", ft.ba_curve}, {"asr_curve", ft.asr_curve}};
  r.defense_reports.push_back(std::move(d));
  return {std::move(r)};
}

std::vector<RunReport> preset_table11(uint64_t seed, const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string attack : {"badnets", "baat"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    c.defenses = {DefenseSpec{"fine_tune", nlohmann::json::object()},
                  DefenseSpec{"prune", {{"beta", 0.2}}},
                  DefenseSpec{"shrink_pad", {{"shrink_pixels", 4}}}};
    reports.push_back(labeled_run(c, attack));
  }
  render_report(reports, preset_out(root, "table11").string());
  return reports;
}

std::vector<RunReport> preset_strip_scaleup(uint64_t seed,
                                            const std::string& root) {
  std::vector<RunReport> reports;
  for (const std::string attack : {"badnets", "baat"}) {
    ExperimentConfig c = desk_config(seed, root);
    configure_attack(c, attack);
    c.defenses = {DefenseSpec{"strip", nlohmann::json::object()},
                  DefenseSpec{"scale_up", nlohmann::json::object()}};
    reports.push_back(labeled_run(c, attack));
  }
  render_report(reports, preset_out(root, "strip_scaleup").string());
  return reports;
}

std::vector<RunReport> preset_theory(uint64_t seed, const std::string& root) {
  const fs::path dir = preset_out(root, "theory");
  TheoremParams params;
  const TheoremReport report = verify_theorem(params, seed);
  write_json_file(dir / "theory.json",
                  {{"params", params.to_json()}, {"report", report.to_json()}});

  std::ofstream csv(dir / "theory_oracle.csv");
  csv << "pair,oracle_gap,mc_gap,abs_diff\n";
  for (int i = 0; i < 10; ++i) {
    const InstancePair pair = build_paired_instances(
        40, 6, 2, 1, 1.0, 0.5, hash64_combine(seed, 0xd1 + i));
    const double oracle = exhaustive_gap_oracle(pair, 4096);
    const TheoremReport mc =
        confidence_gap(pair, 10000, hash64_combine(seed, 0x9c + i));
    csv << i << "," << csv_number(oracle) << "," << csv_number(mc.gap) << ","
        << csv_number(std::fabs(oracle - mc.gap)) << "\n";
  }
  return {};
}

struct PresetImpl {
  Preset info;
  std::vector<RunReport> (*fn)(uint64_t, const std::string&);
};

const std::vector<PresetImpl>& preset_registry() {
  static const std::vector<PresetImpl> registry = {
      {{"table1", "clean-label warp/per-sample additive across archs"},
       preset_table1},
      {{"table2", "accuracy of models trained on PGD-perturbed data"},
       preset_table2},
      {{"fig2", "frozen vs per-sample additive over poisoning rates"},
       preset_fig2},
      {{"table3", "warp strength sweep"}, preset_table3},
      {{"table4", "per-sample additive amplification sweep"}, preset_table4},
      {{"table5", "label-consistent attack across architectures"},
       preset_table5},
      {{"table6", "main attack grid: BA/ASR per attack"}, preset_table6},
      {{"table8", "patch pattern ablation"}, preset_table8},
      {{"table9", "stylize attack across target classes"}, preset_table9},
      {{"fig8", "stylize attack over poisoning rates"}, preset_fig8},
      {{"fig3", "trigger synthesis masks and anomaly indices"}, preset_fig3},
      {{"fig6", "saliency overlays on triggered inputs"}, preset_fig6},
      {{"fig7", "fine-tuning BA/ASR curves"}, preset_fig7},
      {{"table11", "repair defenses: fine-tune, prune, shrink-pad"},
       preset_table11},
      {{"strip_scaleup", "detection defenses: STRIP and SCALE-UP"},
       preset_strip_scaleup},
      {{"theory", "kernel-regression gap verification and d=1 oracle"},
       preset_theory},
  };
  return registry;
}

}  // namespace

const std::vector<Preset>& list_presets() {
  static const std::vector<Preset> presets = [] {
    std::vector<Preset> out;
    for (const auto& p : preset_registry()) out.push_back(p.info);
    return out;
  }();
  return presets;
}

std::vector<RunReport> run_preset(const std::string& name, uint64_t seed,
                                  const std::string& out_dir) {
  std::string key = name;
  // "table1_desk" and friends are aliases for the desk-scale presets.
  const std::string suffix = "_desk";
  if (key.size() > suffix.size() &&
      key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0)
    key.resize(key.size() - suffix.size());
  for (const auto& p : preset_registry())
    if (p.info.name == key) {
      fs::create_directories(out_dir);
      return p.fn(seed, out_dir);
    }
  throw ConfigError("unknown preset: " + name);
}

}  // namespace poisonbench
