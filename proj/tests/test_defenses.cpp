#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "poisonbench/common.hpp"
#include "poisonbench/dataset.hpp"
#include "poisonbench/defenses.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/training.hpp"
#include "poisonbench/triggers.hpp"
#include "test_util.hpp"

using namespace poisonbench;
using poisonbench::testutil::TempDir;

namespace {

Dataset tiny_dataset(uint64_t seed = 42) {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.per_class_train = 25;
  spec.per_class_test = 10;
  spec.image_size = 16;
  spec.seed = seed;
  return generate_synthetic(spec);
}

ModelArch tiny_arch() {
  ModelArch arch;
  arch.name = "conv_small";
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  return arch;
}

TriggerSpec small_patch() {
  TriggerSpec t;
  t.kind = TriggerKind::patch;
  t.patch.pattern = "white";
  t.patch.size = 3;
  t.intensity = 1.0;
  return t;
}

}  // namespace

TEST_CASE("auroc matches hand-computed rank statistics") {
  CHECK(auroc({3.0, 1.0}, {2.0, 0.0}) == doctest::Approx(0.75));
  CHECK(auroc({5.0, 6.0}, {1.0, 2.0}) == doctest::Approx(1.0));
  CHECK(auroc({1.0, 2.0}, {5.0, 6.0}) == doctest::Approx(0.0));
  CHECK(auroc({1.0, 1.0, 1.0}, {1.0, 1.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(auroc({}, {1.0}), ParameterError);
  CHECK_THROWS_AS(auroc({1.0}, {}), ParameterError);
}

TEST_CASE("anomaly indices use the scaled median absolute deviation") {
  auto idx = anomaly_indices({1.0, 2.0, 3.0, 4.0, 100.0});
  REQUIRE(idx.size() == 5);
  CHECK(idx[0] == doctest::Approx(1.3489815189531904).epsilon(1e-12));
  CHECK(idx[1] == doctest::Approx(0.6744907594765952).epsilon(1e-12));
  CHECK(idx[2] == doctest::Approx(0.0));
  CHECK(idx[3] == doctest::Approx(0.6744907594765952).epsilon(1e-12));
  CHECK(idx[4] == doctest::Approx(65.42560366922973).epsilon(1e-12));

  // zero spread: no index can be anomalous
  auto flat = anomaly_indices({5.0, 5.0, 5.0});
  for (double v : flat) CHECK(v == 0.0);
  CHECK(anomaly_indices({}).empty());
}

TEST_CASE("mask iou against a known box") {
  FloatImage map(1, 8, 8, 0.f);
  map.at(0, 0, 0) = 1.f;
  map.at(0, 0, 1) = 1.f;
  map.at(0, 1, 0) = 1.f;
  map.at(0, 1, 1) = 1.f;
  map.at(0, 5, 5) = 1.f;

  CHECK(mask_patch_iou(map, 0, 0, 2, 2) == doctest::Approx(4.0 / 5.0));
  CHECK(mask_patch_iou(map, 5, 5, 1, 1) == doctest::Approx(1.0 / 5.0));
  CHECK(mask_patch_iou(map, 6, 0, 2, 2) == doctest::Approx(0.0));

  FloatImage zeros(1, 8, 8, 0.f);
  CHECK(mask_patch_iou(zeros, 0, 0, 2, 2) == 0.0);

  FloatImage rgb(3, 8, 8, 1.f);
  CHECK_THROWS_AS(mask_patch_iou(rgb, 0, 0, 2, 2), DimensionError);
}

TEST_CASE("mask concentration separates corner mass from uniform mass") {
  FloatImage corner(1, 8, 8, 0.f);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) corner.at(0, y, x) = 1.f;
  CHECK(mask_concentration(corner) == doctest::Approx(1.0));

  FloatImage uniform(1, 8, 8, 1.f);
  CHECK(mask_concentration(uniform) == doctest::Approx(0.25));

  FloatImage zeros(1, 8, 8, 0.f);
  CHECK(mask_concentration(zeros) == 0.0);
  FloatImage rgb(3, 8, 8, 1.f);
  CHECK_THROWS_AS(mask_concentration(rgb), DimensionError);
}

TEST_CASE("score csv is written verbatim") {
  TempDir tmp;
  const std::string path = tmp.str("scores.csv");
  write_scores_csv(path, {0.5, 1.5}, {0, 1});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "score,label\n0.5,0\n1.5,1\n");

  CHECK_THROWS_AS(write_scores_csv(path, {0.5}, {0, 1}), DimensionError);
  CHECK_THROWS_AS(write_scores_csv(tmp.str("no/such/dir/x.csv"), {1.0}, {1}),
                  IntegrityError);
}

TEST_CASE("defense report serialization round-trips and validates") {
  DefenseReport r;
  r.name = "strip";
  r.parameters = {{"n", 16}};
  r.ba_before = 90.0;
  r.ba_after = 88.5;
  r.asr_before = 97.0;
  r.asr_after = 12.0;
  r.auroc = 0.9;
  r.extra = {{"note", 3}};

  DefenseReport b = DefenseReport::from_json(r.to_json());
  CHECK(b.name == "strip");
  CHECK(b.parameters.at("n") == 16);
  CHECK(*b.ba_before == doctest::Approx(90.0));
  CHECK(*b.ba_after == doctest::Approx(88.5));
  CHECK(*b.asr_before == doctest::Approx(97.0));
  CHECK(*b.asr_after == doctest::Approx(12.0));
  CHECK(*b.auroc == doctest::Approx(0.9));
  CHECK(b.extra.at("note") == 3);

  DefenseReport bad = r;
  bad.ba_after = 150.0;
  CHECK_THROWS_AS(bad.to_json(), IntegrityError);
  bad = r;
  bad.auroc = 1.5;
  CHECK_THROWS_AS(bad.to_json(), IntegrityError);
  CHECK_THROWS_AS(DefenseReport::from_json(nlohmann::json::object()),
                  ConfigError);
}

TEST_CASE("shrink_pad keeps shape and pastes the resized content") {
  Image img(3, 16, 16, 255);
  CHECK(shrink_pad(img, 0, 1) == img);

  Image out = shrink_pad(img, 4, 9);
  CHECK(out.c == 3);
  CHECK(out.h == 16);
  CHECK(out.w == 16);
  // a constant image shrinks to a constant block on a zero canvas
  size_t full = 0, zero = 0;
  for (uint8_t v : out.pixels) {
    if (v == 255) ++full;
    else if (v == 0) ++zero;
  }
  CHECK(full == static_cast<size_t>(3 * 12 * 12));
  CHECK(zero == out.pixels.size() - full);

  CHECK(shrink_pad(img, 4, 9) == out);  // seeded placement
  CHECK_THROWS_AS(shrink_pad(img, -1, 0), ParameterError);
  CHECK_THROWS_AS(shrink_pad(img, 16, 0), ParameterError);
}

TEST_CASE("shrink_pad evaluation fills before/after rates") {
  Dataset ds = tiny_dataset();
  Net net = build_model(tiny_arch(), 5);
  DefenseReport r = evaluate_shrink_pad(net, ds, small_patch(), 0, 2, 11);
  CHECK(r.name == "shrink_pad");
  for (const auto& v : {r.ba_before, r.ba_after, r.asr_before, r.asr_after}) {
    REQUIRE(v.has_value());
    CHECK(*v >= 0.0);
    CHECK(*v <= 100.0);
  }
}

TEST_CASE("strip entropy is a seeded bounded blend statistic") {
  Dataset ds = tiny_dataset();
  Net net = build_model(tiny_arch(), 6);
  const Image& probe = ds.test[0].pixels;
  const double h = strip_entropy(net, probe, ds.train, 8, 0.5, 3);
  CHECK(h >= 0.0);
  CHECK(h <= std::log2(4.0) + 1e-9);
  CHECK(strip_entropy(net, probe, ds.train, 8, 0.5, 3) == h);

  CHECK_THROWS_AS(strip_entropy(net, probe, ds.train, 0, 0.5, 3),
                  ParameterError);
  std::vector<LabeledImage> empty;
  CHECK_THROWS_AS(strip_entropy(net, probe, empty, 8, 0.5, 3), CapacityError);
  std::vector<LabeledImage> wrong{{Image(3, 8, 8, 0), 0}};
  CHECK_THROWS_AS(strip_entropy(net, probe, wrong, 8, 0.5, 3), DimensionError);
}

TEST_CASE("strip report scores benign against triggered") {
  Dataset ds = tiny_dataset();
  Net net = build_model(tiny_arch(), 7);
  TempDir tmp;
  const std::string csv = tmp.str("strip.csv");
  DefenseReport r = strip_report(net, ds, small_patch(), 0, 4, 0.5, 3, csv);
  CHECK(r.name == "strip");
  REQUIRE(r.auroc.has_value());
  CHECK(*r.auroc >= 0.0);
  CHECK(*r.auroc <= 1.0);
  CHECK(r.extra.contains("mean_entropy_benign"));
  CHECK(r.extra.contains("mean_entropy_triggered"));
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "score,label");
}

TEST_CASE("scale-up consistency is exact for the identity scale") {
  Dataset ds = tiny_dataset();
  Net net = build_model(tiny_arch(), 8);
  const Image& probe = ds.test[0].pixels;
  CHECK(scale_up_score(net, probe, {1.0}) == 1.0);

  const double spc = scale_up_score(net, probe, {3.0, 5.0, 8.0});
  CHECK(spc >= 0.0);
  CHECK(spc <= 1.0);
  CHECK_THROWS_AS(scale_up_score(net, probe, {}), ParameterError);
  CHECK_THROWS_AS(scale_up_score(net, probe, {0.5}), ParameterError);
}

TEST_CASE("scale-up report aggregates an auroc") {
  Dataset ds = tiny_dataset();
  Net net = build_model(tiny_arch(), 9);
  DefenseReport r = scale_up_report(net, ds, small_patch(), 0, {3.0, 5.0}, "");
  CHECK(r.name == "scale_up");
  REQUIRE(r.auroc.has_value());
  CHECK(*r.auroc >= 0.0);
  CHECK(*r.auroc <= 1.0);
  CHECK(r.extra.contains("mean_spc_benign"));
  CHECK(r.extra.contains("mean_spc_triggered"));
}

TEST_CASE("fine-tuning touches only fully-connected parameters") {
  Dataset ds = tiny_dataset();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  tc.lr = 0.05;
  tc.lr_decay_epochs = {};
  tc.augmentation = "none";
  tc.seed = 7;
  Net model = train(tiny_arch(), ds, tc).net;
  const uint64_t before = model_hash(model);

  FineTuneResult ft = fine_tune(model, ds, 0.5, 2, 0.01, small_patch(), 0, 3);
  CHECK(model_hash(model) == before);  // input untouched
  CHECK(ft.ba_curve.size() == 2);
  CHECK(ft.asr_curve.size() == 2);
  for (double v : ft.ba_curve) {
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
  }

  auto orig = model.named_params();
  auto tuned = ft.net.named_params();
  REQUIRE(orig.size() == tuned.size());
  bool fc_changed = false;
  for (size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(orig[i].name == tuned[i].name);
    if (orig[i].name.find("fc") != std::string::npos) {
      if (*orig[i].value != *tuned[i].value) fc_changed = true;
    } else {
      CHECK(*orig[i].value == *tuned[i].value);
    }
  }
  CHECK(fc_changed);

  CHECK_THROWS_AS(fine_tune(model, ds, 0.0, 1, 0.01, small_patch(), 0, 3),
                  ParameterError);
  CHECK_THROWS_AS(fine_tune(model, ds, 1.5, 1, 0.01, small_patch(), 0, 3),
                  ParameterError);

  Net conv_only;
  Rng init(1);
  conv_only.layers.push_back(
      std::make_unique<Conv2d>("conv0", 3, 4, 3, 1, init));
  CHECK_THROWS_AS(fine_tune(conv_only, ds, 0.5, 1, 0.01, small_patch(), 0, 3),
                  UnsupportedError);
}

TEST_CASE("pruning zeroes the floor(beta * C) least active channels") {
  Dataset ds = tiny_dataset();
  Net model = build_model(tiny_arch(), 10);
  std::vector<LabeledImage> pool(ds.train.begin(), ds.train.begin() + 32);

  const int channels = model.channel_mask()->channels();
  Net pruned = prune_channels(model, pool, 0.25);
  int zeros = 0;
  for (float v : pruned.channel_mask()->mask())
    if (v == 0.f) ++zeros;
  CHECK(zeros == static_cast<int>(std::floor(0.25 * channels)));

  // the original mask is untouched
  for (float v : model.channel_mask()->mask()) CHECK(v == 1.f);

  Net none = prune_channels(model, pool, 0.0);
  for (float v : none.channel_mask()->mask()) CHECK(v == 1.f);

  CHECK_THROWS_AS(prune_channels(model, pool, 1.0), ParameterError);
  CHECK_THROWS_AS(prune_channels(model, pool, -0.1), ParameterError);
  std::vector<LabeledImage> empty;
  CHECK_THROWS_AS(prune_channels(model, empty, 0.25), CapacityError);

  ModelArch mlp;
  mlp.name = "mlp";
  mlp.num_classes = 4;
  mlp.width = 2;
  mlp.image_size = 16;
  Net dense = build_model(mlp, 1);
  CHECK_THROWS_AS(prune_channels(dense, pool, 0.25), UnsupportedError);
}

TEST_CASE("neural cleanse synthesizes per-class trigger candidates") {
  Dataset ds = tiny_dataset();
  Net model = build_model(tiny_arch(), 11);
  std::vector<LabeledImage> pool(ds.train.begin(), ds.train.begin() + 32);

  NeuralCleanseConfig cfg;
  cfg.steps = 12;
  cfg.batch = 8;
  cfg.eval_pool = 16;
  cfg.seed = 5;
  CleanseReport report = neural_cleanse(model, pool, 4, cfg);
  REQUIRE(report.per_class.size() == 4);
  REQUIRE(report.anomaly_index.size() == 4);
  for (int cls = 0; cls < 4; ++cls) {
    const auto& item = report.per_class[cls];
    CHECK(item.cls == cls);
    CHECK(item.mask.c == 1);
    CHECK(item.mask.h == 16);
    CHECK(item.mask.w == 16);
    CHECK(item.pattern.c == 3);
    for (float v : item.mask.v) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
    CHECK(item.mask_l1 >= 0.0);
    CHECK(item.final_asr >= 0.0);
    CHECK(item.final_asr <= 100.0);
    CHECK(report.anomaly_index[cls] >= 0.0);
  }
  for (int cls : report.flagged) {
    CHECK(cls >= 0);
    CHECK(cls < 4);
    CHECK(report.anomaly_index[cls] > 2.0);
  }
  nlohmann::json j = report.to_json();
  CHECK(j.at("per_class").size() == 4);
  CHECK(j.contains("flagged"));

  std::vector<LabeledImage> empty;
  CHECK_THROWS_AS(neural_cleanse(model, empty, 4, cfg), CapacityError);
}
