#include "poisonbench/training.hpp"

#include <algorithm>
#include <cmath>

#include "poisonbench/adversarial.hpp"
#include "poisonbench/common.hpp"

namespace poisonbench {

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["lr_decay_epochs"] = lr_decay_epochs;
  j["lr_decay_factor"] = lr_decay_factor;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["augmentation"] = augmentation;
  j["seed"] = seed;
  if (adversarial_training)
    j["adversarial_training"] = adversarial_training->to_json();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.lr_decay_epochs =
        j.value("lr_decay_epochs", c.lr_decay_epochs);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.augmentation = j.value("augmentation", c.augmentation);
    c.seed = j.value("seed", 0ull);
    if (j.contains("adversarial_training"))
      c.adversarial_training =
          PerturbationSpec::from_json(j.at("adversarial_training"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (int ch = 0; ch < image.c; ++ch)
    for (int y = 0; y < image.h; ++y)
      for (int x = 0; x < image.w; ++x)
        out.at(ch, y, x) = image.at(ch, y, image.w - 1 - x);
  return out;
}

TrainedModel train(const ModelArch& arch, const Dataset& dataset,
                   const TrainConfig& config) {
  if (dataset.train.empty()) throw TrainingError("empty training split");
  if (dataset.num_classes != arch.num_classes)
    throw ConfigError("arch num_classes disagrees with dataset");
  if (config.augmentation != "none" && config.augmentation != "horizontal_flip")
    throw ConfigError("unknown augmentation: " + config.augmentation);

  TrainedModel tm{build_model(arch, hash64_combine(config.seed, 0x1417u)), {},
                  config};
  Net& net = tm.net;
  Sgd sgd(config.momentum, config.weight_decay);
  Rng rng(hash64_combine(config.seed, 0x7a1du));

  std::vector<int> order(dataset.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double lr = config.lr;
  const bool flip = config.augmentation == "horizontal_flip";

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int decay_at : config.lr_decay_epochs)
      if (epoch == decay_at) lr *= config.lr_decay_factor;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t batches = 0;

    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(
          order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<Image> flipped;
      std::vector<const Image*> imgs;
      std::vector<int> labels;
      imgs.reserve(stop - start);
      labels.reserve(stop - start);
      flipped.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const auto& item = dataset.train[static_cast<size_t>(order[i])];
        if (flip && rng.bernoulli(0.5)) {
          flipped.push_back(flip_horizontal(item.pixels));
          imgs.push_back(&flipped.back());
        } else {
          imgs.push_back(&item.pixels);
        }
        labels.push_back(item.label);
      }
      Tensor x = batch_from_images(imgs);
      if (config.adversarial_training)
        pgd_perturb(net, x, labels, *config.adversarial_training, rng);

      Tensor logits = net.forward(x, true);
      Tensor grad_logits;
      const double loss = softmax_cross_entropy(logits, labels, &grad_logits);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged at epoch " +
                            std::to_string(epoch));
      net.zero_grads();
      net.backward(grad_logits, true);
      sgd.step(net.named_params(), lr);
      epoch_loss += loss;
      ++batches;
    }
    tm.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return tm;
}

std::vector<int> predict(Net& net, const std::vector<const Image*>& images,
                         int batch_size) {
  std::vector<int> out;
  out.reserve(images.size());
  for (size_t start = 0; start < images.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t stop =
        std::min(images.size(), start + static_cast<size_t>(batch_size));
    std::vector<const Image*> chunk(images.begin() + start,
                                    images.begin() + stop);
    Tensor logits = net.forward(batch_from_images(chunk), false);
    for (int i = 0; i < logits.n; ++i) out.push_back(argmax_row(logits, i));
  }
  return out;
}

double benign_accuracy(Net& net, const std::vector<LabeledImage>& test_set) {
  if (test_set.empty()) throw EvaluationError("empty test set");
  std::vector<const Image*> imgs;
  imgs.reserve(test_set.size());
  for (const auto& item : test_set) imgs.push_back(&item.pixels);
  const std::vector<int> pred = predict(net, imgs);
  size_t hits = 0;
  for (size_t i = 0; i < test_set.size(); ++i)
    if (pred[i] == test_set[i].label) ++hits;
  return 100.0 * static_cast<double>(hits) / test_set.size();
}

std::vector<double> per_class_accuracy(Net& net,
                                       const std::vector<LabeledImage>& test_set,
                                       int num_classes) {
  std::vector<const Image*> imgs;
  imgs.reserve(test_set.size());
  for (const auto& item : test_set) imgs.push_back(&item.pixels);
  const std::vector<int> pred = predict(net, imgs);
  std::vector<size_t> hits(num_classes, 0), totals(num_classes, 0);
  for (size_t i = 0; i < test_set.size(); ++i) {
    const int y = test_set[i].label;
    if (y < 0 || y >= num_classes) throw EvaluationError("label out of range");
    ++totals[y];
    if (pred[i] == y) ++hits[y];
  }
  std::vector<double> out(num_classes, 0.0);
  for (int k = 0; k < num_classes; ++k)
    if (totals[k]) out[k] = 100.0 * static_cast<double>(hits[k]) / totals[k];
  return out;
}

double attack_success_rate(Net& net, const std::vector<LabeledImage>& test_set,
                           const TriggerSpec& trigger, int target_class) {
  const TriggerSpec eval_trigger = evaluation_trigger(trigger);
  std::vector<Image> triggered;
  for (const auto& item : test_set) {
    if (item.label == target_class) continue;
    triggered.push_back(apply_trigger(item.pixels, eval_trigger));
  }
  if (triggered.empty())
    throw EvaluationError("no test samples outside the target class");
  std::vector<const Image*> imgs;
  imgs.reserve(triggered.size());
  for (const auto& img : triggered) imgs.push_back(&img);
  const std::vector<int> pred = predict(net, imgs);
  size_t hits = 0;
  for (int p : pred)
    if (p == target_class) ++hits;
  return 100.0 * static_cast<double>(hits) / triggered.size();
}

nlohmann::json AttackReport::to_json() const {
  return {{"benign_accuracy", benign_accuracy},
          {"attack_success_rate", attack_success_rate},
          {"per_class_accuracy", per_class},
          {"provenance", provenance}};
}

AttackReport evaluate_attack(Net& net, const Dataset& dataset,
                             const TriggerSpec& trigger, int target_class) {
  AttackReport report;
  report.benign_accuracy = benign_accuracy(net, dataset.test);
  report.per_class = per_class_accuracy(net, dataset.test, dataset.num_classes);
  report.attack_success_rate =
      attack_success_rate(net, dataset.test, trigger, target_class);
  return report;
}

FloatImage gradcam(Net& net, const Image& image, int class_index) {
  if (net.cam_layer < 0)
    throw UnsupportedError("architecture has no convolutional feature map");
  net.capture_cam = true;
  Tensor logits;
  try {
    logits = net.forward(tensor_from_image(image), false);
    if (class_index < 0 || class_index >= logits.c)
      throw EvaluationError("class index out of range");
    Tensor grad(1, logits.c, 1, 1);
    grad.v[static_cast<size_t>(class_index)] = 1.f;
    net.backward(grad, false);
  } catch (...) {
    net.capture_cam = false;
    throw;
  }
  net.capture_cam = false;

  const Tensor& act = net.cam_activations;
  const Tensor& g = net.cam_gradient;
  const int fh = act.h, fw = act.w;
  // Channel weights: global-average-pooled gradients.
  std::vector<float> cam(static_cast<size_t>(fh) * fw, 0.f);
  for (int ch = 0; ch < act.c; ++ch) {
    float alpha = 0.f;
    for (int j = 0; j < fh * fw; ++j)
      alpha += g.v[(static_cast<size_t>(ch) * fh * fw) + j];
    alpha /= static_cast<float>(fh * fw);
    for (int j = 0; j < fh * fw; ++j)
      cam[j] += alpha * act.v[(static_cast<size_t>(ch) * fh * fw) + j];
  }
  float peak = 0.f;
  for (auto& v : cam) {
    v = std::max(v, 0.f);
    peak = std::max(peak, v);
  }
  if (peak > 0.f)
    for (auto& v : cam) v /= peak;

  // Bilinear upsample to input resolution.
  FloatImage out(1, image.h, image.w);
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) {
      const double sy =
          (y + 0.5) * static_cast<double>(fh) / image.h - 0.5;
      const double sx =
          (x + 0.5) * static_cast<double>(fw) / image.w - 0.5;
      const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, fh - 1);
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, fw - 1);
      const int y1 = std::min(y0 + 1, fh - 1);
      const int x1 = std::min(x0 + 1, fw - 1);
      const double fy = std::clamp(sy - y0, 0.0, 1.0);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      const double a = cam[static_cast<size_t>(y0) * fw + x0] * (1 - fx) +
                       cam[static_cast<size_t>(y0) * fw + x1] * fx;
      const double b = cam[static_cast<size_t>(y1) * fw + x0] * (1 - fx) +
                       cam[static_cast<size_t>(y1) * fw + x1] * fx;
      out.at(0, y, x) = static_cast<float>(a * (1 - fy) + b * fy);
    }
  return out;
}

}  // namespace poisonbench
