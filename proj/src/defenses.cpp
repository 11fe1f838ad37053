#include "poisonbench/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "poisonbench/common.hpp"
#include "poisonbench/models.hpp"

namespace poisonbench {

namespace {

void check_rate(const char* what, double v) {
  if (!(v >= 0.0 && v <= 100.0))
    throw IntegrityError(std::string(what) + " out of [0,100]");
}

}  // namespace

nlohmann::json DefenseReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["parameters"] = parameters;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      check_rate(key, *v);
      j[key] = *v;
    }
  };
  put("ba_before", ba_before);
  put("ba_after", ba_after);
  put("asr_before", asr_before);
  put("asr_after", asr_after);
  if (auroc) {
    if (!(*auroc >= 0.0 && *auroc <= 1.0))
      throw IntegrityError("auroc out of [0,1]");
    j["auroc"] = *auroc;
  }
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

DefenseReport DefenseReport::from_json(const nlohmann::json& j) {
  DefenseReport r;
  try {
    r.name = j.at("name").get<std::string>();
    r.parameters = j.value("parameters", nlohmann::json::object());
    auto opt = [&](const char* key) -> std::optional<double> {
      if (j.contains(key)) return j.at(key).get<double>();
      return std::nullopt;
    };
    r.ba_before = opt("ba_before");
    r.ba_after = opt("ba_after");
    r.asr_before = opt("asr_before");
    r.asr_after = opt("asr_after");
    r.auroc = opt("auroc");
    if (j.contains("extra")) r.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad defense report: ") + e.what());
  }
  return r;
}

// --- fine-tuning -----------------------------------------------------------

FineTuneResult fine_tune(Net& model, const Dataset& benign_data,
                         double benign_fraction, int epochs, double lr,
                         const TriggerSpec& trigger, int target_class,
                         uint64_t seed) {
  if (benign_fraction <= 0 || benign_fraction > 1)
    throw ParameterError("benign_fraction must be in (0,1]");
  // capability check before the clone: cloning needs a builder arch, and a
  // missing fc stage is the clearer complaint
  bool has_fc = false;
  for (auto& p : model.named_params())
    has_fc = has_fc || p.name.find("fc") != std::string::npos;
  if (!has_fc)
    throw UnsupportedError("model has no fully-connected parameters");

  FineTuneResult result{clone_model(model), {}, {}};
  Net& net = result.net;

  std::vector<ParamRef> fc_params;
  for (auto& p : net.named_params())
    if (p.name.find("fc") != std::string::npos) fc_params.push_back(p);

  Rng rng(hash64_combine(seed, 0xf17eu));
  std::vector<int> pool(benign_data.train.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  rng.shuffle(pool);
  pool.resize(static_cast<size_t>(
      std::floor(benign_fraction * static_cast<double>(pool.size()))));
  if (pool.empty()) throw ParameterError("benign fraction selects no samples");

  Sgd sgd(0.9, 5e-4);
  const int batch_size = 128;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(pool);
    for (size_t start = 0; start < pool.size();
         start += static_cast<size_t>(batch_size)) {
      const size_t stop =
          std::min(pool.size(), start + static_cast<size_t>(batch_size));
      std::vector<const Image*> imgs;
      std::vector<int> labels;
      for (size_t i = start; i < stop; ++i) {
        const auto& item = benign_data.train[static_cast<size_t>(pool[i])];
        imgs.push_back(&item.pixels);
        labels.push_back(item.label);
      }
      Tensor logits = net.forward(batch_from_images(imgs), true);
      Tensor grad_logits;
      const double loss = softmax_cross_entropy(logits, labels, &grad_logits);
      if (!std::isfinite(loss))
        throw TrainingError("fine-tuning diverged at epoch " +
                            std::to_string(epoch));
      net.zero_grads();
      net.backward(grad_logits, true);
      sgd.step(fc_params, lr);
    }
    result.ba_curve.push_back(benign_accuracy(net, benign_data.test));
    result.asr_curve.push_back(
        attack_success_rate(net, benign_data.test, trigger, target_class));
  }
  return result;
}

// --- channel pruning -------------------------------------------------------

Net prune_channels(Net& model, const std::vector<LabeledImage>& benign_pool,
                   double beta) {
  if (beta < 0 || beta >= 1) throw ParameterError("beta must be in [0,1)");
  if (model.channel_mask() == nullptr || model.cam_layer < 0)
    throw UnsupportedError("architecture exposes no prunable conv channels");
  if (benign_pool.empty()) throw CapacityError("empty benign pool");

  // Mean activation per channel at the last conv stage.
  std::vector<double> mean_act;
  size_t count = 0;
  model.capture_cam = true;
  const int batch = 128;
  for (size_t start = 0; start < benign_pool.size();
       start += static_cast<size_t>(batch)) {
    const size_t stop =
        std::min(benign_pool.size(), start + static_cast<size_t>(batch));
    std::vector<const Image*> imgs;
    for (size_t i = start; i < stop; ++i) imgs.push_back(&benign_pool[i].pixels);
    model.forward(batch_from_images(imgs), false);
    const Tensor& act = model.cam_activations;
    if (mean_act.empty()) mean_act.assign(static_cast<size_t>(act.c), 0.0);
    for (int i = 0; i < act.n; ++i)
      for (int ch = 0; ch < act.c; ++ch) {
        const float* plane = act.v.data() +
                             (static_cast<size_t>(i) * act.c + ch) * act.h * act.w;
        double acc = 0;
        for (int j = 0; j < act.h * act.w; ++j) acc += plane[j];
        mean_act[static_cast<size_t>(ch)] += acc / (act.h * act.w);
      }
    count += stop - start;
  }
  model.capture_cam = false;
  for (auto& v : mean_act) v /= static_cast<double>(count);

  Net pruned = clone_model(model);
  auto& mask = pruned.channel_mask()->mask();
  if (mask.size() != mean_act.size())
    throw DimensionError("mask size disagrees with activations");

  std::vector<int> order(mean_act.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mean_act[a] != mean_act[b]) return mean_act[a] < mean_act[b];
    return a < b;
  });
  const size_t to_zero = static_cast<size_t>(
      std::floor(beta * static_cast<double>(mask.size())));
  for (size_t i = 0; i < to_zero; ++i) mask[static_cast<size_t>(order[i])] = 0.f;
  return pruned;
}

// --- shrink-pad ------------------------------------------------------------

Image shrink_pad(const Image& image, int shrink_pixels, uint64_t seed) {
  if (shrink_pixels < 0 || shrink_pixels >= std::min(image.h, image.w))
    throw ParameterError("shrink size out of range");
  if (shrink_pixels == 0) return image;
  const int sh = image.h - shrink_pixels;
  const int sw = image.w - shrink_pixels;

  FloatImage small(image.c, sh, sw);
  for (int ch = 0; ch < image.c; ++ch)
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x) {
        const double sy =
            std::clamp((y + 0.5) * image.h / sh - 0.5, 0.0, image.h - 1.0);
        const double sx =
            std::clamp((x + 0.5) * image.w / sw - 0.5, 0.0, image.w - 1.0);
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y1 = std::min(y0 + 1, image.h - 1);
        const int x1 = std::min(x0 + 1, image.w - 1);
        const double fy = sy - y0, fx = sx - x0;
        const double a =
            image.at(ch, y0, x0) * (1 - fx) + image.at(ch, y0, x1) * fx;
        const double b =
            image.at(ch, y1, x0) * (1 - fx) + image.at(ch, y1, x1) * fx;
        small.at(ch, y, x) = static_cast<float>(a * (1 - fy) + b * fy);
      }
  const Image shrunk = quantize(small);

  Rng rng(hash64_combine(seed, 0x5a9du));
  const int oy = static_cast<int>(rng.uniform_int(shrink_pixels + 1));
  const int ox = static_cast<int>(rng.uniform_int(shrink_pixels + 1));
  Image out(image.c, image.h, image.w, 0);
  for (int ch = 0; ch < image.c; ++ch)
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x)
        out.at(ch, y + oy, x + ox) = shrunk.at(ch, y, x);
  return out;
}

DefenseReport evaluate_shrink_pad(Net& model, const Dataset& dataset,
                                  const TriggerSpec& trigger, int target_class,
                                  int shrink_pixels, uint64_t seed) {
  const TriggerSpec eval_trigger = evaluation_trigger(trigger);
  DefenseReport report;
  report.name = "shrink_pad";
  report.parameters = {{"shrink_pixels", shrink_pixels}, {"seed", seed}};
  report.ba_before = benign_accuracy(model, dataset.test);
  report.asr_before =
      attack_success_rate(model, dataset.test, trigger, target_class);

  std::vector<Image> ba_imgs, asr_imgs;
  std::vector<int> labels;
  uint64_t ctr = 0;
  for (const auto& item : dataset.test) {
    ba_imgs.push_back(
        shrink_pad(item.pixels, shrink_pixels, hash64_combine(seed, ctr++)));
    labels.push_back(item.label);
    if (item.label != target_class)
      asr_imgs.push_back(shrink_pad(apply_trigger(item.pixels, eval_trigger),
                                    shrink_pixels, hash64_combine(seed, ctr++)));
  }
  std::vector<const Image*> ptrs;
  for (const auto& img : ba_imgs) ptrs.push_back(&img);
  std::vector<int> pred = predict(model, ptrs);
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  report.ba_after = 100.0 * static_cast<double>(hits) / pred.size();

  ptrs.clear();
  for (const auto& img : asr_imgs) ptrs.push_back(&img);
  pred = predict(model, ptrs);
  hits = 0;
  for (int p : pred)
    if (p == target_class) ++hits;
  report.asr_after = 100.0 * static_cast<double>(hits) / pred.size();
  return report;
}

// --- strip -----------------------------------------------------------------

namespace {

double prediction_entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

}  // namespace

double strip_entropy(Net& model, const Image& image,
                     const std::vector<LabeledImage>& benign_pool, int n,
                     double alpha, uint64_t seed) {
  if (n < 1) throw ParameterError("n must be >= 1");
  if (benign_pool.empty()) throw CapacityError("empty benign pool");
  Rng rng(hash64_combine(seed, 0x57817u));

  Tensor base = tensor_from_image(image);
  Tensor batch(n, image.c, image.h, image.w);
  for (int i = 0; i < n; ++i) {
    const Image& overlay =
        benign_pool[rng.uniform_int(benign_pool.size())].pixels;
    if (!overlay.same_shape(image))
      throw DimensionError("pool image shape mismatch");
    float* dst = batch.sample(i);
    for (size_t j = 0; j < base.v.size(); ++j)
      dst[j] = static_cast<float>(alpha) * base.v[j] +
               static_cast<float>(1.0 - alpha) *
                   (static_cast<float>(overlay.pixels[j]) / 255.0f);
  }
  Tensor logits = model.forward(batch, false);
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += prediction_entropy_bits(softmax_row(logits, i));
  return acc / n;
}

DefenseReport strip_report(Net& model, const Dataset& dataset,
                           const TriggerSpec& trigger, int target_class, int n,
                           double alpha, uint64_t seed,
                           const std::string& csv_path) {
  const TriggerSpec eval_trigger = evaluation_trigger(trigger);
  std::vector<double> benign_scores, triggered_scores;
  uint64_t ctr = 0;
  for (const auto& item : dataset.test) {
    benign_scores.push_back(strip_entropy(model, item.pixels, dataset.train, n,
                                          alpha, hash64_combine(seed, ctr++)));
    if (item.label != target_class)
      triggered_scores.push_back(
          strip_entropy(model, apply_trigger(item.pixels, eval_trigger),
                        dataset.train, n, alpha, hash64_combine(seed, ctr++)));
  }
  double benign_mean = 0, triggered_mean = 0;
  for (double v : benign_scores) benign_mean += v;
  benign_mean /= static_cast<double>(benign_scores.size());
  for (double v : triggered_scores) triggered_mean += v;
  triggered_mean /= static_cast<double>(triggered_scores.size());

  DefenseReport report;
  report.name = "strip";
  report.parameters = {{"n", n}, {"alpha", alpha}, {"seed", seed}};
  // Low entropy flags the backdoor, so score by negated entropy.
  std::vector<double> pos, neg;
  for (double v : triggered_scores) pos.push_back(-v);
  for (double v : benign_scores) neg.push_back(-v);
  report.auroc = auroc(pos, neg);
  report.extra = {{"mean_entropy_benign", benign_mean},
                  {"mean_entropy_triggered", triggered_mean}};

  if (!csv_path.empty()) {
    std::vector<double> scores = benign_scores;
    std::vector<int> labels(benign_scores.size(), 0);
    scores.insert(scores.end(), triggered_scores.begin(),
                  triggered_scores.end());
    labels.insert(labels.end(), triggered_scores.size(), 1);
    write_scores_csv(csv_path, scores, labels);
  }
  return report;
}

// --- scale-up --------------------------------------------------------------

double scale_up_score(Net& model, const Image& image,
                      const std::vector<double>& scale_set) {
  if (scale_set.empty()) throw ParameterError("empty scale set");
  for (double s : scale_set)
    if (s < 1.0) throw ParameterError("scales must be >= 1");

  Tensor batch(static_cast<int>(scale_set.size()) + 1, image.c, image.h,
               image.w);
  Tensor base = tensor_from_image(image);
  std::copy(base.v.begin(), base.v.end(), batch.sample(0));
  for (size_t s = 0; s < scale_set.size(); ++s) {
    float* dst = batch.sample(static_cast<int>(s) + 1);
    for (size_t j = 0; j < base.v.size(); ++j)
      dst[j] = std::clamp(static_cast<float>(scale_set[s]) * base.v[j], 0.f, 1.f);
  }
  Tensor logits = model.forward(batch, false);
  const int base_pred = argmax_row(logits, 0);
  int matches = 0;
  for (size_t s = 0; s < scale_set.size(); ++s)
    if (argmax_row(logits, static_cast<int>(s) + 1) == base_pred) ++matches;
  return static_cast<double>(matches) / static_cast<double>(scale_set.size());
}

double auroc(const std::vector<double>& positives,
             const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty())
    throw ParameterError("auroc needs both classes");
  double wins = 0.0;
  for (double p : positives)
    for (double q : negatives) {
      if (p > q) wins += 1.0;
      else if (p == q) wins += 0.5;
    }
  return wins / (static_cast<double>(positives.size()) *
                 static_cast<double>(negatives.size()));
}

DefenseReport scale_up_report(Net& model, const Dataset& dataset,
                              const TriggerSpec& trigger, int target_class,
                              const std::vector<double>& scale_set,
                              const std::string& csv_path) {
  const TriggerSpec eval_trigger = evaluation_trigger(trigger);
  std::vector<double> pos, neg;
  for (const auto& item : dataset.test) {
    neg.push_back(scale_up_score(model, item.pixels, scale_set));
    if (item.label != target_class)
      pos.push_back(scale_up_score(
          model, apply_trigger(item.pixels, eval_trigger), scale_set));
  }
  DefenseReport report;
  report.name = "scale_up";
  report.parameters = {{"scale_set", scale_set}};
  report.auroc = auroc(pos, neg);
  double pos_mean = 0, neg_mean = 0;
  for (double v : pos) pos_mean += v;
  for (double v : neg) neg_mean += v;
  report.extra = {{"mean_spc_triggered", pos_mean / pos.size()},
                  {"mean_spc_benign", neg_mean / neg.size()}};
  if (!csv_path.empty()) {
    std::vector<double> scores = neg;
    std::vector<int> labels(neg.size(), 0);
    scores.insert(scores.end(), pos.begin(), pos.end());
    labels.insert(labels.end(), pos.size(), 1);
    write_scores_csv(csv_path, scores, labels);
  }
  return report;
}

// --- neural cleanse --------------------------------------------------------

namespace {

struct AdamVec {
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<float>& w, const std::vector<float>& g, double lr) {
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= static_cast<float>(lr * (m[i] / bc1) /
                                 (std::sqrt(v[i] / bc2) + eps));
    }
  }
};

}  // namespace

CleanseReport neural_cleanse(Net& model, const std::vector<LabeledImage>& pool,
                             int num_classes, const NeuralCleanseConfig& cfg) {
  if (pool.empty()) throw CapacityError("empty sample pool");
  const Image& first = pool.front().pixels;
  const int c = first.c, h = first.h, w = first.w;
  const size_t hw = static_cast<size_t>(h) * w;
  const size_t chw = static_cast<size_t>(c) * hw;

  CleanseReport report;
  for (int cls = 0; cls < num_classes; ++cls) {
    Rng rng(hash64_combine(cfg.seed, 0xc1ea0u + static_cast<uint64_t>(cls)));
    std::vector<float> wm(hw), wp(chw);
    for (auto& v : wm) v = static_cast<float>(rng.normal() * 0.1);
    for (auto& v : wp) v = static_cast<float>(rng.normal() * 0.1);
    std::vector<float> m(hw), p(chw);
    AdamVec opt_m, opt_p;
    double lambda = cfg.lambda_init;

    std::vector<int> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    size_t cursor = 0;
    bool converged = true;

    auto materialize = [&]() {
      for (size_t i = 0; i < hw; ++i)
        m[i] = (std::tanh(wm[i]) + 1.f) / 2.f;
      for (size_t i = 0; i < chw; ++i)
        p[i] = (std::tanh(wp[i]) + 1.f) / 2.f;
    };

    for (int step = 0; step < cfg.steps; ++step) {
      materialize();
      std::vector<int> idx;
      for (int i = 0; i < cfg.batch; ++i) {
        if (cursor >= order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        idx.push_back(order[cursor++]);
      }
      Tensor x(static_cast<int>(idx.size()), c, h, w);
      for (size_t i = 0; i < idx.size(); ++i) {
        const Image& img = pool[static_cast<size_t>(idx[i])].pixels;
        float* dst = x.sample(static_cast<int>(i));
        for (size_t j = 0; j < chw; ++j) {
          const float xv = static_cast<float>(img.pixels[j]) / 255.0f;
          const float mv = m[j % hw];
          dst[j] = (1.f - mv) * xv + mv * p[j];
        }
      }
      std::vector<int> labels(idx.size(), cls);
      Tensor logits = model.forward(x, true);
      Tensor grad_logits;
      double mask_l1 = 0;
      for (float mv : m) mask_l1 += mv;
      const double loss =
          softmax_cross_entropy(logits, labels, &grad_logits) + lambda * mask_l1;
      if (!std::isfinite(loss)) {
        converged = false;
        break;
      }
      Tensor gx = model.backward(grad_logits, false);

      std::vector<float> gm(hw, 0.f), gp(chw, 0.f);
      for (size_t i = 0; i < idx.size(); ++i) {
        const Image& img = pool[static_cast<size_t>(idx[i])].pixels;
        const float* g = gx.sample(static_cast<int>(i));
        for (size_t j = 0; j < chw; ++j) {
          const float xv = static_cast<float>(img.pixels[j]) / 255.0f;
          gm[j % hw] += g[j] * (p[j] - xv);
          gp[j] += g[j] * m[j % hw];
        }
      }
      for (size_t j = 0; j < hw; ++j) gm[j] += static_cast<float>(lambda);
      // Chain through the tanh squashing.
      for (size_t j = 0; j < hw; ++j) {
        const float th = std::tanh(wm[j]);
        gm[j] *= (1.f - th * th) / 2.f;
      }
      for (size_t j = 0; j < chw; ++j) {
        const float th = std::tanh(wp[j]);
        gp[j] *= (1.f - th * th) / 2.f;
      }
      opt_m.step(wm, gm, cfg.lr);
      opt_p.step(wp, gp, cfg.lr);

      if ((step + 1) % 10 == 0) {
        int hits = 0;
        for (int i = 0; i < logits.n; ++i)
          if (argmax_row(logits, i) == cls) ++hits;
        const double asr = static_cast<double>(hits) / logits.n;
        lambda = std::clamp(asr >= cfg.asr_threshold ? lambda * 2 : lambda / 2,
                            1e-8, 100.0);
      }
    }
    materialize();

    SynthesizedTrigger item;
    item.cls = cls;
    item.converged = converged;
    item.mask = FloatImage(1, h, w);
    std::copy(m.begin(), m.end(), item.mask.v.begin());
    item.pattern = FloatImage(c, h, w);
    std::copy(p.begin(), p.end(), item.pattern.v.begin());
    for (float mv : m) item.mask_l1 += mv;

    // Final attack success of the synthesized trigger on a held pool slice.
    const size_t n_eval = std::min(pool.size(), static_cast<size_t>(cfg.eval_pool));
    Tensor x(static_cast<int>(n_eval), c, h, w);
    for (size_t i = 0; i < n_eval; ++i) {
      const Image& img = pool[i].pixels;
      float* dst = x.sample(static_cast<int>(i));
      for (size_t j = 0; j < chw; ++j) {
        const float xv = static_cast<float>(img.pixels[j]) / 255.0f;
        const float mv = m[j % hw];
        dst[j] = (1.f - mv) * xv + mv * p[j];
      }
    }
    Tensor logits = model.forward(x, false);
    int hits = 0;
    for (int i = 0; i < logits.n; ++i)
      if (argmax_row(logits, i) == cls) ++hits;
    item.final_asr = 100.0 * hits / static_cast<double>(n_eval);
    report.per_class.push_back(std::move(item));
  }

  std::vector<double> l1;
  for (const auto& item : report.per_class) l1.push_back(item.mask_l1);
  report.anomaly_index = anomaly_indices(l1);
  for (size_t i = 0; i < report.anomaly_index.size(); ++i)
    if (report.anomaly_index[i] > 2.0)
      report.flagged.push_back(static_cast<int>(i));
  return report;
}

nlohmann::json CleanseReport::to_json() const {
  nlohmann::json j;
  auto& classes = j["per_class"] = nlohmann::json::array();
  for (size_t i = 0; i < per_class.size(); ++i) {
    classes.push_back({{"class", per_class[i].cls},
                       {"mask_l1", per_class[i].mask_l1},
                       {"final_asr", per_class[i].final_asr},
                       {"converged", per_class[i].converged},
                       {"anomaly_index", anomaly_index[i]}});
  }
  j["flagged"] = flagged;
  return j;
}

std::vector<double> anomaly_indices(const std::vector<double>& l1_norms) {
  if (l1_norms.empty()) return {};
  auto median_of = [](std::vector<double> v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
      std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
      return (hi + v[mid - 1]) / 2.0;
    }
    return hi;
  };
  const double med = median_of(l1_norms);
  std::vector<double> dev;
  for (double v : l1_norms) dev.push_back(std::fabs(v - med));
  const double mad = median_of(dev);
  std::vector<double> out(l1_norms.size(), 0.0);
  const double scale = 1.4826 * mad;
  if (scale > 0)
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = std::fabs(l1_norms[i] - med) / scale;
  return out;
}

double mask_patch_iou(const FloatImage& map, int y0, int x0, int box_h,
                      int box_w, double rel_threshold) {
  if (map.c != 1) throw DimensionError("expected single-channel map");
  float peak = 0.f;
  for (float v : map.v) peak = std::max(peak, v);
  if (peak <= 0.f) return 0.0;
  const float thr = static_cast<float>(rel_threshold) * peak;
  size_t inter = 0, uni = 0;
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x) {
      const bool in_mask = map.at(0, y, x) >= thr;
      const bool in_box =
          y >= y0 && y < y0 + box_h && x >= x0 && x < x0 + box_w;
      if (in_mask && in_box) ++inter;
      if (in_mask || in_box) ++uni;
    }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double mask_concentration(const FloatImage& map) {
  if (map.c != 1) throw DimensionError("expected single-channel map");
  std::vector<float> sorted = map.v;
  std::sort(sorted.begin(), sorted.end());
  const float q90 = sorted[static_cast<size_t>(0.9 * (sorted.size() - 1))];

  double total = 0.0;
  std::vector<double> mass(map.v.size(), 0.0);
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x) {
      const float v = map.at(0, y, x);
      if (v >= q90 && v > 0) {
        mass[static_cast<size_t>(y) * map.w + x] = v;
        total += v;
      }
    }
  if (total <= 0) return 0.0;

  const int wh = map.h / 2, ww = map.w / 2;
  double best = 0.0;
  for (int y0 = 0; y0 + wh <= map.h; ++y0)
    for (int x0 = 0; x0 + ww <= map.w; ++x0) {
      double acc = 0.0;
      for (int y = y0; y < y0 + wh; ++y)
        for (int x = x0; x < x0 + ww; ++x)
          acc += mass[static_cast<size_t>(y) * map.w + x];
      best = std::max(best, acc);
    }
  return best / total;
}

void write_scores_csv(const std::string& path,
                      const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("score/label length mismatch");
  std::ofstream out(path);
  if (!out) throw IntegrityError("cannot write csv: " + path);
  out << "score,label\n";
  for (size_t i = 0; i < scores.size(); ++i)
    out << scores[i] << "," << labels[i] << "\n";
  if (!out) throw IntegrityError("short write: " + path);
}

}  // namespace poisonbench
