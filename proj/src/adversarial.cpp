#include "poisonbench/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "poisonbench/common.hpp"

namespace poisonbench {

void pgd_perturb(Net& net, Tensor& x, const std::vector<int>& labels,
                 const PerturbationSpec& spec, Rng& rng) {
  if (static_cast<size_t>(x.n) != labels.size())
    throw DimensionError("pgd: label count mismatch");
  const float eps = static_cast<float>(spec.epsilon);
  const float step = static_cast<float>(spec.effective_step());
  const Tensor origin = x;

  for (auto& v : x.v)
    v = std::clamp(v + static_cast<float>(rng.uniform(-eps, eps)), 0.f, 1.f);

  std::vector<int> toward = labels;
  if (spec.targeted) {
    if (spec.target_class < 0)
      throw ConfigError("targeted pgd needs target_class");
    std::fill(toward.begin(), toward.end(), spec.target_class);
  }
  // Targeted: descend the target's loss. Untargeted: ascend the label's.
  const float dir = spec.targeted ? -1.f : 1.f;

  for (int it = 0; it < spec.steps; ++it) {
    Tensor logits = net.forward(x, /*train=*/true);
    Tensor grad_logits;
    softmax_cross_entropy(logits, toward, &grad_logits);
    Tensor g = net.backward(grad_logits, /*param_grads=*/false);
    for (size_t i = 0; i < x.v.size(); ++i) {
      float v = x.v[i] + dir * step * (g.v[i] > 0.f ? 1.f : (g.v[i] < 0.f ? -1.f : 0.f));
      v = std::clamp(v, origin.v[i] - eps, origin.v[i] + eps);
      x.v[i] = std::clamp(v, 0.f, 1.f);
    }
  }
}

Image pgd_perturb_image(Net& net, const Image& image, int label,
                        const PerturbationSpec& spec, uint64_t seed) {
  Tensor x = tensor_from_image(image);
  Rng rng(hash64_combine(seed, 0x96du));
  pgd_perturb(net, x, {label}, spec, rng);
  FloatImage f(image.c, image.h, image.w);
  for (size_t i = 0; i < f.v.size(); ++i) f.v[i] = x.v[i] * 255.f;
  return quantize(f);
}

Dataset perturb_dataset(Net& net, const Dataset& dataset,
                        const PerturbationSpec& spec, uint64_t seed) {
  Dataset out = dataset;
  if (spec.epsilon == 0.0) return out;
  for (size_t i = 0; i < out.train.size(); ++i) {
    auto& item = out.train[i];
    item.pixels = pgd_perturb_image(net, item.pixels, item.label, spec,
                                    hash64_combine(seed, i));
  }
  out.provenance["perturbed"] = {{"epsilon", spec.epsilon},
                                 {"steps", spec.steps}};
  return out;
}

UapResult universal_perturbation(Net& net,
                                 const std::vector<LabeledImage>& pool,
                                 int target_class,
                                 const PerturbationSpec& spec, uint64_t seed,
                                 double goal, int max_epochs) {
  if (pool.empty()) throw CapacityError("uap: empty pool");
  const Image& first = pool.front().pixels;
  const float eps = static_cast<float>(spec.epsilon);
  const float step = static_cast<float>(spec.effective_step());

  std::vector<float> delta(first.size(), 0.f);  // [0,1] units
  UapResult result;
  Rng rng(hash64_combine(seed, 0x0a9u));
  std::vector<int> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const int batch = 32;
  std::vector<int> toward(batch, target_class);
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t stop = std::min(order.size(), start + batch);
      std::vector<const Image*> imgs;
      for (size_t i = start; i < stop; ++i)
        imgs.push_back(&pool[order[i]].pixels);
      Tensor x = batch_from_images(imgs);
      for (int i = 0; i < x.n; ++i) {
        float* s = x.sample(i);
        for (size_t j = 0; j < delta.size(); ++j)
          s[j] = std::clamp(s[j] + delta[j], 0.f, 1.f);
      }
      toward.assign(static_cast<size_t>(x.n), target_class);
      Tensor logits = net.forward(x, true);
      Tensor grad_logits;
      softmax_cross_entropy(logits, toward, &grad_logits);
      Tensor g = net.backward(grad_logits, false);
      // Mean input gradient over the batch drives the shared pattern.
      for (size_t j = 0; j < delta.size(); ++j) {
        double acc = 0;
        for (int i = 0; i < g.n; ++i) acc += g.sample(i)[j];
        const float sgn = acc > 0 ? 1.f : (acc < 0 ? -1.f : 0.f);
        delta[j] = std::clamp(delta[j] - step * sgn, -eps, eps);
      }
    }
    result.epochs_run = epoch + 1;

    // Fooling rate against the current pattern.
    int hits = 0;
    for (size_t start = 0; start < pool.size(); start += batch) {
      const size_t stop = std::min(pool.size(), start + batch);
      std::vector<const Image*> imgs;
      for (size_t i = start; i < stop; ++i) imgs.push_back(&pool[i].pixels);
      Tensor x = batch_from_images(imgs);
      for (int i = 0; i < x.n; ++i) {
        float* s = x.sample(i);
        for (size_t j = 0; j < delta.size(); ++j)
          s[j] = std::clamp(s[j] + delta[j], 0.f, 1.f);
      }
      Tensor logits = net.forward(x, false);
      for (int i = 0; i < x.n; ++i)
        if (argmax_row(logits, i) == target_class) ++hits;
    }
    result.fooling_rate = static_cast<double>(hits) / pool.size();
    if (result.fooling_rate >= goal) {
      result.converged = true;
      break;
    }
  }

  result.pattern = FloatImage(first.c, first.h, first.w);
  for (size_t j = 0; j < delta.size(); ++j)
    result.pattern.v[j] = delta[j] * 255.f;
  return result;
}

ImageGenerator lc_generator(Net& surrogate, const TriggerSpec& spec,
                            uint64_t seed) {
  if (spec.kind != TriggerKind::pgd)
    throw ConfigError("lc_generator expects a pgd trigger spec");
  return [&surrogate, spec, seed](const Image& image, int index) {
    // The victim keeps its (target-class) label; the perturbation erases
    // the class evidence so the patch must carry the association.
    Image out = pgd_perturb_image(surrogate, image, spec.perturb.target_class,
                                  spec.perturb, hash64_combine(seed, index));
    if (spec.then_patch) out = apply_patch(out, *spec.then_patch);
    return out;
  };
}

}  // namespace poisonbench
