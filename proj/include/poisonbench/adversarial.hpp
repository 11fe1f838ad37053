#pragma once

#include "poisonbench/dataset.hpp"
#include "poisonbench/nn.hpp"
#include "poisonbench/poisoning.hpp"
#include "poisonbench/triggers.hpp"

namespace poisonbench {

// In-place PGD on a batch living in [0,1] model space. Untargeted ascent on
// the labels' loss, or targeted descent when spec.targeted. Random start
// inside the epsilon ball. The net is used for gradients only; its weights
// are untouched.
void pgd_perturb(Net& net, Tensor& x, const std::vector<int>& labels,
                 const PerturbationSpec& spec, Rng& rng);

// Single-image convenience. Untargeted attacks pass the image's own label.
Image pgd_perturb_image(Net& net, const Image& image, int label,
                        const PerturbationSpec& spec, uint64_t seed);

// Replace every train image by its PGD-perturbed version (labels kept).
// epsilon = 0 returns the dataset unchanged. Used by the robust-feature
// experiment: perturb with a reference model, retrain from scratch, watch
// accuracy fall.
Dataset perturb_dataset(Net& net, const Dataset& dataset,
                        const PerturbationSpec& spec, uint64_t seed);

struct UapResult {
  FloatImage pattern;    // pixel levels, ready for apply_additive
  double fooling_rate = 0.0;  // fraction of pool pushed to the target
  int epochs_run = 0;
  bool converged = false;
};

// Targeted universal perturbation: one additive pattern steering the pool
// toward target_class, L-inf bounded by spec.epsilon. Stops early at
// fooling_rate >= goal; otherwise runs max_epochs and reports converged=false.
UapResult universal_perturbation(Net& net,
                                 const std::vector<LabeledImage>& pool,
                                 int target_class,
                                 const PerturbationSpec& spec, uint64_t seed,
                                 double goal = 0.8, int max_epochs = 20);

// Label-consistent generator: untargeted PGD against the surrogate (erasing
// the class evidence) followed by the spec's patch overlay. The surrogate
// reference must outlive the returned closure.
ImageGenerator lc_generator(Net& surrogate, const TriggerSpec& spec,
                            uint64_t seed);

}  // namespace poisonbench
