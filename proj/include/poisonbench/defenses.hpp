#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poisonbench/dataset.hpp"
#include "poisonbench/nn.hpp"
#include "poisonbench/training.hpp"
#include "poisonbench/triggers.hpp"

namespace poisonbench {

// Shared report shape: repairing defenses fill the before/after rates,
// detection defenses fill scores/AUROC. Names of out-of-scope defenses
// (mcr, nad, auto_encoder) stay valid report keys so result tables align.
struct DefenseReport {
  std::string name;
  nlohmann::json parameters;
  std::optional<double> ba_before, ba_after, asr_before, asr_after;
  std::optional<double> auroc;
  nlohmann::json extra;

  nlohmann::json to_json() const;
  static DefenseReport from_json(const nlohmann::json& j);
};

// --- model repair ----------------------------------------------------------

struct FineTuneResult {
  Net net;
  std::vector<double> ba_curve, asr_curve;  // after each epoch
};

// Re-trains only the fully-connected parameters on a seeded fraction of
// benign_data's train split; the input model is untouched.
FineTuneResult fine_tune(Net& model, const Dataset& benign_data,
                         double benign_fraction, int epochs, double lr,
                         const TriggerSpec& trigger, int target_class,
                         uint64_t seed);

// Zeroes the floor(beta * C) last-conv channels with the lowest mean
// activation over the benign pool. Returns a modified copy.
Net prune_channels(Net& model, const std::vector<LabeledImage>& benign_pool,
                   double beta);

// --- input preprocessing ---------------------------------------------------

// Bilinear shrink by `shrink_pixels`, zero-pad back at a seeded offset.
Image shrink_pad(const Image& image, int shrink_pixels, uint64_t seed);

DefenseReport evaluate_shrink_pad(Net& model, const Dataset& dataset,
                                  const TriggerSpec& trigger, int target_class,
                                  int shrink_pixels, uint64_t seed);

// --- detection -------------------------------------------------------------

// Mean Shannon entropy (bits) of predictions on n superpositions of the
// image with random pool images: alpha * image + (1 - alpha) * pool.
double strip_entropy(Net& model, const Image& image,
                     const std::vector<LabeledImage>& benign_pool, int n,
                     double alpha, uint64_t seed);

DefenseReport strip_report(Net& model, const Dataset& dataset,
                           const TriggerSpec& trigger, int target_class, int n,
                           double alpha, uint64_t seed,
                           const std::string& csv_path = "");

// Scaled-prediction consistency: fraction of scales whose argmax matches
// the unscaled prediction.
double scale_up_score(Net& model, const Image& image,
                      const std::vector<double>& scale_set);

// Rank-statistic AUROC (ties count half); positives should score higher.
double auroc(const std::vector<double>& positives,
             const std::vector<double>& negatives);

DefenseReport scale_up_report(Net& model, const Dataset& dataset,
                              const TriggerSpec& trigger, int target_class,
                              const std::vector<double>& scale_set,
                              const std::string& csv_path = "");

// --- trigger synthesis -----------------------------------------------------

struct NeuralCleanseConfig {
  int steps = 200;
  double lr = 0.1;
  double lambda_init = 1e-3;
  double asr_threshold = 0.9;  // attack-success feedback for the lambda walk
  int batch = 32;
  int eval_pool = 256;
  uint64_t seed = 0;
};

struct SynthesizedTrigger {
  int cls = 0;
  FloatImage mask;     // 1 x H x W in [0,1]
  FloatImage pattern;  // C x H x W in [0,1]
  double mask_l1 = 0.0;
  double final_asr = 0.0;
  bool converged = true;
};

struct CleanseReport {
  std::vector<SynthesizedTrigger> per_class;
  std::vector<double> anomaly_index;
  std::vector<int> flagged;  // classes with index > 2

  nlohmann::json to_json() const;
};

CleanseReport neural_cleanse(Net& model, const std::vector<LabeledImage>& pool,
                             int num_classes, const NeuralCleanseConfig& cfg);

// |l1 - median| / (1.4826 * MAD); all zeros when MAD is zero.
std::vector<double> anomaly_indices(const std::vector<double>& l1_norms);

// IoU between {map >= rel_threshold * max(map)} and the given box.
double mask_patch_iou(const FloatImage& map, int y0, int x0, int box_h,
                      int box_w, double rel_threshold = 0.5);

// Largest fraction of top-decile map mass captured by any half-by-half
// window; near 1 for corner-patch masks, low for diffuse masks.
double mask_concentration(const FloatImage& map);

// (score, label) rows for external re-analysis.
void write_scores_csv(const std::string& path,
                      const std::vector<double>& scores,
                      const std::vector<int>& labels);

}  // namespace poisonbench
