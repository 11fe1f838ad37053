#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonbench/image.hpp"

namespace poisonbench {

enum class TriggerKind {
  patch,
  blended,
  additive_agnostic,
  additive_specific,
  warp,
  stylize,
  pgd,
  uap,
};

std::string trigger_kind_name(TriggerKind k);
TriggerKind trigger_kind_from_name(const std::string& name);

enum class Corner { top_left, top_right, bottom_left, bottom_right };

struct PatchSpec {
  // Built-in pattern: "white", "black", "checker_bw", "noise".
  std::string pattern = "checker_bw";
  int size = 4;
  std::vector<Corner> corners = {Corner::bottom_right};
  double alpha = 1.0;  // 1 = full replacement
  uint64_t noise_seed = 0;

  Image render(int channels) const;  // size x size patch pixels
};

struct WarpSpec {
  int grid = 4;  // control grid k
  uint64_t seed = 0;
};

struct StyleSpec {
  enum Style { oil_paint, ink_sketch, hue_grade };
  Style style = oil_paint;
  int radius = 3;               // oil_paint window radius
  double edge_threshold = 96.;  // ink_sketch gradient scale, in levels
  double hue_degrees = 90.;     // hue_grade rotation

  static Style style_from_name(const std::string& name);
  std::string style_name() const;
};

// L-inf-bounded iterated sign-gradient perturbation. epsilon is a fraction
// of the [0,255] range; step_size <= 0 means the 2.5*eps/steps default.
struct PerturbationSpec {
  double epsilon = 8.0 / 255.0;
  int steps = 40;
  double step_size = 0.0;
  bool targeted = false;
  int target_class = -1;

  double effective_step() const {
    return step_size > 0 ? step_size : 2.5 * epsilon / std::max(1, steps);
  }
  nlohmann::json to_json() const;
  static PerturbationSpec from_json(const nlohmann::json& j);
};

struct AdditiveSpec {
  uint64_t master_seed = 0;
  double base_scale = 2.0;  // pattern amplitude in levels before amplification
};

// One poisoned-image generator: a trigger family plus its parameters.
// `intensity` is the family's strength knob: blend alpha for patch/blended,
// amplification factor for additive kinds, warp strength s, and a plain
// multiplier (default 1) for uap patterns. Zero intensity is the identity
// for additive, warp and blended kinds.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::patch;
  double intensity = 1.0;

  PatchSpec patch;
  WarpSpec warp;
  StyleSpec style;
  PerturbationSpec perturb;          // pgd / uap generation budget
  AdditiveSpec additive;
  std::optional<PatchSpec> then_patch;  // pgd (label-consistent) overlay
  // uap: the synthesized pattern, filled in during poisoning.
  std::optional<FloatImage> resolved_pattern;

  void validate(int c, int h, int w) const;
  nlohmann::json to_json() const;
  static TriggerSpec from_json(const nlohmann::json& j);
};

// --- generators ------------------------------------------------------------

Image apply_patch(const Image& image, const PatchSpec& spec);

// out = clip(image + amplification * pattern), quantized once.
Image apply_additive(const Image& image, const FloatImage& pattern,
                     double amplification);

// Whole-image blend: out = (1-alpha)*image + alpha*pattern.
Image apply_blended(const Image& image, const FloatImage& pattern, double alpha);

// Per-sample pseudorandom field in [-intensity, intensity], seeded by
// hash(master_seed, pixels): same image => same pattern, any pixel change
// => a fresh field.
FloatImage derive_sample_specific_pattern(const Image& image,
                                          uint64_t master_seed,
                                          double intensity);
// The frozen (sample-agnostic) counterpart, seeded by master_seed alone.
FloatImage derive_agnostic_pattern(int c, int h, int w, uint64_t master_seed,
                                   double intensity);

// Smooth dense flow (c=2: dy,dx) from a k x k random control grid,
// bicubically upsampled and normalized to unit mean magnitude.
FloatImage build_warp_field(int grid, int h, int w, uint64_t seed);
// Backward-samples with bilinear interpolation at displacement s*field.
// s = 0 returns the input bit-exactly.
Image apply_warp(const Image& image, const FloatImage& field, double strength);

Image apply_stylization(const Image& image, const StyleSpec& spec);

// Test-time application of a trigger. pgd triggers reduce to their patch
// overlay (the perturbation exists only at poisoning time); uap requires
// resolved_pattern.
Image apply_trigger(const Image& image, const TriggerSpec& spec);

// The trigger actually applied at inference time for a given poisoning
// generator (identical except for pgd, which drops the perturbation stage).
TriggerSpec evaluation_trigger(const TriggerSpec& spec);

// PNG preview + raw float32 sidecar, exact round-trip via the sidecar.
void save_pattern(const std::string& path_base, const FloatImage& pattern);
FloatImage load_pattern(const std::string& path_base);

}  // namespace poisonbench
