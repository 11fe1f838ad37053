#include "poisonbench/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "poisonbench/common.hpp"
#include "poisonbench/png_io.hpp"
#include "poisonbench/rng.hpp"

namespace poisonbench {

namespace {

const char* kCornerNames[] = {"top_left", "top_right", "bottom_left",
                              "bottom_right"};

std::string corner_name(Corner c) { return kCornerNames[static_cast<int>(c)]; }

Corner corner_from_name(const std::string& name) {
  for (int i = 0; i < 4; ++i)
    if (name == kCornerNames[i]) return static_cast<Corner>(i);
  throw ParameterError("unknown corner: " + name);
}

}  // namespace

std::string trigger_kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::patch: return "patch";
    case TriggerKind::blended: return "blended";
    case TriggerKind::additive_agnostic: return "additive_agnostic";
    case TriggerKind::additive_specific: return "additive_specific";
    case TriggerKind::warp: return "warp";
    case TriggerKind::stylize: return "stylize";
    case TriggerKind::pgd: return "pgd";
    case TriggerKind::uap: return "uap";
  }
  throw ParameterError("bad trigger kind");
}

TriggerKind trigger_kind_from_name(const std::string& name) {
  static const std::pair<const char*, TriggerKind> table[] = {
      {"patch", TriggerKind::patch},
      {"blended", TriggerKind::blended},
      {"additive_agnostic", TriggerKind::additive_agnostic},
      {"additive_specific", TriggerKind::additive_specific},
      {"warp", TriggerKind::warp},
      {"stylize", TriggerKind::stylize},
      {"pgd", TriggerKind::pgd},
      {"uap", TriggerKind::uap},
  };
  for (const auto& [n, k] : table)
    if (name == n) return k;
  throw ParameterError("unknown trigger kind: " + name);
}

Image PatchSpec::render(int channels) const {
  if (size < 1) throw ParameterError("patch size must be >= 1");
  Image p;
  p.c = channels;
  p.h = size;
  p.w = size;
  p.pixels.assign(static_cast<size_t>(channels) * size * size, 0);
  if (pattern == "white") {
    std::fill(p.pixels.begin(), p.pixels.end(), 255);
  } else if (pattern == "black") {
    // already zero
  } else if (pattern == "checker_bw") {
    for (int ch = 0; ch < channels; ++ch)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          p.at(ch, y, x) = ((y + x) % 2 == 0) ? 255 : 0;
  } else if (pattern == "noise") {
    Rng rng(hash64_combine(noise_seed, 0x70a7c4u));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        for (int ch = 0; ch < channels; ++ch)
          p.at(ch, y, x) = static_cast<uint8_t>(rng.uniform_int(256));
      }
  } else {
    throw ParameterError("unknown patch pattern: " + pattern);
  }
  return p;
}

StyleSpec::Style StyleSpec::style_from_name(const std::string& name) {
  if (name == "oil_paint") return oil_paint;
  if (name == "ink_sketch") return ink_sketch;
  if (name == "hue_grade") return hue_grade;
  throw ParameterError("unknown style: " + name);
}

std::string StyleSpec::style_name() const {
  switch (style) {
    case oil_paint: return "oil_paint";
    case ink_sketch: return "ink_sketch";
    case hue_grade: return "hue_grade";
  }
  throw ParameterError("bad style");
}

nlohmann::json PerturbationSpec::to_json() const {
  return {{"epsilon", epsilon},
          {"steps", steps},
          {"step_size", step_size},
          {"targeted", targeted},
          {"target_class", target_class}};
}

PerturbationSpec PerturbationSpec::from_json(const nlohmann::json& j) {
  PerturbationSpec s;
  s.epsilon = j.value("epsilon", s.epsilon);
  s.steps = j.value("steps", s.steps);
  s.step_size = j.value("step_size", s.step_size);
  s.targeted = j.value("targeted", s.targeted);
  s.target_class = j.value("target_class", s.target_class);
  return s;
}

void TriggerSpec::validate(int c, int h, int w) const {
  if (intensity < 0) throw ParameterError("trigger intensity must be >= 0");
  const int side = std::min(h, w);
  switch (kind) {
    case TriggerKind::patch:
      if (patch.size > side)
        throw ParameterError("patch size exceeds image side");
      if (patch.corners.empty())
        throw ParameterError("patch needs at least one corner");
      if (intensity > 1.0)
        throw ParameterError("patch alpha must be in [0,1]");
      break;
    case TriggerKind::blended:
      if (intensity > 1.0)
        throw ParameterError("blend alpha must be in [0,1]");
      break;
    case TriggerKind::warp:
      if (warp.grid < 2) throw ParameterError("warp grid must be >= 2");
      if (warp.grid > side)
        throw ParameterError("warp grid exceeds image side");
      break;
    case TriggerKind::stylize:
      if (style.style == StyleSpec::oil_paint &&
          (style.radius < 1 || 2 * style.radius + 1 > side))
        throw ParameterError("oil_paint radius out of range");
      if (style.style == StyleSpec::ink_sketch && style.edge_threshold <= 0)
        throw ParameterError("edge_threshold must be positive");
      break;
    case TriggerKind::pgd:
    case TriggerKind::uap:
      if (perturb.epsilon <= 0 || perturb.epsilon > 1)
        throw ParameterError("epsilon must be in (0,1]");
      if (perturb.steps < 1) throw ParameterError("steps must be >= 1");
      if (then_patch && then_patch->size > side)
        throw ParameterError("patch size exceeds image side");
      break;
    case TriggerKind::additive_agnostic:
    case TriggerKind::additive_specific:
      if (additive.base_scale < 0)
        throw ParameterError("base_scale must be >= 0");
      break;
  }
  (void)c;
}

nlohmann::json TriggerSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = trigger_kind_name(kind);
  j["intensity"] = intensity;
  switch (kind) {
    case TriggerKind::patch:
    case TriggerKind::blended: {
      nlohmann::json p;
      p["pattern"] = patch.pattern;
      p["size"] = patch.size;
      p["alpha"] = intensity;
      p["noise_seed"] = patch.noise_seed;
      auto& corners = p["corners"] = nlohmann::json::array();
      for (Corner c : patch.corners) corners.push_back(corner_name(c));
      j["patch"] = std::move(p);
      break;
    }
    case TriggerKind::warp:
      j["warp"] = {{"grid", warp.grid}, {"seed", warp.seed}};
      break;
    case TriggerKind::stylize:
      j["style"] = {{"style", style.style_name()},
                    {"radius", style.radius},
                    {"edge_threshold", style.edge_threshold},
                    {"hue_degrees", style.hue_degrees}};
      break;
    case TriggerKind::additive_agnostic:
    case TriggerKind::additive_specific:
      j["additive"] = {{"master_seed", additive.master_seed},
                       {"base_scale", additive.base_scale}};
      break;
    case TriggerKind::pgd:
    case TriggerKind::uap:
      j["perturb"] = perturb.to_json();
      break;
  }
  if (then_patch) {
    nlohmann::json p;
    p["pattern"] = then_patch->pattern;
    p["size"] = then_patch->size;
    p["alpha"] = then_patch->alpha;
    p["noise_seed"] = then_patch->noise_seed;
    auto& corners = p["corners"] = nlohmann::json::array();
    for (Corner c : then_patch->corners) corners.push_back(corner_name(c));
    j["then_patch"] = std::move(p);
  }
  return j;
}

namespace {

PatchSpec patch_from_json(const nlohmann::json& p) {
  PatchSpec s;
  s.pattern = p.value("pattern", s.pattern);
  s.size = p.value("size", s.size);
  s.alpha = p.value("alpha", s.alpha);
  s.noise_seed = p.value("noise_seed", s.noise_seed);
  if (p.contains("corners")) {
    s.corners.clear();
    for (const auto& c : p.at("corners"))
      s.corners.push_back(corner_from_name(c.get<std::string>()));
  }
  return s;
}

}  // namespace

TriggerSpec TriggerSpec::from_json(const nlohmann::json& j) {
  TriggerSpec s;
  try {
    s.kind = trigger_kind_from_name(j.at("kind").get<std::string>());
    s.intensity = j.value("intensity", 1.0);
    if (j.contains("patch")) {
      s.patch = patch_from_json(j.at("patch"));
      if (j.at("patch").contains("alpha") && !j.contains("intensity"))
        s.intensity = s.patch.alpha;
    }
    if (j.contains("warp")) {
      s.warp.grid = j.at("warp").value("grid", s.warp.grid);
      s.warp.seed = j.at("warp").value("seed", s.warp.seed);
    }
    if (j.contains("style")) {
      const auto& st = j.at("style");
      s.style.style =
          StyleSpec::style_from_name(st.value("style", std::string("oil_paint")));
      s.style.radius = st.value("radius", s.style.radius);
      s.style.edge_threshold =
          st.value("edge_threshold", s.style.edge_threshold);
      s.style.hue_degrees = st.value("hue_degrees", s.style.hue_degrees);
    }
    if (j.contains("additive")) {
      s.additive.master_seed =
          j.at("additive").value("master_seed", s.additive.master_seed);
      s.additive.base_scale =
          j.at("additive").value("base_scale", s.additive.base_scale);
    }
    if (j.contains("perturb")) s.perturb = PerturbationSpec::from_json(j.at("perturb"));
    if (j.contains("then_patch")) s.then_patch = patch_from_json(j.at("then_patch"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad trigger spec: ") + e.what());
  }
  return s;
}

Image apply_patch(const Image& image, const PatchSpec& spec) {
  if (spec.size > std::min(image.h, image.w))
    throw ParameterError("patch size exceeds image side");
  const Image patch = spec.render(image.c);
  FloatImage out = to_float(image);
  const double a = spec.alpha;
  for (Corner corner : spec.corners) {
    int y0 = 0, x0 = 0;
    switch (corner) {
      case Corner::top_left: y0 = 0; x0 = 0; break;
      case Corner::top_right: y0 = 0; x0 = image.w - spec.size; break;
      case Corner::bottom_left: y0 = image.h - spec.size; x0 = 0; break;
      case Corner::bottom_right:
        y0 = image.h - spec.size;
        x0 = image.w - spec.size;
        break;
    }
    for (int ch = 0; ch < image.c; ++ch)
      for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x) {
          float& v = out.at(ch, y0 + y, x0 + x);
          v = static_cast<float>((1.0 - a) * v +
                                 a * patch.at(ch, y, x));
        }
  }
  return quantize(out);
}

Image apply_additive(const Image& image, const FloatImage& pattern,
                     double amplification) {
  if (pattern.c != image.c || pattern.h != image.h || pattern.w != image.w)
    throw DimensionError("additive pattern shape mismatch");
  FloatImage out = to_float(image);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] += static_cast<float>(amplification) * pattern.v[i];
  return quantize(out);
}

Image apply_blended(const Image& image, const FloatImage& pattern, double alpha) {
  if (pattern.c != image.c || pattern.h != image.h || pattern.w != image.w)
    throw DimensionError("blend pattern shape mismatch");
  FloatImage out = to_float(image);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = static_cast<float>((1.0 - alpha) * out.v[i] +
                                       alpha * pattern.v[i]);
  return quantize(out);
}

namespace {

FloatImage uniform_field(int c, int h, int w, uint64_t seed, double intensity) {
  FloatImage f;
  f.c = c;
  f.h = h;
  f.w = w;
  f.v.resize(static_cast<size_t>(c) * h * w);
  Rng rng(seed);
  for (auto& v : f.v)
    v = static_cast<float>(rng.uniform(-intensity, intensity));
  return f;
}

}  // namespace

FloatImage derive_sample_specific_pattern(const Image& image,
                                          uint64_t master_seed,
                                          double intensity) {
  const uint64_t seed = hash64_combine(
      master_seed, hash64(image.pixels.data(), image.pixels.size(), 0x55b1u));
  return uniform_field(image.c, image.h, image.w, seed, intensity);
}

FloatImage derive_agnostic_pattern(int c, int h, int w, uint64_t master_seed,
                                   double intensity) {
  return uniform_field(c, h, w, hash64_combine(master_seed, 0xa901u),
                       intensity);
}

namespace {

// Catmull-Rom interpolation of four samples at parameter t in [0,1].
double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t +
                (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

}  // namespace

FloatImage build_warp_field(int grid, int h, int w, uint64_t seed) {
  if (grid < 2) throw ParameterError("warp grid must be >= 2");
  // Control offsets in [-1,1], two components per node.
  std::vector<double> ctrl(static_cast<size_t>(2) * grid * grid);
  Rng rng(hash64_combine(seed, 0x3a72f1u));
  for (auto& v : ctrl) v = rng.uniform(-1.0, 1.0);

  auto node = [&](int comp, int gy, int gx) {
    gy = std::clamp(gy, 0, grid - 1);
    gx = std::clamp(gx, 0, grid - 1);
    return ctrl[(static_cast<size_t>(comp) * grid + gy) * grid + gx];
  };

  FloatImage field;
  field.c = 2;
  field.h = h;
  field.w = w;
  field.v.resize(static_cast<size_t>(2) * h * w);
  for (int comp = 0; comp < 2; ++comp)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // Map the pixel center into grid coordinates.
        const double gy = (y + 0.5) * grid / h - 0.5;
        const double gx = (x + 0.5) * grid / w - 0.5;
        const int iy = static_cast<int>(std::floor(gy));
        const int ix = static_cast<int>(std::floor(gx));
        const double ty = gy - iy, tx = gx - ix;
        double rows[4];
        for (int r = 0; r < 4; ++r)
          rows[r] = catmull_rom(node(comp, iy - 1 + r, ix - 1),
                                node(comp, iy - 1 + r, ix),
                                node(comp, iy - 1 + r, ix + 1),
                                node(comp, iy - 1 + r, ix + 2), tx);
        field.at(comp, y, x) = static_cast<float>(
            catmull_rom(rows[0], rows[1], rows[2], rows[3], ty));
      }

  double mean_abs = 0;
  for (float v : field.v) mean_abs += std::fabs(v);
  mean_abs /= static_cast<double>(field.v.size());
  if (mean_abs > 0)
    for (auto& v : field.v) v = static_cast<float>(v / mean_abs);
  return field;
}

Image apply_warp(const Image& image, const FloatImage& field, double strength) {
  if (field.c != 2 || field.h != image.h || field.w != image.w)
    throw DimensionError("warp field shape mismatch");
  if (strength == 0.0) return image;  // exact identity
  FloatImage src = to_float(image);
  FloatImage out = src;
  auto sample = [&](int ch, double y, double x) {
    y = std::clamp(y, 0.0, image.h - 1.0);
    x = std::clamp(x, 0.0, image.w - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, image.h - 1);
    const int x1 = std::min(x0 + 1, image.w - 1);
    const double fy = y - y0, fx = x - x0;
    const double a = src.at(ch, y0, x0) * (1 - fx) + src.at(ch, y0, x1) * fx;
    const double b = src.at(ch, y1, x0) * (1 - fx) + src.at(ch, y1, x1) * fx;
    return a * (1 - fy) + b * fy;
  };
  for (int ch = 0; ch < image.c; ++ch)
    for (int y = 0; y < image.h; ++y)
      for (int x = 0; x < image.w; ++x)
        out.at(ch, y, x) = static_cast<float>(
            sample(ch, y + strength * field.at(0, y, x),
                   x + strength * field.at(1, y, x)));
  return quantize(out);
}

namespace {

Image stylize_oil_paint(const Image& image, int radius) {
  const int h = image.h, w = image.w, c = image.c;
  if (radius < 1 || 2 * radius + 1 > std::min(h, w))
    throw ParameterError("oil_paint radius out of range");
  std::vector<float> lum(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum[static_cast<size_t>(y) * w + x] = luminance(image, y, x);

  FloatImage out;
  out.c = c;
  out.h = h;
  out.w = w;
  out.v.resize(static_cast<size_t>(c) * h * w);
  // Quadrant offsets relative to the center pixel.
  const int qy0[4] = {-radius, -radius, 0, 0};
  const int qx0[4] = {-radius, 0, -radius, 0};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = -1;
      double best_var = 0;
      double best_mean[8];
      for (int q = 0; q < 4; ++q) {
        const int ya = std::max(0, y + qy0[q]);
        const int yb = std::min(h - 1, y + qy0[q] + radius);
        const int xa = std::max(0, x + qx0[q]);
        const int xb = std::min(w - 1, x + qx0[q] + radius);
        double s = 0, s2 = 0;
        double cm[8] = {0};
        int n = 0;
        for (int yy = ya; yy <= yb; ++yy)
          for (int xx = xa; xx <= xb; ++xx) {
            const double l = lum[static_cast<size_t>(yy) * w + xx];
            s += l;
            s2 += l * l;
            for (int ch = 0; ch < c; ++ch) cm[ch] += image.at(ch, yy, xx);
            ++n;
          }
        const double mean = s / n;
        const double var = s2 / n - mean * mean;
        if (best < 0 || var < best_var) {
          best = q;
          best_var = var;
          for (int ch = 0; ch < c; ++ch) best_mean[ch] = cm[ch] / n;
        }
      }
      for (int ch = 0; ch < c; ++ch)
        out.at(ch, y, x) = static_cast<float>(best_mean[ch]);
    }
  return quantize(out);
}

Image stylize_ink_sketch(const Image& image, double edge_threshold) {
  const int h = image.h, w = image.w;
  std::vector<float> gray(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      gray[static_cast<size_t>(y) * w + x] = luminance(image, y, x);
  auto g = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return static_cast<double>(gray[static_cast<size_t>(y) * w + x]);
  };
  FloatImage out;
  out.c = image.c;
  out.h = h;
  out.w = w;
  out.v.resize(static_cast<size_t>(image.c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (g(y - 1, x + 1) + 2 * g(y, x + 1) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2 * g(y, x - 1) + g(y + 1, x - 1));
      const double gy = (g(y + 1, x - 1) + 2 * g(y + 1, x) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2 * g(y - 1, x) + g(y - 1, x + 1));
      const double edge =
          std::clamp(std::sqrt(gx * gx + gy * gy) / edge_threshold, 0.0, 1.0);
      const float v = static_cast<float>(g(y, x) * (1.0 - edge));
      for (int ch = 0; ch < image.c; ++ch) out.at(ch, y, x) = v;
    }
  return quantize(out);
}

Image stylize_hue_grade(const Image& image, double degrees) {
  if (image.c != 3) throw ParameterError("hue_grade requires 3 channels");
  FloatImage out = to_float(image);
  const double shift = degrees / 360.0;
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) {
      double r = out.at(0, y, x) / 255.0;
      double g = out.at(1, y, x) / 255.0;
      double b = out.at(2, y, x) / 255.0;
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double d = mx - mn;
      double hue = 0;
      if (d > 0) {
        if (mx == r) hue = std::fmod((g - b) / d, 6.0) / 6.0;
        else if (mx == g) hue = ((b - r) / d + 2.0) / 6.0;
        else hue = ((r - g) / d + 4.0) / 6.0;
        if (hue < 0) hue += 1.0;
      }
      const double sat = mx > 0 ? d / mx : 0.0;
      const double val = mx;
      hue = std::fmod(hue + shift, 1.0);
      if (hue < 0) hue += 1.0;
      const double hh = hue * 6.0;
      const int sector = static_cast<int>(hh) % 6;
      const double f = hh - std::floor(hh);
      const double p = val * (1 - sat);
      const double q = val * (1 - sat * f);
      const double t = val * (1 - sat * (1 - f));
      double rr, gg, bb;
      switch (sector) {
        case 0: rr = val; gg = t; bb = p; break;
        case 1: rr = q; gg = val; bb = p; break;
        case 2: rr = p; gg = val; bb = t; break;
        case 3: rr = p; gg = q; bb = val; break;
        case 4: rr = t; gg = p; bb = val; break;
        default: rr = val; gg = p; bb = q; break;
      }
      out.at(0, y, x) = static_cast<float>(rr * 255.0);
      out.at(1, y, x) = static_cast<float>(gg * 255.0);
      out.at(2, y, x) = static_cast<float>(bb * 255.0);
    }
  return quantize(out);
}

}  // namespace

Image apply_stylization(const Image& image, const StyleSpec& spec) {
  switch (spec.style) {
    case StyleSpec::oil_paint: return stylize_oil_paint(image, spec.radius);
    case StyleSpec::ink_sketch:
      return stylize_ink_sketch(image, spec.edge_threshold);
    case StyleSpec::hue_grade: return stylize_hue_grade(image, spec.hue_degrees);
  }
  throw ParameterError("bad style");
}

Image apply_trigger(const Image& image, const TriggerSpec& spec) {
  spec.validate(image.c, image.h, image.w);
  switch (spec.kind) {
    case TriggerKind::patch: {
      PatchSpec p = spec.patch;
      p.alpha = spec.intensity;
      return apply_patch(image, p);
    }
    case TriggerKind::blended: {
      // Full-image noise pattern from the patch noise seed.
      Rng rng(hash64_combine(spec.patch.noise_seed, 0xb1e2du));
      FloatImage pat;
      pat.c = image.c;
      pat.h = image.h;
      pat.w = image.w;
      pat.v.resize(static_cast<size_t>(image.c) * image.h * image.w);
      for (auto& v : pat.v)
        v = static_cast<float>(rng.uniform_int(256));
      return apply_blended(image, pat, spec.intensity);
    }
    case TriggerKind::additive_agnostic: {
      const FloatImage pat = derive_agnostic_pattern(
          image.c, image.h, image.w, spec.additive.master_seed,
          spec.additive.base_scale);
      return apply_additive(image, pat, spec.intensity);
    }
    case TriggerKind::additive_specific: {
      const FloatImage pat = derive_sample_specific_pattern(
          image, spec.additive.master_seed, spec.additive.base_scale);
      return apply_additive(image, pat, spec.intensity);
    }
    case TriggerKind::warp: {
      const FloatImage field =
          build_warp_field(spec.warp.grid, image.h, image.w, spec.warp.seed);
      return apply_warp(image, field, spec.intensity);
    }
    case TriggerKind::stylize: return apply_stylization(image, spec.style);
    case TriggerKind::uap: {
      if (!spec.resolved_pattern)
        throw ParameterError("uap trigger has no resolved pattern");
      return apply_additive(image, *spec.resolved_pattern, spec.intensity);
    }
    case TriggerKind::pgd:
      // Test-time trigger is the patch overlay only.
      if (spec.then_patch) return apply_patch(image, *spec.then_patch);
      return image;
  }
  throw ParameterError("bad trigger kind");
}

TriggerSpec evaluation_trigger(const TriggerSpec& spec) {
  if (spec.kind != TriggerKind::pgd) return spec;
  TriggerSpec t = spec;
  if (spec.then_patch) {
    t.kind = TriggerKind::patch;
    t.patch = *spec.then_patch;
    t.intensity = spec.then_patch->alpha;
    t.then_patch.reset();
  }
  return t;
}

void save_pattern(const std::string& path_base, const FloatImage& pattern) {
  // Visual preview: offset so zero maps to mid-gray.
  FloatImage vis = pattern;
  for (auto& v : vis.v) v += 128.0f;
  write_png(path_base + ".png", quantize(vis));

  std::ofstream out(path_base + ".bin", std::ios::binary);
  if (!out) throw IntegrityError("cannot write pattern sidecar: " + path_base);
  const char magic[4] = {'P', 'B', 'F', '1'};
  out.write(magic, 4);
  const int32_t dims[3] = {pattern.c, pattern.h, pattern.w};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(pattern.v.data()),
            static_cast<std::streamsize>(pattern.v.size() * sizeof(float)));
  if (!out) throw IntegrityError("short write on pattern sidecar");
}

FloatImage load_pattern(const std::string& path_base) {
  std::ifstream in(path_base + ".bin", std::ios::binary);
  if (!in) throw IntegrityError("missing pattern sidecar: " + path_base);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PBF1", 4) != 0)
    throw FormatError("bad pattern sidecar magic");
  int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw FormatError("bad pattern sidecar dims");
  FloatImage f;
  f.c = dims[0];
  f.h = dims[1];
  f.w = dims[2];
  f.v.resize(static_cast<size_t>(f.c) * f.h * f.w);
  in.read(reinterpret_cast<char*>(f.v.data()),
          static_cast<std::streamsize>(f.v.size() * sizeof(float)));
  if (!in) throw FormatError("truncated pattern sidecar");
  return f;
}

}  // namespace poisonbench
