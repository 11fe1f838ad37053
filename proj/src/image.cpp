#include "poisonbench/image.hpp"

#include <cmath>
#include <cstdlib>

#include "poisonbench/rng.hpp"

namespace poisonbench {

FloatImage to_float(const Image& img) {
  FloatImage out(img.c, img.h, img.w);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.v[i] = static_cast<float>(img.pixels[i]);
  return out;
}

Image quantize(const FloatImage& img) {
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < img.v.size(); ++i) {
    float x = img.v[i];
    if (x < 0.f) x = 0.f;
    if (x > 255.f) x = 255.f;
    // nearbyint honours the default FE_TONEAREST mode: half-to-even.
    out.pixels[i] = static_cast<uint8_t>(std::nearbyintf(x));
  }
  return out;
}

float luminance(const FloatImage& img, int y, int x) {
  if (img.c == 1) return img.at(0, y, x);
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
         0.114f * img.at(2, y, x);
}

float luminance(const Image& img, int y, int x) {
  if (img.c == 1) return img.at(0, y, x);
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
         0.114f * img.at(2, y, x);
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.pixels.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i)
    acc += std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i]));
  return acc / static_cast<double>(a.pixels.size());
}

uint64_t image_hash(const Image& img) {
  Hasher h;
  h.update_u64(static_cast<uint64_t>(img.c));
  h.update_u64(static_cast<uint64_t>(img.h));
  h.update_u64(static_cast<uint64_t>(img.w));
  h.update(img.pixels.data(), img.pixels.size());
  return h.digest();
}

}  // namespace poisonbench
