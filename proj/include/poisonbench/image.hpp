#pragma once

#include <cstdint>
#include <vector>

#include "poisonbench/common.hpp"

namespace poisonbench {

// Integer image tensor, channel-major (C,H,W), values in [0,255].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<uint8_t> pixels;  // size c*h*w

  Image() = default;
  Image(int c_, int h_, int w_, uint8_t fill = 0)
      : c(c_), h(h_), w(w_), pixels(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t size() const { return pixels.size(); }
  uint8_t& at(int ch, int y, int x) {
    return pixels[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  uint8_t at(int ch, int y, int x) const {
    return pixels[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  bool same_shape(const Image& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
  bool operator==(const Image& o) const {
    return c == o.c && h == o.h && w == o.w && pixels == o.pixels;
  }
};

// Float workspace with the same layout. Trigger generators blend here and
// quantize exactly once on the way out.
struct FloatImage {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  FloatImage() = default;
  FloatImage(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  float& at(int ch, int y, int x) {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  bool same_shape(const FloatImage& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
};

FloatImage to_float(const Image& img);
// Clips to [0,255] and rounds half-to-even.
Image quantize(const FloatImage& img);

// Channel-weighted luminance in [0,255]; for C==1 this is the channel itself.
float luminance(const FloatImage& img, int y, int x);
float luminance(const Image& img, int y, int x);

// Mean absolute per-pixel difference, in integer levels.
double mean_abs_diff(const Image& a, const Image& b);

uint64_t image_hash(const Image& img);

}  // namespace poisonbench
