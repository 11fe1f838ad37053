#pragma once

#include <array>
#include <string>
#include <vector>

#include "poisonbench/image.hpp"

namespace poisonbench {

using Rgb = std::array<uint8_t, 3>;

// One polyline on a chart. axis 0 reads the left y-axis, axis 1 the right
// one (used for BA/ASR pairs that live on different scales).
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  int axis = 0;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string y2_label;
  std::string footnote;  // config hashes etc., rendered under the chart
  int width = 720;
  int height = 440;
};

// Rasterizes the series into an RGB chart and writes it as a PNG.
void render_line_plot(const std::string& path, const PlotSpec& spec,
                      const std::vector<Series>& series);

// 5x7 bitmap text, scaled by an integer factor. (x, y) is the top-left
// corner; lowercase letters reuse the uppercase glyphs.
void draw_text(Image& canvas, int x, int y, const std::string& text,
               const Rgb& color, int scale = 1);
int text_width(const std::string& text, int scale = 1);

// Nearest-neighbour upscale, handy before tiling 32x32 thumbnails.
Image upscale_nearest(const Image& img, int factor);

// Lays equally-shaped tiles out row-major on a white canvas.
Image image_grid(const std::vector<Image>& tiles, int cols, int pad = 2);

// Blends a jet-colormapped single-channel heat map over an image.
Image overlay_heatmap(const Image& image, const FloatImage& heat,
                      double alpha = 0.5);

}  // namespace poisonbench
