#include "poisonbench/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "poisonbench/common.hpp"
#include "poisonbench/png_io.hpp"

namespace poisonbench {

namespace {

// Classic 5x7 font, column-major: byte k is column k, bit 0 the top row.
struct Glyph {
  char ch;
  uint8_t col[5];
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}},
    {'!', {0x00, 0x00, 0x5f, 0x00, 0x00}},
    {'%', {0x23, 0x13, 0x08, 0x64, 0x62}},
    {'(', {0x00, 0x1c, 0x22, 0x41, 0x00}},
    {')', {0x00, 0x41, 0x22, 0x1c, 0x00}},
    {'+', {0x08, 0x08, 0x3e, 0x08, 0x08}},
    {',', {0x00, 0x50, 0x30, 0x00, 0x00}},
    {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
    {'/', {0x20, 0x10, 0x08, 0x04, 0x02}},
    {'0', {0x3e, 0x51, 0x49, 0x45, 0x3e}},
    {'1', {0x00, 0x42, 0x7f, 0x40, 0x00}},
    {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
    {'3', {0x21, 0x41, 0x45, 0x4b, 0x31}},
    {'4', {0x18, 0x14, 0x12, 0x7f, 0x10}},
    {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3c, 0x4a, 0x49, 0x49, 0x30}},
    {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
    {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
    {'9', {0x06, 0x49, 0x49, 0x29, 0x1e}},
    {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
    {'=', {0x14, 0x14, 0x14, 0x14, 0x14}},
    {'A', {0x7e, 0x11, 0x11, 0x11, 0x7e}},
    {'B', {0x7f, 0x49, 0x49, 0x49, 0x36}},
    {'C', {0x3e, 0x41, 0x41, 0x41, 0x22}},
    {'D', {0x7f, 0x41, 0x41, 0x22, 0x1c}},
    {'E', {0x7f, 0x49, 0x49, 0x49, 0x41}},
    {'F', {0x7f, 0x09, 0x09, 0x09, 0x01}},
    {'G', {0x3e, 0x41, 0x49, 0x49, 0x3a}},
    {'H', {0x7f, 0x08, 0x08, 0x08, 0x7f}},
    {'I', {0x00, 0x41, 0x7f, 0x41, 0x00}},
    {'J', {0x20, 0x40, 0x41, 0x3f, 0x01}},
    {'K', {0x7f, 0x08, 0x14, 0x22, 0x41}},
    {'L', {0x7f, 0x40, 0x40, 0x40, 0x40}},
    {'M', {0x7f, 0x02, 0x0c, 0x02, 0x7f}},
    {'N', {0x7f, 0x04, 0x08, 0x10, 0x7f}},
    {'O', {0x3e, 0x41, 0x41, 0x41, 0x3e}},
    {'P', {0x7f, 0x09, 0x09, 0x09, 0x06}},
    {'Q', {0x3e, 0x41, 0x51, 0x21, 0x5e}},
    {'R', {0x7f, 0x09, 0x19, 0x29, 0x46}},
    {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
    {'T', {0x01, 0x01, 0x7f, 0x01, 0x01}},
    {'U', {0x3f, 0x40, 0x40, 0x40, 0x3f}},
    {'V', {0x1f, 0x20, 0x40, 0x20, 0x1f}},
    {'W', {0x7f, 0x20, 0x18, 0x20, 0x7f}},
    {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
    {'Y', {0x03, 0x04, 0x78, 0x04, 0x03}},
    {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
    {'_', {0x40, 0x40, 0x40, 0x40, 0x40}},
};

const uint8_t* glyph_for(char ch) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (const auto& g : kFont)
    if (g.ch == up) return g.col;
  return kFont[0].col;  // unknown characters render as space
}

constexpr Rgb kPalette[] = {
    {31, 119, 180}, {214, 39, 40},  {44, 160, 44},
    {255, 127, 14}, {148, 103, 189}, {140, 86, 75},
};
constexpr Rgb kBlack{20, 20, 20};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kGray{110, 110, 110};

void put_pixel(Image& canvas, int x, int y, const Rgb& color) {
  if (x < 0 || y < 0 || x >= canvas.w || y >= canvas.h) return;
  for (int ch = 0; ch < 3; ++ch) canvas.at(ch, y, x) = color[ch];
}

void draw_line(Image& canvas, double x0, double y0, double x1, double y1,
               const Rgb& color) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps =
      std::max(1, static_cast<int>(std::ceil(std::max(std::fabs(dx),
                                                      std::fabs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put_pixel(canvas, static_cast<int>(std::lround(x0 + t * dx)),
              static_cast<int>(std::lround(y0 + t * dy)), color);
  }
}

void draw_marker(Image& canvas, int x, int y, const Rgb& color) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) put_pixel(canvas, x + dx, y + dy, color);
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct AxisScale {
  double lo = 0, hi = 1;
  double tick = 0.25;
};

// Rounds the data range out to "nice" 1/2/5 x 10^k tick positions.
AxisScale nice_scale(double lo, double hi, int max_ticks = 6) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double raw_step = (hi - lo) / std::max(1, max_ticks - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
  const double norm = raw_step / mag;
  double step;
  if (norm <= 1.0) step = 1.0;
  else if (norm <= 2.0) step = 2.0;
  else if (norm <= 5.0) step = 5.0;
  else step = 10.0;
  step *= mag;
  AxisScale s;
  s.lo = std::floor(lo / step) * step;
  s.hi = std::ceil(hi / step) * step;
  s.tick = step;
  return s;
}

}  // namespace

int text_width(const std::string& text, int scale) {
  return static_cast<int>(text.size()) * 6 * scale - (text.empty() ? 0 : scale);
}

void draw_text(Image& canvas, int x, int y, const std::string& text,
               const Rgb& color, int scale) {
  int cx = x;
  for (char ch : text) {
    const uint8_t* cols = glyph_for(ch);
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row)
        if (cols[col] & (1u << row))
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx)
              put_pixel(canvas, cx + col * scale + sx, y + row * scale + sy,
                        color);
    cx += 6 * scale;
  }
}

void render_line_plot(const std::string& path, const PlotSpec& spec,
                      const std::vector<Series>& series) {
  if (series.empty()) throw ParameterError("no series to plot");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw DimensionError("series '" + s.label + "' has mismatched points");
    if (s.axis < 0 || s.axis > 1)
      throw ParameterError("series axis must be 0 or 1");
  }
  bool has_right = false;
  for (const auto& s : series) has_right |= s.axis == 1;

  double x_lo = series[0].x[0], x_hi = x_lo;
  double y_lo[2] = {1e300, 1e300}, y_hi[2] = {-1e300, -1e300};
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo[s.axis] = std::min(y_lo[s.axis], s.y[i]);
      y_hi[s.axis] = std::max(y_hi[s.axis], s.y[i]);
    }
  const AxisScale xs = nice_scale(x_lo, x_hi, 7);
  AxisScale ys[2];
  ys[0] = nice_scale(y_lo[0] < 1e299 ? y_lo[0] : 0,
                     y_hi[0] > -1e299 ? y_hi[0] : 1);
  ys[1] = has_right ? nice_scale(y_lo[1], y_hi[1]) : AxisScale{};

  const int left = 56, right = has_right ? 56 : 16;
  const int top = spec.title.empty() ? 16 : 28;
  const int bottom = 40 + (spec.footnote.empty() ? 0 : 12);
  Image canvas(3, spec.height, spec.width, 255);
  const int px0 = left, px1 = spec.width - right;
  const int py0 = top, py1 = spec.height - bottom;
  if (px1 - px0 < 40 || py1 - py0 < 40)
    throw ParameterError("plot dimensions too small");

  auto map_x = [&](double v) {
    return px0 + (v - xs.lo) / (xs.hi - xs.lo) * (px1 - px0);
  };
  auto map_y = [&](double v, int axis) {
    return py1 - (v - ys[axis].lo) / (ys[axis].hi - ys[axis].lo) * (py1 - py0);
  };

  // Grid and ticks.
  for (double v = xs.lo; v <= xs.hi + xs.tick / 2; v += xs.tick) {
    const int gx = static_cast<int>(std::lround(map_x(v)));
    draw_line(canvas, gx, py0, gx, py1, kGrid);
    const std::string label = format_tick(v);
    draw_text(canvas, gx - text_width(label) / 2, py1 + 5, label, kGray);
  }
  for (double v = ys[0].lo; v <= ys[0].hi + ys[0].tick / 2; v += ys[0].tick) {
    const int gy = static_cast<int>(std::lround(map_y(v, 0)));
    draw_line(canvas, px0, gy, px1, gy, kGrid);
    const std::string label = format_tick(v);
    draw_text(canvas, px0 - 6 - text_width(label), gy - 3, label, kGray);
  }
  if (has_right)
    for (double v = ys[1].lo; v <= ys[1].hi + ys[1].tick / 2;
         v += ys[1].tick) {
      const int gy = static_cast<int>(std::lround(map_y(v, 1)));
      draw_text(canvas, px1 + 6, gy - 3, format_tick(v), kGray);
    }

  // Frame.
  draw_line(canvas, px0, py0, px1, py0, kBlack);
  draw_line(canvas, px0, py1, px1, py1, kBlack);
  draw_line(canvas, px0, py0, px0, py1, kBlack);
  draw_line(canvas, px1, py0, px1, py1, kBlack);

  // Series polylines with point markers.
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const Rgb& color = kPalette[si % std::size(kPalette)];
    for (size_t i = 0; i + 1 < s.x.size(); ++i)
      draw_line(canvas, map_x(s.x[i]), map_y(s.y[i], s.axis),
                map_x(s.x[i + 1]), map_y(s.y[i + 1], s.axis), color);
    for (size_t i = 0; i < s.x.size(); ++i)
      draw_marker(canvas, static_cast<int>(std::lround(map_x(s.x[i]))),
                  static_cast<int>(std::lround(map_y(s.y[i], s.axis))), color);
  }

  // Title, labels, legend, footnote.
  if (!spec.title.empty())
    draw_text(canvas, (spec.width - text_width(spec.title)) / 2, 8, spec.title,
              kBlack);
  if (!spec.x_label.empty())
    draw_text(canvas, (px0 + px1 - text_width(spec.x_label)) / 2, py1 + 16,
              spec.x_label, kBlack);
  if (!spec.y_label.empty()) draw_text(canvas, 4, py0 - 12, spec.y_label, kBlack);
  if (has_right && !spec.y2_label.empty())
    draw_text(canvas, px1 - text_width(spec.y2_label) + 40, py0 - 12,
              spec.y2_label, kBlack);

  int ly = py0 + 4;
  for (size_t si = 0; si < series.size(); ++si) {
    const Rgb& color = kPalette[si % std::size(kPalette)];
    const int lx = px0 + 8;
    draw_line(canvas, lx, ly + 3, lx + 14, ly + 3, color);
    draw_marker(canvas, lx + 7, ly + 3, color);
    draw_text(canvas, lx + 18, ly, series[si].label, kBlack);
    ly += 11;
  }
  if (!spec.footnote.empty())
    draw_text(canvas, px0, spec.height - 11, spec.footnote, kGray);

  write_png(path, canvas);
}

Image upscale_nearest(const Image& img, int factor) {
  if (factor < 1) throw ParameterError("upscale factor must be >= 1");
  if (factor == 1) return img;
  Image out(img.c, img.h * factor, img.w * factor);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        out.at(ch, y, x) = img.at(ch, y / factor, x / factor);
  return out;
}

Image image_grid(const std::vector<Image>& tiles, int cols, int pad) {
  if (tiles.empty()) throw ParameterError("no tiles to lay out");
  if (cols < 1) throw ParameterError("cols must be >= 1");
  for (const auto& t : tiles)
    if (!t.same_shape(tiles[0]))
      throw DimensionError("grid tiles must share a shape");
  const int rows =
      (static_cast<int>(tiles.size()) + cols - 1) / cols;
  const Image& t0 = tiles[0];
  Image out(t0.c, rows * t0.h + (rows + 1) * pad,
            cols * t0.w + (cols + 1) * pad, 255);
  for (size_t i = 0; i < tiles.size(); ++i) {
    const int r = static_cast<int>(i) / cols, ccol = static_cast<int>(i) % cols;
    const int oy = pad + r * (t0.h + pad), ox = pad + ccol * (t0.w + pad);
    for (int ch = 0; ch < t0.c; ++ch)
      for (int y = 0; y < t0.h; ++y)
        for (int x = 0; x < t0.w; ++x)
          out.at(ch, oy + y, ox + x) = tiles[i].at(ch, y, x);
  }
  return out;
}

namespace {

Rgb jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const auto band = [](double x) {
    return static_cast<uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0)));
  };
  return {band(1.5 - std::fabs(4.0 * v - 3.0)),
          band(1.5 - std::fabs(4.0 * v - 2.0)),
          band(1.5 - std::fabs(4.0 * v - 1.0))};
}

}  // namespace

Image overlay_heatmap(const Image& image, const FloatImage& heat,
                      double alpha) {
  if (heat.c != 1 || heat.h != image.h || heat.w != image.w)
    throw DimensionError("heat map must be 1-channel and match the image");
  if (alpha < 0 || alpha > 1) throw ParameterError("alpha out of [0,1]");
  Image out(3, image.h, image.w);
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) {
      const Rgb hot = jet(heat.at(0, y, x));
      for (int ch = 0; ch < 3; ++ch) {
        const double base = image.at(image.c == 3 ? ch : 0, y, x);
        out.at(ch, y, x) = static_cast<uint8_t>(
            std::lround((1.0 - alpha) * base + alpha * hot[ch]));
      }
    }
  return out;
}

}  // namespace poisonbench
