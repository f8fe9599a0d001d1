#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "iderase/image.hpp"

namespace iderase {
namespace plot {

struct Color {
  std::uint8_t r, g, b;
};

inline const std::vector<Color>& palette() {
  static const std::vector<Color> p = {
      {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
      {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
  };
  return p;
}

// RGB8 raster with (0,0) at the top-left.
class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Color c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }

  // 5x7 bitmap glyphs; lowercase renders as uppercase.
  void text(int x, int y, const std::string& s, Color c) {
    for (char raw : s) {
      char ch = raw;
      if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
      const auto& g = glyph(ch);
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g[static_cast<std::size_t>(row)] & (1 << (4 - col)))
            set(x + col, y + row, c);
      x += 6;
    }
  }

  static int text_width(const std::string& s) { return static_cast<int>(s.size()) * 6; }

  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& text_meta = {}) const {
    png_write(path, from_u8_rgb(px_, h_, w_), text_meta);
  }

 private:
  static const std::array<std::uint8_t, 7>& glyph(char c) {
    static const std::map<char, std::array<std::uint8_t, 7>> table = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {' ', {0, 0, 0, 0, 0, 0, 0}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    };
    auto it = table.find(c);
    if (it != table.end()) return it->second;
    static const std::array<std::uint8_t, 7> box = {0x1F, 0x11, 0x11, 0x11,
                                                    0x11, 0x11, 0x1F};
    return box;
  }

  int w_, h_;
  std::vector<std::uint8_t> px_;
};

struct Series {
  std::string label;
  std::vector<double> xs, ys;
};

namespace detail {

struct AxisScale {
  double lo = 0, hi = 1;

  void expand(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  static AxisScale fit(const std::vector<double>& values) {
    AxisScale s;
    s.lo = std::numeric_limits<double>::infinity();
    s.hi = -std::numeric_limits<double>::infinity();
    for (double v : values) s.expand(v);
    if (!std::isfinite(s.lo) || !std::isfinite(s.hi)) return {0, 1};
    if (s.lo == s.hi) {
      s.lo -= 0.5;
      s.hi += 0.5;
    }
    const double pad = 0.05 * (s.hi - s.lo);
    return {s.lo - pad, s.hi + pad};
  }
};

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace detail

// Multi-series scatter-connected line chart with axes, ticks, and a legend.
inline void render_line_plot(const std::vector<Series>& series,
                             const std::string& title, const std::string& x_label,
                             const std::string& y_label,
                             const std::filesystem::path& path, int w = 640,
                             int h = 420) {
  check(!series.empty(), "plot: no series");
  Canvas cv(w, h);
  const Color black{0, 0, 0}, gray{200, 200, 200};
  const int ml = 64, mr = 16, mt = 28, mb = 44;
  const int px0 = ml, px1 = w - mr, py0 = h - mb, py1 = mt;

  std::vector<double> all_x, all_y;
  for (const auto& s : series) {
    check(s.xs.size() == s.ys.size(), "plot: series length mismatch");
    all_x.insert(all_x.end(), s.xs.begin(), s.xs.end());
    all_y.insert(all_y.end(), s.ys.begin(), s.ys.end());
  }
  auto sx = detail::AxisScale::fit(all_x);
  auto sy = detail::AxisScale::fit(all_y);
  auto to_px = [&](double x) {
    return px0 + static_cast<int>(std::lround((x - sx.lo) / (sx.hi - sx.lo) * (px1 - px0)));
  };
  auto to_py = [&](double y) {
    return py0 - static_cast<int>(std::lround((y - sy.lo) / (sy.hi - sy.lo) * (py0 - py1)));
  };

  for (int t = 0; t <= 4; ++t) {
    const double xv = sx.lo + t * (sx.hi - sx.lo) / 4;
    const double yv = sy.lo + t * (sy.hi - sy.lo) / 4;
    cv.line(to_px(xv), py0, to_px(xv), py1, gray);
    cv.line(px0, to_py(yv), px1, to_py(yv), gray);
    auto xl = detail::tick_label(xv);
    cv.text(to_px(xv) - Canvas::text_width(xl) / 2, py0 + 6, xl, black);
    auto yl = detail::tick_label(yv);
    cv.text(px0 - 6 - Canvas::text_width(yl), to_py(yv) - 3, yl, black);
  }
  cv.line(px0, py0, px1, py0, black);
  cv.line(px0, py0, px0, py1, black);
  cv.text((px0 + px1) / 2 - Canvas::text_width(title) / 2, 8, title, black);
  cv.text((px0 + px1) / 2 - Canvas::text_width(x_label) / 2, h - 14, x_label, black);
  cv.text(4, py1 - 14 < 0 ? 0 : py1 - 14, y_label, black);

  int legend_y = py1 + 4;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Color c = palette()[si % palette().size()];
    const auto& s = series[si];
    for (std::size_t i = 0; i + 1 < s.xs.size(); ++i)
      cv.line(to_px(s.xs[i]), to_py(s.ys[i]), to_px(s.xs[i + 1]), to_py(s.ys[i + 1]), c);
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      cv.fill_rect(to_px(s.xs[i]) - 1, to_py(s.ys[i]) - 1, to_px(s.xs[i]) + 1,
                   to_py(s.ys[i]) + 1, c);
    if (!s.label.empty()) {
      const int lx = px1 - 110;
      cv.fill_rect(lx, legend_y + 2, lx + 10, legend_y + 4, c);
      cv.text(lx + 14, legend_y, s.label, black);
      legend_y += 10;
    }
  }
  cv.save(path);
}

// Category bar chart with value labels above bars.
inline void render_bar_plot(const std::vector<std::string>& labels,
                            const std::vector<double>& values,
                            const std::string& title, const std::string& y_label,
                            const std::filesystem::path& path, int w = 640,
                            int h = 420) {
  check(!labels.empty() && labels.size() == values.size(),
        "plot: labels/values mismatch");
  Canvas cv(w, h);
  const Color black{0, 0, 0}, gray{200, 200, 200};
  const int ml = 64, mr = 16, mt = 28, mb = 56;
  const int px0 = ml, px1 = w - mr, py0 = h - mb, py1 = mt;

  std::vector<double> vals = values;
  vals.push_back(0.0);
  auto sy = detail::AxisScale::fit(vals);
  auto to_py = [&](double y) {
    return py0 - static_cast<int>(std::lround((y - sy.lo) / (sy.hi - sy.lo) * (py0 - py1)));
  };
  for (int t = 0; t <= 4; ++t) {
    const double yv = sy.lo + t * (sy.hi - sy.lo) / 4;
    cv.line(px0, to_py(yv), px1, to_py(yv), gray);
    auto yl = detail::tick_label(yv);
    cv.text(px0 - 6 - Canvas::text_width(yl), to_py(yv) - 3, yl, black);
  }
  const auto n = static_cast<int>(labels.size());
  const int span = (px1 - px0) / n;
  for (int i = 0; i < n; ++i) {
    const Color c = palette()[static_cast<std::size_t>(i) % palette().size()];
    const int bx0 = px0 + i * span + span / 6;
    const int bx1 = px0 + (i + 1) * span - span / 6;
    cv.fill_rect(bx0, to_py(values[static_cast<std::size_t>(i)]), bx1, to_py(0.0), c);
    const auto vl = detail::tick_label(values[static_cast<std::size_t>(i)]);
    cv.text((bx0 + bx1) / 2 - Canvas::text_width(vl) / 2,
            to_py(values[static_cast<std::size_t>(i)]) - 10, vl, black);
    cv.text((bx0 + bx1) / 2 - Canvas::text_width(labels[static_cast<std::size_t>(i)]) / 2,
            py0 + 8, labels[static_cast<std::size_t>(i)], black);
  }
  cv.line(px0, py0, px1, py0, black);
  cv.line(px0, py0, px0, py1, black);
  cv.text((px0 + px1) / 2 - Canvas::text_width(title) / 2, 8, title, black);
  cv.text(4, py1 - 14 < 0 ? 0 : py1 - 14, y_label, black);
  cv.save(path);
}

}  // namespace plot
}  // namespace iderase
