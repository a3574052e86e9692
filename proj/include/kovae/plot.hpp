#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kovae::plot {

struct Color {
  uint8_t r = 0, g = 0, b = 0;
};

/// Maps data coordinates to pixel coordinates (y axis flipped).
struct Axes {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  static Axes square(double lo, double hi) { return {lo, hi, lo, hi}; }
  static Axes fit(const std::vector<double>& xs, const std::vector<double>& ys,
                  double pad_fraction = 0.05);
};

/// Minimal RGB raster with the drawing primitives the diagnostics need.
/// Output is an 8-bit truecolor PNG.
class Canvas {
 public:
  Canvas(int width, int height, Color background = {255, 255, 255});

  int width() const { return w_; }
  int height() const { return h_; }

  void set_pixel(int px, int py, Color c);
  void frame(Color c = {60, 60, 60});
  void line_px(int x0, int y0, int x1, int y1, Color c);

  void point(const Axes& ax, double x, double y, Color c);
  void disc(const Axes& ax, double x, double y, int radius_px, Color c);
  void polyline(const Axes& ax, const std::vector<double>& xs,
                const std::vector<double>& ys, Color c, int dash = 0);
  void unit_circle(const Axes& ax, Color c = {120, 120, 120});
  void hline(const Axes& ax, double y, Color c);

  void save_png(const std::string& path) const;

 private:
  int to_px(const Axes& ax, double x) const;
  int to_py(const Axes& ax, double y) const;
  int w_, h_;
  std::vector<uint8_t> rgb_;
};

}  // namespace kovae::plot
