#include "kovae/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace kovae::plot {

Axes Axes::fit(const std::vector<double>& xs, const std::vector<double>& ys,
               double pad_fraction) {
  Axes ax;
  if (xs.empty() || ys.empty()) return ax;
  auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  double dx = std::max(*xmax - *xmin, 1e-12);
  double dy = std::max(*ymax - *ymin, 1e-12);
  ax.x_lo = *xmin - pad_fraction * dx;
  ax.x_hi = *xmax + pad_fraction * dx;
  ax.y_lo = *ymin - pad_fraction * dy;
  ax.y_hi = *ymax + pad_fraction * dy;
  return ax;
}

Canvas::Canvas(int width, int height, Color bg) : w_(width), h_(height) {
  rgb_.resize(static_cast<size_t>(w_) * h_ * 3);
  for (int i = 0; i < w_ * h_; ++i) {
    rgb_[3 * i] = bg.r;
    rgb_[3 * i + 1] = bg.g;
    rgb_[3 * i + 2] = bg.b;
  }
}

void Canvas::set_pixel(int px, int py, Color c) {
  if (px < 0 || px >= w_ || py < 0 || py >= h_) return;
  size_t i = (static_cast<size_t>(py) * w_ + px) * 3;
  rgb_[i] = c.r;
  rgb_[i + 1] = c.g;
  rgb_[i + 2] = c.b;
}

int Canvas::to_px(const Axes& ax, double x) const {
  return static_cast<int>(
      std::lround((x - ax.x_lo) / (ax.x_hi - ax.x_lo) * (w_ - 1)));
}

int Canvas::to_py(const Axes& ax, double y) const {
  return static_cast<int>(
      std::lround((1.0 - (y - ax.y_lo) / (ax.y_hi - ax.y_lo)) * (h_ - 1)));
}

void Canvas::frame(Color c) {
  line_px(0, 0, w_ - 1, 0, c);
  line_px(0, h_ - 1, w_ - 1, h_ - 1, c);
  line_px(0, 0, 0, h_ - 1, c);
  line_px(w_ - 1, 0, w_ - 1, h_ - 1, c);
}

void Canvas::line_px(int x0, int y0, int x1, int y1, Color c) {
  // Bresenham
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set_pixel(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::point(const Axes& ax, double x, double y, Color c) {
  set_pixel(to_px(ax, x), to_py(ax, y), c);
}

void Canvas::disc(const Axes& ax, double x, double y, int radius_px, Color c) {
  int cx = to_px(ax, x), cy = to_py(ax, y);
  for (int dy = -radius_px; dy <= radius_px; ++dy)
    for (int dx = -radius_px; dx <= radius_px; ++dx)
      if (dx * dx + dy * dy <= radius_px * radius_px)
        set_pixel(cx + dx, cy + dy, c);
}

void Canvas::polyline(const Axes& ax, const std::vector<double>& xs,
                      const std::vector<double>& ys, Color c, int dash) {
  size_t n = std::min(xs.size(), ys.size());
  for (size_t i = 1; i < n; ++i) {
    if (dash > 0 && (i / dash) % 2 == 1) continue;
    line_px(to_px(ax, xs[i - 1]), to_py(ax, ys[i - 1]), to_px(ax, xs[i]),
            to_py(ax, ys[i]), c);
  }
}

void Canvas::unit_circle(const Axes& ax, Color c) {
  const int segments = 256;
  for (int i = 0; i < segments; ++i) {
    double a0 = 2.0 * M_PI * i / segments;
    double a1 = 2.0 * M_PI * (i + 1) / segments;
    line_px(to_px(ax, std::cos(a0)), to_py(ax, std::sin(a0)),
            to_px(ax, std::cos(a1)), to_py(ax, std::sin(a1)), c);
  }
}

void Canvas::hline(const Axes& ax, double y, Color c) {
  int py = to_py(ax, y);
  line_px(0, py, w_ - 1, py, c);
}

namespace {
void png_chunk(std::ofstream& os, const char* type,
               const std::vector<uint8_t>& payload) {
  auto be32 = [&](uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                    static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    os.write(reinterpret_cast<char*>(b), 4);
  };
  be32(static_cast<uint32_t>(payload.size()));
  os.write(type, 4);
  if (!payload.empty())
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty())
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  be32(static_cast<uint32_t>(crc));
}
}  // namespace

void Canvas::save_png(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("plot: cannot open " + path);
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr(13);
  auto put32 = [&](size_t at, uint32_t v) {
    ihdr[at] = v >> 24;
    ihdr[at + 1] = (v >> 16) & 0xff;
    ihdr[at + 2] = (v >> 8) & 0xff;
    ihdr[at + 3] = v & 0xff;
  };
  put32(0, static_cast<uint32_t>(w_));
  put32(4, static_cast<uint32_t>(h_));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  png_chunk(os, "IHDR", ihdr);

  // Filter byte 0 per scanline, then one zlib stream.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h_) * (1 + 3 * w_));
  for (int y = 0; y < h_; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb_.data() + static_cast<size_t>(y) * w_ * 3;
    raw.insert(raw.end(), row, row + 3 * w_);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("plot: zlib compression failed");
  compressed.resize(bound);
  png_chunk(os, "IDAT", compressed);
  png_chunk(os, "IEND", {});
  if (!os) throw std::runtime_error("plot: write failed for " + path);
}

}  // namespace kovae::plot
