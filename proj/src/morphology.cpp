#include "forge/morphology.hpp"

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <utility>

namespace forge {

StructuringElement::StructuringElement(int radius) : radius_(radius) {
  if (radius < 1) throw std::invalid_argument("structuring element radius must be >= 1");
}

namespace {

// Square max/min filters are separable; with replicate padding each 1-D pass
// reduces over the window clipped to [0, n).
template <typename Reduce>
BinaryMask box_filter(const BinaryMask& mask, int r, Reduce reduce) {
  const int h = mask.height();
  const int w = mask.width();
  if (h == 0 || w == 0) return mask;
  std::vector<std::uint8_t> tmp(mask.size());
  std::vector<std::uint8_t> out(mask.size());
  auto in = mask.data();

  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = in[row + x];
      for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) acc = reduce(acc, in[row + xx]);
      tmp[row + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = tmp[static_cast<std::size_t>(y) * w + x];
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
        acc = reduce(acc, tmp[static_cast<std::size_t>(yy) * w + x]);
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return BinaryMask(h, w, std::move(out));
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask, StructuringElement se) {
  return box_filter(mask, se.radius(), [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

BinaryMask erode(const BinaryMask& mask, StructuringElement se) {
  return box_filter(mask, se.radius(), [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

BinaryMask edge_mask(const BinaryMask& mask, StructuringElement se) {
  // erode(K) is a subset of dilate(K), so the absolute difference is an xor.
  return dilate(mask, se) ^ erode(mask, se);
}

ComponentLabels label_components(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  ComponentLabels out{h, w, std::vector<int>(mask.size(), 0), {0}};
  std::queue<std::pair<int, int>> frontier;

  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
      if (!mask[i0] || out.labels[i0] != 0) continue;
      const int label = static_cast<int>(out.areas.size());
      std::size_t area = 0;
      out.labels[i0] = label;
      frontier.emplace(y0, x0);
      while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop();
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            if (mask[j] && out.labels[j] == 0) {
              out.labels[j] = label;
              frontier.emplace(ny, nx);
            }
          }
        }
      }
      out.areas.push_back(area);
    }
  }
  return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area, int dilate_radius) {
  if (dilate_radius < 0) throw std::invalid_argument("dilate_radius must be >= 0");
  const BinaryMask grown = dilate_radius > 0 ? dilate(mask, StructuringElement(dilate_radius)) : mask;
  const ComponentLabels comps = label_components(grown);

  std::vector<std::uint8_t> keep(mask.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int label = comps.labels[i];
    keep[i] = (mask[i] && label != 0 && comps.areas[label] >= min_area) ? 1 : 0;
  }
  return BinaryMask(mask.height(), mask.width(), std::move(keep));
}

}  // namespace forge
