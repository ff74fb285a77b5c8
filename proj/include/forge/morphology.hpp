#pragma once

#include <cstddef>
#include <vector>

#include "forge/image.hpp"

namespace forge {

/// Square structuring element of side 2*radius+1.
class StructuringElement {
 public:
  /// Throws std::invalid_argument unless radius >= 1.
  explicit StructuringElement(int radius);
  int radius() const { return radius_; }

 private:
  int radius_;
};

inline constexpr int kDefaultEdgeRadius = 2;
inline constexpr std::size_t kDefaultMinComponentArea = 64;
inline constexpr int kDefaultPostprocessDilateRadius = 1;

// Out-of-bounds neighbours replicate the nearest border pixel, so the
// footprint is effectively clipped to the image.
BinaryMask dilate(const BinaryMask& mask, StructuringElement se);
BinaryMask erode(const BinaryMask& mask, StructuringElement se);

/// Boundary band |dilate(K) - erode(K)|.
BinaryMask edge_mask(const BinaryMask& mask, StructuringElement se);

/// 8-connected component labelling. Background is label 0; components are
/// numbered 1..n in raster order of their first pixel.
struct ComponentLabels {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  /// areas[k] is the pixel count of component k (areas[0] is unused, always 0).
  std::vector<std::size_t> areas;

  int count() const { return static_cast<int>(areas.size()) - 1; }
  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

ComponentLabels label_components(const BinaryMask& mask);

/// Drops small noisy particles: the mask is dilated by `dilate_radius`
/// (0 disables dilation), dilated components smaller than `min_area` are
/// discarded, and the survivors are intersected with the original mask.
BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area = kDefaultMinComponentArea,
                                   int dilate_radius = kDefaultPostprocessDilateRadius);

}  // namespace forge
