#pragma once

#include <array>
#include <string>
#include <utility>

#include "forge/image.hpp"
#include "forge/morphology.hpp"

namespace forge {

/// A manipulated image with its ground-truth mask and the mask's boundary band.
struct CompositeSample {
  ImageTensor image;
  BinaryMask mask;
  BinaryMask edge;
};

/// Copy-paste: image = K*S + (1-K)*T. The edge band is recomputed from K.
CompositeSample compose(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                        StructuringElement se = StructuringElement(kDefaultEdgeRadius));

/// Replaces the predicted boundary P with authentic target pixels:
///   M' = T*P + M*(1-P),   K' = K - K*P.
/// The edge band is recomputed from K'.
CompositeSample refine(const ImageTensor& image, const BinaryMask& mask, const ImageTensor& target,
                       const BinaryMask& pred_boundary,
                       StructuringElement se = StructuringElement(kDefaultEdgeRadius));

struct AttackSpec {
  enum class Kind { jpeg, scale };

  Kind kind = Kind::jpeg;
  int quality = 0;     // jpeg only, 1..100
  double ratio = 0.0;  // scale only, (0, 1]

  static AttackSpec jpeg(int quality);
  static AttackSpec scale(double ratio);

  /// Throws std::invalid_argument when the parameters are out of range.
  void validate() const;
  std::string name() const;
};

/// Uniform downscale to (round(H*ratio), round(W*ratio)). The image uses
/// bilinear sampling with half-pixel centres; the mask uses nearest neighbour.
std::pair<ImageTensor, BinaryMask> attack_scale(const ImageTensor& img, const BinaryMask& mask, double ratio);

/// Bilinear resample with half-pixel centres to an explicit size.
ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width);
BinaryMask resize_nearest(const BinaryMask& mask, int out_height, int out_width);

/// Luminance quantization table (natural row-major order) scaled for `quality`.
std::array<int, 64> jpeg_quant_table(int quality);

/// Block-DCT quantization round trip, applied per channel with the luminance
/// table. No chroma subsampling and no entropy coding.
ImageTensor attack_jpeg(const ImageTensor& img, int quality);

/// Applies `spec` to an (image, mask) pair. JPEG leaves the mask unchanged.
std::pair<ImageTensor, BinaryMask> apply_attack(const ImageTensor& img, const BinaryMask& mask, const AttackSpec& spec);

/// Peak signal-to-noise ratio in dB for images in [0,1]; +inf when identical.
double psnr(const ImageTensor& a, const ImageTensor& b);

}  // namespace forge
