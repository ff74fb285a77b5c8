#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

/// Raised for unreadable, unwritable or unsupported image files.
class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when operands of a pointwise operation disagree in shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major H x W x C floating point image, samples nominally in [0,1].
/// Channels are interleaved: index = (y * width + x) * channels + c.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Copy of channel c as a single-channel image.
  ImageTensor channel(int c) const;
  void set_channel(int c, const ImageTensor& plane);

  ImageTensor clamped() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// H x W mask whose samples are exactly 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);
  /// Any nonzero byte in `data` becomes 1.
  BinaryMask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  bool at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { data_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return data_[i] != 0; }

  std::span<const std::uint8_t> data() const { return data_; }

  std::size_t count() const;
  BinaryMask complement() const;

  friend BinaryMask operator&(const BinaryMask& a, const BinaryMask& b);
  friend BinaryMask operator|(const BinaryMask& a, const BinaryMask& b);
  friend BinaryMask operator^(const BinaryMask& a, const BinaryMask& b);
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// H x W map of continuous scores in [0,1] (segmentation output before thresholding).
class SoftMask {
 public:
  SoftMask() = default;
  SoftMask(int height, int width, double fill = 0.0);
  /// Throws std::invalid_argument if any value lies outside [0,1].
  SoftMask(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> data() const { return data_; }

  /// Pixel is 1 iff value >= threshold.
  BinaryMask threshold(double t) const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

bool same_shape(const ImageTensor& img, const BinaryMask& mask);
bool same_shape(const ImageTensor& a, const ImageTensor& b);
bool same_shape(const BinaryMask& a, const BinaryMask& b);

void require_same_shape(const ImageTensor& img, const BinaryMask& mask, const char* what);
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);
void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what);

/// Pointwise img * mask, broadcast over channels.
ImageTensor multiply(const ImageTensor& img, const BinaryMask& mask);
/// Mask as a single-channel 0/1 image.
ImageTensor to_image(const BinaryMask& mask);
SoftMask to_soft(const ImageTensor& single_channel);

/// Crop [y0, y0+h) x [x0, x0+w).
ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w);
BinaryMask crop(const BinaryMask& mask, int y0, int x0, int h, int w);

/// Quantizes one sample to a byte with round-half-up after clamping to [0,1].
std::uint8_t to_byte(double sample);

/// Reads 8-bit PNG (gray or RGB) or binary PGM/PPM (maxval 255). Format is
/// detected from the file signature, not the extension.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes 8-bit PNG, PGM or PPM depending on the extension (.png/.pgm/.ppm/.pnm).
void save_image(const ImageTensor& img, const std::filesystem::path& path);

/// Single-channel 8-bit file; pixel >= threshold becomes 1.
BinaryMask load_mask(const std::filesystem::path& path, int threshold = 128);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// Single-channel 8-bit file mapped to [0,1].
SoftMask load_soft_mask(const std::filesystem::path& path);

}  // namespace forge
