#include "forge/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative image dimension");
  if (channels != 1 && channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : ImageTensor(height, width, channels) {
  if (data.size() != data_.size()) throw DimensionError("image data length does not match H*W*C");
  data_ = std::move(data);
}

ImageTensor ImageTensor::channel(int c) const {
  ImageTensor out(height_, width_, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < pixel_count(); ++i) dst[i] = data_[i * channels_ + c];
  return out;
}

void ImageTensor::set_channel(int c, const ImageTensor& plane) {
  if (plane.height() != height_ || plane.width() != width_ || plane.channels() != 1) {
    throw DimensionError("set_channel: plane shape mismatch");
  }
  auto src = plane.data();
  for (std::size_t i = 0; i < pixel_count(); ++i) data_[i * channels_ + c] = src[i];
}

ImageTensor ImageTensor::clamped() const {
  ImageTensor out = *this;
  for (double& v : out.data_) v = std::clamp(v, 0.0, 1.0);
  return out;
}

BinaryMask::BinaryMask(int height, int width, bool fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative mask dimension");
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative mask dimension");
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("mask data length does not match H*W");
  }
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& v : out.data_) v ^= 1;
  return out;
}

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op, const char* what) {
  require_same_shape(a, b, what);
  std::vector<std::uint8_t> out(a.size());
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(op(da[i], db[i]));
  return BinaryMask(a.height(), a.width(), std::move(out));
}

}  // namespace

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x & y; }, "mask and");
}

BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x | y; }, "mask or");
}

BinaryMask operator^(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](auto x, auto y) { return x ^ y; }, "mask xor");
}

SoftMask::SoftMask(int height, int width, double fill)
    : SoftMask(height, width, std::vector<double>(static_cast<std::size_t>(height) * width, fill)) {}

SoftMask::SoftMask(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative mask dimension");
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("soft mask data length does not match H*W");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("soft mask value outside [0,1]");
  }
}

BinaryMask SoftMask::threshold(double t) const {
  std::vector<std::uint8_t> out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = data_[i] >= t ? 1 : 0;
  return BinaryMask(height_, width_, std::move(out));
}

bool same_shape(const ImageTensor& img, const BinaryMask& mask) {
  return img.height() == mask.height() && img.width() == mask.width();
}

bool same_shape(const ImageTensor& a, const ImageTensor& b) {
  return a.height() == b.height() && a.width() == b.width() && a.channels() == b.channels();
}

bool same_shape(const BinaryMask& a, const BinaryMask& b) {
  return a.height() == b.height() && a.width() == b.width();
}

namespace {

[[noreturn]] void shape_error(const char* what, int h1, int w1, int h2, int w2) {
  std::ostringstream os;
  os << what << ": dimension mismatch (" << h1 << "x" << w1 << " vs " << h2 << "x" << w2 << ")";
  throw DimensionError(os.str());
}

}  // namespace

void require_same_shape(const ImageTensor& img, const BinaryMask& mask, const char* what) {
  if (!same_shape(img, mask)) shape_error(what, img.height(), img.width(), mask.height(), mask.width());
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    shape_error(what, a.height(), a.width(), b.height(), b.width());
  }
  if (a.channels() != b.channels()) {
    throw DimensionError(std::string(what) + ": channel count mismatch");
  }
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!same_shape(a, b)) shape_error(what, a.height(), a.width(), b.height(), b.width());
}

ImageTensor multiply(const ImageTensor& img, const BinaryMask& mask) {
  require_same_shape(img, mask, "multiply");
  ImageTensor out = img;
  auto d = out.data();
  const int c = img.channels();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) {
      for (int k = 0; k < c; ++k) d[i * c + k] = 0.0;
    }
  }
  return out;
}

ImageTensor to_image(const BinaryMask& mask) {
  ImageTensor out(mask.height(), mask.width(), 1);
  auto d = out.data();
  for (std::size_t i = 0; i < mask.size(); ++i) d[i] = mask[i] ? 1.0 : 0.0;
  return out;
}

SoftMask to_soft(const ImageTensor& single_channel) {
  if (single_channel.channels() != 1) throw DimensionError("to_soft: expected a single-channel image");
  auto d = single_channel.data();
  std::vector<double> v(d.begin(), d.end());
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
  return SoftMask(single_channel.height(), single_channel.width(), std::move(v));
}

ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > img.height() || x0 + w > img.width()) {
    throw std::out_of_range("crop window outside image");
  }
  ImageTensor out(h, w, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

BinaryMask crop(const BinaryMask& mask, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > mask.height() || x0 + w > mask.width()) {
    throw std::out_of_range("crop window outside mask");
  }
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.set(y, x, mask.at(y0 + y, x0 + x));
  return out;
}

std::uint8_t to_byte(double sample) {
  const double s = std::clamp(sample, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(s * 255.0 + 0.5));
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

namespace {

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw ImageFormatError("cannot open '" + path.string() + "' (" + (mode[0] == 'r' ? "read" : "write") + ")");
  }
  return f;
}

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

RawImage read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  if (!png) throw ImageFormatError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageFormatError("libpng: out of memory");
  }

  RawImage raw;
  std::string reject;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageFormatError("'" + path.string() + "': corrupt PNG: " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    reject = "16-bit PNG is not supported";
  } else if (color_type & PNG_COLOR_MASK_ALPHA) {
    reject = "PNG with alpha channel is not supported";
  } else if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    reject = "PNG with transparency (tRNS) is not supported";
  }
  if (!reject.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageFormatError("'" + path.string() + "': " + reject);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bytes.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) {
    rows[y] = raw.bytes.data() + static_cast<std::size_t>(y) * raw.width * raw.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (raw.channels != 1 && raw.channels != 3) {
    throw ImageFormatError("'" + path.string() + "': unsupported PNG channel layout");
  }
  return raw;
}

void write_png(const RawImage& raw, const fs::path& path) {
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  if (!png) throw ImageFormatError("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageFormatError("libpng: out of memory");
  }
  std::vector<png_bytep> rows(raw.height);
  for (int y = 0; y < raw.height; ++y) {
    rows[y] = const_cast<png_bytep>(raw.bytes.data() + static_cast<std::size_t>(y) * raw.width * raw.channels);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageFormatError("'" + path.string() + "': PNG write failed: " + err);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, raw.width, raw.height, 8, raw.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw ImageFormatError("'" + path.string() + "': write failed");
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

RawImage read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError("cannot open '" + path.string() + "' (read)");
  const std::string magic = pnm_token(in);
  RawImage raw;
  if (magic == "P5") {
    raw.channels = 1;
  } else if (magic == "P6") {
    raw.channels = 3;
  } else {
    throw ImageFormatError("'" + path.string() + "': only binary PGM (P5) and PPM (P6) are supported");
  }
  int maxval = 0;
  try {
    raw.width = std::stoi(pnm_token(in));
    raw.height = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw ImageFormatError("'" + path.string() + "': malformed PNM header");
  }
  if (raw.width <= 0 || raw.height <= 0) throw ImageFormatError("'" + path.string() + "': bad PNM dimensions");
  if (maxval != 255) throw ImageFormatError("'" + path.string() + "': only maxval 255 is supported");
  raw.bytes.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(raw.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.bytes.size())) {
    throw ImageFormatError("'" + path.string() + "': truncated PNM data");
  }
  return raw;
}

void write_pnm(const RawImage& raw, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageFormatError("cannot open '" + path.string() + "' (write)");
  out << (raw.channels == 3 ? "P6" : "P5") << '\n' << raw.width << ' ' << raw.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raw.bytes.data()), static_cast<std::streamsize>(raw.bytes.size()));
  if (!out) throw ImageFormatError("'" + path.string() + "': write failed");
}

RawImage read_raw(const fs::path& path) {
  std::array<unsigned char, 8> sig{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageFormatError("cannot open '" + path.string() + "' (read)");
    in.read(reinterpret_cast<char*>(sig.data()), sig.size());
    if (in.gcount() < 2) throw ImageFormatError("'" + path.string() + "': file too short");
  }
  if (png_sig_cmp(sig.data(), 0, sig.size()) == 0) return read_png(path);
  if (sig[0] == 'P' && sig[1] >= '1' && sig[1] <= '7') return read_pnm(path);
  throw ImageFormatError("'" + path.string() + "': unsupported image format");
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

void write_raw(const RawImage& raw, const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(raw, path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if (ext == ".pgm" && raw.channels != 1) throw ImageFormatError("'" + path.string() + "': PGM requires 1 channel");
    if (ext == ".ppm" && raw.channels != 3) throw ImageFormatError("'" + path.string() + "': PPM requires 3 channels");
    return write_pnm(raw, path);
  }
  throw ImageFormatError("'" + path.string() + "': unsupported output extension '" + ext + "'");
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  const RawImage raw = read_raw(path);
  std::vector<double> data(raw.bytes.size());
  std::transform(raw.bytes.begin(), raw.bytes.end(), data.begin(), [](std::uint8_t b) { return b / 255.0; });
  return ImageTensor(raw.height, raw.width, raw.channels, std::move(data));
}

void save_image(const ImageTensor& img, const fs::path& path) {
  RawImage raw{img.height(), img.width(), img.channels(), {}};
  auto d = img.data();
  raw.bytes.resize(d.size());
  std::transform(d.begin(), d.end(), raw.bytes.begin(), to_byte);
  write_raw(raw, path);
}

BinaryMask load_mask(const fs::path& path, int threshold) {
  const RawImage raw = read_raw(path);
  if (raw.channels != 1) throw ImageFormatError("'" + path.string() + "': mask must be single-channel");
  std::vector<std::uint8_t> bits(raw.bytes.size());
  std::transform(raw.bytes.begin(), raw.bytes.end(), bits.begin(),
                 [threshold](std::uint8_t b) { return static_cast<std::uint8_t>(b >= threshold ? 1 : 0); });
  return BinaryMask(raw.height, raw.width, std::move(bits));
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  RawImage raw{mask.height(), mask.width(), 1, {}};
  auto d = mask.data();
  raw.bytes.resize(d.size());
  std::transform(d.begin(), d.end(), raw.bytes.begin(), [](std::uint8_t v) { return v ? std::uint8_t{255} : std::uint8_t{0}; });
  write_raw(raw, path);
}

SoftMask load_soft_mask(const fs::path& path) {
  const RawImage raw = read_raw(path);
  if (raw.channels != 1) throw ImageFormatError("'" + path.string() + "': prediction must be single-channel");
  std::vector<double> v(raw.bytes.size());
  std::transform(raw.bytes.begin(), raw.bytes.end(), v.begin(), [](std::uint8_t b) { return b / 255.0; });
  return SoftMask(raw.height, raw.width, std::move(v));
}

}  // namespace forge
