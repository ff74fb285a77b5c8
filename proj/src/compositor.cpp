#include "forge/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace forge {

CompositeSample compose(const ImageTensor& source, const BinaryMask& mask, const ImageTensor& target,
                        StructuringElement se) {
  require_same_shape(source, target, "compose");
  require_same_shape(source, mask, "compose");

  ImageTensor out = target;
  auto dst = out.data();
  auto src = source.data();
  const int c = source.channels();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (int k = 0; k < c; ++k) dst[i * c + k] = src[i * c + k];
  }
  return {std::move(out), mask, edge_mask(mask, se)};
}

CompositeSample refine(const ImageTensor& image, const BinaryMask& mask, const ImageTensor& target,
                       const BinaryMask& pred_boundary, StructuringElement se) {
  require_same_shape(image, target, "refine");
  require_same_shape(image, mask, "refine");
  require_same_shape(mask, pred_boundary, "refine");

  ImageTensor out = image;
  auto dst = out.data();
  auto tgt = target.data();
  const int c = image.channels();
  for (std::size_t i = 0; i < pred_boundary.size(); ++i) {
    if (!pred_boundary[i]) continue;
    for (int k = 0; k < c; ++k) dst[i * c + k] = tgt[i * c + k];
  }
  BinaryMask refined = mask & pred_boundary.complement();
  BinaryMask edge = edge_mask(refined, se);
  return {std::move(out), std::move(refined), std::move(edge)};
}

AttackSpec AttackSpec::jpeg(int quality) {
  AttackSpec s{Kind::jpeg, quality, 0.0};
  s.validate();
  return s;
}

AttackSpec AttackSpec::scale(double ratio) {
  AttackSpec s{Kind::scale, 0, ratio};
  s.validate();
  return s;
}

void AttackSpec::validate() const {
  if (kind == Kind::jpeg && (quality < 1 || quality > 100)) {
    throw std::invalid_argument("jpeg quality must be in [1, 100]");
  }
  if (kind == Kind::scale && !(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("scale ratio must be in (0, 1]");
  }
}

std::string AttackSpec::name() const {
  std::ostringstream os;
  if (kind == Kind::jpeg) {
    os << "jpeg" << quality;
  } else {
    os << "scale" << ratio;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw std::invalid_argument("resize: output dimension would be 0");
  const int h = img.height();
  const int w = img.width();
  const int ch = img.channels();
  if (out_height == h && out_width == w) return img;

  const double sy = static_cast<double>(h) / out_height;
  const double sx = static_cast<double>(w) / out_width;
  ImageTensor out(out_height, out_width, ch);
  for (int y = 0; y < out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = img.at(y0, x0, c) + tx * (img.at(y0, x1, c) - img.at(y0, x0, c));
        const double bot = img.at(y1, x0, c) + tx * (img.at(y1, x1, c) - img.at(y1, x0, c));
        out.at(y, x, c) = top + ty * (bot - top);
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw std::invalid_argument("resize: output dimension would be 0");
  const int h = mask.height();
  const int w = mask.width();
  if (out_height == h && out_width == w) return mask;

  BinaryMask out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / out_height)));
    for (int x = 0; x < out_width; ++x) {
      const int sx = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * w / out_width)));
      out.set(y, x, mask.at(sy, sx));
    }
  }
  return out;
}

std::pair<ImageTensor, BinaryMask> attack_scale(const ImageTensor& img, const BinaryMask& mask, double ratio) {
  AttackSpec::scale(ratio);
  require_same_shape(img, mask, "attack_scale");
  const int oh = static_cast<int>(std::lround(img.height() * ratio));
  const int ow = static_cast<int>(std::lround(img.width() * ratio));
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("attack_scale: output dimension would be 0");
  return {resize_bilinear(img, oh, ow), resize_nearest(mask, oh, ow)};
}

// ---------------------------------------------------------------------------
// JPEG-style quantization
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

using Block = std::array<double, 64>;

// basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16): the orthonormal 8-point DCT-II.
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
      for (int x = 0; x < 8; ++x) b[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

Block forward_dct(const Block& f) {
  const auto& b = dct_basis();
  Block tmp{};
  Block out{};
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * f[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  return out;
}

Block inverse_dct(const Block& coef) {
  const auto& b = dct_basis();
  Block tmp{};
  Block out{};
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * coef[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  return out;
}

}  // namespace

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::clamp((kLuminanceTable[i] * scale + 50) / 100, 1, 255);
  return q;
}

ImageTensor attack_jpeg(const ImageTensor& img, int quality) {
  const auto table = jpeg_quant_table(quality);
  const int h = img.height();
  const int w = img.width();
  ImageTensor out(h, w, img.channels());
  if (h == 0 || w == 0) return out;

  for (int c = 0; c < img.channels(); ++c) {
    for (int by = 0; by < h; by += 8) {
      for (int bx = 0; bx < w; bx += 8) {
        Block block{};
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by + y, h - 1);
            const int sx = std::min(bx + x, w - 1);
            block[y * 8 + x] = img.at(sy, sx, c) * 255.0 - 128.0;
          }
        Block coef = forward_dct(block);
        for (int k = 0; k < 64; ++k) coef[k] = std::round(coef[k] / table[k]) * table[k];
        const Block rec = inverse_dct(coef);
        for (int y = 0; y < 8 && by + y < h; ++y)
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            out.at(by + y, bx + x, c) = std::clamp((rec[y * 8 + x] + 128.0) / 255.0, 0.0, 1.0);
          }
      }
    }
  }
  return out;
}

std::pair<ImageTensor, BinaryMask> apply_attack(const ImageTensor& img, const BinaryMask& mask,
                                                const AttackSpec& spec) {
  spec.validate();
  if (spec.kind == AttackSpec::Kind::jpeg) {
    require_same_shape(img, mask, "attack");
    return {attack_jpeg(img, spec.quality), mask};
  }
  return attack_scale(img, mask, spec.ratio);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  auto da = a.data();
  auto db = b.data();
  if (da.empty()) throw std::invalid_argument("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) sse += (da[i] - db[i]) * (da[i] - db[i]);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (sse / static_cast<double>(da.size())));
}

}  // namespace forge
