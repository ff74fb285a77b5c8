// Independent reference implementations used only by the tests. Each one is
// written from the defining formula, deliberately avoiding the structure of
// the production code it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "forge/image.hpp"
#include "forge/metrics.hpp"

namespace forge::testing {

using Rng = std::mt19937_64;

inline BinaryMask random_mask(Rng& rng, int h, int w, double p = 0.5) {
  std::bernoulli_distribution bit(p);
  std::vector<std::uint8_t> d(static_cast<std::size_t>(h) * w);
  for (auto& v : d) v = bit(rng) ? 1 : 0;
  return BinaryMask(h, w, std::move(d));
}

/// Samples on the 8-bit lattice {k/255}.
inline ImageTensor random_lattice_image(Rng& rng, int h, int w, int c) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<double> d(static_cast<std::size_t>(h) * w * c);
  for (auto& v : d) v = byte(rng) / 255.0;
  return ImageTensor(h, w, c, std::move(d));
}

inline ImageTensor random_image(Rng& rng, int h, int w, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(h) * w * c);
  for (auto& v : d) v = u(rng);
  return ImageTensor(h, w, c, std::move(d));
}

inline BinaryMask rect_mask(int h, int w, int y0, int x0, int rh, int rw) {
  BinaryMask m(h, w);
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) m.set(y, x, true);
  return m;
}

// ---------------------------------------------------------------------------
// Morphology: explicit footprint enumeration with replicate padding.
// ---------------------------------------------------------------------------

inline BinaryMask footprint_reduce(const BinaryMask& m, int r, bool want_any) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool any = false;
      bool all = true;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = std::clamp(y + dy, 0, m.height() - 1);
          const int xx = std::clamp(x + dx, 0, m.width() - 1);
          const bool v = m.at(yy, xx);
          any = any || v;
          all = all && v;
        }
      out.set(y, x, want_any ? any : all);
    }
  return out;
}

inline BinaryMask oracle_dilate(const BinaryMask& m, int r) { return footprint_reduce(m, r, true); }
inline BinaryMask oracle_erode(const BinaryMask& m, int r) { return footprint_reduce(m, r, false); }

inline BinaryMask oracle_edge(const BinaryMask& m, int r) {
  const BinaryMask d = oracle_dilate(m, r);
  const BinaryMask e = oracle_erode(m, r);
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.set(y, x, std::abs(int(d.at(y, x)) - int(e.at(y, x))) == 1);
  return out;
}

/// Recursive 8-connected flood fill; returns per-pixel component area (0 for background).
inline std::vector<std::size_t> oracle_component_areas(const BinaryMask& m) {
  const int h = m.height();
  const int w = m.width();
  std::vector<int> label(m.size(), 0);
  std::vector<std::size_t> area_of_label{0};
  std::function<std::size_t(int, int, int)> fill = [&](int y, int x, int l) -> std::size_t {
    if (y < 0 || x < 0 || y >= h || x >= w) return 0;
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!m[i] || label[i]) return 0;
    label[i] = l;
    std::size_t n = 1;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dy || dx) n += fill(y + dy, x + dx, l);
    return n;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (m[i] && !label[i]) {
        const int l = static_cast<int>(area_of_label.size());
        area_of_label.push_back(fill(y, x, l));
      }
    }
  std::vector<std::size_t> areas(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) areas[i] = area_of_label[label[i]];
  return areas;
}

// ---------------------------------------------------------------------------
// Poisson: dense Gaussian elimination on the pixel-form equations.
// ---------------------------------------------------------------------------

/// Solves, for every masked pixel i whose 4 neighbours are all in-bounds and
/// masked, sum_j (b_i - b_j) = sum_j (s_i - s_j); all other pixels b_i = t_i.
/// The unknowns are every pixel of the image (an H*W dense system), which is
/// a different formulation from the production reduced system.
inline ImageTensor oracle_poisson(const ImageTensor& s, const BinaryMask& k, const ImageTensor& t) {
  const int h = s.height();
  const int w = s.width();
  const int n = h * w;
  ImageTensor out(h, w, s.channels());
  auto interior = [&](int y, int x) {
    if (y == 0 || x == 0 || y == h - 1 || x == w - 1) return false;
    return k.at(y, x) && k.at(y - 1, x) && k.at(y + 1, x) && k.at(y, x - 1) && k.at(y, x + 1);
  };
  for (int c = 0; c < s.channels(); ++c) {
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = y * w + x;
        if (!interior(y, x)) {
          a[i][i] = 1.0;
          a[i][n] = t.at(y, x, c);
          continue;
        }
        const int ny[4] = {y - 1, y + 1, y, y};
        const int nx[4] = {x, x, x - 1, x + 1};
        for (int q = 0; q < 4; ++q) {
          a[i][i] += 1.0;
          a[i][ny[q] * w + nx[q]] -= 1.0;
          a[i][n] += s.at(y, x, c) - s.at(ny[q], nx[q], c);
        }
      }
    // Gauss-Jordan with partial pivoting.
    for (int col = 0; col < n; ++col) {
      int piv = col;
      for (int r = col + 1; r < n; ++r)
        if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
      std::swap(a[col], a[piv]);
      const double d = a[col][col];
      if (std::abs(d) < 1e-14) throw std::runtime_error("oracle_poisson: singular system");
      for (int j = col; j <= n; ++j) a[col][j] /= d;
      for (int r = 0; r < n; ++r) {
        if (r == col || a[r][col] == 0.0) continue;
        const double f = a[r][col];
        for (int j = col; j <= n; ++j) a[r][j] -= f * a[col][j];
      }
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y, x, c) = std::clamp(a[y * w + x][n], 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline ConfusionCounts oracle_confusion(const BinaryMask& p, const BinaryMask& g) {
  ConfusionCounts c;
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      const int a = p.at(y, x);
      const int b = g.at(y, x);
      c.tp += a * b;
      c.fp += a * (1 - b);
      c.fn += (1 - a) * b;
      c.tn += (1 - a) * (1 - b);
    }
  return c;
}

/// Harmonic mean of precision and recall.
inline double oracle_f1(const ConfusionCounts& c) {
  const double tp = c.tp, fp = c.fp, fn = c.fn;
  if (tp + fp + fn == 0) return 1.0;
  const double precision = tp + fp == 0 ? 0.0 : tp / (tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : tp / (tp + fn);
  return precision + recall == 0 ? 0.0 : 2 * precision * recall / (precision + recall);
}

inline double oracle_mcc(const ConfusionCounts& c) {
  const double tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

/// Count form 2tp / (2tp + fp + fn), used by the sweep oracle so that equal
/// scores from different count tuples compare equal.
inline double oracle_f1_counts(const ConfusionCounts& c) {
  const double den = 2.0 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * c.tp / den;
}

inline double oracle_score(const ConfusionCounts& c, Metric m) {
  return m == Metric::f1 ? oracle_f1_counts(c) : oracle_mcc(c);
}

struct OracleSweep {
  double per_image_mean = 0.0;
  double global_mean = 0.0;
  double global_threshold = 0.0;
  std::vector<double> per_image_best;
  std::vector<double> per_image_threshold;
};

/// Thresholds every prediction at every grid level, pixel by pixel.
inline OracleSweep oracle_sweep(const std::vector<SoftMask>& preds, const std::vector<BinaryMask>& gts, Metric m,
                                const std::vector<double>& grid) {
  OracleSweep out;
  std::vector<std::vector<double>> table(preds.size(), std::vector<double>(grid.size()));
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      BinaryMask bin(preds[i].height(), preds[i].width());
      for (int y = 0; y < bin.height(); ++y)
        for (int x = 0; x < bin.width(); ++x) bin.set(y, x, preds[i].at(y, x) >= grid[j]);
      table[i][j] = oracle_score(oracle_confusion(bin, gts[i]), m);
    }
  double sum = 0.0;
  for (const auto& row : table) {
    const auto best = std::max_element(row.begin(), row.end());  // first maximum = lowest threshold
    out.per_image_best.push_back(*best);
    out.per_image_threshold.push_back(grid[best - row.begin()]);
    sum += *best;
  }
  out.per_image_mean = sum / preds.size();
  double best_mean = -2.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double s = 0.0;
    for (const auto& row : table) s += row[j];
    s /= preds.size();
    if (s > best_mean) {
      best_mean = s;
      out.global_threshold = grid[j];
    }
  }
  out.global_mean = best_mean;
  return out;
}

}  // namespace forge::testing
