#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace forge {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i];
    const bool g = gt[i];
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double f1(const ConfusionCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double mcc(const ConfusionCounts& c) {
  using wide = long double;
  const wide tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
  const wide a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
  const wide value = (tp * tn - fp * fn) / std::sqrt(a * b * d * e);
  return static_cast<double>(std::clamp<wide>(value, -1.0L, 1.0L));
}

double score(const ConfusionCounts& c, Metric metric) { return metric == Metric::f1 ? f1(c) : mcc(c); }

std::vector<double> default_thresholds() {
  std::vector<double> t(256);
  for (int k = 0; k < 256; ++k) t[k] = k / 255.0;
  return t;
}

std::vector<ConfusionCounts> confusion_curve(const SoftMask& pred, const BinaryMask& gt,
                                             std::span<const double> thresholds) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw DimensionError("confusion_curve: prediction and ground truth differ in size");
  }
  if (thresholds.empty()) throw std::invalid_argument("confusion_curve: no thresholds");
  if (std::adjacent_find(thresholds.begin(), thresholds.end(), std::greater_equal<>()) != thresholds.end()) {
    throw std::invalid_argument("confusion_curve: thresholds must be strictly increasing");
  }

  // Pixel p is predicted positive at threshold j iff thresholds[j] <= p,
  // i.e. iff j < bucket(p) with bucket = #thresholds <= p.
  const std::size_t n = thresholds.size();
  std::vector<std::uint64_t> pos_hist(n + 1, 0);
  std::vector<std::uint64_t> neg_hist(n + 1, 0);
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto bucket = static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), pred[i]) - thresholds.begin());
    if (gt[i]) {
      ++pos_hist[bucket];
      ++positives;
    } else {
      ++neg_hist[bucket];
    }
  }
  const std::uint64_t negatives = pred.size() - positives;

  std::vector<ConfusionCounts> curve(n);
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t j = n; j-- > 0;) {
    tp += pos_hist[j + 1];
    fp += neg_hist[j + 1];
    curve[j] = {tp, fp, positives - tp, negatives - fp};
  }
  return curve;
}

EvalReport sweep_thresholds(std::span<const SoftMask> preds, std::span<const BinaryMask> gts, ThresholdMode mode,
                            Metric metric, std::span<const std::string> ids, std::span<const double> thresholds) {
  if (preds.empty()) throw std::invalid_argument("sweep_thresholds: no predictions");
  if (preds.size() != gts.size()) throw std::invalid_argument("sweep_thresholds: prediction/ground-truth count mismatch");
  if (!ids.empty() && ids.size() != preds.size()) throw std::invalid_argument("sweep_thresholds: id count mismatch");

  const std::vector<double> grid_storage = thresholds.empty() ? default_thresholds() : std::vector<double>{};
  const std::span<const double> grid = thresholds.empty() ? std::span<const double>(grid_storage) : thresholds;

  std::vector<std::vector<ConfusionCounts>> curves;
  curves.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) curves.push_back(confusion_curve(preds[i], gts[i], grid));

  EvalReport report;
  report.mode = mode;
  report.metric = metric;
  std::vector<std::size_t> chosen(preds.size(), 0);

  if (mode == ThresholdMode::global_threshold) {
    std::size_t best = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double sum = 0.0;
      for (const auto& curve : curves) sum += score(curve[j], metric);
      const double mean = sum / static_cast<double>(curves.size());
      if (mean > best_mean) {
        best_mean = mean;
        best = j;
      }
    }
    std::fill(chosen.begin(), chosen.end(), best);
    report.global_threshold = grid[best];
  } else {
    for (std::size_t i = 0; i < curves.size(); ++i) {
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const double s = score(curves[i][j], metric);
        if (s > best_score) {
          best_score = s;
          chosen[i] = j;
        }
      }
    }
  }

  double sum_f1 = 0.0;
  double sum_mcc = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const ConfusionCounts& c = curves[i][chosen[i]];
    ImageScore s{ids.empty() ? std::to_string(i) : ids[i], grid[chosen[i]], f1(c), mcc(c)};
    sum_f1 += s.f1;
    sum_mcc += s.mcc;
    report.per_image.push_back(std::move(s));
  }
  report.dataset_f1 = sum_f1 / static_cast<double>(curves.size());
  report.dataset_mcc = sum_mcc / static_cast<double>(curves.size());
  return report;
}

const char* to_string(Metric m) { return m == Metric::f1 ? "f1" : "mcc"; }

const char* to_string(ThresholdMode m) {
  return m == ThresholdMode::global_threshold ? "global_threshold" : "per_image_threshold";
}

}  // namespace forge
