#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/image.hpp"

namespace forge {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

/// 2tp / (2tp + fp + fn). An empty prediction of an empty ground truth scores 1.
double f1(const ConfusionCounts& c);

/// Matthews correlation coefficient; 0 when any marginal is empty.
double mcc(const ConfusionCounts& c);

enum class Metric { f1, mcc };
enum class ThresholdMode { global_threshold, per_image_threshold };

double score(const ConfusionCounts& c, Metric metric);

/// The 256 levels k/255, k = 0..255.
std::vector<double> default_thresholds();

/// Confusion counts of (pred >= thresholds[j]) against gt for every j.
/// Thresholds must be strictly increasing.
std::vector<ConfusionCounts> confusion_curve(const SoftMask& pred, const BinaryMask& gt,
                                             std::span<const double> thresholds);

struct ImageScore {
  std::string id;
  double best_threshold = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

struct EvalReport {
  std::vector<ImageScore> per_image;
  double dataset_f1 = 0.0;
  double dataset_mcc = 0.0;
  ThresholdMode mode = ThresholdMode::per_image_threshold;
  Metric metric = Metric::f1;
  /// Set in global mode.
  std::optional<double> global_threshold;

  /// Dataset aggregate of the metric the thresholds were optimised for.
  double dataset_score() const { return metric == Metric::f1 ? dataset_f1 : dataset_mcc; }
};

/// Optimal-threshold evaluation. Global mode picks the one threshold that
/// maximises the mean metric over all images; per-image mode picks each
/// image's own maximiser. Ties go to the lowest threshold. Dataset scores are
/// means over images at the chosen thresholds.
///
/// `ids` may be empty (images are then named by index). `thresholds` may be
/// empty to use default_thresholds().
EvalReport sweep_thresholds(std::span<const SoftMask> preds, std::span<const BinaryMask> gts, ThresholdMode mode,
                            Metric metric, std::span<const std::string> ids = {},
                            std::span<const double> thresholds = {});

const char* to_string(Metric m);
const char* to_string(ThresholdMode m);

}  // namespace forge
