#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "forge/blend.hpp"
#include "forge/compositor.hpp"

namespace forge {

inline constexpr const char* kToolVersion = "forge 0.1.0";

/// Malformed manifest; the message names the offending line(s).
class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ComposeStep {};

struct BlendStep {
  enum class Mode { poisson, variational };
  Mode mode = Mode::variational;
  BlendConfig config;
};

struct RefineStep {
  /// Unset means "use the edge band of the current mask" as the boundary.
  std::optional<std::filesystem::path> boundary;
};

struct AttackStep {
  AttackSpec spec;
};

using PipelineStep = std::variant<ComposeStep, BlendStep, RefineStep, AttackStep>;

std::string step_name(const PipelineStep& step);

enum class SizePolicy { reject, center_crop };

/// One synthesis job: (source S, mask K, target T) and the steps applied to them.
struct SampleManifestEntry {
  std::string id;
  std::filesystem::path source;
  std::filesystem::path mask;
  std::filesystem::path target;
  std::vector<PipelineStep> steps;
  std::filesystem::path outputs;
  SizePolicy size_policy = SizePolicy::reject;
  int edge_radius = kDefaultEdgeRadius;
  int mask_threshold = 128;
  std::size_t line = 0;
};

/// JSON-lines manifest. Blank lines are skipped; relative paths resolve
/// against `base_dir`; `outputs` defaults to base_dir/"outputs".
std::vector<SampleManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<SampleManifestEntry> parse_manifest(const std::filesystem::path& path);

struct FileDigest {
  std::string path;  // relative to the entry's output directory
  std::string sha256;
};

struct StepRecord {
  std::size_t index = 0;
  std::string name;
  nlohmann::json params;
  FileDigest image;
  FileDigest mask;
  std::optional<nlohmann::json> losses;
};

struct ProvenanceRecord {
  std::string id;
  std::string status;  // "ok" or "failed"
  std::string error;
  nlohmann::json inputs;
  std::vector<StepRecord> steps;
  std::string tool_version = kToolVersion;

  bool ok() const { return status == "ok"; }
  nlohmann::json to_json() const;
};

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Runs one entry, writing {outputs}/{id}/{i}_{step}.png, {i}_{step}_mask.png
/// and provenance.json. Failures are captured in the record, never thrown.
ProvenanceRecord run_entry(const SampleManifestEntry& entry);

/// Runs all entries on up to `jobs` threads (0 = hardware concurrency).
/// Records are returned in manifest order.
std::vector<ProvenanceRecord> run_pipeline(const std::vector<SampleManifestEntry>& entries, unsigned jobs = 0);

// ---------------------------------------------------------------------------
// Evaluation manifests
// ---------------------------------------------------------------------------

/// What to do when a prediction and its ground truth differ in size (for
/// example after a scale attack).
enum class ResizePolicy { none, ground_truth, prediction };

struct EvalPair {
  std::string id;
  std::filesystem::path prediction;
  std::filesystem::path ground_truth;
  ResizePolicy resize = ResizePolicy::none;
  std::size_t line = 0;
};

/// JSON-lines of {"id", "prediction", "ground_truth", optional "resize"}.
std::vector<EvalPair> parse_eval_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<EvalPair> parse_eval_manifest(const std::filesystem::path& path);

/// Loads a pair, resizing one side according to its policy. ground_truth
/// resamples the mask (nearest) to the prediction size; prediction resamples
/// the prediction (bilinear) to the mask size.
std::pair<SoftMask, BinaryMask> load_eval_pair(const EvalPair& pair);

}  // namespace forge
